use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use golnet::data::{fixed_board, load_board};
use tempfile::tempdir;

fn golnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_golnet"))
        .args(args)
        .output()
        .expect("spawn golnet")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Everything after the resolved-config line.
fn body(out: &Output) -> String {
    let text = stdout(out);
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    assert!(first.starts_with("{\"command\":"), "missing config line: {first}");
    lines.map(|l| format!("{l}\n")).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_blinker_returns_after_two_steps() {
    let dir = tempdir().unwrap();
    let blinker = "00000\n00100\n00100\n00100\n00000\n";
    let path = write(dir.path(), "blinker.txt", blinker);
    let out = golnet(&["simulate", "--board", &path, "--steps", "1"]);
    assert!(out.status.success());
    assert_eq!(body(&out), "00000\n00000\n01110\n00000\n00000\n");
    let out = golnet(&["simulate", "--board", &path, "--steps", "2"]);
    assert_eq!(body(&out), blinker);
}

#[test]
fn simulate_dump_dir_writes_every_step() {
    let dir = tempdir().unwrap();
    let dump = dir.path().join("frames");
    let out = golnet(&[
        "simulate",
        "--random",
        "16",
        "16",
        "0.38",
        "9",
        "--steps",
        "3",
        "--dump-dir",
        dump.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for t in 0..=3 {
        let b = load_board(dump.join(format!("step_{t}.txt"))).unwrap();
        assert_eq!((b.height(), b.width()), (16, 16));
    }
    let zero = golnet(&["simulate", "--random", "16", "16", "0.38", "9", "--steps", "0"]);
    assert_eq!(
        body(&zero),
        fs::read_to_string(dump.join("step_0.txt")).unwrap()
    );
}

#[test]
fn gen_board_fixed_is_symmetric_and_covers_all_classes() {
    let dir = tempdir().unwrap();
    let out_path = dir.path().join("fixed.txt");
    let out = golnet(&["gen-board", "--mode", "fixed", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let board = load_board(&out_path).unwrap();
    assert_eq!(board, fixed_board());
    let (h, w) = (board.height(), board.width());
    for r in 0..h {
        for c in 0..w {
            assert_eq!(board.get(r, c), board.get(r, w - 1 - c));
            assert_eq!(board.get(r, c), board.get(h - 1 - r, c));
        }
    }
    let cov = golnet(&["coverage", "--board", out_path.to_str().unwrap(), "--json"]);
    assert!(cov.status.success());
    let v: serde_json::Value = serde_json::from_str(body(&cov).trim()).unwrap();
    assert_eq!(v["covered"], 18);
}

#[test]
fn gen_board_from_quadrant_mirrors_it() {
    let dir = tempdir().unwrap();
    let q = write(dir.path(), "q.txt", "110\n010\n000\n");
    let out_path = dir.path().join("b.txt");
    let out = golnet(&["gen-board", "--quadrant", &q, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let b = load_board(&out_path).unwrap();
    assert_eq!(
        b.to_string(),
        "110011\n010010\n000000\n000000\n010010\n110011\n"
    );
}

#[test]
fn gen_board_random_is_deterministic() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let out = golnet(&[
            "gen-board", "--mode", "random", "--seed", "5", "--size", "20", "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let out = golnet(&["train", "--algo", "lion"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = golnet(&["train", "--lr", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_board_file_exits_with_three() {
    let out = golnet(&["simulate", "--board", "/nonexistent/board.txt"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_board_reports_position() {
    let dir = tempdir().unwrap();
    let path = write(dir.path(), "bad.txt", "010\n0x0\n");
    let out = golnet(&["simulate", "--board", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('2'), "{err}");
}

#[test]
fn train_from_solution_succeeds_at_first_evaluation() {
    let dir = tempdir().unwrap();
    let out_path = dir.path().join("run.json");
    let out = golnet(&[
        "train",
        "--act",
        "relu",
        "--init",
        "relu-solution",
        "--lr",
        "0",
        "--max-epochs",
        "5",
        "--test-boards",
        "3",
        "--test-size",
        "20",
        "--proxy-boards",
        "2",
        "--proxy-size",
        "16",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["success"], true);
    assert_eq!(v["epochs_to_success"], 1);
    assert_eq!(v["final_accuracy"], 1.0);
}

fn tiny(cmd: &str) -> Vec<String> {
    [
        cmd,
        "--algo",
        "sgd",
        "--max-epochs",
        "20",
        "--eval-every",
        "10",
        "--train-size",
        "16",
        "--test-boards",
        "2",
        "--test-size",
        "16",
        "--proxy-boards",
        "2",
        "--proxy-size",
        "16",
        "--runs",
        "2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn sweep_without_success_prints_sentinel() {
    let mut args = tiny("sweep");
    args.extend(["--grid".into(), "1e-4,1e-5".into()]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = golnet(&argv);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(body(&out).lines().any(|l| l == "best=----"), "{}", stdout(&out));
}

#[test]
fn report_combines_experiment_summaries() {
    let dir = tempdir().unwrap();
    let mut files = Vec::new();
    for dataset in ["random", "fixed"] {
        let path = dir.path().join(format!("{dataset}.json"));
        let mut args = tiny("experiment");
        args.extend([
            "--dataset".into(),
            dataset.into(),
            "--lr".into(),
            "0.01".into(),
            "--out".into(),
            path.to_string_lossy().into_owned(),
        ]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = golnet(&argv);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(path.to_string_lossy().into_owned());
    }
    let out_dir = dir.path().join("report");
    let out = golnet(&[
        "report",
        &files[0],
        &files[1],
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    assert!(lines[1].starts_with("SGD,"), "{csv}");
    assert!(out_dir.join("report.json").exists());
}
