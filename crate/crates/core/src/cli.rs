//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::data::{self, coverage, load_board, save_board, symmetrize, BoardSpec};
use crate::error::{Error, Result};
use crate::harness::{
    default_workers, grid_search, load_summaries, reference_learning_rate, report, run_experiment,
    train_once, BoardSetSpec, ExperimentConfig, Initialization, TrainConfig,
};
use crate::life::{step, Board};
use crate::optim::{Algorithm, OptimizerConfig, DEFAULT_LEARNING_RATE, LEARNING_RATE_GRID};

#[derive(Debug, Parser)]
#[command(name = "golnet", version, about = "Train minimal convolutional networks on the Game of Life")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Advance a board by a number of steps.
    Simulate(SimulateArgs),
    /// Write the fixed training board or a random board.
    GenBoard(GenBoardArgs),
    /// Count (center, live-neighbor) classes on a board.
    Coverage(CoverageArgs),
    /// Run one training session.
    Train(TrainArgs),
    /// Run a batch of independently seeded training sessions.
    Experiment(ExperimentArgs),
    /// Grid-search the learning rate.
    Sweep(SweepArgs),
    /// Tabulate random-versus-fixed results from experiment files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Input board file.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub board: Option<PathBuf>,
    /// Random input: HEIGHT WIDTH DENSITY SEED.
    #[arg(long, num_args = 4, value_names = ["H", "W", "P", "SEED"])]
    pub random: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every intermediate board as `step_<t>.txt` here.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoardMode {
    Fixed,
    Random,
}

#[derive(Debug, Args)]
pub struct GenBoardArgs {
    #[arg(long, value_enum, default_value = "fixed")]
    pub mode: BoardMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Quadrant file to reflect instead of the built-in layout.
    #[arg(long)]
    pub quadrant: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = data::TRAIN_BOARD_SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = data::DEFAULT_DENSITY)]
    pub density: f64,
    /// Also write the pattern library as JSON.
    #[arg(long)]
    pub patterns_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Board file; the built-in fixed board when absent.
    #[arg(long)]
    pub board: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// JSON training configuration used as the base; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<String>,
    /// Learning rate; defaults to the tuned reference rate for the setting,
    /// or 1e-3 when none is known.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub act: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Evaluate the full test set at every evaluation.
    #[arg(long)]
    pub no_proxy: bool,
    /// glorot, relu-solution or tanh-solution.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_boards: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long)]
    pub proxy_boards: Option<usize>,
    #[arg(long)]
    pub proxy_size: Option<usize>,
    /// Board file used as the fixed training board.
    #[arg(long)]
    pub fixed_board: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Seed from which initialization, data and test seeds are derived.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatchFlags {
    #[arg(long, default_value_t = crate::harness::DEFAULT_RUNS)]
    pub runs: usize,
    /// Run `i` is seeded with `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all available processors when absent.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub batch: BatchFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub batch: BatchFlags,
    /// Comma-separated learning rates.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment, sweep or report JSON files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Process exit code for an error: 2 for bad input, 3 for runtime failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::NumericalOverflow(_) | Error::Divergence(_) => 3,
        _ => 2,
    }
}

fn print_resolved<T: Serialize>(command: &str, config: &T) -> Result<()> {
    let line = serde_json::to_string(&json!({ "command": command, "config": config }))?;
    println!("{line}");
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(name: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {name} `{value}`")))
}

impl TrainFlags {
    /// The configuration these flags describe, before seeds are assigned.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = &self.act {
            cfg.activation = v.parse()?;
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = v.parse()?;
        }
        if let Some(v) = self.steps {
            cfg.n_steps = v;
        }
        if let Some(v) = &self.arch {
            cfg.arch_mode = v.parse()?;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if self.no_proxy {
            cfg.proxy_eval = false;
        }
        if let Some(v) = &self.init {
            cfg.init = v.parse::<Initialization>()?;
        }
        if let Some(v) = self.train_size {
            cfg.train_size = v;
        }
        let set = |spec: &mut BoardSetSpec, boards: Option<usize>, size: Option<usize>| {
            if let Some(b) = boards {
                spec.boards = b;
            }
            if let Some(s) = size {
                spec.size = s;
            }
        };
        set(&mut cfg.test_set, self.test_boards, self.test_size);
        set(&mut cfg.proxy_set, self.proxy_boards, self.proxy_size);
        if let Some(v) = &self.fixed_board {
            cfg.fixed_board = Some(v.clone());
        }
        if let Some(name) = &self.algo {
            let algorithm: Algorithm = name.parse()?;
            let lr = self.lr.unwrap_or_else(|| {
                reference_learning_rate(
                    algorithm,
                    cfg.n_steps,
                    cfg.arch_mode,
                    cfg.dataset,
                    cfg.activation,
                )
                .unwrap_or(DEFAULT_LEARNING_RATE)
            });
            cfg.optimizer = OptimizerConfig::new(algorithm, lr);
        } else if let Some(lr) = self.lr {
            cfg.optimizer.learning_rate = lr;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a comma-separated learning-rate grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let grid = s
        .split(',')
        .map(str::trim)
        .map(|v| {
            let lr: f64 = parse_field("learning rate", v)?;
            if lr.is_finite() && lr >= 0.0 {
                Ok(lr)
            } else {
                Err(Error::Config(format!("invalid learning rate `{v}`")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(Error::Config("empty learning-rate grid".into()));
    }
    Ok(grid)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::GenBoard(a) => gen_board(a),
        Command::Coverage(a) => coverage_cmd(a),
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (board, source) = match (&a.board, &a.random) {
        (Some(path), _) => (load_board(path)?, json!({ "board": path })),
        (None, Some(v)) => {
            let spec = BoardSpec {
                height: parse_field("height", &v[0])?,
                width: parse_field("width", &v[1])?,
                density: parse_field("density", &v[2])?,
                seed: parse_field("seed", &v[3])?,
            };
            (data::random_board(&spec)?, json!({ "random": spec }))
        }
        (None, None) => return Err(Error::Config("give --board or --random".into())),
    };
    print_resolved(
        "simulate",
        &json!({ "source": source, "steps": a.steps, "out": a.out, "dump_dir": a.dump_dir }),
    )?;
    let mut current = board;
    if let Some(dir) = &a.dump_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_board(&current, dir.join("step_0.txt"))?;
    }
    for t in 1..=a.steps {
        current = step(&current);
        if let Some(dir) = &a.dump_dir {
            save_board(&current, dir.join(format!("step_{t}.txt")))?;
        }
    }
    match &a.out {
        Some(path) => save_board(&current, path),
        None => {
            print!("{current}");
            Ok(())
        }
    }
}

fn gen_board(a: GenBoardArgs) -> Result<()> {
    print_resolved(
        "gen-board",
        &json!({
            "mode": format!("{:?}", a.mode).to_lowercase(),
            "out": a.out,
            "quadrant": a.quadrant,
            "seed": a.seed,
            "size": a.size,
            "density": a.density,
        }),
    )?;
    let board: Board = match a.mode {
        BoardMode::Fixed => match &a.quadrant {
            Some(q) => symmetrize(&load_board(q)?),
            None => data::fixed_board(),
        },
        BoardMode::Random => data::random_board(&BoardSpec {
            height: a.size,
            width: a.size,
            density: a.density,
            seed: a.seed,
        })?,
    };
    save_board(&board, &a.out)?;
    if let Some(path) = &a.patterns_out {
        write_text(path, &data::builtin_patterns().to_json()?)?;
    }
    println!(
        "wrote {}x{} board with {} live cells to {}",
        board.height(),
        board.width(),
        board.alive_count(),
        a.out.display()
    );
    Ok(())
}

fn coverage_cmd(a: CoverageArgs) -> Result<()> {
    print_resolved("coverage", &json!({ "board": a.board, "json": a.json }))?;
    let board = match &a.board {
        Some(path) => load_board(path)?,
        None => data::fixed_board(),
    };
    let report = coverage(&board);
    if a.json {
        println!(
            "{}",
            serde_json::to_string(&json!({
                "counts": report.counts,
                "covered": report.covered_classes(),
                "fraction": report.covered_fraction(),
            }))?
        );
    } else {
        println!("{report}");
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::new(a.flags.resolve()?, 1, a.seed).run_config(0);
    if let Some(s) = a.init_seed {
        cfg.init_seed = s;
    }
    if let Some(s) = a.data_seed {
        cfg.data_seed = s;
    }
    if let Some(s) = a.test_seed {
        cfg.test_seed = s;
    }
    print_resolved("train", &cfg)?;
    let result = train_once(&cfg)?;
    if let Some(path) = &a.out {
        write_text(path, &serde_json::to_string_pretty(&result)?)?;
    }
    println!(
        "success={} epochs_to_success={} epochs_run={} final_accuracy={:.6} divergence={}",
        result.success,
        result
            .epochs_to_success
            .map_or_else(|| "-".to_string(), |e| e.to_string()),
        result.epochs_run,
        result.final_accuracy,
        result.divergence_flag
    );
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::new(a.flags.resolve()?, a.batch.runs, a.batch.seed);
    let workers = a.batch.workers.unwrap_or_else(default_workers);
    print_resolved("experiment", &json!({ "experiment": cfg, "workers": workers }))?;
    let result = run_experiment(&cfg, workers)?;
    if let Some(path) = &a.batch.out {
        write_text(path, &result.to_json()?)?;
    }
    let s = &result.summary;
    println!(
        "{} {} {} n={} lr={}: success_rate={:.2} mean_epochs={} divergences={}",
        s.algorithm,
        s.dataset,
        s.activation,
        s.n_steps,
        crate::harness::format_learning_rate(Some(s.learning_rate)),
        s.success_rate,
        s.mean_epochs.map_or_else(|| "-".to_string(), |m| format!("{m:.0}")),
        s.divergences
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let template = a.flags.resolve()?;
    let grid = match &a.grid {
        Some(s) => parse_grid(s)?,
        None => LEARNING_RATE_GRID.to_vec(),
    };
    let workers = a.batch.workers.unwrap_or_else(default_workers);
    print_resolved(
        "sweep",
        &json!({
            "template": template,
            "grid": grid,
            "runs": a.batch.runs,
            "seed": a.batch.seed,
            "workers": workers,
        }),
    )?;
    if a.batch.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let result = grid_search(&template, &grid, a.batch.runs, a.batch.seed, workers)?;
    if let Some(path) = &a.batch.out {
        write_text(path, &result.to_json()?)?;
    }
    let mut out = std::io::stdout().lock();
    for s in &result.summaries {
        writeln!(
            out,
            "lr={} success_rate={:.2}",
            crate::harness::format_learning_rate(Some(s.learning_rate)),
            s.success_rate
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    writeln!(out, "best={}", result.best_label()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    print_resolved("report", &json!({ "inputs": a.inputs, "out_dir": a.out_dir }))?;
    let mut summaries = Vec::new();
    for path in &a.inputs {
        summaries.extend(load_summaries(path)?);
    }
    let (csv, json_path) = report(summaries, &a.out_dir)?;
    print!("{}", fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?);
    println!("wrote {} and {}", csv.display(), json_path.display());
    Ok(())
}
