//! Training runs, success evaluation, batched experiments, learning-rate
//! grid search and result tables.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, DEFAULT_DENSITY, TRAIN_BOARD_SIZE};
use crate::error::{Error, Result};
use crate::life::{step_n, Board};
use crate::network::{
    all_correct, count_correct, loss_and_gradient, Activation, ArchMode, ModelArch, NetworkParams,
    Sample,
};
use crate::optim::{Algorithm, OptimizerConfig, OptimizerState};
use crate::seed::{derive_seed, rng_from_seed, STREAM_DATA, STREAM_INIT, STREAM_PROXY, STREAM_TEST};

pub const DEFAULT_MAX_EPOCHS: usize = 10_000;
pub const DEFAULT_RUNS: usize = 100;
/// Placeholder for a table cell whose baseline has no successful runs.
pub const MISSING_CHANGE: &str = "—";
/// Placeholder for a grid search in which no learning rate succeeded.
pub const NO_LEARNING_RATE: &str = "----";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    /// A fresh random board every epoch.
    Random,
    /// The same reflected board every epoch.
    Fixed,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Random => "random",
            Dataset::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Dataset::Random),
            "fixed" => Ok(Dataset::Fixed),
            _ => Err(Error::UnknownName {
                kind: "dataset",
                name: s.to_string(),
            }),
        }
    }
}

/// Starting parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    Glorot,
    ReluSolution,
    TanhSolution,
}

impl FromStr for Initialization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glorot" => Ok(Initialization::Glorot),
            "relu-solution" => Ok(Initialization::ReluSolution),
            "tanh-solution" => Ok(Initialization::TanhSolution),
            _ => Err(Error::UnknownName {
                kind: "initialization",
                name: s.to_string(),
            }),
        }
    }
}

/// Size of a set of random evaluation boards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSetSpec {
    pub boards: usize,
    pub size: usize,
    pub density: f64,
}

impl BoardSetSpec {
    pub const TEST: BoardSetSpec = BoardSetSpec {
        boards: 100,
        size: 100,
        density: DEFAULT_DENSITY,
    };
    pub const PROXY: BoardSetSpec = BoardSetSpec {
        boards: 10,
        size: 64,
        density: DEFAULT_DENSITY,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_steps: usize,
    pub arch_mode: ArchMode,
    pub activation: Activation,
    pub dataset: Dataset,
    pub optimizer: OptimizerConfig,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Screen each evaluation on a small proxy set and only evaluate the full
    /// test set once the proxy is solved.
    pub proxy_eval: bool,
    pub init: Initialization,
    pub init_seed: u64,
    pub data_seed: u64,
    pub test_seed: u64,
    pub train_size: usize,
    pub test_set: BoardSetSpec,
    pub proxy_set: BoardSetSpec,
    /// Board file replacing the built-in fixed board.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_board: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_steps: 1,
            arch_mode: ArchMode::Recursive,
            activation: Activation::Tanh,
            dataset: Dataset::Random,
            optimizer: OptimizerConfig::new(Algorithm::Adam, crate::optim::DEFAULT_LEARNING_RATE),
            max_epochs: DEFAULT_MAX_EPOCHS,
            eval_every: 1,
            proxy_eval: true,
            init: Initialization::Glorot,
            init_seed: 0,
            data_seed: 0,
            test_seed: 0,
            train_size: TRAIN_BOARD_SIZE,
            test_set: BoardSetSpec::TEST,
            proxy_set: BoardSetSpec::PROXY,
            fixed_board: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::ZeroSteps(0));
        }
        if self.arch_mode == ArchMode::Single && self.n_steps != 1 {
            return Err(Error::Config(format!(
                "single mode is one step, got {}",
                self.n_steps
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.train_size == 0 {
            return Err(Error::Config("train_size must be at least 1".into()));
        }
        for (name, set) in [("test_set", &self.test_set), ("proxy_set", &self.proxy_set)] {
            if set.boards == 0 || set.size == 0 {
                return Err(Error::Config(format!("{name} must be nonempty")));
            }
            if !(0.0..=1.0).contains(&set.density) {
                return Err(Error::Config(format!("{name} density must lie in [0, 1]")));
            }
        }
        self.optimizer.validate()
    }

    fn initial_model(&self) -> Result<ModelArch> {
        match self.init {
            Initialization::Glorot => ModelArch::init(self.arch_mode, self.n_steps, self.init_seed),
            Initialization::ReluSolution => {
                ModelArch::replicated(self.arch_mode, self.n_steps, NetworkParams::relu_solution())
            }
            Initialization::TanhSolution => {
                ModelArch::replicated(self.arch_mode, self.n_steps, NetworkParams::tanh_solution())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: TrainConfig,
    pub success: bool,
    pub epochs_to_success: Option<usize>,
    pub epochs_run: usize,
    /// Per-cell accuracy of the final parameters on the full test set.
    pub final_accuracy: f64,
    pub divergence_flag: bool,
    /// Training loss and accuracy on the epoch's board, before its update.
    pub loss_trace: Vec<f64>,
    pub accuracy_trace: Vec<f64>,
    pub final_params: Vec<f64>,
}

impl RunResult {
    pub fn record(&self, run: usize, seed: u64) -> RunRecord {
        RunRecord {
            run,
            seed,
            success: self.success,
            epochs_to_success: self.epochs_to_success,
            epochs_run: self.epochs_run,
            final_accuracy: self.final_accuracy,
            final_loss: self.loss_trace.last().copied(),
            divergence_flag: self.divergence_flag,
        }
    }
}

/// The trace-free part of a [`RunResult`] kept in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub success: bool,
    pub epochs_to_success: Option<usize>,
    pub epochs_run: usize,
    pub final_accuracy: f64,
    pub final_loss: Option<f64>,
    pub divergence_flag: bool,
}

/// `count` input/target pairs at `size x size`, board `i` drawn from
/// `derive_seed(seed, stream, i)`.
fn board_set(spec: &BoardSetSpec, n_steps: usize, seed: u64, stream: u64) -> Result<Vec<(Board, Board)>> {
    (0..spec.boards)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, stream, i as u64));
            let x = Board::random(spec.size, spec.size, spec.density, &mut rng)?;
            let y = step_n(&x, n_steps)?;
            Ok((x, y))
        })
        .collect()
}

/// The default test set: 100 random 100x100 boards with their n-step targets.
pub fn make_testset(n_steps: usize, test_seed: u64) -> Result<Vec<(Board, Board)>> {
    make_testset_with(&BoardSetSpec::TEST, n_steps, test_seed)
}

pub fn make_testset_with(
    spec: &BoardSetSpec,
    n_steps: usize,
    test_seed: u64,
) -> Result<Vec<(Board, Board)>> {
    if n_steps == 0 {
        return Err(Error::ZeroSteps(0));
    }
    board_set(spec, n_steps, test_seed, STREAM_TEST)
}

fn to_samples(pairs: &[(Board, Board)]) -> Result<Vec<Sample>> {
    pairs.iter().map(|(x, y)| Sample::new(x, y)).collect()
}

/// Per-cell accuracy over every cell of every pair.
pub fn evaluate(arch: &ModelArch, act: Activation, testset: &[(Board, Board)]) -> Result<f64> {
    accuracy(arch, act, &to_samples(testset)?)
}

fn accuracy(arch: &ModelArch, act: Activation, samples: &[Sample]) -> Result<f64> {
    let mut correct = 0;
    let mut total = 0;
    for s in samples {
        correct += count_correct(arch, act, s)?;
        total += s.len();
    }
    Ok(if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    })
}

fn solves(arch: &ModelArch, act: Activation, samples: &[Sample]) -> Result<bool> {
    for s in samples {
        if !all_correct(arch, act, s)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Everything a run evaluates against, shareable between runs.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub test: Vec<Sample>,
    pub proxy: Vec<Sample>,
}

impl EvalSets {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let test = to_samples(&make_testset_with(&cfg.test_set, cfg.n_steps, cfg.test_seed)?)?;
        let proxy = if cfg.proxy_eval {
            to_samples(&board_set(&cfg.proxy_set, cfg.n_steps, cfg.test_seed, STREAM_PROXY)?)?
        } else {
            Vec::new()
        };
        Ok(EvalSets { test, proxy })
    }
}

fn fixed_training_board(cfg: &TrainConfig) -> Result<Board> {
    match &cfg.fixed_board {
        Some(path) => data::load_board(path),
        None => Ok(data::fixed_board()),
    }
}

/// One training run with its own test set.
pub fn train_once(cfg: &TrainConfig) -> Result<RunResult> {
    cfg.validate()?;
    let sets = EvalSets::new(cfg)?;
    train_with(cfg, &sets)
}

/// One training run against prepared evaluation sets.
///
/// Each epoch takes one optimizer step on one board. Evaluation follows the
/// step, so a success at epoch `e` means the parameters after `e` updates
/// solve the whole test set.
pub fn train_with(cfg: &TrainConfig, sets: &EvalSets) -> Result<RunResult> {
    cfg.validate()?;
    let act = cfg.activation;
    let mut model = cfg.initial_model()?;
    let mut state = OptimizerState::new(&cfg.optimizer, model.layout());
    let mut params = model.flat_params();

    let fixed = match cfg.dataset {
        Dataset::Fixed => {
            let x = fixed_training_board(cfg)?;
            let y = step_n(&x, cfg.n_steps)?;
            Some(Sample::new(&x, &y)?)
        }
        Dataset::Random => None,
    };
    let mut data_rng = rng_from_seed(cfg.data_seed);

    let mut loss_trace = Vec::with_capacity(cfg.max_epochs.min(DEFAULT_MAX_EPOCHS));
    let mut accuracy_trace = Vec::with_capacity(loss_trace.capacity());
    let mut epochs_to_success = None;
    let mut divergence_flag = false;
    let mut epoch = 0;

    while epoch < cfg.max_epochs {
        epoch += 1;
        let sample = match &fixed {
            Some(s) => std::borrow::Cow::Borrowed(s),
            None => {
                let x = Board::random(cfg.train_size, cfg.train_size, DEFAULT_DENSITY, &mut data_rng)?;
                let y = step_n(&x, cfg.n_steps)?;
                std::borrow::Cow::Owned(Sample::new(&x, &y)?)
            }
        };
        let eval = match loss_and_gradient(&model, act, &sample) {
            Ok(e) => e,
            Err(Error::NumericalOverflow(_)) => {
                divergence_flag = true;
                break;
            }
            Err(e) => return Err(e),
        };
        loss_trace.push(eval.loss);
        accuracy_trace.push(eval.correct as f64 / sample.len() as f64);

        let previous = params.clone();
        match cfg.optimizer.step(&mut state, &mut params, &eval.gradient) {
            Ok(()) => {}
            Err(Error::Divergence(_)) => {
                params = previous;
                divergence_flag = true;
                break;
            }
            Err(e) => return Err(e),
        }
        model.set_flat_params(&params)?;

        if epoch % cfg.eval_every == 0 {
            let solved = (|| -> Result<bool> {
                if cfg.proxy_eval && !solves(&model, act, &sets.proxy)? {
                    return Ok(false);
                }
                solves(&model, act, &sets.test)
            })();
            match solved {
                Ok(true) => {
                    epochs_to_success = Some(epoch);
                    break;
                }
                Ok(false) => {}
                Err(Error::NumericalOverflow(_)) => {
                    divergence_flag = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    let final_accuracy = if epochs_to_success.is_some() {
        1.0
    } else {
        accuracy(&model, act, &sets.test).unwrap_or(0.0)
    };
    Ok(RunResult {
        config: cfg.clone(),
        success: epochs_to_success.is_some(),
        epochs_to_success,
        epochs_run: epoch,
        final_accuracy,
        divergence_flag,
        loss_trace,
        accuracy_trace,
        final_params: params,
    })
}

/// Settings of a batch of independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub template: TrainConfig,
    pub n_runs: usize,
    /// Run `i` uses seed `seed_base + i` for its initialization and data.
    pub seed_base: u64,
}

impl ExperimentConfig {
    pub fn new(template: TrainConfig, n_runs: usize, seed_base: u64) -> Self {
        ExperimentConfig {
            template,
            n_runs,
            seed_base,
        }
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed_base.wrapping_add(run as u64)
    }

    /// The configuration of run `run`. All runs share one test set.
    pub fn run_config(&self, run: usize) -> TrainConfig {
        let seed = self.run_seed(run);
        TrainConfig {
            init_seed: derive_seed(seed, STREAM_INIT, 0),
            data_seed: derive_seed(seed, STREAM_DATA, 0),
            test_seed: derive_seed(self.seed_base, STREAM_TEST, 0),
            ..self.template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    pub dataset: Dataset,
    pub activation: Activation,
    pub arch: ArchMode,
    pub n_steps: usize,
    pub learning_rate: f64,
    pub runs: usize,
    pub successes: usize,
    pub divergences: usize,
    pub success_rate: f64,
    /// Mean epochs-to-success over successful runs only.
    pub mean_epochs: Option<f64>,
}

impl ExperimentSummary {
    pub fn from_records(template: &TrainConfig, records: &[RunRecord]) -> Self {
        let successes: Vec<usize> = records.iter().filter_map(|r| r.epochs_to_success).collect();
        let mean_epochs = (!successes.is_empty())
            .then(|| successes.iter().sum::<usize>() as f64 / successes.len() as f64);
        ExperimentSummary {
            algorithm: template.optimizer.algorithm(),
            dataset: template.dataset,
            activation: template.activation,
            arch: template.arch_mode,
            n_steps: template.n_steps,
            learning_rate: template.optimizer.learning_rate,
            runs: records.len(),
            successes: successes.len(),
            divergences: records.iter().filter(|r| r.divergence_flag).count(),
            success_rate: if records.is_empty() {
                0.0
            } else {
                successes.len() as f64 / records.len() as f64
            },
            mean_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Worker count used when none is given.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `n_runs` independent trainings on up to `workers` threads. Results
/// do not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    if cfg.n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    cfg.template.validate()?;
    let pool = thread_pool(workers)?;
    pool.install(|| {
        let sets = EvalSets::new(&cfg.run_config(0))?;
        let runs = (0..cfg.n_runs)
            .into_par_iter()
            .map(|i| Ok(train_with(&cfg.run_config(i), &sets)?.record(i, cfg.run_seed(i))))
            .collect::<Result<Vec<_>>>()?;
        let summary = ExperimentSummary::from_records(&cfg.template, &runs);
        Ok(ExperimentResult {
            config: cfg.clone(),
            runs,
            summary,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    /// `(fixed - random) / random`.
    Success,
    /// `(random - fixed) / random`; positive when fixed needs fewer epochs.
    Epochs,
}

/// Relative change from the random-board value to the fixed-board value, as
/// a fraction. `None` when the baseline is missing or not positive.
pub fn relative_change(random: Option<f64>, fixed: Option<f64>, kind: ChangeKind) -> Option<f64> {
    let (random, fixed) = (random?, fixed?);
    if !(random > 0.0) {
        return None;
    }
    Some(match kind {
        ChangeKind::Success => (fixed - random) / random,
        ChangeKind::Epochs => (random - fixed) / random,
    })
}

/// Signed integer percent, e.g. `+39%`, or the missing-baseline dash.
pub fn format_change(change: Option<f64>) -> String {
    match change {
        None => MISSING_CHANGE.to_string(),
        Some(c) => {
            let pct = (c * 100.0).round() as i64;
            if pct >= 0 {
                format!("+{pct}%")
            } else {
                format!("{pct}%")
            }
        }
    }
}

/// Learning rate in table notation, e.g. `3e-2`.
pub fn format_learning_rate(lr: Option<f64>) -> String {
    match lr {
        Some(lr) => format!("{lr:e}"),
        None => NO_LEARNING_RATE.to_string(),
    }
}

/// The learning rate with the highest success rate; ties go to the smaller
/// rate. `None` when no rate has any success.
pub fn select_learning_rate(table: &[(f64, f64)]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(lr, rate) in table {
        if !(rate > 0.0) {
            continue;
        }
        best = match best {
            Some((blr, brate)) if brate > rate || (brate == rate && blr <= lr) => Some((blr, brate)),
            _ => Some((lr, rate)),
        };
    }
    best.map(|(lr, _)| lr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub template: TrainConfig,
    pub n_runs: usize,
    pub seed_base: u64,
    pub summaries: Vec<ExperimentSummary>,
    pub best_learning_rate: Option<f64>,
}

impl GridSearchResult {
    pub fn best_label(&self) -> String {
        format_learning_rate(self.best_learning_rate)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs an experiment per learning rate (same seeds for each) and picks the
/// best rate.
pub fn grid_search(
    template: &TrainConfig,
    grid: &[f64],
    n_runs: usize,
    seed_base: u64,
    workers: usize,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("learning-rate grid is empty".into()));
    }
    let summaries = grid
        .iter()
        .map(|&lr| {
            let cfg = ExperimentConfig::new(
                TrainConfig {
                    optimizer: template.optimizer.clone().with_learning_rate(lr),
                    ..template.clone()
                },
                n_runs,
                seed_base,
            );
            Ok(run_experiment(&cfg, workers)?.summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| (s.learning_rate, s.success_rate))
        .collect();
    Ok(GridSearchResult {
        template: template.clone(),
        n_runs,
        seed_base,
        best_learning_rate: select_learning_rate(&table),
        summaries,
    })
}

/// Random-versus-fixed comparison for one (algorithm, activation, arch,
/// steps) cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub algorithm: Algorithm,
    pub activation: Activation,
    pub arch: ArchMode,
    pub n_steps: usize,
    pub success_random: Option<f64>,
    pub success_fixed: Option<f64>,
    pub success_change: String,
    pub epochs_random: Option<f64>,
    pub epochs_fixed: Option<f64>,
    pub epochs_change: String,
}

type GroupKey = (Algorithm, Activation, ArchMode, usize);

/// Pairs random and fixed summaries that share every other key.
pub fn compare(summaries: &[ExperimentSummary]) -> Vec<Comparison> {
    let mut keys: Vec<GroupKey> = Vec::new();
    for s in summaries {
        let key = (s.algorithm, s.activation, s.arch, s.n_steps);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(algorithm, activation, arch, n_steps)| {
            let find = |d: Dataset| {
                summaries.iter().find(|s| {
                    s.dataset == d
                        && (s.algorithm, s.activation, s.arch, s.n_steps)
                            == (algorithm, activation, arch, n_steps)
                })
            };
            let (random, fixed) = (find(Dataset::Random), find(Dataset::Fixed));
            let success_random = random.map(|s| s.success_rate);
            let success_fixed = fixed.map(|s| s.success_rate);
            let epochs_random = random.and_then(|s| s.mean_epochs);
            let epochs_fixed = fixed.and_then(|s| s.mean_epochs);
            Comparison {
                algorithm,
                activation,
                arch,
                n_steps,
                success_random,
                success_fixed,
                success_change: format_change(relative_change(
                    success_random,
                    success_fixed,
                    ChangeKind::Success,
                )),
                epochs_random,
                epochs_fixed,
                epochs_change: format_change(relative_change(
                    epochs_random,
                    epochs_fixed,
                    ChangeKind::Epochs,
                )),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summaries: Vec<ExperimentSummary>,
    pub comparisons: Vec<Comparison>,
}

impl Report {
    pub fn new(summaries: Vec<ExperimentSummary>) -> Result<Self> {
        if summaries.is_empty() {
            return Err(Error::Config("report needs at least one summary".into()));
        }
        let comparisons = compare(&summaries);
        Ok(Report {
            summaries,
            comparisons,
        })
    }

    pub const CSV_HEADER: &'static str = "algorithm,activation,arch,n_steps,success_random,success_fixed,success_change,epochs_random,epochs_fixed,epochs_change";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| v.map_or(String::new(), |v| format!("{v:.digits$}"));
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.comparisons {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.algorithm,
                c.activation,
                c.arch,
                c.n_steps,
                opt(c.success_random, 2),
                opt(c.success_fixed, 2),
                c.success_change,
                opt(c.epochs_random, 0),
                opt(c.epochs_fixed, 0),
                c.epochs_change,
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes `report.csv` and `report.json` into `dir`, returning both paths.
pub fn report(summaries: Vec<ExperimentSummary>, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let report = Report::new(summaries)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    let json = dir.join("report.json");
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

/// Reads the summaries out of experiment, grid-search or report JSON files.
pub fn load_summaries(path: impl AsRef<Path>) -> Result<Vec<ExperimentSummary>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(summary) = value.get("summary") {
        return Ok(vec![serde_json::from_value(summary.clone())?]);
    }
    if let Some(summaries) = value.get("summaries") {
        return Ok(serde_json::from_value(summaries.clone())?);
    }
    Err(Error::Config(format!(
        "{} holds no experiment summaries",
        path.display()
    )))
}

/// Learning rates tuned by grid search for each setting; `None` where no
/// rate succeeded. Indexed `[algorithm][random relu, random tanh, fixed relu,
/// fixed tanh]`, algorithms in [`Algorithm::ALL`] order.
const ONE_STEP_RATES: [[Option<f64>; 4]; 10] = [
    [Some(1e-1), Some(1e-1), Some(1e-1), Some(1e-1)],
    [Some(3e-2), Some(1e-2), Some(3e-2), Some(3e-2)],
    [Some(1e-1), Some(3e-2), Some(1e-1), Some(1e-1)],
    [Some(1e-3), Some(3e-2), Some(3e-3), Some(3e-2)],
    [Some(3e-4), Some(1e-2), Some(1e-2), Some(1e-1)],
    [Some(3e-4), Some(3e-2), Some(1e-2), Some(1e-3)],
    [Some(1e-1), Some(1e-1), Some(1e-1), Some(1e-1)],
    [Some(1e-2), Some(1e-3), Some(1e-3), Some(1e-2)],
    [Some(3e-3), Some(3e-2), Some(1e-2), Some(1e-2)],
    [Some(3e-2), Some(1e-1), Some(1e-1), Some(1e-1)],
];

const TWO_STEP_RECURSIVE_RATES: [[Option<f64>; 4]; 10] = [
    [None, None, Some(1e-1), Some(1e-1)],
    [Some(3e-2), Some(3e-2), Some(3e-2), Some(1e-1)],
    [Some(1e-1), Some(1e-1), Some(1e-1), Some(1e-1)],
    [Some(1e-3), Some(3e-3), Some(3e-4), Some(1e-3)],
    [Some(3e-3), Some(1e-2), Some(1e-3), Some(1e-3)],
    [Some(1e-2), Some(1e-2), Some(1e-3), Some(1e-3)],
    [None, None, Some(1e-1), Some(1e-1)],
    [Some(1e-3), Some(3e-3), Some(3e-4), Some(1e-3)],
    [Some(1e-3), Some(3e-3), Some(1e-3), Some(3e-3)],
    [None, None, Some(1e-1), Some(1e-1)],
];

const TWO_STEP_SEQUENTIAL_RATES: [[Option<f64>; 4]; 10] = [
    [None, None, None, None],
    [None, Some(1e-1), None, Some(3e-2)],
    [Some(1e-1), Some(1e-1), Some(1e-1), Some(1e-1)],
    [Some(1e-3), Some(3e-3), Some(3e-4), Some(3e-3)],
    [Some(3e-3), Some(3e-3), Some(1e-3), Some(1e-3)],
    [Some(3e-3), Some(3e-2), Some(3e-3), Some(3e-3)],
    [None, None, None, Some(1e-1)],
    [None, Some(1e-3), Some(1e-3), Some(1e-3)],
    [None, Some(3e-3), Some(1e-3), Some(1e-3)],
    [None, None, None, Some(1e-1)],
];

/// Reference learning rate for a setting, when one is known.
///
/// Returns `None` both for settings with no reference entry (n > 2) and
/// for settings in which no rate of the grid led to a successful run.
pub fn reference_learning_rate(
    algorithm: Algorithm,
    n_steps: usize,
    arch: ArchMode,
    dataset: Dataset,
    activation: Activation,
) -> Option<f64> {
    let table = match (n_steps, arch) {
        (1, _) => &ONE_STEP_RATES,
        (2, ArchMode::Recursive) => &TWO_STEP_RECURSIVE_RATES,
        (2, ArchMode::Sequential) => &TWO_STEP_SEQUENTIAL_RATES,
        _ => return None,
    };
    let row = Algorithm::ALL.iter().position(|&a| a == algorithm)?;
    let col = match (dataset, activation) {
        (Dataset::Random, Activation::Relu) => 0,
        (Dataset::Random, Activation::Tanh) => 1,
        (Dataset::Fixed, Activation::Relu) => 2,
        (Dataset::Fixed, Activation::Tanh) => 3,
    };
    table[row][col]
}
