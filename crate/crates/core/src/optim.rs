//! First-order optimizers as explicit state transitions.
//!
//! Every algorithm updates a flat parameter vector in place from a gradient
//! and an [`OptimizerState`] it owns. Update rules follow the Keras 2.x
//! formulations of each method, with two exceptions noted on the variants:
//! Adafactor uses the supplied learning rate directly, and FTRL starts its
//! dual state consistent with the initial parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The optimizer families available to training runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Adadelta,
    Adafactor,
    Adagrad,
    Adam,
    AdamW,
    Adamax,
    Ftrl,
    Nadam,
    RmsProp,
    Sgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Adadelta,
        Algorithm::Adafactor,
        Algorithm::Adagrad,
        Algorithm::Adam,
        Algorithm::AdamW,
        Algorithm::Adamax,
        Algorithm::Ftrl,
        Algorithm::Nadam,
        Algorithm::RmsProp,
        Algorithm::Sgd,
    ];

    /// Display name as used in result tables.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adadelta => "Adadelta",
            Algorithm::Adafactor => "Adafactor",
            Algorithm::Adagrad => "Adagrad",
            Algorithm::Adam => "Adam",
            Algorithm::AdamW => "AdamW",
            Algorithm::Adamax => "Adamax",
            Algorithm::Ftrl => "Ftrl",
            Algorithm::Nadam => "Nadam",
            Algorithm::RmsProp => "RMSprop",
            Algorithm::Sgd => "SGD",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::UnknownName {
                kind: "algorithm",
                name: s.to_string(),
            })
    }
}

/// Per-algorithm hyperparameters other than the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Hyperparameters {
    Adadelta {
        rho: f64,
        epsilon: f64,
    },
    /// Factored second moments with decay `1 - t^decay_exponent`, no first
    /// moment, update clipping. The step size is the learning rate itself
    /// (no relative-step or parameter-scale factor).
    Adafactor {
        decay_exponent: f64,
        epsilon1: f64,
        clip_threshold: f64,
    },
    Adagrad {
        initial_accumulator: f64,
        epsilon: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    #[serde(rename = "adamw")]
    AdamW {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    },
    Adamax {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    /// FTRL-proximal. The dual state is initialized so that the starting
    /// parameters are a fixed point under a zero gradient.
    Ftrl {
        learning_rate_power: f64,
        initial_accumulator: f64,
        l1: f64,
        l2: f64,
    },
    /// Nesterov Adam with the momentum schedule
    /// `mu_t = beta1 * (1 - 0.5 * 0.96^(momentum_decay * t))`.
    Nadam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        momentum_decay: f64,
    },
    #[serde(rename = "rmsprop")]
    RmsProp {
        rho: f64,
        epsilon: f64,
    },
    Sgd {
        momentum: f64,
        nesterov: bool,
    },
}

impl Hyperparameters {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparameters::Adadelta { .. } => Algorithm::Adadelta,
            Hyperparameters::Adafactor { .. } => Algorithm::Adafactor,
            Hyperparameters::Adagrad { .. } => Algorithm::Adagrad,
            Hyperparameters::Adam { .. } => Algorithm::Adam,
            Hyperparameters::AdamW { .. } => Algorithm::AdamW,
            Hyperparameters::Adamax { .. } => Algorithm::Adamax,
            Hyperparameters::Ftrl { .. } => Algorithm::Ftrl,
            Hyperparameters::Nadam { .. } => Algorithm::Nadam,
            Hyperparameters::RmsProp { .. } => Algorithm::RmsProp,
            Hyperparameters::Sgd { .. } => Algorithm::Sgd,
        }
    }

    pub fn defaults(algorithm: Algorithm) -> Self {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-7;
        match algorithm {
            Algorithm::Adadelta => Hyperparameters::Adadelta {
                rho: 0.95,
                epsilon: EPS,
            },
            Algorithm::Adafactor => Hyperparameters::Adafactor {
                decay_exponent: -0.8,
                epsilon1: 1e-30,
                clip_threshold: 1.0,
            },
            Algorithm::Adagrad => Hyperparameters::Adagrad {
                initial_accumulator: 0.1,
                epsilon: EPS,
            },
            Algorithm::Adam => Hyperparameters::Adam {
                beta1: BETA1,
                beta2: BETA2,
                epsilon: EPS,
            },
            Algorithm::AdamW => Hyperparameters::AdamW {
                beta1: BETA1,
                beta2: BETA2,
                epsilon: EPS,
                weight_decay: 0.004,
            },
            Algorithm::Adamax => Hyperparameters::Adamax {
                beta1: BETA1,
                beta2: BETA2,
                epsilon: EPS,
            },
            Algorithm::Ftrl => Hyperparameters::Ftrl {
                learning_rate_power: -0.5,
                initial_accumulator: 0.1,
                l1: 0.0,
                l2: 0.0,
            },
            Algorithm::Nadam => Hyperparameters::Nadam {
                beta1: BETA1,
                beta2: BETA2,
                epsilon: EPS,
                momentum_decay: 0.004,
            },
            Algorithm::RmsProp => Hyperparameters::RmsProp {
                rho: 0.9,
                epsilon: EPS,
            },
            Algorithm::Sgd => Hyperparameters::Sgd {
                momentum: 0.9,
                nesterov: false,
            },
        }
    }
}

/// Learning rate used when none is supplied.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// The learning rates swept by [`crate::harness::grid_search`].
pub const LEARNING_RATE_GRID: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    #[serde(flatten)]
    pub hyperparameters: Hyperparameters,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            hyperparameters: Hyperparameters::defaults(algorithm),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.hyperparameters.algorithm()
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Applies one update to `params` in place.
    pub fn step(&self, state: &mut OptimizerState, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || params.len() != state.layout.len() {
            return Err(Error::Config(format!(
                "optimizer shapes disagree: params {}, grad {}, state {}",
                params.len(),
                grad.len(),
                state.layout.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite gradient {} at index {i}",
                grad[i]
            )));
        }
        let lr = self.learning_rate;
        let t = state.step + 1;
        let tf = t as f64;
        match self.hyperparameters {
            Hyperparameters::Sgd { momentum, nesterov } => {
                for ((p, &g), v) in params.iter_mut().zip(grad).zip(&mut state.first) {
                    *v = momentum * *v - lr * g;
                    if nesterov {
                        *p += momentum * *v - lr * g;
                    } else {
                        *p += *v;
                    }
                }
            }
            Hyperparameters::Adam {
                beta1,
                beta2,
                epsilon,
            } => adam_update(state, params, grad, lr, beta1, beta2, epsilon, tf),
            Hyperparameters::AdamW {
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => {
                for p in params.iter_mut() {
                    *p -= *p * weight_decay * lr;
                }
                adam_update(state, params, grad, lr, beta1, beta2, epsilon, tf);
            }
            Hyperparameters::Adamax {
                beta1,
                beta2,
                epsilon,
            } => {
                let bias = 1.0 - beta1.powf(tf);
                for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                    let m = &mut state.first[i];
                    let u = &mut state.second[i];
                    *m += (g - *m) * (1.0 - beta1);
                    *u = (beta2 * *u).max(g.abs());
                    *p -= lr * *m / (bias * (*u + epsilon));
                }
            }
            Hyperparameters::Nadam {
                beta1,
                beta2,
                epsilon,
                momentum_decay,
            } => {
                let mu = |step: f64| beta1 * (1.0 - 0.5 * 0.96f64.powf(momentum_decay * step));
                let mu_t = mu(tf);
                let mu_next = mu(tf + 1.0);
                let product = state.momentum_product * mu_t;
                let product_next = product * mu_next;
                state.momentum_product = product;
                let beta2_power = beta2.powf(tf);
                for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                    let m = &mut state.first[i];
                    let v = &mut state.second[i];
                    *m += (g - *m) * (1.0 - beta1);
                    *v += (g * g - *v) * (1.0 - beta2);
                    let m_hat =
                        mu_next * *m / (1.0 - product_next) + (1.0 - mu_t) * g / (1.0 - product);
                    let v_hat = *v / (1.0 - beta2_power);
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
            Hyperparameters::Adagrad { epsilon, .. } => {
                for ((p, &g), acc) in params.iter_mut().zip(grad).zip(&mut state.second) {
                    *acc += g * g;
                    *p -= lr * g / (*acc + epsilon).sqrt();
                }
            }
            Hyperparameters::RmsProp { rho, epsilon } => {
                for ((p, &g), v) in params.iter_mut().zip(grad).zip(&mut state.second) {
                    *v = rho * *v + (1.0 - rho) * g * g;
                    *p -= lr * g / (*v + epsilon).sqrt();
                }
            }
            Hyperparameters::Adadelta { rho, epsilon } => {
                for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                    let acc_grad = &mut state.second[i];
                    let acc_delta = &mut state.first[i];
                    *acc_grad = rho * *acc_grad + (1.0 - rho) * g * g;
                    let delta = -(*acc_delta + epsilon).sqrt() * g / (*acc_grad + epsilon).sqrt();
                    *acc_delta = rho * *acc_delta + (1.0 - rho) * delta * delta;
                    *p += lr * delta;
                }
            }
            Hyperparameters::Ftrl {
                learning_rate_power,
                l1,
                l2,
                ..
            } => {
                if lr > 0.0 {
                    let power = -learning_rate_power;
                    if state.step == 0 {
                        // Place the dual state so that the current parameters
                        // are exactly what the closed form below returns.
                        for (i, &w) in params.iter().enumerate() {
                            let quadratic = state.second[i].powf(power) / lr + 2.0 * l2;
                            state.first[i] = -w * quadratic - w.signum() * l1 * f64::from(w != 0.0);
                        }
                    }
                    for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                        let n = &mut state.second[i];
                        let z = &mut state.first[i];
                        let n_new = *n + g * g;
                        let sigma = (n_new.powf(power) - n.powf(power)) / lr;
                        *z += g - sigma * *p;
                        *n = n_new;
                        let quadratic = n_new.powf(power) / lr + 2.0 * l2;
                        *p = if z.abs() <= l1 {
                            0.0
                        } else {
                            -(*z - z.signum() * l1) / quadratic
                        };
                    }
                }
            }
            Hyperparameters::Adafactor {
                decay_exponent,
                epsilon1,
                clip_threshold,
            } => {
                let beta2 = 1.0 - tf.powf(decay_exponent);
                let mut factored = state.factored.iter_mut();
                for seg in state.layout.spans() {
                    let g = &grad[seg.offset..seg.offset + seg.len];
                    let mut update: Vec<f64> = Vec::with_capacity(seg.len);
                    if seg.is_matrix() {
                        let stats = factored.next().expect("one factored slot per matrix");
                        let (rows, cols) = (seg.rows, seg.cols);
                        for r in 0..rows {
                            let mean = (0..cols)
                                .map(|c| g[r * cols + c] * g[r * cols + c] + epsilon1)
                                .sum::<f64>()
                                / cols as f64;
                            stats.row[r] = beta2 * stats.row[r] + (1.0 - beta2) * mean;
                        }
                        for c in 0..cols {
                            let mean = (0..rows)
                                .map(|r| g[r * cols + c] * g[r * cols + c] + epsilon1)
                                .sum::<f64>()
                                / rows as f64;
                            stats.col[c] = beta2 * stats.col[c] + (1.0 - beta2) * mean;
                        }
                        let row_mean = stats.row.iter().sum::<f64>() / rows as f64;
                        for r in 0..rows {
                            for c in 0..cols {
                                let v = stats.row[r] / row_mean * stats.col[c];
                                update.push(g[r * cols + c] / v.sqrt());
                            }
                        }
                    } else {
                        let v = &mut state.second[seg.offset..seg.offset + seg.len];
                        for (vi, &gi) in v.iter_mut().zip(g) {
                            *vi = beta2 * *vi + (1.0 - beta2) * (gi * gi + epsilon1);
                            update.push(gi / vi.sqrt());
                        }
                    }
                    let rms = (update.iter().map(|u| u * u).sum::<f64>() / seg.len as f64).sqrt();
                    let scale = 1.0f64.max(rms / clip_threshold);
                    for (p, u) in params[seg.offset..seg.offset + seg.len].iter_mut().zip(&update) {
                        *p -= lr * u / scale;
                    }
                }
            }
        }
        state.step = t;
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Divergence(format!(
                "parameter {i} became non-finite at step {t}"
            )));
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    state: &mut OptimizerState,
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: f64,
) {
    let alpha = lr * (1.0 - beta2.powf(t)).sqrt() / (1.0 - beta1.powf(t));
    for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        *m += (g - *m) * (1.0 - beta1);
        *v += (g * g - *v) * (1.0 - beta2);
        *p -= *m * alpha / (v.sqrt() + epsilon);
    }
}

/// Canonical configuration for an algorithm name, at the default learning rate.
pub fn default_config(name: &str) -> Result<OptimizerConfig> {
    Ok(OptimizerConfig::new(name.parse()?, DEFAULT_LEARNING_RATE))
}

/// Pure form of [`OptimizerConfig::step`].
pub fn opt_step(
    cfg: &OptimizerConfig,
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
) -> Result<(Vec<f64>, OptimizerState)> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    cfg.step(&mut state, &mut params, grad)?;
    Ok((params, state))
}

/// One tensor within a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub rows: usize,
    pub cols: usize,
    matrix: bool,
}

impl Segment {
    pub fn matrix(rows: usize, cols: usize) -> Self {
        Segment {
            rows,
            cols,
            matrix: true,
        }
    }

    pub fn vector(len: usize) -> Self {
        Segment {
            rows: len,
            cols: 1,
            matrix: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Factored statistics need at least two dimensions.
    pub fn is_matrix(&self) -> bool {
        self.matrix && self.rows > 1 && self.cols > 1
    }
}

/// The tensor structure of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, Copy)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
    pub rows: usize,
    pub cols: usize,
    matrix: bool,
}

impl Span {
    pub fn is_matrix(&self) -> bool {
        self.matrix
    }
}

impl Layout {
    pub fn new(segments: Vec<Segment>) -> Self {
        Layout { segments }
    }

    /// A single unstructured vector.
    pub fn flat(len: usize) -> Self {
        Layout::new(vec![Segment::vector(len)])
    }

    pub fn repeat(unit: &Layout, times: usize) -> Self {
        Layout::new(
            std::iter::repeat_n(unit.segments.iter().copied(), times)
                .flatten()
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn spans(&self) -> Vec<Span> {
        let mut offset = 0;
        self.segments
            .iter()
            .map(|s| {
                let span = Span {
                    offset,
                    len: s.len(),
                    rows: s.rows,
                    cols: s.cols,
                    matrix: s.is_matrix(),
                };
                offset += s.len();
                span
            })
            .collect()
    }
}

/// Row and column second-moment statistics of one matrix (Adafactor).
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMoments {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

/// Slot variables of one optimizer run.
///
/// `first` holds momentum / first moment / accumulated updates / FTRL linear
/// terms; `second` holds second moments, accumulators or the Adamax infinity
/// norm, depending on the algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub factored: Vec<FactoredMoments>,
    /// Running product of Nadam momentum coefficients.
    pub momentum_product: f64,
    layout: Layout,
}

impl OptimizerState {
    pub fn new(cfg: &OptimizerConfig, layout: Layout) -> Self {
        let n = layout.len();
        let second_init = match cfg.hyperparameters {
            Hyperparameters::Adagrad {
                initial_accumulator,
                ..
            }
            | Hyperparameters::Ftrl {
                initial_accumulator,
                ..
            } => initial_accumulator,
            _ => 0.0,
        };
        let factored = match cfg.hyperparameters {
            Hyperparameters::Adafactor { .. } => layout
                .spans()
                .iter()
                .filter(|s| s.is_matrix())
                .map(|s| FactoredMoments {
                    row: vec![0.0; s.rows],
                    col: vec![0.0; s.cols],
                })
                .collect(),
            _ => Vec::new(),
        };
        OptimizerState {
            step: 0,
            first: vec![0.0; n],
            second: vec![second_init; n],
            factored,
            momentum_product: 1.0,
            layout,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkParams;

    fn block_layout() -> Layout {
        NetworkParams::layout()
    }

    fn one_step(cfg: &OptimizerConfig, params: &[f64], grad: &[f64]) -> Vec<f64> {
        let state = OptimizerState::new(cfg, Layout::flat(params.len()));
        opt_step(cfg, &state, params, grad).unwrap().0
    }

    #[test]
    fn sgd_first_step_has_no_momentum() {
        let cfg = OptimizerConfig::new(Algorithm::Sgd, 0.1);
        let p = one_step(&cfg, &[1.0], &[1.0]);
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let cfg = OptimizerConfig::new(Algorithm::Sgd, 0.1);
        let mut state = OptimizerState::new(&cfg, Layout::flat(1));
        let mut p = vec![1.0];
        cfg.step(&mut state, &mut p, &[1.0]).unwrap();
        cfg.step(&mut state, &mut p, &[1.0]).unwrap();
        // v1 = -0.1, v2 = 0.9 * -0.1 - 0.1 = -0.19
        assert!((p[0] - (1.0 - 0.1 - 0.19)).abs() < 1e-14);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let lr = 1e-3;
        let cfg = OptimizerConfig::new(Algorithm::Adam, lr);
        // Effective epsilon after bias correction at t = 1.
        let eps_hat = 1e-7 / (1.0f64 - 0.999).sqrt();
        for g in [1e-3, 1.0, 1e3, -1.0] {
            let p = one_step(&cfg, &[0.5], &[g]);
            let moved = (p[0] - 0.5).abs();
            let expected = lr * g.abs() / (g.abs() + eps_hat);
            assert!((moved - expected).abs() <= 1e-6 * expected, "g={g}");
            assert!((moved - lr).abs() <= 0.01 * lr);
            assert!((p[0] - 0.5).signum() == -g.signum());
        }
    }

    #[test]
    fn adagrad_first_step_closed_form() {
        let cfg = OptimizerConfig::new(Algorithm::Adagrad, 0.1);
        let p = one_step(&cfg, &[0.0], &[1.0]);
        let expected = 0.1 / (0.1f64 + 1.0).sqrt();
        assert!((p[0].abs() - expected).abs() <= 1e-7 * expected);
    }

    #[test]
    fn adamw_is_adam_plus_decoupled_decay() {
        let lr = 3e-2;
        let adam = OptimizerConfig::new(Algorithm::Adam, lr);
        let adamw = OptimizerConfig::new(Algorithm::AdamW, lr);
        let params = [0.7, -1.3, 2.0, 0.0];
        let grad = [0.2, -0.5, 1e-3, 4.0];
        let mut sa = OptimizerState::new(&adam, Layout::flat(4));
        let mut sw = OptimizerState::new(&adamw, Layout::flat(4));
        let (mut pa, mut pw) = (params.to_vec(), params.to_vec());
        for _ in 0..3 {
            let before = pw.clone();
            let before_a = pa.clone();
            cfg_step(&adam, &mut sa, &mut pa, &grad);
            cfg_step(&adamw, &mut sw, &mut pw, &grad);
            for i in 0..4 {
                let step_a = pa[i] - before_a[i];
                let step_w = pw[i] - before[i];
                assert!((step_w - step_a - (-lr * 0.004 * before[i])).abs() < 1e-15);
            }
        }
    }

    fn cfg_step(cfg: &OptimizerConfig, s: &mut OptimizerState, p: &mut [f64], g: &[f64]) {
        cfg.step(s, p, g).unwrap();
    }

    #[test]
    fn adamax_first_step_is_learning_rate() {
        let cfg = OptimizerConfig::new(Algorithm::Adamax, 1e-2);
        for g in [1e-3, 1.0, 1e3] {
            let p = one_step(&cfg, &[0.0], &[g]);
            assert!((p[0].abs() - 1e-2 * g / (g + 1e-7)).abs() < 1e-12);
        }
    }

    #[test]
    fn nadam_first_step_closed_form() {
        let lr = 1e-3;
        let cfg = OptimizerConfig::new(Algorithm::Nadam, lr);
        let mu = |t: f64| 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.004 * t));
        let (mu1, mu2) = (mu(1.0), mu(2.0));
        for g in [1e-2, 1.0, 1e2] {
            let p = one_step(&cfg, &[0.0], &[g]);
            let m_hat = mu2 * 0.1 * g / (1.0 - mu1 * mu2) + g;
            let v_hat = g * g;
            let expected = lr * m_hat / (v_hat.sqrt() + 1e-7);
            assert!((p[0].abs() - expected).abs() <= 1e-9 * expected);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let params = vec![0.3; 23];
        let zero = vec![0.0; 23];
        for alg in [
            Algorithm::Sgd,
            Algorithm::Adagrad,
            Algorithm::RmsProp,
            Algorithm::Adadelta,
            Algorithm::Adam,
            Algorithm::Adamax,
            Algorithm::Nadam,
            Algorithm::Ftrl,
        ] {
            let cfg = OptimizerConfig::new(alg, 1e-2);
            let mut state = OptimizerState::new(&cfg, block_layout());
            let mut p = params.clone();
            for _ in 0..5 {
                cfg.step(&mut state, &mut p, &zero).unwrap();
            }
            for (a, b) in p.iter().zip(&params) {
                assert!((a - b).abs() <= 1e-15, "{alg}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ftrl_with_zero_learning_rate_does_not_move() {
        let cfg = OptimizerConfig::new(Algorithm::Ftrl, 0.0);
        let p = one_step(&cfg, &[0.4, -0.2], &[1.0, 2.0]);
        assert_eq!(p, vec![0.4, -0.2]);
    }

    #[test]
    fn ftrl_without_regularization_matches_adagrad_form() {
        // With L1 = L2 = 0 the proximal update reduces to w -= lr * g / sqrt(n).
        let cfg = OptimizerConfig::new(Algorithm::Ftrl, 0.05);
        let mut state = OptimizerState::new(&cfg, Layout::flat(1));
        let mut p = vec![0.8];
        let mut w = 0.8;
        let mut n = 0.1;
        for g in [0.5, -0.2, 1.5, 0.1] {
            cfg.step(&mut state, &mut p, &[g]).unwrap();
            n += g * g;
            w -= 0.05 * g / f64::sqrt(n);
            assert!((p[0] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn ftrl_l1_can_zero_weights() {
        let mut cfg = OptimizerConfig::new(Algorithm::Ftrl, 0.1);
        cfg.hyperparameters = Hyperparameters::Ftrl {
            learning_rate_power: -0.5,
            initial_accumulator: 0.1,
            l1: 10.0,
            l2: 0.0,
        };
        let mut state = OptimizerState::new(&cfg, Layout::flat(1));
        let mut p = vec![0.01];
        // Gradient pushes toward zero; once |z| <= l1 the weight snaps to 0.
        for _ in 0..5 {
            cfg.step(&mut state, &mut p, &[1.0]).unwrap();
        }
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn adafactor_factored_second_moment_is_exact_for_rank_one() {
        let cfg = OptimizerConfig::new(Algorithm::Adafactor, 1e-2);
        let layout = Layout::new(vec![Segment::matrix(3, 3)]);
        let mut state = OptimizerState::new(&cfg, layout);
        let a = [1.0, 2.0, 0.5];
        let b = [0.3, 1.0, 2.0];
        let grad: Vec<f64> = (0..9).map(|i| a[i / 3] * b[i % 3]).collect();
        let mut p = vec![0.0; 9];
        cfg.step(&mut state, &mut p, &grad).unwrap();
        // beta2 at t = 1 is 0, so v = g^2 exactly and every |u| = 1; RMS is 1,
        // no clipping, each parameter moves by the learning rate.
        for (pi, gi) in p.iter().zip(&grad) {
            assert!((pi + 1e-2 * gi.signum()).abs() < 1e-12, "{pi}");
        }
    }

    #[test]
    fn adafactor_clips_large_updates() {
        let cfg = OptimizerConfig::new(Algorithm::Adafactor, 1.0);
        let mut state = OptimizerState::new(&cfg, Layout::flat(2));
        let mut p = vec![0.0, 0.0];
        cfg.step(&mut state, &mut p, &[1.0, 1.0]).unwrap();
        assert!(p.iter().all(|&v| (v + 1.0).abs() < 1e-12));
        // At t = 2 the raw update is 10 / sqrt(0.426 + 0.574 * 100) ~ 1.31 per
        // coordinate; clipping rescales it to RMS 1.
        cfg.step(&mut state, &mut p, &[10.0, 10.0]).unwrap();
        assert!(p.iter().all(|&v| (v + 2.0).abs() < 1e-12), "{p:?}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let cfg = OptimizerConfig::new(Algorithm::Adam, 1e-3);
        let mut state = OptimizerState::new(&cfg, Layout::flat(2));
        let mut p = vec![1.0, 1.0];
        let err = cfg.step(&mut state, &mut p, &[f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert_eq!(p, vec![1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = OptimizerConfig::new(Algorithm::Sgd, 1e-3);
        let mut state = OptimizerState::new(&cfg, Layout::flat(2));
        assert!(cfg.step(&mut state, &mut [1.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn default_configs() {
        let adam = default_config("adam").unwrap();
        assert!(matches!(adam.hyperparameters, Hyperparameters::Adam { beta2, .. } if beta2 == 0.999));
        let sgd = default_config("SGD").unwrap();
        assert!(matches!(sgd.hyperparameters, Hyperparameters::Sgd { momentum, nesterov: false } if momentum == 0.9));
        let ada = default_config("Adadelta").unwrap();
        assert!(matches!(ada.hyperparameters, Hyperparameters::Adadelta { rho, .. } if rho == 0.95));
        assert!(default_config("lbfgs").is_err());
    }

    #[test]
    fn config_json_round_trip() {
        for alg in Algorithm::ALL {
            let cfg = OptimizerConfig::new(alg, 3e-3);
            let json = serde_json::to_string(&cfg).unwrap();
            assert!(json.contains("\"algorithm\""));
            let back: OptimizerConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(json.parse::<serde_json::Value>().unwrap()["algorithm"], alg.name().to_ascii_lowercase());
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        for alg in Algorithm::ALL {
            let cfg = OptimizerConfig::new(alg, 1e-2);
            let run = || {
                let mut s = OptimizerState::new(&cfg, block_layout());
                let mut p: Vec<f64> = (0..23).map(|i| (i as f64 * 0.37).sin()).collect();
                for _ in 0..50 {
                    let g = p.clone();
                    cfg.step(&mut s, &mut p, &g).unwrap();
                }
                p
            };
            let (a, b) = (run(), run());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
