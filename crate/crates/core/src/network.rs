//! The minimal two-layer convolutional network for one Game of Life step.
//!
//! One block has 23 trainable scalars: two 3x3 kernels with biases feeding a
//! hidden activation, then a 1x1 combiner with bias feeding a ReLU. Multi-step
//! models either reuse one block (`Recursive`) or chain independent blocks
//! (`Sequential`). Block outputs flow into the next block unthresholded.
//!
//! The first block always sees a binary board, so its hidden layer depends
//! only on the 9-bit patch index of each cell. That layer is evaluated once
//! per patch (512 entries) and gathered per cell; the arithmetic and
//! summation order match a zero-padded convolution exactly.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::life::{Board, PATCH_COUNT};
use crate::optim::{Layout, Segment};
use crate::seed::{rng_from_seed, Rng};

/// Trainable scalars in one block: 9 + 1 + 9 + 1 + 2 + 1.
pub const PARAMS_PER_BLOCK: usize = 23;

/// Cells whose output reaches this value are predicted alive.
pub const PREDICT_THRESHOLD: f64 = 0.5;

const KERNEL_OFFSETS: [(isize, isize); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Hidden-layer activation. The output layer is always followed by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and activation `a`.
    /// ReLU has derivative 0 at the kink.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::UnknownName {
                kind: "activation",
                name: s.to_string(),
            }),
        }
    }
}

/// Weights of one block.
///
/// Flat order (also the JSON field order): `W11` row-major, `b11`, `W12`
/// row-major, `b12`, `W2`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    #[serde(rename = "W11")]
    pub w11: [f64; 9],
    pub b11: f64,
    #[serde(rename = "W12")]
    pub w12: [f64; 9],
    pub b12: f64,
    #[serde(rename = "W2")]
    pub w2: [f64; 2],
    pub b2: f64,
}

impl NetworkParams {
    pub fn zeros() -> Self {
        NetworkParams {
            w11: [0.0; 9],
            b11: 0.0,
            w12: [0.0; 9],
            b12: 0.0,
            w2: [0.0; 2],
            b2: 0.0,
        }
    }

    /// Hand-built ReLU network that reproduces the rule exactly.
    ///
    /// The first feature is positive when the cell has more than three live
    /// neighbors; the second is positive when the whole patch holds at most
    /// two live cells. The output is `relu(1 - f1 - f2)`.
    pub fn relu_solution() -> Self {
        NetworkParams {
            w11: [1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            b11: -3.0,
            w12: [-1.0; 9],
            b12: 3.0,
            w2: [-1.0, -1.0],
            b2: 1.0,
        }
    }

    /// Hand-built Tanh network. It does not reach zero loss but thresholds
    /// to the exact rule.
    pub fn tanh_solution() -> Self {
        NetworkParams {
            w11: [1.0, 1.0, 1.0, 1.0, 3.0 / 5.0, 1.0, 1.0, 1.0, 1.0],
            b11: -2.4,
            w12: [1.0, 1.0, 1.0, 1.0, 2.0 / 5.0, 1.0, 1.0, 1.0, 1.0],
            b12: -3.6,
            w2: [2.0, -2.0],
            b2: -1.0,
        }
    }

    /// Glorot-uniform kernels, zero biases.
    ///
    /// The two 3x3 kernels form one conv layer (fan_in 9, fan_out 18); the
    /// combiner is a 1x1 conv over two channels (fan_in 2, fan_out 1).
    pub fn glorot(rng: &mut Rng) -> Self {
        let conv_bound = (6.0f64 / (9.0 + 18.0)).sqrt();
        let combine_bound = (6.0f64 / (2.0 + 1.0)).sqrt();
        let mut p = NetworkParams::zeros();
        for w in p.w11.iter_mut().chain(p.w12.iter_mut()) {
            *w = rng.gen_range(-conv_bound..conv_bound);
        }
        for w in &mut p.w2 {
            *w = rng.gen_range(-combine_bound..combine_bound);
        }
        p
    }

    pub fn to_flat(&self) -> [f64; PARAMS_PER_BLOCK] {
        let mut out = [0.0; PARAMS_PER_BLOCK];
        out[..9].copy_from_slice(&self.w11);
        out[9] = self.b11;
        out[10..19].copy_from_slice(&self.w12);
        out[19] = self.b12;
        out[20..22].copy_from_slice(&self.w2);
        out[22] = self.b2;
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != PARAMS_PER_BLOCK {
            return Err(Error::Config(format!(
                "a block has {PARAMS_PER_BLOCK} parameters, got {}",
                flat.len()
            )));
        }
        let mut p = NetworkParams::zeros();
        p.w11.copy_from_slice(&flat[..9]);
        p.b11 = flat[9];
        p.w12.copy_from_slice(&flat[10..19]);
        p.b12 = flat[19];
        p.w2.copy_from_slice(&flat[20..22]);
        p.b2 = flat[22];
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Tensor layout of one block for optimizers that treat matrices specially.
    pub fn layout() -> Layout {
        Layout::new(vec![
            Segment::matrix(3, 3),
            Segment::vector(1),
            Segment::matrix(3, 3),
            Segment::vector(1),
            Segment::vector(2),
            Segment::vector(1),
        ])
    }

    /// The block evaluated on every possible binary 3x3 patch.
    pub fn patch_table(&self, act: Activation) -> PatchTable {
        let mut t = PatchTable {
            z: [[0.0; PATCH_COUNT]; 2],
            a: [[0.0; PATCH_COUNT]; 2],
            pre_output: [0.0; PATCH_COUNT],
        };
        for idx in 0..PATCH_COUNT {
            let mut z1 = self.b11;
            let mut z2 = self.b12;
            for k in 0..9 {
                let x = ((idx >> k) & 1) as f64;
                z1 += self.w11[k] * x;
                z2 += self.w12[k] * x;
            }
            let a1 = act.apply(z1);
            let a2 = act.apply(z2);
            t.z[0][idx] = z1;
            t.z[1][idx] = z2;
            t.a[0][idx] = a1;
            t.a[1][idx] = a2;
            t.pre_output[idx] = self.w2[0] * a1 + self.w2[1] * a2 + self.b2;
        }
        t
    }
}

/// Hidden pre-activations, activations and output pre-activation of one block
/// for each of the 512 binary patches.
#[derive(Debug, Clone)]
pub struct PatchTable {
    pub z: [[f64; PATCH_COUNT]; 2],
    pub a: [[f64; PATCH_COUNT]; 2],
    /// Output layer value before the final ReLU.
    pub pre_output: [f64; PATCH_COUNT],
}

impl PatchTable {
    #[inline]
    pub fn output(&self, idx: u16) -> f64 {
        self.pre_output[idx as usize].max(0.0)
    }
}

/// How a model realizes an n-step transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchMode {
    Single,
    Recursive,
    Sequential,
}

impl ArchMode {
    pub fn name(self) -> &'static str {
        match self {
            ArchMode::Single => "single",
            ArchMode::Recursive => "recursive",
            ArchMode::Sequential => "sequential",
        }
    }
}

impl fmt::Display for ArchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(ArchMode::Single),
            "recursive" | "rec" => Ok(ArchMode::Recursive),
            "sequential" | "seq" => Ok(ArchMode::Sequential),
            _ => Err(Error::UnknownName {
                kind: "architecture",
                name: s.to_string(),
            }),
        }
    }
}

/// A full model: one shared block applied `n_steps` times, or `n_steps`
/// chained blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    pub mode: ArchMode,
    pub n_steps: usize,
    pub blocks: Vec<NetworkParams>,
}

impl ModelArch {
    pub fn single(params: NetworkParams) -> Self {
        ModelArch {
            mode: ArchMode::Single,
            n_steps: 1,
            blocks: vec![params],
        }
    }

    pub fn recursive(params: NetworkParams, n_steps: usize) -> Result<Self> {
        ModelArch {
            mode: ArchMode::Recursive,
            n_steps,
            blocks: vec![params],
        }
        .validated()
    }

    pub fn sequential(blocks: Vec<NetworkParams>) -> Result<Self> {
        ModelArch {
            mode: ArchMode::Sequential,
            n_steps: blocks.len(),
            blocks,
        }
        .validated()
    }

    /// A model of the given shape with every block Glorot-initialized from
    /// one generator seeded by `seed`, blocks drawn in order.
    pub fn init(mode: ArchMode, n_steps: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let block_count = match mode {
            ArchMode::Sequential => n_steps,
            _ => 1,
        };
        ModelArch {
            mode,
            n_steps,
            blocks: (0..block_count)
                .map(|_| NetworkParams::glorot(&mut rng))
                .collect(),
        }
        .validated()
    }

    /// Copies `params` into every block of a model with the given shape.
    pub fn replicated(mode: ArchMode, n_steps: usize, params: NetworkParams) -> Result<Self> {
        let block_count = match mode {
            ArchMode::Sequential => n_steps,
            _ => 1,
        };
        ModelArch {
            mode,
            n_steps,
            blocks: vec![params; block_count],
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.n_steps == 0 {
            return Err(Error::ZeroSteps(0));
        }
        let expected_blocks = match self.mode {
            ArchMode::Single if self.n_steps != 1 => {
                return Err(Error::Config(format!(
                    "single mode is one step, got {}",
                    self.n_steps
                )))
            }
            ArchMode::Single | ArchMode::Recursive => 1,
            ArchMode::Sequential => self.n_steps,
        };
        if self.blocks.len() != expected_blocks {
            return Err(Error::Config(format!(
                "{} mode with {} steps needs {expected_blocks} blocks, got {}",
                self.mode,
                self.n_steps,
                self.blocks.len()
            )));
        }
        if !self.blocks.iter().all(NetworkParams::is_finite) {
            return Err(Error::NumericalOverflow("parameters"));
        }
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.blocks.len() * PARAMS_PER_BLOCK
    }

    /// Block used at application `step` (0-based).
    #[inline]
    fn block_index(&self, step: usize) -> usize {
        match self.mode {
            ArchMode::Sequential => step,
            _ => 0,
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.to_flat()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Config(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        for (block, chunk) in self.blocks.iter_mut().zip(flat.chunks(PARAMS_PER_BLOCK)) {
            *block = NetworkParams::from_flat(chunk)?;
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::repeat(&NetworkParams::layout(), self.blocks.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ModelArch>(s)?.validated()
    }
}

/// A real-valued grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Grid {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_board(board: &Board) -> Self {
        Grid {
            height: board.height(),
            width: board.width(),
            data: board.cells().iter().map(|&c| c as f64).collect(),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Thresholds at [`PREDICT_THRESHOLD`].
    pub fn binarize(&self) -> Board {
        let rows: Vec<Vec<u8>> = self
            .data
            .chunks(self.width)
            .map(|r| r.iter().map(|&v| u8::from(v >= PREDICT_THRESHOLD)).collect())
            .collect();
        Board::from_rows(&rows).expect("grid dimensions are positive")
    }
}

/// A board in the form the network consumes: per-cell patch indices and
/// (optionally) the target board's cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    pub patches: Vec<u16>,
    pub target: Vec<u8>,
}

impl Sample {
    pub fn new(x: &Board, y: &Board) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                expected: x.shape(),
                actual: y.shape(),
            });
        }
        Ok(Sample {
            height: x.height(),
            width: x.width(),
            patches: x.patch_indices(),
            target: y.cells().to_vec(),
        })
    }

    fn input_only(x: &Board) -> Self {
        Sample {
            height: x.height(),
            width: x.width(),
            patches: x.patch_indices(),
            target: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Intermediate values of one block applied to a real-valued grid.
struct GridStage {
    /// Input, zero-padded by one cell on each side.
    padded_input: Vec<f64>,
    a: [Vec<f64>; 2],
    /// Activation derivatives with respect to the hidden pre-activations.
    da: [Vec<f64>; 2],
    pre_output: Vec<f64>,
}

/// Everything recorded by a forward pass, enough to run backward.
struct Tape {
    height: usize,
    width: usize,
    first: PatchTable,
    /// Output of the first block, before the final ReLU, gathered per cell.
    first_pre_output: Vec<f64>,
    later: Vec<GridStage>,
}

impl Tape {
    fn output(&self) -> Vec<f64> {
        let last = match self.later.last() {
            Some(stage) => &stage.pre_output,
            None => &self.first_pre_output,
        };
        last.iter().map(|&v| v.max(0.0)).collect()
    }
}

fn pad(input: &[f64], height: usize, width: usize) -> Vec<f64> {
    let pw = width + 2;
    let mut out = vec![0.0; (height + 2) * pw];
    for r in 0..height {
        out[(r + 1) * pw + 1..(r + 1) * pw + 1 + width]
            .copy_from_slice(&input[r * width..(r + 1) * width]);
    }
    out
}

fn block_forward(
    params: &NetworkParams,
    act: Activation,
    input: &[f64],
    height: usize,
    width: usize,
) -> GridStage {
    let padded_input = pad(input, height, width);
    let pw = width + 2;
    let n = height * width;
    let mut a = [vec![0.0; n], vec![0.0; n]];
    let mut da = [vec![0.0; n], vec![0.0; n]];
    let mut pre_output = vec![0.0; n];
    for r in 0..height {
        for c in 0..width {
            let mut z1 = params.b11;
            let mut z2 = params.b12;
            for (k, &(dr, dc)) in KERNEL_OFFSETS.iter().enumerate() {
                let x = padded_input[(r as isize + 1 + dr) as usize * pw + (c as isize + 1 + dc) as usize];
                z1 += params.w11[k] * x;
                z2 += params.w12[k] * x;
            }
            let i = r * width + c;
            let a1 = act.apply(z1);
            let a2 = act.apply(z2);
            a[0][i] = a1;
            a[1][i] = a2;
            da[0][i] = act.derivative(z1, a1);
            da[1][i] = act.derivative(z2, a2);
            pre_output[i] = params.w2[0] * a1 + params.w2[1] * a2 + params.b2;
        }
    }
    GridStage {
        padded_input,
        a,
        da,
        pre_output,
    }
}

fn run_forward(arch: &ModelArch, act: Activation, sample: &Sample) -> Result<Tape> {
    let first = arch.blocks[0].patch_table(act);
    let first_pre_output: Vec<f64> = sample
        .patches
        .iter()
        .map(|&idx| first.pre_output[idx as usize])
        .collect();
    let mut tape = Tape {
        height: sample.height,
        width: sample.width,
        first,
        first_pre_output,
        later: Vec::with_capacity(arch.n_steps.saturating_sub(1)),
    };
    for step in 1..arch.n_steps {
        let input: Vec<f64> = match tape.later.last() {
            Some(stage) => stage.pre_output.iter().map(|&v| v.max(0.0)).collect(),
            None => tape.first_pre_output.iter().map(|&v| v.max(0.0)).collect(),
        };
        let stage = block_forward(
            &arch.blocks[arch.block_index(step)],
            act,
            &input,
            sample.height,
            sample.width,
        );
        tape.later.push(stage);
    }
    let last = match tape.later.last() {
        Some(stage) => &stage.pre_output,
        None => &tape.first_pre_output,
    };
    if !last.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalOverflow("forward pass"));
    }
    Ok(tape)
}

/// Network output on a board. Entries are nonnegative.
pub fn forward(arch: &ModelArch, act: Activation, board: &Board) -> Result<Grid> {
    let tape = run_forward(arch, act, &Sample::input_only(board))?;
    Ok(Grid {
        height: board.height(),
        width: board.width(),
        data: tape.output(),
    })
}

/// Output of the final layer before its ReLU.
pub fn forward_pre_activation(arch: &ModelArch, act: Activation, board: &Board) -> Result<Grid> {
    let tape = run_forward(arch, act, &Sample::input_only(board))?;
    let data = match tape.later.last() {
        Some(stage) => stage.pre_output.clone(),
        None => tape.first_pre_output.clone(),
    };
    Ok(Grid {
        height: board.height(),
        width: board.width(),
        data,
    })
}

/// Binary prediction: forward output thresholded at 0.5.
pub fn predict(arch: &ModelArch, act: Activation, board: &Board) -> Result<Board> {
    Ok(forward(arch, act, board)?.binarize())
}

/// Mean squared error between the forward output and `y`.
pub fn loss_mse(arch: &ModelArch, act: Activation, x: &Board, y: &Board) -> Result<f64> {
    let sample = Sample::new(x, y)?;
    Ok(loss_and_gradient(arch, act, &sample)?.loss)
}

/// Exact gradient of [`loss_mse`] with respect to the flat parameter vector.
pub fn backward(arch: &ModelArch, act: Activation, x: &Board, y: &Board) -> Result<Vec<f64>> {
    let sample = Sample::new(x, y)?;
    Ok(loss_and_gradient(arch, act, &sample)?.gradient)
}

/// Loss, gradient and training accuracy from one forward/backward pass.
#[derive(Debug, Clone)]
pub struct StepEvaluation {
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// Cells whose thresholded output matched the target.
    pub correct: usize,
}

/// Accumulates the gradient of one block application into `grad`
/// (a 23-slot window) and, when `input_grad` is given, writes the gradient
/// with respect to the block's input.
fn block_backward(
    params: &NetworkParams,
    stage: &GridStage,
    d_output: &[f64],
    height: usize,
    width: usize,
    grad: &mut [f64],
    input_grad: Option<&mut Vec<f64>>,
) {
    let pw = width + 2;
    let mut d_padded = input_grad.as_ref().map(|_| vec![0.0; (height + 2) * pw]);
    let (mut gw11, mut gw12) = ([0.0; 9], [0.0; 9]);
    let (mut gb11, mut gb12, mut gw2a, mut gw2b, mut gb2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if stage.pre_output[i] <= 0.0 {
                continue;
            }
            let dp = d_output[i];
            gw2a += dp * stage.a[0][i];
            gw2b += dp * stage.a[1][i];
            gb2 += dp;
            let dz1 = dp * params.w2[0] * stage.da[0][i];
            let dz2 = dp * params.w2[1] * stage.da[1][i];
            gb11 += dz1;
            gb12 += dz2;
            for (k, &(dr, dc)) in KERNEL_OFFSETS.iter().enumerate() {
                let p = (r as isize + 1 + dr) as usize * pw + (c as isize + 1 + dc) as usize;
                let x = stage.padded_input[p];
                gw11[k] += dz1 * x;
                gw12[k] += dz2 * x;
                if let Some(d) = d_padded.as_mut() {
                    d[p] += dz1 * params.w11[k] + dz2 * params.w12[k];
                }
            }
        }
    }
    for k in 0..9 {
        grad[k] += gw11[k];
        grad[10 + k] += gw12[k];
    }
    grad[9] += gb11;
    grad[19] += gb12;
    grad[20] += gw2a;
    grad[21] += gw2b;
    grad[22] += gb2;

    if let (Some(out), Some(d)) = (input_grad, d_padded) {
        out.clear();
        for r in 0..height {
            out.extend_from_slice(&d[(r + 1) * pw + 1..(r + 1) * pw + 1 + width]);
        }
    }
}

/// One forward and backward pass over `sample`.
pub fn loss_and_gradient(
    arch: &ModelArch,
    act: Activation,
    sample: &Sample,
) -> Result<StepEvaluation> {
    if sample.target.len() != sample.patches.len() {
        return Err(Error::ShapeMismatch {
            expected: (sample.height, sample.width),
            actual: (sample.target.len(), 1),
        });
    }
    loss_and_gradient_with(arch, act, sample, |i| sample.target[i] as f64)
}

fn loss_and_gradient_with(
    arch: &ModelArch,
    act: Activation,
    sample: &Sample,
    target: impl Fn(usize) -> f64,
) -> Result<StepEvaluation> {
    let tape = run_forward(arch, act, sample)?;
    let output = tape.output();
    let cells = output.len() as f64;

    let mut loss = 0.0;
    let mut correct = 0;
    let mut d_out = Vec::with_capacity(output.len());
    for (i, &o) in output.iter().enumerate() {
        let t = target(i);
        let residual = o - t;
        loss += residual * residual;
        correct += usize::from((o >= PREDICT_THRESHOLD) == (t >= PREDICT_THRESHOLD));
        d_out.push(2.0 * residual / cells);
    }
    loss /= cells;

    let mut gradient = vec![0.0; arch.param_count()];
    let mut d_input = Vec::new();
    for step in (1..arch.n_steps).rev() {
        let b = arch.block_index(step);
        let window = &mut gradient[b * PARAMS_PER_BLOCK..(b + 1) * PARAMS_PER_BLOCK];
        block_backward(
            &arch.blocks[b],
            &tape.later[step - 1],
            &d_out,
            tape.height,
            tape.width,
            window,
            Some(&mut d_input),
        );
        std::mem::swap(&mut d_out, &mut d_input);
    }

    // First block: fold per-cell output gradients into per-patch sums.
    let mut per_patch = [0.0; PATCH_COUNT];
    for (&idx, &d) in sample.patches.iter().zip(&d_out) {
        if tape.first.pre_output[idx as usize] > 0.0 {
            per_patch[idx as usize] += d;
        }
    }
    let params = &arch.blocks[0];
    let table = &tape.first;
    let window = &mut gradient[..PARAMS_PER_BLOCK];
    for (idx, &dp) in per_patch.iter().enumerate() {
        if dp == 0.0 {
            continue;
        }
        let a1 = table.a[0][idx];
        let a2 = table.a[1][idx];
        window[20] += dp * a1;
        window[21] += dp * a2;
        window[22] += dp;
        let dz1 = dp * params.w2[0] * act.derivative(table.z[0][idx], a1);
        let dz2 = dp * params.w2[1] * act.derivative(table.z[1][idx], a2);
        window[9] += dz1;
        window[19] += dz2;
        for k in 0..9 {
            if (idx >> k) & 1 == 1 {
                window[k] += dz1;
                window[10 + k] += dz2;
            }
        }
    }

    if !loss.is_finite() || !gradient.iter().all(|g| g.is_finite()) {
        return Err(Error::NumericalOverflow("backward pass"));
    }
    Ok(StepEvaluation {
        loss,
        gradient,
        correct,
    })
}

/// Number of cells predicted correctly.
pub fn count_correct(arch: &ModelArch, act: Activation, sample: &Sample) -> Result<usize> {
    if arch.n_steps == 1 {
        let table = arch.blocks[0].patch_table(act);
        if !table.pre_output.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalOverflow("forward pass"));
        }
        return Ok(sample
            .patches
            .iter()
            .zip(&sample.target)
            .filter(|(&idx, &t)| u8::from(table.output(idx) >= PREDICT_THRESHOLD) == t)
            .count());
    }
    let output = run_forward(arch, act, sample)?.output();
    Ok(output
        .iter()
        .zip(&sample.target)
        .filter(|(&o, &t)| u8::from(o >= PREDICT_THRESHOLD) == t)
        .count())
}

/// Whether every cell is predicted correctly; stops at the first mistake.
pub fn all_correct(arch: &ModelArch, act: Activation, sample: &Sample) -> Result<bool> {
    if arch.n_steps == 1 {
        let table = arch.blocks[0].patch_table(act);
        if !table.pre_output.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalOverflow("forward pass"));
        }
        return Ok(sample
            .patches
            .iter()
            .zip(&sample.target)
            .all(|(&idx, &t)| u8::from(table.output(idx) >= PREDICT_THRESHOLD) == t));
    }
    let output = run_forward(arch, act, sample)?.output();
    Ok(output
        .iter()
        .zip(&sample.target)
        .all(|(&o, &t)| u8::from(o >= PREDICT_THRESHOLD) == t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::life::{step, step_n, PatchClass};
    use crate::seed::rng_from_seed;

    /// Direct zero-padded convolution network on real grids, no patch tables.
    fn naive_block(p: &NetworkParams, act: Activation, x: &Grid) -> Grid {
        let (h, w) = (x.height, x.width);
        let at = |r: isize, c: isize| {
            if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                0.0
            } else {
                x.get(r as usize, c as usize)
            }
        };
        let mut out = Grid::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                let mut z1 = p.b11;
                let mut z2 = p.b12;
                for k in 0..9 {
                    let v = at(r as isize + k as isize / 3 - 1, c as isize + k as isize % 3 - 1);
                    z1 += p.w11[k] * v;
                    z2 += p.w12[k] * v;
                }
                let v = p.w2[0] * act.apply(z1) + p.w2[1] * act.apply(z2) + p.b2;
                out.data[r * w + c] = v.max(0.0);
            }
        }
        out
    }

    fn naive_forward(arch: &ModelArch, act: Activation, b: &Board) -> Grid {
        let mut g = Grid::from_board(b);
        for s in 0..arch.n_steps {
            g = naive_block(&arch.blocks[arch.block_index(s)], act, &g);
        }
        g
    }

    fn single_patch_board(idx: u16) -> Board {
        let mut b = Board::new(5, 5).unwrap();
        for k in 0..9 {
            b.set(1 + k / 3, 1 + k % 3, (idx >> k) & 1 == 1);
        }
        b
    }

    #[test]
    fn parameter_counts() {
        let p = NetworkParams::relu_solution();
        assert_eq!(p.to_flat().len(), 23);
        assert_eq!(ModelArch::single(p.clone()).param_count(), 23);
        assert_eq!(ModelArch::recursive(p.clone(), 3).unwrap().param_count(), 23);
        for n in 1..=4 {
            let m = ModelArch::replicated(ArchMode::Sequential, n, p.clone()).unwrap();
            assert_eq!(m.param_count(), 23 * n);
            assert_eq!(m.layout().len(), 23 * n);
        }
    }

    #[test]
    fn relu_solution_literal_values() {
        let p = NetworkParams::relu_solution();
        assert_eq!(p.w11[4], 0.0);
        assert!(p.w11.iter().enumerate().all(|(k, &w)| k == 4 || w == 1.0));
        assert_eq!(p.b11, -3.0);
        assert!(p.w12.iter().all(|&w| w == -1.0));
        assert_eq!(p.b12, 3.0);
        assert_eq!(p.w2, [-1.0, -1.0]);
        assert_eq!(p.b2, 1.0);
    }

    #[test]
    fn relu_solution_is_exact_on_every_patch() {
        let arch = ModelArch::single(NetworkParams::relu_solution());
        for idx in 0..PATCH_COUNT as u16 {
            let b = single_patch_board(idx);
            let out = forward(&arch, Activation::Relu, &b).unwrap();
            assert!(out.data.iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(out.binarize(), step(&b));
            assert_eq!(loss_mse(&arch, Activation::Relu, &b, &step(&b)).unwrap(), 0.0);
        }
    }

    #[test]
    fn relu_solution_zero_board() {
        let arch = ModelArch::single(NetworkParams::relu_solution());
        let out = forward(&arch, Activation::Relu, &Board::new(6, 6).unwrap()).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tanh_solution_table() {
        // Layer-2 output before the final ReLU, rows n = 0..8, columns c = 0, 1.
        let expected = [
            [-0.9703, -0.9002],
            [-0.7926, -0.3766],
            [0.0834, 1.0621],
            [1.1482, 1.0621],
            [0.0834, -0.3766],
            [-0.7926, -0.9002],
            [-0.9703, -0.9862],
            [-0.9960, -0.9981],
            [-0.9995, -0.9997],
        ];
        let table = NetworkParams::tanh_solution().patch_table(Activation::Tanh);
        for idx in 0..PATCH_COUNT as u16 {
            let class = PatchClass::from_index(idx);
            let want = expected[class.alive_neighbors as usize][class.center as usize];
            let got = table.pre_output[idx as usize];
            assert!((got - want).abs() <= 1e-4, "{class:?}: {got} vs {want}");
        }
    }

    #[test]
    fn tanh_solution_predicts_rule() {
        let arch = ModelArch::single(NetworkParams::tanh_solution());
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let b = Board::random(32, 32, 0.38, &mut rng).unwrap();
            assert_eq!(predict(&arch, Activation::Tanh, &b).unwrap(), step(&b));
        }
        let b = Board::random(16, 16, 0.38, &mut rng).unwrap();
        assert!(loss_mse(&arch, Activation::Tanh, &b, &step(&b)).unwrap() > 0.0);
    }

    #[test]
    fn multi_step_compositions_match_step_n() {
        // The tanh solution emits non-binary values, so only the ReLU one
        // composes exactly without thresholding between blocks.
        let mut rng = rng_from_seed(17);
        for (params, act) in [(NetworkParams::relu_solution(), Activation::Relu)] {
            for n in 1..=3 {
                let rec = ModelArch::recursive(params.clone(), n).unwrap();
                let seq = ModelArch::replicated(ArchMode::Sequential, n, params.clone()).unwrap();
                for _ in 0..5 {
                    let b = Board::random(20, 20, 0.38, &mut rng).unwrap();
                    let want = step_n(&b, n).unwrap();
                    assert_eq!(predict(&rec, act, &b).unwrap(), want);
                    assert_eq!(predict(&seq, act, &b).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn forward_matches_naive_convolution() {
        let mut rng = rng_from_seed(3);
        for mode in [ArchMode::Recursive, ArchMode::Sequential] {
            for act in [Activation::Relu, Activation::Tanh] {
                for n in 1..=3 {
                    let mut arch = ModelArch::init(mode, n, 40 + n as u64).unwrap();
                    // Push biases away from zero so later blocks see varied inputs.
                    for b in &mut arch.blocks {
                        b.b11 = 0.3;
                        b.b12 = -0.2;
                        b.b2 = 0.4;
                    }
                    let b = Board::random(9, 11, 0.4, &mut rng).unwrap();
                    let fast = forward(&arch, act, &b).unwrap();
                    let slow = naive_forward(&arch, act, &b);
                    for (x, y) in fast.data.iter().zip(&slow.data) {
                        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn predict_threshold_convention() {
        let g = Grid {
            height: 1,
            width: 3,
            data: vec![0.49, 0.5, 0.51],
        };
        assert_eq!(g.binarize(), Board::from_strs(&["011"]));
    }

    #[test]
    fn zero_model_loss_equals_target_density() {
        let arch = ModelArch::single(NetworkParams::zeros());
        let mut rng = rng_from_seed(8);
        let x = Board::random(12, 12, 0.5, &mut rng).unwrap();
        let y = step(&x);
        let loss = loss_mse(&arch, Activation::Tanh, &x, &y).unwrap();
        assert!((loss - crate::life::density(&y)).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_relu_solution() {
        let arch = ModelArch::single(NetworkParams::relu_solution());
        let mut rng = rng_from_seed(2);
        let x = Board::random(16, 16, 0.38, &mut rng).unwrap();
        let g = backward(&arch, Activation::Relu, &x, &step(&x)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_scales_with_residual_in_linear_regime() {
        // Positive output bias keeps every final-ReLU input above zero.
        let mut p = NetworkParams::glorot(&mut rng_from_seed(4));
        p.b2 = 5.0;
        let arch = ModelArch::single(p);
        let x = Board::random(8, 8, 0.4, &mut rng_from_seed(6)).unwrap();
        let y = step(&x);
        let sample = Sample::new(&x, &y).unwrap();
        let out = forward(&arch, Activation::Tanh, &x).unwrap();
        assert!(out.data.iter().all(|&v| v > 0.0));
        let g1 = loss_and_gradient(&arch, Activation::Tanh, &sample).unwrap().gradient;
        // Target 2y - out doubles the residual out - target at every cell.
        let g2 = loss_and_gradient_with(&arch, Activation::Tanh, &sample, |i| {
            2.0 * y.cells()[i] as f64 - out.data[i]
        })
        .unwrap()
        .gradient;
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-6;
        let mut rng = rng_from_seed(21);
        for mode in [ArchMode::Single, ArchMode::Recursive, ArchMode::Sequential] {
            for act in [Activation::Relu, Activation::Tanh] {
                let steps: &[usize] = if mode == ArchMode::Single { &[1] } else { &[1, 2, 3] };
                for &n in steps {
                    let mut arch = ModelArch::init(mode, n, 100 + n as u64).unwrap();
                    for b in &mut arch.blocks {
                        b.b2 = 0.5;
                        b.b11 = 0.1;
                        b.b12 = 0.1;
                    }
                    let x = Board::random(8, 8, 0.45, &mut rng).unwrap();
                    let y = step_n(&x, n).unwrap();
                    let sample = Sample::new(&x, &y).unwrap();
                    let analytic = loss_and_gradient(&arch, act, &sample).unwrap().gradient;
                    let base = arch.flat_params();
                    for i in 0..base.len() {
                        let mut probe = arch.clone();
                        let mut p = base.clone();
                        p[i] += h;
                        probe.set_flat_params(&p).unwrap();
                        let up = loss_and_gradient(&probe, act, &sample).unwrap().loss;
                        p[i] -= 2.0 * h;
                        probe.set_flat_params(&p).unwrap();
                        let down = loss_and_gradient(&probe, act, &sample).unwrap().loss;
                        let numeric = (up - down) / (2.0 * h);
                        let diff = (numeric - analytic[i]).abs();
                        let scale = numeric.abs().max(analytic[i].abs());
                        assert!(
                            diff <= 1e-9 || diff <= 1e-5 * scale,
                            "{mode} {act} n={n} param {i}: analytic {} numeric {numeric}",
                            analytic[i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn glorot_init_is_deterministic_and_bounded() {
        let a = NetworkParams::glorot(&mut rng_from_seed(9));
        let b = NetworkParams::glorot(&mut rng_from_seed(9));
        assert_eq!(a, b);
        assert_eq!((a.b11, a.b12, a.b2), (0.0, 0.0, 0.0));
        let bound = (6.0f64 / 27.0).sqrt();
        assert!((bound - 0.4714).abs() < 1e-4);
        for seed in 0..500 {
            let p = NetworkParams::glorot(&mut rng_from_seed(seed));
            assert!(p.w11.iter().chain(&p.w12).all(|w| w.abs() <= bound));
            assert!(p.w2.iter().all(|w| w.abs() <= 2f64.sqrt()));
        }
    }

    #[test]
    fn shift_equivariance() {
        let arch = ModelArch::init(ArchMode::Recursive, 2, 77).unwrap();
        let mut rng = rng_from_seed(12);
        let small = Board::random(6, 6, 0.5, &mut rng).unwrap();
        let a = small.embed(16, 16, 3, 3).unwrap();
        let b = small.embed(16, 16, 6, 8).unwrap();
        let fa = forward(&arch, Activation::Tanh, &a).unwrap();
        let fb = forward(&arch, Activation::Tanh, &b).unwrap();
        // Two blocks see at most two cells out; stay clear of both borders.
        for r in 2..10 {
            for c in 2..10 {
                assert_eq!(fa.get(r, c), fb.get(r + 3, c + 5));
            }
        }
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let arch = ModelArch::init(ArchMode::Sequential, 2, 1).unwrap();
        let json = arch.to_json().unwrap();
        for key in ["\"W11\"", "\"b11\"", "\"W12\"", "\"b12\"", "\"W2\"", "\"b2\""] {
            assert!(json.contains(key));
        }
        assert_eq!(ModelArch::from_json(&json).unwrap(), arch);
        let bad = json.replace("\"sequential\"", "\"recursive\"");
        assert!(ModelArch::from_json(&bad).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let mut p = NetworkParams::relu_solution();
        p.b2 = f64::INFINITY;
        let arch = ModelArch {
            mode: ArchMode::Single,
            n_steps: 1,
            blocks: vec![p],
        };
        let b = Board::new(3, 3).unwrap();
        assert!(matches!(
            forward(&arch, Activation::Relu, &b),
            Err(Error::NumericalOverflow(_))
        ));
    }

    #[test]
    fn fast_accuracy_paths_agree() {
        let mut rng = rng_from_seed(30);
        for n in 1..=2 {
            let arch = ModelArch::init(ArchMode::Recursive, n, 5).unwrap();
            let x = Board::random(10, 10, 0.4, &mut rng).unwrap();
            let y = step_n(&x, n).unwrap();
            let s = Sample::new(&x, &y).unwrap();
            let full = loss_and_gradient(&arch, Activation::Tanh, &s).unwrap().correct;
            assert_eq!(count_correct(&arch, Activation::Tanh, &s).unwrap(), full);
            assert_eq!(all_correct(&arch, Activation::Tanh, &s).unwrap(), full == 100);
        }
    }
}
