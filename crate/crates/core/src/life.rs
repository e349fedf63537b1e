//! Game of Life semantics on finite boards with a dead boundary.

use std::fmt;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Rng, STREAM_TRIAL};

/// Number of distinct binary 3x3 patches.
pub const PATCH_COUNT: usize = 512;

/// A rectangular grid of dead (0) and alive (1) cells, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Board {
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl Board {
    /// An all-dead board.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyBoard { height, width });
        }
        Ok(Board {
            height,
            width,
            cells: vec![0; height * width],
        })
    }

    pub fn filled(height: usize, width: usize) -> Result<Self> {
        let mut board = Board::new(height, width)?;
        board.cells.fill(1);
        Ok(board)
    }

    /// Builds a board from rows of 0/1 values. Any nonzero entry counts as alive.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut board = Board::new(height, width)?;
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    expected: (height, width),
                    actual: (r, row.len()),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                board.cells[r * width + c] = u8::from(v != 0);
            }
        }
        Ok(board)
    }

    /// Parses rows written as strings of `'0'`/`'1'` characters. Panics on other
    /// characters; meant for literals in code and tests.
    pub fn from_strs(rows: &[&str]) -> Self {
        let rows: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| {
                r.bytes()
                    .map(|b| match b {
                        b'0' | b'.' => 0,
                        b'1' | b'#' => 1,
                        other => panic!("invalid board character {:?}", other as char),
                    })
                    .collect()
            })
            .collect();
        Board::from_rows(&rows).expect("board literal must be rectangular and nonempty")
    }

    /// Samples every cell independently alive with probability `density`.
    pub fn random(height: usize, width: usize, density: f64, rng: &mut Rng) -> Result<Self> {
        let mut board = Board::new(height, width)?;
        for cell in &mut board.cells {
            *cell = u8::from(rng.gen::<f64>() < density);
        }
        Ok(board)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// Cell value with everything outside the board treated as dead.
    #[inline]
    pub fn get_or_dead(&self, row: isize, col: isize) -> u8 {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            0
        } else {
            self.get(row as usize, col as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, alive: bool) {
        self.cells[row * self.width + col] = u8::from(alive);
    }

    pub fn alive_count(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Mirror image left-to-right.
    pub fn flip_horizontal(&self) -> Board {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.cells[r * self.width + c] = self.get(r, self.width - 1 - c);
            }
        }
        out
    }

    /// Mirror image top-to-bottom.
    pub fn flip_vertical(&self) -> Board {
        let mut out = self.clone();
        for r in 0..self.height {
            let src = (self.height - 1 - r) * self.width;
            out.cells[r * self.width..(r + 1) * self.width]
                .copy_from_slice(&self.cells[src..src + self.width]);
        }
        out
    }

    /// Copies `self` into a larger dead board at offset `(top, left)`.
    pub fn embed(&self, height: usize, width: usize, top: usize, left: usize) -> Result<Board> {
        if top + self.height > height || left + self.width > width {
            return Err(Error::ShapeMismatch {
                expected: (height, width),
                actual: (top + self.height, left + self.width),
            });
        }
        let mut out = Board::new(height, width)?;
        for r in 0..self.height {
            for c in 0..self.width {
                out.cells[(top + r) * width + left + c] = self.get(r, c);
            }
        }
        Ok(out)
    }

    /// Extracts the `height x width` window starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Board> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: (top + height, left + width),
            });
        }
        let mut out = Board::new(height, width)?;
        for r in 0..height {
            for c in 0..width {
                out.cells[r * width + c] = self.get(top + r, left + c);
            }
        }
        Ok(out)
    }

    /// Number of live cells among the eight neighbors of `(row, col)`.
    pub fn alive_neighbors(&self, row: usize, col: usize) -> u8 {
        let (r, c) = (row as isize, col as isize);
        let mut n = 0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                if dr != 0 || dc != 0 {
                    n += self.get_or_dead(r + dr, c + dc);
                }
            }
        }
        n
    }

    pub fn patch_class(&self, row: usize, col: usize) -> PatchClass {
        PatchClass {
            center: self.get(row, col),
            alive_neighbors: self.alive_neighbors(row, col),
        }
    }

    /// The 9-bit index of the 3x3 patch centered at every cell, row-major.
    ///
    /// Bit `k` holds the cell at offset `(k / 3 - 1, k % 3 - 1)`, matching the
    /// row-major layout of a 3x3 convolution kernel.
    pub fn patch_indices(&self) -> Vec<u16> {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut out = Vec::with_capacity(self.cells.len());
        for r in 0..h {
            for c in 0..w {
                let mut idx = 0u16;
                for k in 0..9 {
                    let dr = k / 3 - 1;
                    let dc = k % 3 - 1;
                    idx |= u16::from(self.get_or_dead(r + dr, c + dc)) << k;
                }
                out.push(idx);
            }
        }
        out
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Board {}x{}", self.height, self.width)?;
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.width) {
            for &c in row {
                f.write_str(if c == 1 { "1" } else { "0" })?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

/// The equivalence class of a 3x3 patch: center state and live-neighbor count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchClass {
    pub center: u8,
    pub alive_neighbors: u8,
}

impl PatchClass {
    pub fn new(center: u8, alive_neighbors: u8) -> Result<Self> {
        if center > 1 || alive_neighbors > 8 {
            return Err(Error::Config(format!(
                "invalid patch class (center={center}, neighbors={alive_neighbors})"
            )));
        }
        Ok(PatchClass {
            center,
            alive_neighbors,
        })
    }

    /// Class of the patch with the given 9-bit index (see [`Board::patch_indices`]).
    pub fn from_index(index: u16) -> Self {
        let center = ((index >> 4) & 1) as u8;
        let total = (index & 0x1ff).count_ones() as u8;
        PatchClass {
            center,
            alive_neighbors: total - center,
        }
    }

    /// Dense index in `0..18`: `center * 9 + alive_neighbors`.
    pub fn ordinal(self) -> usize {
        self.center as usize * 9 + self.alive_neighbors as usize
    }

    pub fn all() -> impl Iterator<Item = PatchClass> {
        (0..2u8).flat_map(|c| {
            (0..=8u8).map(move |n| PatchClass {
                center: c,
                alive_neighbors: n,
            })
        })
    }
}

/// Next state of a cell: alive iff the 3x3 patch holds at least three live
/// cells and the cell has at most three live neighbors.
pub fn patch_rule(p: PatchClass) -> u8 {
    let patch_total = p.center + p.alive_neighbors;
    u8::from(patch_total >= 3 && p.alive_neighbors <= 3)
}

/// One Game of Life transition. Cells beyond the edge are dead.
pub fn step(board: &Board) -> Board {
    let mut next = board.clone();
    for r in 0..board.height {
        for c in 0..board.width {
            next.cells[r * board.width + c] = patch_rule(board.patch_class(r, c));
        }
    }
    next
}

/// `n` consecutive transitions. `n` must be at least 1.
pub fn step_n(board: &Board, n: usize) -> Result<Board> {
    if n == 0 {
        return Err(Error::ZeroSteps(n));
    }
    let mut cur = step(board);
    for _ in 1..n {
        cur = step(&cur);
    }
    Ok(cur)
}

/// Fraction of live cells.
pub fn density(board: &Board) -> f64 {
    board.alive_count() as f64 / board.len() as f64
}

/// Mean density over `trials` random boards, tracked for `steps` transitions.
///
/// Entry 0 is the observed initial density. Trial `i` samples its board from
/// a seed derived from `(seed, i)`, so the result does not depend on how the
/// trials are scheduled across threads.
pub fn density_trajectory(
    initial_density: f64,
    height: usize,
    width: usize,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&initial_density) {
        return Err(Error::Config(format!(
            "density must lie in [0, 1], got {initial_density}"
        )));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    Board::new(height, width)?;

    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, STREAM_TRIAL, i as u64));
            let mut board = Board::random(height, width, initial_density, &mut rng)
                .expect("dimensions validated above");
            let mut series = Vec::with_capacity(steps + 1);
            series.push(density(&board));
            for _ in 0..steps {
                board = step(&board);
                series.push(density(&board));
            }
            series
        })
        .collect();

    let mut means = vec![0.0; steps + 1];
    for series in &per_trial {
        for (m, d) in means.iter_mut().zip(series) {
            *m += d;
        }
    }
    for m in &mut means {
        *m /= trials as f64;
    }
    Ok(means)
}

/// Expected density after one step of an unbounded board whose cells are
/// i.i.d. alive with probability `p`:
/// `p * P[Bin(8,p) in {2,3}] + (1-p) * P[Bin(8,p) = 3]`.
pub fn mean_field_density(p: f64) -> f64 {
    let q = 1.0 - p;
    let binom = |k: i32| {
        let c = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0][k as usize];
        c * p.powi(k) * q.powi(8 - k)
    };
    p * (binom(2) + binom(3)) + q * binom(3)
}

/// The fixed point of [`mean_field_density`] in `[lo, hi]`, by bisection.
/// `None` unless the map crosses the diagonal exactly once there.
pub fn mean_field_fixed_point(lo: f64, hi: f64) -> Option<f64> {
    let gap = |p: f64| mean_field_density(p) - p;
    let (mut lo, mut hi) = (lo, hi);
    if gap(lo).signum() == gap(hi).signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid).signum() == gap(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
