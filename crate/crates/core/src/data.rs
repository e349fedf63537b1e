//! Training data: random boards, n-step pairs, the pattern library and the
//! reflected "fixed" training board, patch-class coverage and board files.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::life::{step_n, Board, PatchClass};
use crate::seed::rng_from_seed;

/// Live-cell probability of random training and test boards.
pub const DEFAULT_DENSITY: f64 = 0.38;
/// Side length of training boards.
pub const TRAIN_BOARD_SIZE: usize = 64;
/// Side length of the quadrant that is reflected into the fixed board.
pub const QUADRANT_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub height: usize,
    pub width: usize,
    pub density: f64,
    pub seed: u64,
}

impl BoardSpec {
    pub fn training(seed: u64) -> Self {
        BoardSpec {
            height: TRAIN_BOARD_SIZE,
            width: TRAIN_BOARD_SIZE,
            density: DEFAULT_DENSITY,
            seed,
        }
    }
}

/// Board with i.i.d. Bernoulli cells; identical for identical specs.
pub fn random_board(spec: &BoardSpec) -> Result<Board> {
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(Error::Config(format!(
            "density must lie in [0, 1], got {}",
            spec.density
        )));
    }
    Board::random(
        spec.height,
        spec.width,
        spec.density,
        &mut rng_from_seed(spec.seed),
    )
}

/// `(x, x after n steps)`.
pub fn make_pair(x: &Board, n: usize) -> Result<(Board, Board)> {
    Ok((x.clone(), step_n(x, n)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternCategory {
    StillLife,
    Oscillator,
    Spaceship,
    Growth,
    Custom,
}

impl fmt::Display for PatternCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternCategory::StillLife => "still-life",
            PatternCategory::Oscillator => "oscillator",
            PatternCategory::Spaceship => "spaceship",
            PatternCategory::Growth => "growth",
            PatternCategory::Custom => "custom",
        })
    }
}

/// A small named motif, stored as its bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub name: String,
    pub category: PatternCategory,
    /// Steps after which the pattern recurs (possibly translated), if any.
    pub period: Option<usize>,
    /// Translation `(rows, cols)` after one period, for spaceships.
    pub displacement: (isize, isize),
    pub cells: Board,
}

impl Pattern {
    pub fn new(name: &str, category: PatternCategory, rows: &[&str]) -> Result<Self> {
        let cells = parse_rows(rows)?;
        if cells.alive_count() == 0 {
            return Err(Error::Config(format!("pattern `{name}` has no live cells")));
        }
        let period = match category {
            PatternCategory::StillLife => Some(1),
            _ => None,
        };
        Ok(Pattern {
            name: name.to_string(),
            category,
            period,
            displacement: (0, 0),
            cells,
        })
    }

    fn with_period(mut self, period: usize, displacement: (isize, isize)) -> Self {
        self.period = Some(period);
        self.displacement = displacement;
        self
    }

    pub fn height(&self) -> usize {
        self.cells.height()
    }

    pub fn width(&self) -> usize {
        self.cells.width()
    }

    pub fn rotated(&self) -> Pattern {
        let (h, w) = (self.height(), self.width());
        let rows: Vec<Vec<u8>> = (0..w)
            .map(|r| (0..h).map(|c| self.cells.get(h - 1 - c, r)).collect())
            .collect();
        Pattern {
            name: format!("{}-rot", self.name),
            cells: Board::from_rows(&rows).expect("nonempty"),
            ..self.clone()
        }
    }
}

fn parse_rows(rows: &[&str]) -> Result<Board> {
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        let mut cells = Vec::with_capacity(row.len());
        for (column, ch) in row.chars().enumerate() {
            cells.push(match ch {
                '0' => 0,
                '1' => 1,
                other => {
                    return Err(Error::Parse {
                        line: line + 1,
                        column: column + 1,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            });
        }
        parsed.push(cells);
    }
    Board::from_rows(&parsed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatternRecord {
    name: String,
    category: PatternCategory,
    rows: Vec<String>,
}

/// Named patterns, looked up by name.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLibrary {
    patterns: Vec<Pattern>,
}

impl PatternLibrary {
    pub fn get(&self, name: &str) -> Option<&Pattern> {
        self.patterns.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pattern> {
        self.patterns.iter()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// JSON array of `{name, category, rows}` with rows as `'0'/'1'` strings.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<PatternRecord> = self
            .patterns
            .iter()
            .map(|p| PatternRecord {
                name: p.name.clone(),
                category: p.category,
                rows: p.cells.to_string().lines().map(str::to_string).collect(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let records: Vec<PatternRecord> = serde_json::from_str(s)?;
        let patterns = records
            .iter()
            .map(|r| {
                let rows: Vec<&str> = r.rows.iter().map(String::as_str).collect();
                Pattern::new(&r.name, r.category, &rows)
            })
            .collect::<Result<_>>()?;
        Ok(PatternLibrary { patterns })
    }
}

/// Ring cells of a 3x3 patch, clockwise from the top-left corner.
const RING: [(usize, usize); 8] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (1, 2),
    (2, 2),
    (2, 1),
    (2, 0),
    (1, 0),
];

fn probe_cells(center: bool, ring: u8) -> [[u8; 3]; 3] {
    let mut rows = [[0u8; 3]; 3];
    rows[1][1] = u8::from(center);
    for (k, &(r, c)) in RING.iter().enumerate() {
        if (ring >> k) & 1 == 1 {
            rows[r][c] = 1;
        }
    }
    rows
}

/// An isolated 3x3 stamp whose center cell sees exactly the given patch.
/// Bit `k` of `ring` is the `k`-th ring cell, clockwise from the top-left.
///
/// Named `probe-<center>-<ring>`, e.g. `probe-0-7` for a dead center under a
/// full top row.
pub fn probe(center: bool, ring: u8) -> Result<Pattern> {
    if !center && ring == 0 {
        return Err(Error::Config("an all-dead probe has no live cells".into()));
    }
    Ok(Pattern {
        name: format!("probe-{}-{ring}", u8::from(center)),
        category: PatternCategory::Custom,
        period: None,
        displacement: (0, 0),
        cells: Board::from_rows(&probe_cells(center, ring)).expect("3x3"),
    })
}

/// A 3x3 probe: live center with the first `k` ring cells alive.
fn ring_probe(k: usize) -> Pattern {
    let mut p = probe(true, ((1u16 << k) - 1) as u8).expect("live center");
    p.name = format!("ring-{k}");
    p
}

/// The built-in pattern library.
///
/// Still lifes: block, beehive, loaf, boat, tub, ship, pond. Oscillators:
/// blinker, toad, beacon. Spaceship: glider. Growth: R-pentomino. Custom:
/// `ring-1` … `ring-8` probes (live center, k live ring cells), `hollow` and
/// `notch` (a dead center with eight and seven live neighbors) and `dot` (an
/// isolated live cell), which together reach every center/neighbor-count
/// class.
pub fn builtin_patterns() -> PatternLibrary {
    use PatternCategory::*;
    let p = |name, cat, rows: &[&str]| Pattern::new(name, cat, rows).expect("valid literal");
    let mut patterns = vec![
        p("block", StillLife, &["11", "11"]),
        p("beehive", StillLife, &["0110", "1001", "0110"]),
        p("loaf", StillLife, &["0110", "1001", "0101", "0010"]),
        p("boat", StillLife, &["110", "101", "010"]),
        p("tub", StillLife, &["010", "101", "010"]),
        p("ship", StillLife, &["110", "101", "011"]),
        p("pond", StillLife, &["0110", "1001", "1001", "0110"]),
        p("blinker", Oscillator, &["111"]).with_period(2, (0, 0)),
        p("toad", Oscillator, &["0111", "1110"]).with_period(2, (0, 0)),
        p("beacon", Oscillator, &["1100", "1100", "0011", "0011"]).with_period(2, (0, 0)),
        p("glider", Spaceship, &["010", "001", "111"]).with_period(4, (1, 1)),
        p("r-pentomino", Growth, &["011", "110", "010"]),
        p("hollow", Custom, &["111", "101", "111"]),
        p("notch", Custom, &["111", "101", "110"]),
        p("dot", Custom, &["1"]),
    ];
    patterns.extend((1..=8).map(ring_probe));
    PatternLibrary { patterns }
}

/// A pattern stamped with its bounding box's top-left corner at `(row, col)`.
#[derive(Debug, Clone)]
pub struct Placement<'a> {
    pub pattern: &'a Pattern,
    pub row: usize,
    pub col: usize,
}

/// Stamps patterns onto a dead `size x size` board.
///
/// Bounding boxes must lie inside the board and be separated by at least one
/// dead cell in every direction.
pub fn compose_quadrant(placements: &[Placement<'_>], size: usize) -> Result<Board> {
    let mut board = Board::new(size, size)?;
    for (i, pl) in placements.iter().enumerate() {
        let (h, w) = (pl.pattern.height(), pl.pattern.width());
        if pl.row + h > size || pl.col + w > size {
            return Err(Error::Placement {
                pattern: pl.pattern.name.clone(),
                reason: format!(
                    "{h}x{w} box at ({}, {}) exceeds the {size}x{size} board",
                    pl.row, pl.col
                ),
            });
        }
        for other in &placements[..i] {
            let (oh, ow) = (other.pattern.height(), other.pattern.width());
            let apart = pl.row >= other.row + oh + 1
                || other.row >= pl.row + h + 1
                || pl.col >= other.col + ow + 1
                || other.col >= pl.col + w + 1;
            if !apart {
                return Err(Error::Placement {
                    pattern: pl.pattern.name.clone(),
                    reason: format!(
                        "box at ({}, {}) is within one cell of `{}` at ({}, {})",
                        pl.row, pl.col, other.pattern.name, other.row, other.col
                    ),
                });
            }
        }
        for r in 0..h {
            for c in 0..w {
                if pl.pattern.cells.get(r, c) == 1 {
                    board.set(pl.row + r, pl.col + c, true);
                }
            }
        }
    }
    Ok(board)
}

/// Reflects a quadrant into a board twice its size: the quadrant top-left,
/// its horizontal mirror top-right, vertical mirror bottom-left, and both
/// bottom-right.
pub fn symmetrize(quadrant: &Board) -> Board {
    let (h, w) = quadrant.shape();
    let mut out = Board::new(2 * h, 2 * w).expect("quadrant is nonempty");
    for r in 0..h {
        for c in 0..w {
            let alive = quadrant.get(r, c) == 1;
            out.set(r, c, alive);
            out.set(r, 2 * w - 1 - c, alive);
            out.set(2 * h - 1 - r, c, alive);
            out.set(2 * h - 1 - r, 2 * w - 1 - c, alive);
        }
    }
    out
}

/// Smallest ring mask of each class of 3x3 patches with the given center
/// and live-neighbor count, where patches related by a horizontal or
/// vertical flip share a class. Ordered by that mask.
pub fn reflection_classes(center: bool, alive_neighbors: u32) -> Vec<u8> {
    let flips = |g: [[u8; 3]; 3]| {
        let h = g.map(|mut row| {
            row.reverse();
            row
        });
        let mut v = g;
        v.reverse();
        let mut b = h;
        b.reverse();
        [g, h, v, b].into_iter().min().expect("four images")
    };
    let mut seen = Vec::new();
    let mut masks = Vec::new();
    for ring in 0..=255u8 {
        if ring.count_ones() != alive_neighbors {
            continue;
        }
        let canonical = flips(probe_cells(center, ring));
        if !seen.contains(&canonical) {
            seen.push(canonical);
            masks.push(ring);
        }
    }
    masks
}

/// Spacing of the probe grid in the default quadrant: a 3x3 stamp plus one
/// dead separating row and column.
const PROBE_PITCH: usize = 4;

/// The probes of the default quadrant, in placement order.
///
/// Every reflection class of births `(0,3)` and of survivals `(1,2)`,
/// `(1,3)`, the first eleven classes of overcrowding deaths `(1,4)`, then
/// one probe each for the rare classes `(1,0)`, `(1,5..8)`, `(0,5..8)`.
/// Reflecting the quadrant shows each probe in all four orientations.
pub fn default_probes() -> Vec<Pattern> {
    let mut stamps: Vec<(bool, u8)> = Vec::new();
    for (center, n) in [(false, 3), (true, 2), (true, 3)] {
        stamps.extend(reflection_classes(center, n).into_iter().map(|m| (center, m)));
    }
    stamps.extend(reflection_classes(true, 4).into_iter().take(11).map(|m| (true, m)));
    for (center, n) in [
        (true, 0),
        (true, 5),
        (true, 6),
        (true, 7),
        (true, 8),
        (false, 5),
        (false, 6),
        (false, 7),
        (false, 8),
    ] {
        stamps.push((center, reflection_classes(center, n)[0]));
    }
    stamps
        .into_iter()
        .map(|(c, m)| probe(c, m).expect("nonempty probe"))
        .collect()
}

/// `(pattern, row, col)` of every stamp in the default 32x32 quadrant: the
/// default probes on a grid, row-major.
pub fn default_layout() -> Vec<(Pattern, usize, usize)> {
    let per_row = QUADRANT_SIZE / PROBE_PITCH;
    default_probes()
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, (i / per_row) * PROBE_PITCH, (i % per_row) * PROBE_PITCH))
        .collect()
}

/// Looks up `name` in the library. A `-rot` suffix (repeatable) means a
/// quarter turn clockwise, and `probe-<center>-<ring>` names a [`probe`].
pub fn resolve_pattern(library: &PatternLibrary, name: &str) -> Result<Pattern> {
    if let Some(p) = library.get(name) {
        return Ok(p.clone());
    }
    if let Some(base) = name.strip_suffix("-rot") {
        let mut p = resolve_pattern(library, base)?.rotated();
        p.name = name.to_string();
        return Ok(p);
    }
    let unknown = || Error::UnknownName {
        kind: "pattern",
        name: name.to_string(),
    };
    if let Some(rest) = name.strip_prefix("probe-") {
        let (center, ring) = rest.split_once('-').ok_or_else(unknown)?;
        let center = match center {
            "0" => false,
            "1" => true,
            _ => return Err(unknown()),
        };
        return probe(center, ring.parse().map_err(|_| unknown())?);
    }
    Err(unknown())
}

/// Stamps named patterns at the given positions.
pub fn compose_named(layout: &[(String, usize, usize)], size: usize) -> Result<Board> {
    let library = builtin_patterns();
    let patterns: Vec<(Pattern, usize, usize)> = layout
        .iter()
        .map(|(name, r, c)| Ok((resolve_pattern(&library, name)?, *r, *c)))
        .collect::<Result<_>>()?;
    compose_owned(&patterns, size)
}

fn compose_owned(patterns: &[(Pattern, usize, usize)], size: usize) -> Result<Board> {
    let placements: Vec<Placement<'_>> = patterns
        .iter()
        .map(|(pattern, row, col)| Placement {
            pattern,
            row: *row,
            col: *col,
        })
        .collect();
    compose_quadrant(&placements, size)
}

/// The curated 32x32 quadrant before reflection.
pub fn default_quadrant() -> Result<Board> {
    compose_owned(&default_layout(), QUADRANT_SIZE)
}

/// The canonical 64x64 fixed training board.
pub fn fixed_board() -> Board {
    symmetrize(&default_quadrant().expect("default layout is valid"))
}

/// Occurrences of each (center, live-neighbor) class on a board.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Indexed by `center * 9 + neighbors`.
    pub counts: [usize; 18],
}

impl CoverageReport {
    pub fn count(&self, class: PatchClass) -> usize {
        self.counts[class.ordinal()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn covered_classes(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn covered_fraction(&self) -> f64 {
        self.covered_classes() as f64 / 18.0
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "neighbors  dead  alive")?;
        for n in 0..9 {
            writeln!(f, "{n:>9}  {:>4}  {:>5}", self.counts[n], self.counts[9 + n])?;
        }
        write!(
            f,
            "covered {}/18 ({:.3})",
            self.covered_classes(),
            self.covered_fraction()
        )
    }
}

pub fn coverage(board: &Board) -> CoverageReport {
    let mut counts = [0; 18];
    for r in 0..board.height() {
        for c in 0..board.width() {
            counts[board.patch_class(r, c).ordinal()] += 1;
        }
    }
    CoverageReport { counts }
}

/// Serializes a board as lines of `'0'`/`'1'`.
pub fn save_board(board: &Board, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, board.to_string()).map_err(|e| Error::io(path, e))
}

pub fn load_board(path: impl AsRef<Path>) -> Result<Board> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_board(&text)
}

/// Parses the board text format. Blank trailing lines and `\r\n` endings
/// are accepted; every row must have the same width.
pub fn parse_board(text: &str) -> Result<Board> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    let end = lines
        .iter()
        .rposition(|l| !l.is_empty())
        .map_or(0, |i| i + 1);
    let lines = &lines[..end];
    if lines.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty board".into(),
        });
    }
    let width = lines[0].chars().count();
    for (i, line) in lines.iter().enumerate() {
        let len = line.chars().count();
        if len != width {
            return Err(Error::Parse {
                line: i + 1,
                column: len.min(width) + 1,
                message: format!("row has {len} cells, expected {width}"),
            });
        }
    }
    parse_rows(lines)
}
