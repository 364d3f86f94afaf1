//! Pixel-wise design. Every low-resolution code pixel carries one bit per
//! view; that word (the combo) fully determines what its cell must show. Each
//! distinct combo is solved once as a small multi-view BMF problem, and the
//! resulting cells are tiled into the full front and rear layers.
//!
//! Margins make the central window of each cell shift-safe for
//! `|shift| <= margin`, so cells never interact and the per-cell solutions
//! compose exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::factorization::{bmf_solve, BmfReport, ProductOperator, RankOneProblem, SolverConfig};
use crate::imaging::{GrayTarget, Levels};
use crate::marker::{
    periodic_pad, reshape_vector_to_layer, BinaryLayer, CellSpec, LayerRole, ViewSpec,
};
use crate::{Error, Result};

/// Views beyond this make full combo enumeration infeasible.
pub const MAX_FULL_ENUMERATION_VIEWS: usize = 16;

const FINDER_SIDE: usize = 7;

/// One bit per view, bit `i` for view index `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelCombo {
    pub bits: u32,
    pub views: usize,
}

impl PixelCombo {
    pub fn new(bits: u32, views: usize) -> Result<Self> {
        if views == 0 || views > 32 || (views < 32 && bits >> views != 0) {
            return Err(Error::InvalidParameter(format!(
                "combo {bits:#b} does not fit in {views} views"
            )));
        }
        Ok(Self { bits, views })
    }

    /// Level bit of the 1-based view `index`.
    pub fn bit(&self, index: usize) -> bool {
        self.bits >> (index - 1) & 1 == 1
    }
}

impl fmt::Display for PixelCombo {
    /// Binary word, most significant view first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.bits, width = self.views)
    }
}

/// One low-resolution target per view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTargetStack {
    pub codes: Vec<GrayTarget>,
    pub view: ViewSpec,
}

impl ViewTargetStack {
    pub fn new(codes: Vec<GrayTarget>, view: ViewSpec) -> Result<Self> {
        if codes.len() != view.count() {
            return Err(Error::Dimension(format!(
                "{} codes supplied for {} views",
                codes.len(),
                view.count()
            )));
        }
        let dim = codes[0].dim();
        let levels = codes[0].levels;
        for (i, c) in codes.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::Dimension(format!(
                    "code for view {} is {:?}, view 1 is {:?}",
                    i + 1,
                    c.dim(),
                    dim
                )));
            }
            if c.levels != levels {
                return Err(Error::InvalidParameter(format!(
                    "code for view {} uses different levels",
                    i + 1
                )));
            }
        }
        Ok(Self { codes, view })
    }

    pub fn from_bits(bits: &[Array2<u8>], view: ViewSpec, levels: Levels) -> Result<Self> {
        let codes = bits
            .iter()
            .map(|b| GrayTarget::from_bits(b, levels))
            .collect();
        Self::new(codes, view)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.codes[0].dim()
    }

    pub fn levels(&self) -> Levels {
        self.codes[0].levels
    }

    pub fn bits(&self) -> Vec<Array2<u8>> {
        self.codes.iter().map(GrayTarget::bits).collect()
    }

    pub fn combo_at(&self, row: usize, col: usize) -> PixelCombo {
        let bits = self
            .codes
            .iter()
            .enumerate()
            .map(|(i, c)| u32::from(c.values[(row, col)] == c.levels.high) << i)
            .sum();
        PixelCombo {
            bits,
            views: self.codes.len(),
        }
    }

    pub fn distinct_combos(&self) -> BTreeSet<PixelCombo> {
        let (rows, cols) = self.dim();
        (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| self.combo_at(r, c))
            .collect()
    }
}

/// 1x1 per-view targets for a single combo.
pub fn combo_target(combo: PixelCombo, view: &ViewSpec, levels: Levels) -> Result<ViewTargetStack> {
    if combo.views != view.count() {
        return Err(Error::Dimension(format!(
            "combo has {} views, grid has {}",
            combo.views,
            view.count()
        )));
    }
    let codes = (1..=view.count())
        .map(|i| GrayTarget {
            values: Array2::from_elem((1, 1), levels.level(combo.bit(i))),
            levels,
        })
        .collect();
    ViewTargetStack::new(codes, view.clone())
}

/// Solved cell for one combo.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub combo: PixelCombo,
    /// Front and rear cell layers, `cell_side x cell_side`, margins filled by
    /// periodic padding.
    pub front: BinaryLayer,
    pub rear: BinaryLayer,
    /// Rendered value per view, view 1 first.
    pub values: Vec<f64>,
    pub rms: f64,
}

/// Write-once map from combo to its solved cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ComboCache {
    pub cell: CellSpec,
    pub view: ViewSpec,
    pub levels: Levels,
    pub entries: BTreeMap<u32, CacheEntry>,
}

impl ComboCache {
    pub fn new(cell: CellSpec, view: ViewSpec, levels: Levels) -> Self {
        Self {
            cell,
            view,
            levels,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, combo: PixelCombo) -> Option<&CacheEntry> {
        self.entries.get(&combo.bits)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, entry: CacheEntry) -> Result<()> {
        let side = self.cell.cell_side();
        if entry.front.pixels().dim() != (side, side) || entry.rear.pixels().dim() != (side, side) {
            return Err(Error::Dimension(format!(
                "cell layers for combo {} must be {side}x{side}",
                entry.combo
            )));
        }
        if entry.combo.views != self.view.count() || entry.values.len() != self.view.count() {
            return Err(Error::Dimension(format!(
                "combo {} does not match the {}-view grid",
                entry.combo,
                self.view.count()
            )));
        }
        if self.entries.contains_key(&entry.combo.bits) {
            return Err(Error::InvalidParameter(format!(
                "combo {} is already cached",
                entry.combo
            )));
        }
        self.entries.insert(entry.combo.bits, entry);
        Ok(())
    }
}

/// Multi-view rank-1 problem for one cell: one output per view.
pub fn cell_problem(
    combo: PixelCombo,
    cell: &CellSpec,
    view: &ViewSpec,
    levels: Levels,
) -> Result<RankOneProblem> {
    view.check_margin(cell)?;
    let targets = combo_target(combo, view, levels)?;
    let op = ProductOperator::cell_views(cell, &view.offsets)?;
    let v = targets.codes.iter().map(|c| c.values[(0, 0)]).collect();
    RankOneProblem::with_unit_weights(op, v)
}

fn combo_seed(base: u64, combo: PixelCombo) -> u64 {
    base.wrapping_add(u64::from(combo.bits).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn window_to_cell(w: &[f64], cell: &CellSpec, role: LayerRole) -> Result<BinaryLayer> {
    let bits: Vec<u8> = w.iter().map(|&x| u8::from(x == 1.0)).collect();
    let window = reshape_vector_to_layer(&bits, cell.scale, cell.scale, role)?;
    Ok(periodic_pad(&window, cell.margin))
}

/// Solve one combo with all views fitted jointly.
pub fn solve_combo(
    combo: PixelCombo,
    cell: &CellSpec,
    view: &ViewSpec,
    levels: Levels,
    cfg: &SolverConfig,
) -> Result<(CacheEntry, BmfReport)> {
    let problem = cell_problem(combo, cell, view, levels)?;
    let wnmf = crate::factorization::WnmfConfig {
        seed: combo_seed(cfg.wnmf.seed, combo),
        ..cfg.wnmf.clone()
    };
    let (pair, report) = bmf_solve(&problem, &wnmf, &cfg.anneal, cfg.restarts)?;
    let entry = CacheEntry {
        combo,
        front: window_to_cell(&pair.w, cell, LayerRole::Front)?,
        rear: window_to_cell(&pair.h, cell, LayerRole::Rear)?,
        values: report.rendered.clone(),
        rms: report.rms,
    };
    Ok((entry, report))
}

/// Which combos to solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComboRequest {
    /// Every word of the grid; refused for more than
    /// [`MAX_FULL_ENUMERATION_VIEWS`] views.
    All,
    Listed(BTreeSet<u32>),
}

impl ComboRequest {
    pub fn for_stack(stack: &ViewTargetStack) -> Self {
        ComboRequest::Listed(stack.distinct_combos().iter().map(|c| c.bits).collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub failures: Vec<(PixelCombo, String)>,
    /// Full solver reports keyed by combo bits.
    pub reports: BTreeMap<u32, BmfReport>,
}

/// Solve every requested combo, `jobs` at a time. The resulting cache does
/// not depend on `jobs`.
pub fn solve_all_combos(
    cell: &CellSpec,
    view: &ViewSpec,
    levels: Levels,
    cfg: &SolverConfig,
    request: &ComboRequest,
    jobs: usize,
) -> Result<(ComboCache, SolveReport)> {
    view.check_margin(cell)?;
    let views = view.count();
    let words: Vec<u32> = match request {
        ComboRequest::All => {
            if views > MAX_FULL_ENUMERATION_VIEWS {
                return Err(Error::InvalidParameter(format!(
                    "refusing to enumerate 2^{views} combos; request the combos of a stack instead"
                )));
            }
            (0..1u32 << views).collect()
        }
        ComboRequest::Listed(set) => set.iter().copied().collect(),
    };
    let combos = words
        .iter()
        .map(|&b| PixelCombo::new(b, views))
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        combos
            .par_iter()
            .map(|&c| (c, solve_combo(c, cell, view, levels, cfg)))
            .collect()
    });

    let mut cache = ComboCache::new(*cell, view.clone(), levels);
    let mut report = SolveReport::default();
    for (combo, res) in results {
        match res {
            Ok((entry, r)) => {
                cache.insert(entry)?;
                report.reports.insert(combo.bits, r);
            }
            Err(e) => report.failures.push((combo, e.to_string())),
        }
    }
    Ok((cache, report))
}

/// Tile the cached cells into full front and rear layers.
pub fn aggregate(
    stack: &ViewTargetStack,
    cache: &ComboCache,
    cell: &CellSpec,
) -> Result<(BinaryLayer, BinaryLayer)> {
    if cache.cell != *cell {
        return Err(Error::InvalidParameter(format!(
            "cache was built for {:?}, not {:?}",
            cache.cell, cell
        )));
    }
    let (rows, cols) = stack.dim();
    let side = cell.cell_side();
    let mut front = Array2::zeros((rows * side, cols * side));
    let mut rear = Array2::zeros((rows * side, cols * side));
    for r in 0..rows {
        for c in 0..cols {
            let combo = stack.combo_at(r, c);
            let entry = cache.get(combo).ok_or_else(|| Error::MissingCombo {
                combo: combo.to_string(),
                row: r,
                col: c,
            })?;
            let region = s![r * side..(r + 1) * side, c * side..(c + 1) * side];
            front.slice_mut(region).assign(entry.front.pixels());
            rear.slice_mut(region).assign(entry.rear.pixels());
        }
    }
    Ok((
        BinaryLayer::new(front, LayerRole::Front)?,
        BinaryLayer::new(rear, LayerRole::Rear)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
}

pub const FINDER_CORNERS: [Corner; 3] = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft];

/// 7x7 concentric finder bit: high outer ring, low ring, high 3x3 core.
fn finder_bit(r: usize, c: usize) -> bool {
    let ring = r.min(c).min(FINDER_SIDE - 1 - r).min(FINDER_SIDE - 1 - c);
    ring != 1
}

/// Write finder blocks into the given corners of every view's code.
/// Codes must be at least 15 pixels per side so two finders plus a
/// separator fit along each edge.
pub fn stamp_finder_patterns(
    stack: &ViewTargetStack,
    corners: &[Corner],
) -> Result<ViewTargetStack> {
    let (rows, cols) = stack.dim();
    let min = 2 * FINDER_SIDE + 1;
    if rows < min || cols < min {
        return Err(Error::Dimension(format!(
            "{rows}x{cols} code cannot host finder patterns (needs at least {min}x{min})"
        )));
    }
    let mut out = stack.clone();
    for code in &mut out.codes {
        let levels = code.levels;
        for &corner in corners {
            let (r0, c0) = match corner {
                Corner::TopLeft => (0, 0),
                Corner::TopRight => (0, cols - FINDER_SIDE),
                Corner::BottomLeft => (rows - FINDER_SIDE, 0),
            };
            for r in 0..FINDER_SIDE {
                for c in 0..FINDER_SIDE {
                    code.values[(r0 + r, c0 + c)] = levels.level(finder_bit(r, c));
                }
            }
        }
    }
    Ok(out)
}
