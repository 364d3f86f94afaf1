//! Marker geometry: cells, the view grid, binary layers and rank-1 factors.
//!
//! A low-resolution code pixel maps to one square cell of `scale + 2 * margin`
//! high-resolution pixels. Only the central `scale x scale` window carries
//! information; the margin ring is a periodic copy of the window so that any
//! view shift up to `margin` still reads pixels belonging to the same cell.
//!
//! Shifts are `(u, v)` with `u` horizontal (columns, positive to the right)
//! and `v` vertical (rows, positive downwards). The front layer is shifted
//! relative to a fixed rear layer.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Geometry of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub scale: usize,
    pub margin: usize,
}

impl CellSpec {
    pub fn new(scale: usize, margin: usize) -> Result<Self> {
        if scale < 2 {
            return Err(Error::InvalidParameter(format!(
                "cell scale must be >= 2, got {scale}"
            )));
        }
        Ok(Self { scale, margin })
    }

    /// Cell whose margin exactly absorbs the largest shift of `view`.
    pub fn for_view(scale: usize, view: &ViewSpec) -> Result<Self> {
        Self::new(scale, view.max_shift())
    }

    pub fn cell_side(&self) -> usize {
        self.scale + 2 * self.margin
    }

    /// Number of free pixels per layer in one cell (the central window).
    pub fn window_len(&self) -> usize {
        self.scale * self.scale
    }
}

/// Discrete grid of viewing directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub grid_k: usize,
    pub shift_step: usize,
    /// `(u, v)` shift per view, row-major, already multiplied by `shift_step`.
    pub offsets: Vec<(i64, i64)>,
    /// Physical `(theta_u, theta_v)` in degrees, filled by
    /// [`crate::optics::annotate_view_angles`].
    pub angles: Option<Vec<(f64, f64)>>,
}

impl ViewSpec {
    pub fn new(grid_k: usize, shift_step: usize) -> Result<Self> {
        if grid_k == 0 || grid_k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "grid_k must be an odd positive integer, got {grid_k}"
            )));
        }
        if shift_step == 0 {
            return Err(Error::InvalidParameter("shift_step must be >= 1".into()));
        }
        let half = (grid_k / 2) as i64;
        let step = shift_step as i64;
        let offsets = (-half..=half)
            .flat_map(|row| (-half..=half).map(move |col| (col * step, row * step)))
            .collect();
        Ok(Self {
            grid_k,
            shift_step,
            offsets,
            angles: None,
        })
    }

    pub fn count(&self) -> usize {
        self.offsets.len()
    }

    /// Index (1-based) of the view with zero shift.
    pub fn center_index(&self) -> usize {
        self.count() / 2 + 1
    }

    pub fn max_shift(&self) -> usize {
        (self.grid_k / 2) * self.shift_step
    }

    /// Shift of the 1-based view `index`.
    pub fn offset(&self, index: usize) -> Result<(i64, i64)> {
        if index == 0 || index > self.count() {
            return Err(Error::ViewIndex {
                index,
                count: self.count(),
            });
        }
        Ok(self.offsets[index - 1])
    }

    pub fn check_margin(&self, cell: &CellSpec) -> Result<()> {
        if self.max_shift() > cell.margin {
            let (u, v) = self.offsets[self.count() - 1];
            return Err(Error::ShiftExceedsMargin {
                u,
                v,
                margin: cell.margin,
            });
        }
        Ok(())
    }
}

/// Row-major enumeration of `(view_index, (u, v))`, indices starting at 1.
pub fn view_offset_table(view: &ViewSpec) -> Vec<(usize, (i64, i64))> {
    view.offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| (i + 1, off))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerRole {
    Front,
    Rear,
}

/// One printed side of the marker, entries in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryLayer {
    pixels: Array2<u8>,
    pub role: LayerRole,
}

impl BinaryLayer {
    pub fn new(pixels: Array2<u8>, role: LayerRole) -> Result<Self> {
        if pixels.nrows() == 0 || pixels.ncols() == 0 {
            return Err(Error::Dimension("layer must be non-empty".into()));
        }
        if let Some(bad) = pixels.iter().find(|&&p| p > 1) {
            return Err(Error::InvalidParameter(format!(
                "layer entries must be 0 or 1, found {bad}"
            )));
        }
        Ok(Self { pixels, role })
    }

    pub fn filled(rows: usize, cols: usize, value: u8, role: LayerRole) -> Result<Self> {
        Self::new(Array2::from_elem((rows, cols), value), role)
    }

    pub fn pixels(&self) -> &Array2<u8> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<u8> {
        self.pixels
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[(row, col)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorMode {
    Relaxed,
    Binary,
}

/// Rank-1 factor vectors for one cell: `w` is the front window, `h` the rear
/// window, both flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub w: Vec<f64>,
    pub h: Vec<f64>,
    pub mode: FactorMode,
}

impl FactorPair {
    pub fn relaxed(w: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if w.iter().chain(&h).any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "relaxed factors must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            w,
            h,
            mode: FactorMode::Relaxed,
        })
    }

    pub fn binary(w: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if w.iter().chain(&h).any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::InvalidParameter(
                "binary factors must contain only 0 and 1".into(),
            ));
        }
        Ok(Self {
            w,
            h,
            mode: FactorMode::Binary,
        })
    }

    pub fn is_binary(&self) -> bool {
        self.w.iter().chain(&self.h).all(|&x| x == 0.0 || x == 1.0)
    }
}

/// Reshape a flat {0,1} vector into a `rows x cols` layer, row-major.
pub fn reshape_vector_to_layer(
    v: &[u8],
    rows: usize,
    cols: usize,
    role: LayerRole,
) -> Result<BinaryLayer> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot be reshaped to {rows}x{cols} ({} entries)",
            v.len(),
            rows * cols
        )));
    }
    let pixels = Array2::from_shape_vec((rows, cols), v.to_vec())
        .map_err(|e| Error::Dimension(e.to_string()))?;
    BinaryLayer::new(pixels, role)
}

/// Row-major flattening, inverse of [`reshape_vector_to_layer`].
pub fn layer_to_vector(layer: &BinaryLayer) -> Vec<u8> {
    layer.pixels.iter().copied().collect()
}

/// Grow `a` by `margin` on every side, wrapping around with the period of `a`.
pub fn periodic_pad_array<T: Clone>(a: &Array2<T>, margin: usize) -> Array2<T> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((rows + 2 * margin, cols + 2 * margin), |(r, c)| {
        let sr = (r + rows * margin - margin) % rows;
        let sc = (c + cols * margin - margin) % cols;
        a[(sr, sc)].clone()
    })
}

pub fn periodic_pad(layer: &BinaryLayer, margin: usize) -> BinaryLayer {
    BinaryLayer {
        pixels: periodic_pad_array(&layer.pixels, margin),
        role: layer.role,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn reshape_examples() {
        let l = reshape_vector_to_layer(&[0, 1, 1, 0], 2, 2, LayerRole::Front).unwrap();
        assert_eq!(l.pixels(), &array![[0u8, 1], [1, 0]]);
        let l = reshape_vector_to_layer(&[1], 1, 1, LayerRole::Rear).unwrap();
        assert_eq!(l.pixels(), &array![[1u8]]);
        let err = reshape_vector_to_layer(&[0, 1, 0, 1, 1], 2, 2, LayerRole::Front).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn reshape_rejects_non_binary() {
        assert!(reshape_vector_to_layer(&[0, 2], 1, 2, LayerRole::Front).is_err());
    }

    #[test]
    fn pad_single_cell() {
        let l = BinaryLayer::filled(1, 1, 1, LayerRole::Front).unwrap();
        let p = periodic_pad(&l, 1);
        assert_eq!(p.pixels(), &Array2::from_elem((3, 3), 1u8));
    }

    #[test]
    fn pad_torus_tiling() {
        let l = BinaryLayer::new(array![[1u8, 0], [0, 1]], LayerRole::Front).unwrap();
        let p = periodic_pad(&l, 1);
        // Hand-unrolled wrap indices: out(r, c) = in((r - 1) mod 2, (c - 1) mod 2).
        let expected = array![[1u8, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]];
        assert_eq!(p.pixels(), &expected);
        assert_eq!(p.get(0, 0), l.get(1, 1));
    }

    #[test]
    fn pad_zero_is_identity() {
        let l = BinaryLayer::new(array![[1u8, 0, 0], [0, 1, 1]], LayerRole::Rear).unwrap();
        assert_eq!(periodic_pad(&l, 0), l);
    }

    #[test]
    fn offset_table_examples() {
        let v = ViewSpec::new(3, 1).unwrap();
        let t = view_offset_table(&v);
        assert_eq!(t.len(), 9);
        assert_eq!(t[4], (5, (0, 0)));
        assert_eq!(t[5], (6, (1, 0)));
        assert_eq!(t[0], (1, (-1, -1)));
        assert_eq!(v.center_index(), 5);

        let single = ViewSpec::new(1, 1).unwrap();
        assert_eq!(view_offset_table(&single), vec![(1, (0, 0))]);
    }

    #[test]
    fn view_spec_validation() {
        assert!(ViewSpec::new(2, 1).is_err());
        assert!(ViewSpec::new(0, 1).is_err());
        assert!(ViewSpec::new(3, 0).is_err());
        let v = ViewSpec::new(5, 2).unwrap();
        assert_eq!(v.max_shift(), 4);
        assert!(v.check_margin(&CellSpec::new(10, 3).unwrap()).is_err());
        assert!(v.check_margin(&CellSpec::for_view(10, &v).unwrap()).is_ok());
        assert!(v.offset(26).is_err());
        assert!(v.offset(0).is_err());
    }

    #[test]
    fn cell_side_arithmetic() {
        let c = CellSpec::new(100, 1).unwrap();
        assert_eq!(c.cell_side(), 102);
        assert!(CellSpec::new(1, 0).is_err());
    }

    #[test]
    fn factor_pair_modes() {
        assert!(FactorPair::relaxed(vec![0.1, 0.0], vec![2.0]).is_ok());
        assert!(FactorPair::relaxed(vec![-0.1], vec![2.0]).is_err());
        assert!(FactorPair::binary(vec![0.0, 1.0], vec![1.0]).is_ok());
        assert!(FactorPair::binary(vec![0.5], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn reshape_round_trip(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
            let v: Vec<u8> = (0..rows * cols).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let l = reshape_vector_to_layer(&v, rows, cols, LayerRole::Front).unwrap();
            prop_assert_eq!(layer_to_vector(&l), v);
        }

        #[test]
        fn pad_center_is_input(rows in 1usize..6, cols in 1usize..6, m in 0usize..5, seed in any::<u64>()) {
            let a = Array2::from_shape_fn((rows, cols), |(r, c)| ((seed >> ((r * cols + c) % 64)) & 1) as u8);
            let l = BinaryLayer::new(a, LayerRole::Front).unwrap();
            let p = periodic_pad(&l, m);
            let center = p.pixels().slice(ndarray::s![m..m + rows, m..m + cols]).to_owned();
            prop_assert_eq!(&center, l.pixels());
        }

        #[test]
        fn offsets_bijective_and_symmetric(half in 0usize..4, step in 1usize..4) {
            let v = ViewSpec::new(2 * half + 1, step).unwrap();
            let t = view_offset_table(&v);
            let set: std::collections::HashSet<_> = t.iter().map(|&(_, o)| o).collect();
            prop_assert_eq!(set.len(), t.len());
            for &(_, (u, w)) in &t {
                prop_assert!(set.contains(&(-u, -w)));
            }
            prop_assert_eq!(v.offset(v.center_index()).unwrap(), (0, 0));
        }
    }
}
