//! Forward image formation: superposition of the shifted layers followed by
//! block-average downsampling of each cell's central window.

use ndarray::{s, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::marker::{BinaryLayer, CellSpec, FactorPair, ViewSpec};
use crate::{Error, Result};

/// Ties closer than this to the decode midpoint resolve to 1.
const DECODE_TIE_EPS: f64 = 1e-12;

/// Grayscale levels that code bits 0 and 1 map to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Levels {
    pub low: f64,
    pub high: f64,
}

impl Default for Levels {
    fn default() -> Self {
        Self {
            low: 0.2,
            high: 0.5,
        }
    }
}

impl Levels {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0 < low && low < high && high <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "levels must satisfy 0 < low < high <= 1, got ({low}, {high})"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn level(&self, bit: bool) -> f64 {
        if bit {
            self.high
        } else {
            self.low
        }
    }
}

/// Low-resolution target for one view. Every entry is one of the two levels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayTarget {
    pub values: Array2<f64>,
    pub levels: Levels,
}

impl GrayTarget {
    pub fn new(values: Array2<f64>, levels: Levels) -> Result<Self> {
        if let Some(bad) = values
            .iter()
            .find(|&&x| x != levels.low && x != levels.high)
        {
            return Err(Error::InvalidParameter(format!(
                "target entry {bad} is neither level {} nor {}",
                levels.low, levels.high
            )));
        }
        Ok(Self { values, levels })
    }

    pub fn from_bits(bits: &Array2<u8>, levels: Levels) -> Self {
        Self {
            values: bits.mapv(|b| levels.level(b != 0)),
            levels,
        }
    }

    pub fn bits(&self) -> Array2<u8> {
        self.values.mapv(|x| u8::from(x == self.levels.high))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// The operator `B`: mean over the central `scale x scale` window of every
/// `cell_side x cell_side` tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownsampleOp {
    pub scale: usize,
    pub margin: usize,
}

impl From<CellSpec> for DownsampleOp {
    fn from(cell: CellSpec) -> Self {
        Self {
            scale: cell.scale,
            margin: cell.margin,
        }
    }
}

impl DownsampleOp {
    pub fn cell_side(&self) -> usize {
        self.scale + 2 * self.margin
    }

    fn low_dims(&self, hi: (usize, usize)) -> Result<(usize, usize)> {
        let side = self.cell_side();
        if hi.0 == 0 || hi.1 == 0 || !hi.0.is_multiple_of(side) || !hi.1.is_multiple_of(side) {
            return Err(Error::Dimension(format!(
                "high-resolution shape {}x{} is not a tiling of {side}x{side} cells",
                hi.0, hi.1
            )));
        }
        Ok((hi.0 / side, hi.1 / side))
    }

    /// Adjoint of [`downsample`]: spreads each low-res value uniformly with
    /// weight `1 / scale^2` over its window, zero on margins.
    pub fn adjoint(&self, lo: &Array2<f64>) -> Array2<f64> {
        let side = self.cell_side();
        let (m, s) = (self.margin, self.scale);
        let inv = 1.0 / (s * s) as f64;
        let mut hi = Array2::zeros((lo.nrows() * side, lo.ncols() * side));
        for ((r, c), &x) in lo.indexed_iter() {
            let (r0, c0) = (r * side + m, c * side + m);
            hi.slice_mut(s![r0..r0 + s, c0..c0 + s]).fill(x * inv);
        }
        hi
    }
}

pub fn downsample(op: &DownsampleOp, hi: &Array2<f64>) -> Result<Array2<f64>> {
    let (lr, lc) = op.low_dims(hi.dim())?;
    let side = op.cell_side();
    let (m, s) = (op.margin, op.scale);
    let inv = 1.0 / (s * s) as f64;
    Ok(Array2::from_shape_fn((lr, lc), |(r, c)| {
        let (r0, c0) = (r * side + m, c * side + m);
        hi.slice(s![r0..r0 + s, c0..c0 + s]).sum() * inv
    }))
}

/// Nonnegative weights `C` of the fitting objective.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMask {
    pub weights: Array2<f64>,
}

impl WeightMask {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "weights must be finite and >= 0".into(),
            ));
        }
        if weights.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter("weights are all zero".into()));
        }
        Ok(Self { weights })
    }

    pub fn ones(dim: (usize, usize)) -> Self {
        Self {
            weights: Array2::ones(dim),
        }
    }

    /// All-ones mask whose outermost ring of pixels is scaled by `factor`.
    pub fn border_downweighted(dim: (usize, usize), factor: f64) -> Result<Self> {
        let (rows, cols) = dim;
        Self::new(Array2::from_shape_fn(dim, |(r, c)| {
            if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                factor
            } else {
                1.0
            }
        }))
    }
}

/// `out[r][c] = front[r + v][c + u] * rear[r][c]`, indices wrapping around
/// the layer. Shifts beyond `margin` are rejected.
pub fn superpose(
    front: &BinaryLayer,
    rear: &BinaryLayer,
    shift: (i64, i64),
    margin: usize,
) -> Result<Array2<f64>> {
    let (u, v) = shift;
    if u.unsigned_abs() as usize > margin || v.unsigned_abs() as usize > margin {
        return Err(Error::ShiftExceedsMargin { u, v, margin });
    }
    if front.pixels().dim() != rear.pixels().dim() {
        return Err(Error::Dimension(format!(
            "front layer {}x{} and rear layer {}x{} differ",
            front.rows(),
            front.cols(),
            rear.rows(),
            rear.cols()
        )));
    }
    let (rows, cols) = (front.rows() as i64, front.cols() as i64);
    let fp = front.pixels();
    Ok(Array2::from_shape_fn(rear.pixels().dim(), |(r, c)| {
        let fr = (r as i64 + v).rem_euclid(rows) as usize;
        let fc = (c as i64 + u).rem_euclid(cols) as usize;
        f64::from(fp[(fr, fc)] & rear.pixels()[(r, c)])
    }))
}

/// Low-resolution image seen from the 1-based view `view_index`.
pub fn render_view(
    front: &BinaryLayer,
    rear: &BinaryLayer,
    view: &ViewSpec,
    view_index: usize,
    cell: &CellSpec,
) -> Result<Array2<f64>> {
    let shift = view.offset(view_index)?;
    view.check_margin(cell)?;
    let op = DownsampleOp::from(*cell);
    op.low_dims(front.pixels().dim())?;
    let hi = superpose(front, rear, shift, cell.margin)?;
    downsample(&op, &hi)
}

/// `1/2 ||C o (V - R)||_F^2 + l1 ||w||^2 + l2 ||h||^2`.
pub fn objective(
    target: &GrayTarget,
    mask: &WeightMask,
    rendered: &Array2<f64>,
    factors: &FactorPair,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    if target.dim() != rendered.dim() || mask.weights.dim() != rendered.dim() {
        return Err(Error::Dimension(format!(
            "target {:?}, mask {:?} and rendered {:?} shapes differ",
            target.dim(),
            mask.weights.dim(),
            rendered.dim()
        )));
    }
    let mut fit = 0.0;
    Zip::from(&target.values)
        .and(&mask.weights)
        .and(rendered)
        .for_each(|&t, &c, &r| {
            let e = c * (t - r);
            fit += e * e;
        });
    let nw: f64 = factors.w.iter().map(|x| x * x).sum();
    let nh: f64 = factors.h.iter().map(|x| x * x).sum();
    Ok(0.5 * fit + lambda1 * nw + lambda2 * nh)
}

pub fn rms_error(target: &Array2<f64>, rendered: &Array2<f64>) -> Result<f64> {
    if target.dim() != rendered.dim() {
        return Err(Error::Dimension(format!(
            "target {:?} and rendered {:?} shapes differ",
            target.dim(),
            rendered.dim()
        )));
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = Zip::from(target)
        .and(rendered)
        .fold(0.0, |acc, &t, &r| acc + (t - r) * (t - r));
    Ok((sq / target.len() as f64).sqrt())
}

/// Midpoint binarization. Values at the midpoint decode as 1.
pub fn decode_bits(rendered: &Array2<f64>, levels: &Levels) -> Array2<u8> {
    let mid = levels.midpoint() - DECODE_TIE_EPS;
    rendered.mapv(|x| u8::from(x >= mid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marker::{periodic_pad, LayerRole};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(a: Array2<u8>, role: LayerRole) -> BinaryLayer {
        BinaryLayer::new(a, role).unwrap()
    }

    #[test]
    fn superpose_identity_and_absorbing() {
        let ones = BinaryLayer::filled(6, 6, 1, LayerRole::Front).unwrap();
        let rear = BinaryLayer::filled(6, 6, 1, LayerRole::Rear).unwrap();
        let zeros = BinaryLayer::filled(6, 6, 0, LayerRole::Front).unwrap();
        for shift in [(0, 0), (1, -1), (-2, 2)] {
            assert!(superpose(&ones, &rear, shift, 2)
                .unwrap()
                .iter()
                .all(|&x| x == 1.0));
            assert!(superpose(&zeros, &rear, shift, 2)
                .unwrap()
                .iter()
                .all(|&x| x == 0.0));
        }
        assert!(superpose(&ones, &rear, (3, 0), 2).is_err());
    }

    #[test]
    fn superpose_shift_matches_index_oracle() {
        let front = periodic_pad(&layer(array![[1, 0], [0, 1]], LayerRole::Front), 1);
        let rear = BinaryLayer::filled(4, 4, 1, LayerRole::Rear).unwrap();
        let out = superpose(&front, &rear, (0, 1), 1).unwrap();
        // v = 1: out(r, c) = front((r + 1) mod 4, c)
        let fp = front.pixels();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(out[(r, c)], f64::from(fp[((r + 1) % 4, c)]));
            }
        }
        let out = superpose(&front, &rear, (1, 0), 1).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(out[(r, c)], f64::from(fp[(r, (c + 1) % 4)]));
            }
        }
    }

    #[test]
    fn downsample_examples() {
        let op = DownsampleOp {
            scale: 2,
            margin: 0,
        };
        assert_eq!(
            downsample(&op, &array![[1.0, 1.0], [1.0, 1.0]]).unwrap(),
            array![[1.0]]
        );
        assert_eq!(
            downsample(&op, &array![[1.0, 0.0], [0.0, 0.0]]).unwrap(),
            array![[0.25]]
        );

        let op = DownsampleOp {
            scale: 100,
            margin: 1,
        };
        let mut hi = Array2::zeros((102, 102));
        // margin ring is ignored
        hi.row_mut(0).fill(1.0);
        hi.slice_mut(s![1..51, 1..101]).fill(1.0);
        assert_eq!(downsample(&op, &hi).unwrap(), array![[0.5]]);

        let err = downsample(&op, &Array2::zeros((102, 100))).unwrap_err();
        assert!(err.to_string().contains("102x100"));
    }

    #[test]
    fn adjoint_identity() {
        let op = DownsampleOp {
            scale: 3,
            margin: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((10, 15), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((2, 3), |_| rng.random::<f64>());
        let lhs = (&downsample(&op, &x).unwrap() * &y).sum();
        let rhs = (&x * &op.adjoint(&y)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn render_examples() {
        let cell = CellSpec::new(3, 1).unwrap();
        let view = ViewSpec::new(3, 1).unwrap();
        let ones_f = BinaryLayer::filled(10, 15, 1, LayerRole::Front).unwrap();
        let ones_r = BinaryLayer::filled(10, 15, 1, LayerRole::Rear).unwrap();
        let zeros_r = BinaryLayer::filled(10, 15, 0, LayerRole::Rear).unwrap();
        for idx in 1..=9 {
            let r = render_view(&ones_f, &ones_r, &view, idx, &cell).unwrap();
            assert_eq!(r.dim(), (2, 3));
            assert!(r.iter().all(|&x| x == 1.0));
            let r = render_view(&ones_f, &zeros_r, &view, idx, &cell).unwrap();
            assert!(r.iter().all(|&x| x == 0.0));
        }
        assert!(render_view(&ones_f, &ones_r, &view, 10, &cell).is_err());
        let narrow = CellSpec::new(3, 0).unwrap();
        assert!(render_view(&ones_f, &ones_r, &view, 1, &narrow).is_err());
    }

    #[test]
    fn objective_examples() {
        let levels = Levels::default();
        let t = GrayTarget::new(array![[0.5]], levels).unwrap();
        let f = FactorPair::relaxed(vec![1.0], vec![1.0]).unwrap();
        let ones = WeightMask::ones((1, 1));
        assert_eq!(
            objective(&t, &ones, &array![[0.5]], &f, 0.0, 0.0).unwrap(),
            0.0
        );
        assert!(WeightMask::new(array![[0.0]]).is_err());
        let zero = WeightMask {
            weights: array![[0.0]],
        };
        assert_eq!(
            objective(&t, &zero, &array![[0.1]], &f, 0.0, 0.0).unwrap(),
            0.0
        );
        let two = WeightMask::new(array![[2.0]]).unwrap();
        let v = objective(&t, &two, &array![[0.3]], &f, 0.0, 0.0).unwrap();
        assert!((v - 0.08).abs() < 1e-15);
        let v = objective(&t, &ones, &array![[0.5]], &f, 0.5, 0.25).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert!(objective(&t, &ones, &array![[0.5, 0.5]], &f, 0.0, 0.0).is_err());
    }

    #[test]
    fn rms_examples() {
        let a = Array2::from_elem((3, 4), 0.5);
        assert_eq!(rms_error(&a, &a).unwrap(), 0.0);
        let b = Array2::from_elem((3, 4), 0.2);
        assert!((rms_error(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert!(rms_error(&a, &Array2::zeros((4, 3))).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((7, 5), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((7, 5), |_| rng.random::<f64>());
        let mut acc = 0.0;
        for i in 0..7 {
            for j in 0..5 {
                acc += (x[[i, j]] - y[[i, j]]).powi(2);
            }
        }
        assert!((rms_error(&x, &y).unwrap() - (acc / 35.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn target_levels() {
        let l = Levels::default();
        assert!(GrayTarget::new(array![[0.2, 0.5]], l).is_ok());
        assert!(GrayTarget::new(array![[0.3]], l).is_err());
        assert!(Levels::new(0.5, 0.2).is_err());
        let bits = array![[0u8, 1], [1, 1]];
        assert_eq!(GrayTarget::from_bits(&bits, l).bits(), bits);
    }

    #[test]
    fn decode_tie_resolves_to_one() {
        let l = Levels::default();
        let img = array![[0.35, 0.2], [0.5, 0.3499]];
        assert_eq!(decode_bits(&img, &l), array![[1u8, 0], [1, 0]]);
        assert_eq!(decode_bits(&array![[7.0 / 20.0]], &l), array![[1u8]]);
    }

    proptest! {
        #[test]
        fn downsample_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let op = DownsampleOp { scale: 3, margin: 1 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((10, 5), |_| rng.random::<f64>());
            let y = Array2::from_shape_fn((10, 5), |_| rng.random::<f64>());
            let lhs = downsample(&op, &(&x * a + &y * b)).unwrap();
            let rhs = downsample(&op, &x).unwrap() * a + downsample(&op, &y).unwrap() * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() < 1e-12);
            }
        }

        #[test]
        fn downsample_binary_in_unit_interval(seed in any::<u64>()) {
            let op = DownsampleOp { scale: 4, margin: 2 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((16, 24), |_| f64::from(rng.random::<bool>()));
            let d = downsample(&op, &x).unwrap();
            prop_assert!(d.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let c = downsample(&op, &Array2::from_elem((16, 8), 0.37)).unwrap();
            prop_assert!(c.iter().all(|&v| (v - 0.37).abs() < 1e-15));
        }

        #[test]
        fn superpose_commutes_with_shift(seed in any::<u64>(), u in -2i64..=2, v in -2i64..=2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = Array2::from_shape_fn((6, 7), |_| u8::from(rng.random::<bool>()));
            let front = layer(f.clone(), LayerRole::Front);
            let rear = BinaryLayer::filled(6, 7, 1, LayerRole::Rear).unwrap();
            let out = superpose(&front, &rear, (u, v), 2).unwrap();
            // shift first (roll the front), then superpose without shift
            let rolled = Array2::from_shape_fn((6, 7), |(r, c)| {
                f[(((r as i64 + v).rem_euclid(6)) as usize, ((c as i64 + u).rem_euclid(7)) as usize)]
            });
            let expected = superpose(&layer(rolled, LayerRole::Front), &rear, (0, 0), 2).unwrap();
            prop_assert_eq!(out, expected);
        }
    }
}
