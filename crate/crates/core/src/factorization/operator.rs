use crate::marker::CellSpec;
use crate::{Error, Result};

/// Sparse linear map `B` from a rank-1 product `w h^T` (`m x n`) to a set of
/// low-resolution outputs. Output `o` is the mean of `w[i] * h[j]` over its
/// index group `S_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOperator {
    m: usize,
    n: usize,
    pairs: Vec<(u32, u32)>,
    starts: Vec<usize>,
    inv_len: Vec<f64>,
}

impl ProductOperator {
    pub fn new(m: usize, n: usize, groups: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        if m == 0 || n == 0 || groups.is_empty() {
            return Err(Error::Dimension(
                "operator needs m, n >= 1 and an output".into(),
            ));
        }
        let mut pairs = Vec::new();
        let mut starts = vec![0];
        let mut inv_len = Vec::with_capacity(groups.len());
        for (o, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Dimension(format!(
                    "output {o} has an empty index group"
                )));
            }
            for &(i, j) in g {
                if i >= m || j >= n {
                    return Err(Error::Dimension(format!(
                        "output {o} references ({i}, {j}) outside {m}x{n}"
                    )));
                }
                pairs.push((i as u32, j as u32));
            }
            starts.push(pairs.len());
            inv_len.push(1.0 / g.len() as f64);
        }
        Ok(Self {
            m,
            n,
            pairs,
            starts,
            inv_len,
        })
    }

    /// Every entry of `w h^T` is its own output, row-major.
    pub fn identity(m: usize, n: usize) -> Result<Self> {
        let groups = (0..m)
            .flat_map(|i| (0..n).map(move |j| vec![(i, j)]))
            .collect();
        Self::new(m, n, groups)
    }

    /// One output per view shift for a single cell. `w` is the front window
    /// and `h` the rear window (row-major, `scale^2` each); the front margin
    /// is the periodic copy of its window, so a shift `(u, v)` reads
    /// `w[(r + v) mod s][(c + u) mod s]` against `h[r][c]`.
    pub fn cell_views(cell: &CellSpec, shifts: &[(i64, i64)]) -> Result<Self> {
        let s = cell.scale;
        let groups = shifts
            .iter()
            .map(|&(u, v)| {
                if u.unsigned_abs() as usize > cell.margin
                    || v.unsigned_abs() as usize > cell.margin
                {
                    return Err(Error::ShiftExceedsMargin {
                        u,
                        v,
                        margin: cell.margin,
                    });
                }
                let si = s as i64;
                Ok((0..s)
                    .flat_map(|r| {
                        (0..s).map(move |c| {
                            let fr = (r as i64 + v).rem_euclid(si) as usize;
                            let fc = (c as i64 + u).rem_euclid(si) as usize;
                            (fr * s + fc, r * s + c)
                        })
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(s * s, s * s, groups)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn outputs(&self) -> usize {
        self.inv_len.len()
    }

    fn group(&self, o: usize) -> &[(u32, u32)] {
        &self.pairs[self.starts[o]..self.starts[o + 1]]
    }

    /// `B(w h^T)`.
    pub fn apply(&self, w: &[f64], h: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|o| {
                let s: f64 = self
                    .group(o)
                    .iter()
                    .map(|&(i, j)| w[i as usize] * h[j as usize])
                    .sum();
                s * self.inv_len[o]
            })
            .collect()
    }

    /// `B^T(y) h^T`, a vector of length `m`.
    pub fn contract_w(&self, y: &[f64], h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (o, &yo) in y.iter().enumerate() {
            let coef = yo * self.inv_len[o];
            if coef == 0.0 {
                continue;
            }
            for &(i, j) in self.group(o) {
                out[i as usize] += coef * h[j as usize];
            }
        }
        out
    }

    /// `w^T B^T(y)`, a vector of length `n`.
    pub fn contract_h(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (o, &yo) in y.iter().enumerate() {
            let coef = yo * self.inv_len[o];
            if coef == 0.0 {
                continue;
            }
            for &(i, j) in self.group(o) {
                out[j as usize] += coef * w[i as usize];
            }
        }
        out
    }
}

/// A weighted rank-1 fitting problem: find `w, h` with `B(w h^T) ~ target`
/// under weights `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneProblem {
    pub op: ProductOperator,
    pub target: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RankOneProblem {
    pub fn new(op: ProductOperator, target: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if target.len() != op.outputs() || weights.len() != op.outputs() {
            return Err(Error::Dimension(format!(
                "operator has {} outputs but target has {} and weights {}",
                op.outputs(),
                target.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&c| !(c >= 0.0) || !c.is_finite())
            || weights.iter().all(|&c| c == 0.0)
        {
            return Err(Error::InvalidParameter(
                "weights must be finite, >= 0 and not all zero".into(),
            ));
        }
        if target.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("target must be finite".into()));
        }
        Ok(Self {
            op,
            target,
            weights,
        })
    }

    pub fn with_unit_weights(op: ProductOperator, target: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; target.len()];
        Self::new(op, target, weights)
    }

    pub fn render(&self, w: &[f64], h: &[f64]) -> Vec<f64> {
        self.op.apply(w, h)
    }

    /// `1/2 sum_o (C_o (V_o - B_o))^2`.
    pub fn residual_loss(&self, rendered: &[f64]) -> f64 {
        0.5 * rendered
            .iter()
            .zip(&self.target)
            .zip(&self.weights)
            .map(|((r, t), c)| (c * (t - r)).powi(2))
            .sum::<f64>()
    }

    pub fn objective(&self, w: &[f64], h: &[f64], lambda1: f64, lambda2: f64) -> f64 {
        let nw: f64 = w.iter().map(|x| x * x).sum();
        let nh: f64 = h.iter().map(|x| x * x).sum();
        self.residual_loss(&self.render(w, h)) + lambda1 * nw + lambda2 * nh
    }

    /// Unweighted RMS between target and rendering.
    pub fn rms(&self, w: &[f64], h: &[f64]) -> f64 {
        let r = self.render(w, h);
        let sq: f64 = r
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (sq / r.len() as f64).sqrt()
    }
}
