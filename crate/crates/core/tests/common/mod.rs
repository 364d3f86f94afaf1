//! Independent exhaustive oracle for single-cell designs.
//!
//! Enumerates every binary front/rear window pair of one cell as bitmasks and
//! evaluates each view by rolling the front mask and counting overlaps. It
//! shares no code with the solver's operator.

#![allow(dead_code)]

use std::collections::HashSet;

/// Front mask rolled so that bit `r*s + c` holds front pixel
/// `((r + v) mod s, (c + u) mod s)`.
pub fn roll_mask(front: u64, s: usize, u: i64, v: i64) -> u64 {
    let mut out = 0u64;
    for r in 0..s {
        for c in 0..s {
            let fr = (r as i64 + v).rem_euclid(s as i64) as usize;
            let fc = (c as i64 + u).rem_euclid(s as i64) as usize;
            if front >> (fr * s + fc) & 1 == 1 {
                out |= 1 << (r * s + c);
            }
        }
    }
    out
}

/// All achievable per-view overlap-count vectors of a `scale x scale` window.
pub struct CellOracle {
    pub scale: usize,
    pub shifts: Vec<(i64, i64)>,
    pub achievable: Vec<Vec<u32>>,
}

impl CellOracle {
    pub fn enumerate(scale: usize, shifts: &[(i64, i64)]) -> Self {
        let bits = scale * scale;
        assert!(bits <= 16, "exhaustive enumeration limited to 4x4 windows");
        let all = 1u64 << bits;
        let achievable = if shifts.len() == 1 {
            // one view: only the overlap count matters, but still visit every pair
            let mut seen = vec![false; bits + 1];
            let (u, v) = shifts[0];
            for f in 0..all {
                let rf = roll_mask(f, scale, u, v);
                for r in 0..all {
                    seen[(rf & r).count_ones() as usize] = true;
                }
            }
            seen.iter()
                .enumerate()
                .filter(|(_, &s)| s)
                .map(|(c, _)| vec![c as u32])
                .collect()
        } else {
            let mut set = HashSet::new();
            let mut rolled = vec![0u64; shifts.len()];
            for f in 0..all {
                for (k, &(u, v)) in shifts.iter().enumerate() {
                    rolled[k] = roll_mask(f, scale, u, v);
                }
                for r in 0..all {
                    set.insert(
                        rolled
                            .iter()
                            .map(|m| (m & r).count_ones())
                            .collect::<Vec<u32>>(),
                    );
                }
            }
            let mut v: Vec<_> = set.into_iter().collect();
            v.sort();
            v
        };
        Self {
            scale,
            shifts: shifts.to_vec(),
            achievable,
        }
    }

    /// Minimum unweighted RMS over all binary pairs, with the rendered values.
    pub fn optimum(&self, targets: &[f64]) -> (f64, Vec<f64>) {
        let area = (self.scale * self.scale) as f64;
        let mut best = (f64::INFINITY, Vec::new());
        for counts in &self.achievable {
            let vals: Vec<f64> = counts.iter().map(|&c| c as f64 / area).collect();
            let sq: f64 = vals
                .iter()
                .zip(targets)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let rms = (sq / targets.len() as f64).sqrt();
            if rms < best.0 {
                best = (rms, vals);
            }
        }
        best
    }
}

pub fn grid_shifts(grid_k: usize) -> Vec<(i64, i64)> {
    let h = (grid_k / 2) as i64;
    (-h..=h)
        .flat_map(|v| (-h..=h).map(move |u| (u, v)))
        .collect()
}

pub fn combo_targets(combo: u32, views: usize, low: f64, high: f64) -> Vec<f64> {
    (0..views)
        .map(|v| if combo >> v & 1 == 1 { high } else { low })
        .collect()
}
