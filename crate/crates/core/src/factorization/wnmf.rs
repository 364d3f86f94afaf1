//! Relaxed stage: weighted rank-1 NMF by multiplicative updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RankOneProblem;
use crate::marker::FactorPair;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WnmfConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    /// Relative objective decrease over `window` iterations that counts as
    /// converged.
    pub tol: f64,
    pub window: usize,
    /// Added to every denominator of the updates.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for WnmfConfig {
    fn default() -> Self {
        Self {
            lambda1: 1e-4,
            lambda2: 1e-4,
            max_iters: 2000,
            tol: 1e-7,
            window: 5,
            epsilon: 1e-12,
            seed: 0,
        }
    }
}

impl WnmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) || !(self.epsilon > 0.0) || self.window == 0 {
            return Err(Error::InvalidParameter(
                "WNMF needs max_iters >= 1, window >= 1, tol > 0 and epsilon > 0".into(),
            ));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidParameter(
                "regularizer weights must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Objective and RMS after initialization and after every step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WnmfTrace {
    pub objective: Vec<f64>,
    pub rms: Vec<f64>,
}

impl WnmfTrace {
    fn push(&mut self, problem: &RankOneProblem, f: &FactorPair, cfg: &WnmfConfig) {
        self.objective
            .push(problem.objective(&f.w, &f.h, cfg.lambda1, cfg.lambda2));
        self.rms.push(problem.rms(&f.w, &f.h));
    }

    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    // (k + 0.5) / 2^53 never hits either end point
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Factors drawn uniformly from the open interval (0.25, 0.75).
pub fn wnmf_init(m: usize, n: usize, seed: u64) -> FactorPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..m).map(|_| 0.25 + 0.5 * open_unit(&mut rng)).collect();
    let h = (0..n).map(|_| 0.25 + 0.5 * open_unit(&mut rng)).collect();
    FactorPair {
        w,
        h,
        mode: crate::marker::FactorMode::Relaxed,
    }
}

fn scaled_target(problem: &RankOneProblem, c2: &[f64]) -> Vec<f64> {
    problem.target.iter().zip(c2).map(|(v, c)| v * c).collect()
}

fn check_finite(v: &[f64], iteration: usize, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration, what })
    }
}

/// One multiplicative update of `w` followed by one of `h`, the latter using
/// the freshly updated `w`. Weights enter squared, which makes this the
/// exact majorize-minimize step for `1/2 ||C o (V - B(wh))||^2`.
pub fn wnmf_step(
    factors: &FactorPair,
    problem: &RankOneProblem,
    cfg: &WnmfConfig,
    iteration: usize,
) -> Result<FactorPair> {
    let op = &problem.op;
    if factors.w.len() != op.m() || factors.h.len() != op.n() {
        return Err(Error::Dimension(format!(
            "factors have lengths ({}, {}) but the operator expects ({}, {})",
            factors.w.len(),
            factors.h.len(),
            op.m(),
            op.n()
        )));
    }
    let c2: Vec<f64> = problem.weights.iter().map(|c| c * c).collect();
    let cv = scaled_target(problem, &c2);

    let mut w = factors.w.clone();
    let h = &factors.h;
    let cr: Vec<f64> = op
        .apply(&w, h)
        .iter()
        .zip(&c2)
        .map(|(r, c)| r * c)
        .collect();
    let num = op.contract_w(&cv, h);
    let den = op.contract_w(&cr, h);
    for i in 0..w.len() {
        w[i] *= num[i] / (den[i] + 2.0 * cfg.lambda1 * w[i] + cfg.epsilon);
    }
    check_finite(&w, iteration, "w update")?;

    let mut h = factors.h.clone();
    let cr: Vec<f64> = op
        .apply(&w, &h)
        .iter()
        .zip(&c2)
        .map(|(r, c)| r * c)
        .collect();
    let num = op.contract_h(&cv, &w);
    let den = op.contract_h(&cr, &w);
    for j in 0..h.len() {
        h[j] *= num[j] / (den[j] + 2.0 * cfg.lambda2 * h[j] + cfg.epsilon);
    }
    check_finite(&h, iteration, "h update")?;

    Ok(FactorPair {
        w,
        h,
        mode: crate::marker::FactorMode::Relaxed,
    })
}

/// Iterate [`wnmf_step`] from `init` until the objective stalls.
pub fn wnmf_solve_from(
    problem: &RankOneProblem,
    cfg: &WnmfConfig,
    init: FactorPair,
) -> Result<(FactorPair, WnmfTrace)> {
    cfg.validate()?;
    let mut trace = WnmfTrace::default();
    let mut f = init;
    trace.push(problem, &f, cfg);
    for k in 0..cfg.max_iters {
        f = wnmf_step(&f, problem, cfg, k)?;
        trace.push(problem, &f, cfg);
        let obj = &trace.objective;
        let last = obj[obj.len() - 1];
        if last == 0.0 {
            break;
        }
        if obj.len() > cfg.window {
            let before = obj[obj.len() - 1 - cfg.window];
            if (before - last) / before.abs().max(f64::MIN_POSITIVE) < cfg.tol {
                break;
            }
        }
    }
    Ok((f, trace))
}

pub fn wnmf_solve(problem: &RankOneProblem, cfg: &WnmfConfig) -> Result<(FactorPair, WnmfTrace)> {
    let init = wnmf_init(problem.op.m(), problem.op.n(), cfg.seed);
    wnmf_solve_from(problem, cfg, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::ProductOperator;
    use crate::marker::CellSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn no_reg() -> WnmfConfig {
        WnmfConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..WnmfConfig::default()
        }
    }

    #[test]
    fn init_contract() {
        let a = wnmf_init(7, 5, 42);
        assert_eq!(a, wnmf_init(7, 5, 42));
        assert!(a.w.iter().chain(&a.h).all(|&x| x > 0.25 && x < 0.75));
        for seed in 0..100u64 {
            assert_ne!(wnmf_init(3, 3, seed), wnmf_init(3, 3, seed + 1));
        }
    }

    #[test]
    fn exact_fit_is_fixed_point() {
        let op = ProductOperator::identity(2, 2).unwrap();
        let w = vec![1.0, 2.0];
        let h = vec![1.0, 0.5];
        let target = op.apply(&w, &h);
        let p = RankOneProblem::with_unit_weights(op, target).unwrap();
        let f = FactorPair::relaxed(w.clone(), h.clone()).unwrap();
        let g = wnmf_step(&f, &p, &no_reg(), 0).unwrap();
        for (a, b) in g.w.iter().chain(&g.h).zip(w.iter().chain(&h)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_rank_one_target_recovered() {
        // V = outer([1,2],[3,4]) / 8 lies in [0, 1]
        let op = ProductOperator::identity(2, 2).unwrap();
        let target: Vec<f64> = [3.0, 4.0, 6.0, 8.0].iter().map(|x| x / 8.0).collect();
        let p = RankOneProblem::with_unit_weights(op, target).unwrap();
        let cfg = WnmfConfig {
            max_iters: 500,
            tol: 1e-300,
            ..no_reg()
        };
        let (f, trace) = wnmf_solve(&p, &cfg).unwrap();
        assert!(p.rms(&f.w, &f.h) < 1e-6, "{}", p.rms(&f.w, &f.h));
        assert!(trace.len() <= 501);
    }

    #[test]
    fn heavy_regularizer_collapses_w() {
        let op = ProductOperator::identity(2, 2).unwrap();
        let p = RankOneProblem::with_unit_weights(op, vec![0.5; 4]).unwrap();
        let cfg = WnmfConfig {
            lambda1: 1e6,
            ..WnmfConfig::default()
        };
        let mut f = wnmf_init(2, 2, 1);
        let mut prev = f.w.iter().sum::<f64>();
        for k in 0..10 {
            f = wnmf_step(&f, &p, &cfg, k).unwrap();
            let s = f.w.iter().sum::<f64>();
            assert!(s < prev);
            prev = s;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn max_iters_one_gives_two_trace_points() {
        let op = ProductOperator::identity(2, 2).unwrap();
        let p = RankOneProblem::with_unit_weights(op, vec![0.2; 4]).unwrap();
        let cfg = WnmfConfig {
            max_iters: 1,
            ..WnmfConfig::default()
        };
        let (_, trace) = wnmf_solve(&p, &cfg).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.rms.len(), 2);
    }

    #[test]
    fn representable_binary_target_fits() {
        let cell = CellSpec::new(2, 1).unwrap();
        let shifts = [(0, 0), (1, 0), (0, 1)];
        let op = ProductOperator::cell_views(&cell, &shifts).unwrap();
        let w = [1.0, 1.0, 0.0, 1.0];
        let h = [1.0, 1.0, 1.0, 0.0];
        let target = op.apply(&w, &h);
        let p = RankOneProblem::with_unit_weights(op, target).unwrap();
        let cfg = WnmfConfig {
            tol: 1e-12,
            max_iters: 20000,
            ..no_reg()
        };
        let (f, trace) = wnmf_solve(&p, &cfg).unwrap();
        let last = *trace.objective.last().unwrap();
        assert!(last < 1e-10, "{last}");
        assert!(f.w.iter().chain(&f.h).all(|&x| x >= 0.0));
    }

    #[test]
    fn mismatched_factor_lengths() {
        let op = ProductOperator::identity(2, 2).unwrap();
        let p = RankOneProblem::with_unit_weights(op, vec![0.2; 4]).unwrap();
        let f = wnmf_init(3, 2, 0);
        assert!(wnmf_step(&f, &p, &no_reg(), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn steps_stay_nonnegative_and_descend(seed in any::<u64>(), scale in 2usize..5, lam in 0.0f64..0.01) {
            let cell = CellSpec::new(scale, 1).unwrap();
            let shifts: Vec<_> = (-1..=1).flat_map(|v| (-1..=1).map(move |u| (u, v))).collect();
            let op = ProductOperator::cell_views(&cell, &shifts).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = (0..9).map(|_| if rng.random::<bool>() { 0.5 } else { 0.2 }).collect();
            let weights = (0..9).map(|_| rng.random_range(0.1..2.0)).collect();
            let p = RankOneProblem::new(op, target, weights).unwrap();
            let cfg = WnmfConfig { lambda1: lam, lambda2: lam, seed, ..WnmfConfig::default() };
            let mut f = wnmf_init(scale * scale, scale * scale, seed);
            let mut prev = p.objective(&f.w, &f.h, lam, lam);
            for k in 0..50 {
                f = wnmf_step(&f, &p, &cfg, k).unwrap();
                prop_assert!(f.w.iter().chain(&f.h).all(|&x| x >= 0.0));
                let obj = p.objective(&f.w, &f.h, lam, lam);
                prop_assert!(obj <= prev + 1e-9, "{} > {}", obj, prev);
                prev = obj;
            }
        }
    }
}
