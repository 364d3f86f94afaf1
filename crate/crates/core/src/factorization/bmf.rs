//! Binarization stage: sigmoid-relaxed threshold search with annealed
//! steepness, then a hard threshold.

use serde::{Deserialize, Serialize};

use super::wnmf::{wnmf_solve, WnmfConfig, WnmfTrace};
use super::RankOneProblem;
use crate::marker::FactorPair;
use crate::{Error, Result};

const EXP_CLAMP: f64 = 500.0;
const GRAD_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

/// How each annealing round re-maps the factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemapMode {
    /// `w_k = sigmoid(a_k, w_{k-1} - t_k)`: every round squashes the output
    /// of the previous one.
    #[default]
    Compound,
    /// Every round squashes the relaxed WNMF factors with the new steepness.
    FromRelaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    /// Strictly increasing sigmoid steepness values.
    pub a_values: Vec<f64>,
    pub inner_max_iters: usize,
    pub learn_rate: f64,
    /// Initial `(w_thresh, h_thresh)`; the mean of each factor when unset.
    pub thresh_init: Option<(f64, f64)>,
    pub remap: RemapMode,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            a_values: vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            inner_max_iters: 200,
            learn_rate: 0.05,
            thresh_init: None,
            remap: RemapMode::Compound,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.a_values.is_empty()
            || self.a_values[0] <= 0.0
            || self.a_values.windows(2).any(|p| !(p[1] > p[0]))
        {
            return Err(Error::InvalidParameter(
                "a_values must be nonempty, positive and strictly increasing".into(),
            ));
        }
        if self.inner_max_iters == 0 || !(self.learn_rate > 0.0) {
            return Err(Error::InvalidParameter(
                "inner_max_iters must be >= 1 and learn_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a full binary solve needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub wnmf: WnmfConfig,
    pub anneal: AnnealSchedule,
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            wnmf: WnmfConfig::default(),
            anneal: AnnealSchedule::default(),
            restarts: 8,
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-EXP_CLAMP, EXP_CLAMP)).exp())
}

/// Element-wise `1 / (1 + exp(-a (v - thresh)))`.
pub fn sigmoid_relax(v: &[f64], a: f64, thresh: f64) -> Vec<f64> {
    v.iter().map(|&x| logistic(a * (x - thresh))).collect()
}

/// Masked squared residual with both factors replaced by their sigmoids.
pub fn threshold_loss(
    problem: &RankOneProblem,
    w: &[f64],
    h: &[f64],
    a: f64,
    thresh: (f64, f64),
) -> f64 {
    let p = sigmoid_relax(w, a, thresh.0);
    let q = sigmoid_relax(h, a, thresh.1);
    problem.residual_loss(&problem.render(&p, &q))
}

/// [`threshold_loss`] and its analytic gradient in `(w_thresh, h_thresh)`.
pub fn threshold_gradient(
    problem: &RankOneProblem,
    w: &[f64],
    h: &[f64],
    a: f64,
    thresh: (f64, f64),
) -> (f64, [f64; 2]) {
    let p = sigmoid_relax(w, a, thresh.0);
    let q = sigmoid_relax(h, a, thresh.1);
    let rendered = problem.render(&p, &q);
    let loss = problem.residual_loss(&rendered);
    // dL/dR_o = C_o^2 (R_o - V_o)
    let dr: Vec<f64> = rendered
        .iter()
        .zip(&problem.target)
        .zip(&problem.weights)
        .map(|((r, t), c)| c * c * (r - t))
        .collect();
    // dp_i / dt = -a p_i (1 - p_i)
    let gw: f64 = problem
        .op
        .contract_w(&dr, &q)
        .iter()
        .zip(&p)
        .map(|(g, pi)| -g * a * pi * (1.0 - pi))
        .sum();
    let gh: f64 = problem
        .op
        .contract_h(&dr, &p)
        .iter()
        .zip(&q)
        .map(|(g, qj)| -g * a * qj * (1.0 - qj))
        .sum();
    (loss, [gw, gh])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub w_thresh: f64,
    pub h_thresh: f64,
    pub loss: f64,
    pub iterations: usize,
}

/// Gradient descent on the two thresholds, halving the step whenever it
/// would increase the loss.
pub fn threshold_search(
    problem: &RankOneProblem,
    w: &[f64],
    h: &[f64],
    a: f64,
    sched: &AnnealSchedule,
    init: (f64, f64),
) -> Result<ThresholdResult> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigmoid steepness must be > 0, got {a}"
        )));
    }
    let mut t = init;
    let (mut loss, mut grad) = threshold_gradient(problem, w, h, a, t);
    let mut iterations = 0;
    while iterations < sched.inner_max_iters {
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                what: "threshold gradient",
            });
        }
        if grad[0].hypot(grad[1]) < GRAD_TOL {
            break;
        }
        iterations += 1;
        let mut lr = sched.learn_rate;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = (t.0 - lr * grad[0], t.1 - lr * grad[1]);
            let (l, g) = threshold_gradient(problem, w, h, a, cand);
            if l <= loss {
                t = cand;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(ThresholdResult {
        w_thresh: t.0,
        h_thresh: t.1,
        loss,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub a: f64,
    pub w_thresh: f64,
    pub h_thresh: f64,
    pub loss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmfReport {
    pub rms: f64,
    pub objective: f64,
    pub rendered: Vec<f64>,
    pub restart: usize,
    pub restart_rms: Vec<f64>,
    pub wnmf_trace: WnmfTrace,
    pub rounds: Vec<RoundDiagnostics>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Rescale `w` and `h` in opposite directions so their maxima agree. The
/// product `w h^T` is unchanged.
fn balance(w: &mut [f64], h: &mut [f64]) {
    let mw = w.iter().cloned().fold(0.0, f64::max);
    let mh = h.iter().cloned().fold(0.0, f64::max);
    if mw > 0.0 && mh > 0.0 {
        let c = (mh / mw).sqrt();
        w.iter_mut().for_each(|x| *x *= c);
        h.iter_mut().for_each(|x| *x /= c);
    }
}

fn float_to_binary(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| if x >= 0.5 { 1.0 } else { 0.0 })
        .collect()
}

fn solve_once(
    problem: &RankOneProblem,
    cfg: &WnmfConfig,
    sched: &AnnealSchedule,
) -> Result<(FactorPair, WnmfTrace, Vec<RoundDiagnostics>)> {
    let (relaxed, trace) = wnmf_solve(problem, cfg)?;
    let (mut w0, mut h0) = (relaxed.w, relaxed.h);
    balance(&mut w0, &mut h0);

    let mut w = w0.clone();
    let mut h = h0.clone();
    let mut init = sched.thresh_init.unwrap_or((mean(&w0), mean(&h0)));
    let mut rounds = Vec::with_capacity(sched.a_values.len());
    for &a in &sched.a_values {
        let (sw, sh) = match sched.remap {
            RemapMode::Compound => (&w, &h),
            RemapMode::FromRelaxed => (&w0, &h0),
        };
        let t = threshold_search(problem, sw, sh, a, sched, init)?;
        rounds.push(RoundDiagnostics {
            a,
            w_thresh: t.w_thresh,
            h_thresh: t.h_thresh,
            loss: t.loss,
            iterations: t.iterations,
        });
        let nw = sigmoid_relax(sw, a, t.w_thresh);
        let nh = sigmoid_relax(sh, a, t.h_thresh);
        w = nw;
        h = nh;
        init = match sched.remap {
            // the old threshold now sits at the sigmoid midpoint
            RemapMode::Compound => (0.5, 0.5),
            RemapMode::FromRelaxed => (t.w_thresh, t.h_thresh),
        };
    }
    // sigmoid(a, x - t) >= 1/2 exactly when x >= t
    let pair = FactorPair::binary(float_to_binary(&w), float_to_binary(&h))?;
    Ok((pair, trace, rounds))
}

/// WNMF followed by annealed binarization, repeated for `restarts` seeds
/// (`cfg.seed`, `cfg.seed + 1`, ...). Returns the lowest-RMS binary pair;
/// ties go to the earliest restart.
pub fn bmf_solve(
    problem: &RankOneProblem,
    cfg: &WnmfConfig,
    sched: &AnnealSchedule,
    restarts: usize,
) -> Result<(FactorPair, BmfReport)> {
    cfg.validate()?;
    sched.validate()?;
    let restarts = restarts.max(1);
    let mut best: Option<(FactorPair, BmfReport)> = None;
    let mut restart_rms = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let run_cfg = WnmfConfig {
            seed: cfg.seed.wrapping_add(r as u64),
            ..cfg.clone()
        };
        let (pair, trace, rounds) = solve_once(problem, &run_cfg, sched)?;
        let rms = problem.rms(&pair.w, &pair.h);
        restart_rms.push(rms);
        if best.as_ref().is_none_or(|(_, b)| rms < b.rms) {
            let rendered = problem.render(&pair.w, &pair.h);
            let objective = problem.objective(&pair.w, &pair.h, cfg.lambda1, cfg.lambda2);
            let report = BmfReport {
                rms,
                objective,
                rendered,
                restart: r,
                restart_rms: Vec::new(),
                wnmf_trace: trace,
                rounds,
            };
            best = Some((pair, report));
        }
    }
    let (pair, mut report) = best.expect("at least one restart");
    report.restart_rms = restart_rms;
    Ok((pair, report))
}
