//! Inverse problem: fit binary front/rear factors so that the downsampled
//! superpositions match the targets.
//!
//! [`wnmf_solve`] finds nonnegative relaxed factors with multiplicative
//! updates; [`bmf_solve`] turns them into binary ones by searching sigmoid
//! thresholds under an increasing steepness schedule.

mod bmf;
mod operator;
mod wnmf;

pub use bmf::{
    bmf_solve, sigmoid_relax, threshold_gradient, threshold_loss, threshold_search, AnnealSchedule,
    BmfReport, RemapMode, RoundDiagnostics, SolverConfig, ThresholdResult,
};
pub use operator::{ProductOperator, RankOneProblem};
pub use wnmf::{wnmf_init, wnmf_solve, wnmf_solve_from, wnmf_step, WnmfConfig, WnmfTrace};
