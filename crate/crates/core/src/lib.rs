//! Design and simulation of two-layer parallax markers.
//!
//! Two binary layers printed on the faces of a glass wafer superpose into a
//! different low-resolution grayscale code for every discrete viewing
//! direction. This crate builds those layers with a weighted rank-1 binary
//! matrix factorization solved cell by cell, renders every view back through
//! the same image formation model, and maps layer shifts to physical viewing
//! angles through the wafer.
//!
//! Module map:
//!
//! * [`marker`] cell geometry, view grid, binary layers and factor vectors.
//! * [`optics`] refraction between viewing angle and layer offset.
//! * [`imaging`] superposition, block-average downsampling, objective, RMS.
//! * [`factorization`] relaxed WNMF and the sigmoid-annealed binarization.
//! * [`designer`] per-pixel combo solving, caching and layer aggregation.
//! * [`formats`], [`manifest`], [`cli`] file formats and the command surface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod designer;
mod error;
pub mod factorization;
pub mod formats;
pub mod imaging;
pub mod manifest;
pub mod marker;
pub mod optics;
pub mod patterns;

pub use error::{Error, Result};

pub use designer::{
    aggregate, combo_target, solve_all_combos, solve_combo, stamp_finder_patterns, CacheEntry,
    ComboCache, ComboRequest, Corner, PixelCombo, SolveReport, ViewTargetStack,
};
pub use factorization::{
    bmf_solve, sigmoid_relax, threshold_search, wnmf_init, wnmf_solve, wnmf_step, AnnealSchedule,
    BmfReport, ProductOperator, RankOneProblem, RemapMode, SolverConfig, WnmfConfig,
};
pub use imaging::{
    decode_bits, downsample, objective, render_view, rms_error, superpose, DownsampleOp,
    GrayTarget, Levels, WeightMask,
};
pub use marker::{
    layer_to_vector, periodic_pad, reshape_vector_to_layer, view_offset_table, BinaryLayer,
    CellSpec, FactorMode, FactorPair, LayerRole, ViewSpec,
};
pub use optics::{angle_for_offset, annotate_view_angles, offset_for_angle, GlassSpec};
