mod common;

use common::{combo_targets, grid_shifts, roll_mask, CellOracle};
use qrtag::designer::{cell_problem, solve_combo, PixelCombo};
use qrtag::factorization::{
    bmf_solve, AnnealSchedule, ProductOperator, RankOneProblem, WnmfConfig,
};
use qrtag::imaging::Levels;
use qrtag::marker::{CellSpec, ViewSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mask_to_vec(mask: u64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (mask >> i & 1) as f64).collect()
}

#[test]
fn operator_agrees_with_mask_rendering() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for scale in 2..=5 {
        let shifts = grid_shifts(3);
        let cell = CellSpec::new(scale, 1).unwrap();
        let op = ProductOperator::cell_views(&cell, &shifts).unwrap();
        let n = scale * scale;
        for _ in 0..50 {
            let f: u64 = rng.random::<u64>() & ((1 << n) - 1);
            let r: u64 = rng.random::<u64>() & ((1 << n) - 1);
            let got = op.apply(&mask_to_vec(f, n), &mask_to_vec(r, n));
            for (k, &(u, v)) in shifts.iter().enumerate() {
                let want = (roll_mask(f, scale, u, v) & r).count_ones() as f64 / n as f64;
                assert!((got[k] - want).abs() < 1e-12, "scale {scale} view {k}");
            }
        }
    }
}

#[test]
fn single_view_small_cells_reach_the_optimum() {
    for scale in 2..=3 {
        let oracle = CellOracle::enumerate(scale, &[(0, 0)]);
        let cell = CellSpec::new(scale, 0).unwrap();
        let op = ProductOperator::cell_views(&cell, &[(0, 0)]).unwrap();
        for level in [0.2, 0.5] {
            let (opt, _) = oracle.optimum(&[level]);
            let p = RankOneProblem::with_unit_weights(op.clone(), vec![level]).unwrap();
            let (pair, r) =
                bmf_solve(&p, &WnmfConfig::default(), &AnnealSchedule::default(), 8).unwrap();
            assert!(pair.is_binary());
            assert!(
                r.rms <= opt + 1e-9,
                "scale {scale} level {level}: {} vs {opt}",
                r.rms
            );
        }
    }
}

#[test]
fn solver_never_beats_the_oracle() {
    // any binary design must render to an achievable count vector
    let scale = 3;
    let shifts = grid_shifts(3);
    let oracle = CellOracle::enumerate(scale, &shifts);
    let cell = CellSpec::new(scale, 1).unwrap();
    let view = ViewSpec::new(3, 1).unwrap();
    let levels = Levels::default();
    let cfg = qrtag::factorization::SolverConfig {
        restarts: 2,
        ..Default::default()
    };
    for bits in [0u32, 0b1_0000, 0b1_1111_1111, 0b1_0101_0101, 0b0_1011_0010] {
        let combo = PixelCombo::new(bits, 9).unwrap();
        let (entry, _) = solve_combo(combo, &cell, &view, levels, &cfg).unwrap();
        let counts: Vec<u32> = entry
            .values
            .iter()
            .map(|v| (v * 9.0).round() as u32)
            .collect();
        assert!(oracle.achievable.binary_search(&counts).is_ok(), "{combo}");
        let (opt, _) = oracle.optimum(&combo_targets(bits, 9, levels.low, levels.high));
        assert!(entry.rms >= opt - 1e-12, "{combo}: {} < {opt}", entry.rms);
    }
}

#[test]
fn mirrored_combos_have_equal_optima() {
    // reflecting the code grid left-right maps designs to designs
    let scale = 3;
    let shifts = grid_shifts(3);
    let oracle = CellOracle::enumerate(scale, &shifts);
    let mirror = |bits: u32| -> u32 {
        (0..9).fold(0, |acc, i| {
            let (r, c) = (i / 3, i % 3);
            acc | (bits >> i & 1) << (r * 3 + (2 - c))
        })
    };
    for bits in [
        0b0_0000_0110u32,
        0b1_0010_0011,
        0b0_1100_1001,
        0b1_1111_0000,
    ] {
        let a = oracle.optimum(&combo_targets(bits, 9, 0.2, 0.5)).0;
        let b = oracle.optimum(&combo_targets(mirror(bits), 9, 0.2, 0.5)).0;
        assert!((a - b).abs() < 1e-12, "{bits:09b}: {a} vs {b}");
    }
}

#[test]
fn cell_problem_has_one_output_per_view() {
    let cell = CellSpec::new(4, 1).unwrap();
    let view = ViewSpec::new(3, 1).unwrap();
    let p = cell_problem(
        PixelCombo::new(0b1_0000, 9).unwrap(),
        &cell,
        &view,
        Levels::default(),
    )
    .unwrap();
    assert_eq!(p.target.len(), 9);
    assert_eq!(p.target[4], 0.5);
    assert!(p
        .target
        .iter()
        .enumerate()
        .all(|(i, &t)| i == 4 || t == 0.2));
}
