//! Shared helpers for the integration suites: seeded random admissible
//! problem instances in one and two dimensions.

use std::collections::BTreeMap;
use std::sync::Arc;

use ergodic_hjb::discretize::Grid;
use ergodic_hjb::problem::{builtin_problem, ControlProblem, ControlSet, GrowthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random admissible instance: problem plus a matching grid.
pub struct RandomInstance {
    pub problem: ControlProblem,
    pub grid: Grid,
}

/// Random 1-D instance with `n_controls` controls and `n_nodes` grid nodes.
///
/// Coefficients are affine-in-state with a confining linear drift part and
/// strictly positive diffusion, so every assembled generator is admissible
/// and irreducible by construction.
pub fn random_instance_1d(seed: u64, n_controls: usize, n_nodes: usize) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = rng.gen_range(1.5..3.0);
    // Distinct scalar controls in [-1, 1].
    let controls = ControlSet::linspace(-1.0, 1.0, n_controls).unwrap();

    let a0: f64 = rng.gen_range(0.5..2.0);
    let a1 = rng.gen_range(-0.3..0.3); // control modulation, keeps a > 0
    let drift0: f64 = rng.gen_range(-0.8..0.8);
    let drift_x = rng.gen_range(0.5..1.5); // confining slope
    let drift_alpha = rng.gen_range(0.0..1.0);
    let fx = rng.gen_range(0.2..2.0);
    let fa = rng.gen_range(0.0..2.0);
    let cross: f64 = rng.gen_range(-1.0..1.0);

    let growth = GrowthParams::new(
        (a0 - 0.3f64).max(0.1),
        a0 + 0.3,
        10.0 + drift0.abs() * 10.0,
        drift_x * 0.5,
        1.0,
        fx + fa + cross.abs() + 1.0,
        2.0,
        drift0.abs() + drift_x * 10.0 + drift_alpha + 1.0,
        1.0,
    )
    .unwrap();
    let problem = ControlProblem::new(
        format!("random1d_{seed}"),
        1,
        controls,
        growth,
        Arc::new(move |_x: &[f64], alpha: &[f64]| vec![a0 + a1 * alpha[0]]),
        Arc::new(move |x: &[f64], alpha: &[f64]| {
            vec![drift0 - drift_x * x[0] + drift_alpha * alpha[0]]
        }),
        Arc::new(move |x: &[f64], alpha: &[f64]| {
            fx * x[0] * x[0] + fa * alpha[0] * alpha[0] + cross * x[0] * alpha[0]
        }),
    )
    .unwrap();
    let grid = Grid::new(1, radius, n_nodes).unwrap();
    RandomInstance { problem, grid }
}

/// Random 2-D instance with a diffusion cross term kept inside the
/// diagonal-dominance budget.
pub fn random_instance_2d(seed: u64, n_controls: usize, n_per_axis: usize) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2d2d);
    let radius = rng.gen_range(1.5..2.5);
    let controls = ControlSet::linspace(-1.0, 1.0, n_controls).unwrap();

    let a11: f64 = rng.gen_range(0.6..1.6);
    let a22: f64 = rng.gen_range(0.6..1.6);
    // Equal spacings per axis, so dominance needs |a12| <= min(a11, a22).
    let a12 = rng.gen_range(-0.85..0.85) * a11.min(a22);
    let d1 = rng.gen_range(0.6..1.4);
    let d2 = rng.gen_range(0.6..1.4);
    let drift_alpha = rng.gen_range(0.0..0.8);
    let fa = rng.gen_range(0.0..1.5);

    let growth = GrowthParams::new(
        0.05,
        a11 + a22,
        5.0,
        0.3,
        1.0,
        3.0 + fa,
        2.0,
        (d1 + d2) * 10.0 + drift_alpha + 1.0,
        1.0,
    )
    .unwrap();
    let problem = ControlProblem::new(
        format!("random2d_{seed}"),
        2,
        controls,
        growth,
        Arc::new(move |_x: &[f64], _a: &[f64]| vec![a11, a12, a12, a22]),
        Arc::new(move |x: &[f64], alpha: &[f64]| {
            vec![-d1 * x[0] + drift_alpha * alpha[0], -d2 * x[1]]
        }),
        Arc::new(move |x: &[f64], alpha: &[f64]| {
            x[0] * x[0] + x[1] * x[1] + fa * alpha[0] * alpha[0]
        }),
    )
    .unwrap();
    let grid = Grid::new(2, radius, n_per_axis).unwrap();
    RandomInstance { problem, grid }
}

/// The four shipped benchmarks at their reference grids.
pub fn benchmark_suite() -> Vec<(ControlProblem, Grid)> {
    let no_params = BTreeMap::new();
    let lq_params = BTreeMap::from([("M".to_string(), 4.0), ("n_ctrl".to_string(), 81.0)]);
    vec![
        (
            builtin_problem("ou1d", &no_params).unwrap(),
            Grid::new(1, 6.0, 241).unwrap(),
        ),
        (
            builtin_problem("lq1d", &lq_params).unwrap(),
            Grid::new(1, 6.0, 241).unwrap(),
        ),
        (
            builtin_problem("doublewell1d", &no_params).unwrap(),
            Grid::new(1, 3.0, 121).unwrap(),
        ),
        (
            builtin_problem("ou2d", &no_params).unwrap(),
            Grid::new(2, 3.0, 31).unwrap(),
        ),
    ]
}
