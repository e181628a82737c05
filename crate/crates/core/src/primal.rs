//! The measure-side (primal) solver: average-cost objective, ergodic
//! Poisson solve for the corrector, exchange-property policy improvement,
//! full policy iteration, and the brute-force enumeration oracle.
//!
//! For a fixed policy the admissible measure is unique (the invariant
//! measure of that policy's generator), so minimizing `<f, mu_policy>` over
//! policies is the whole primal problem. Policy iteration alternates the
//! measure/corrector solve with the pointwise Bellman improvement; on an
//! irreducible finite chain the average cost is nonincreasing and the
//! policy space is finite, so a fixpoint is reached.

use std::io::Write;

use crate::discretize::{
    assemble_control_generators, assemble_generator, policy_generator_from_controls,
    GeneratorMatrix, Grid, Policy,
};
use crate::fpk::{stationary_measure, InvariantMeasure};
use crate::linalg::BandedMatrix;
use crate::problem::{cost_table, ControlProblem};
use crate::util::{format_f64, neumaier_dot, norm_inf};
use crate::{Error, Result};

/// Stationarity tolerance used for every internal Fokker-Planck solve; kept
/// tight so complementary-slackness certificates inherit it.
pub const FPK_TOL: f64 = 1e-12;

/// Relative compatibility tolerance for the Poisson right-hand side.
const COMPAT_TOL: f64 = 1e-8;

/// Solution of the discrete ergodic problem.
#[derive(Debug, Clone)]
pub struct ErgodicSolution {
    /// Ergodic constant, always computed as `<f, mu>`.
    pub c: f64,
    /// Corrector, anchored so `u[anchor_index] = 0` exactly.
    pub u: Vec<f64>,
    /// Optimal (final) policy.
    pub policy: Policy,
    /// Invariant measure of the final policy.
    pub mu: InvariantMeasure,
    pub anchor_index: usize,
    /// Number of policy evaluations performed.
    pub iterations: usize,
    /// Average cost after each evaluation; nonincreasing.
    pub history: Vec<f64>,
    /// `max |G u - (f - c)|` for the final policy.
    pub poisson_residual: f64,
    /// `max |min_k { -(G_k u)_i + f_ik } - c|` over nodes.
    pub hjb_residual_sup: f64,
}

impl ErgodicSolution {
    /// CSV export: node coordinates, corrector, chosen control coordinates,
    /// invariant-measure weight.
    pub fn write_csv(&self, problem: &ControlProblem, w: &mut dyn Write) -> std::io::Result<()> {
        let grid = &self.mu.grid;
        let m = grid.dim();
        let kdim = problem.controls().control_dim();
        for ax in 0..m {
            write!(w, "x{ax},")?;
        }
        write!(w, "u,")?;
        for ax in 0..kdim {
            write!(w, "alpha{ax},")?;
        }
        writeln!(w, "mu")?;
        let mut x = vec![0.0; m];
        for i in 0..grid.n_nodes() {
            grid.coords_into(i, &mut x);
            for v in &x {
                write!(w, "{},", format_f64(*v))?;
            }
            write!(w, "{},", format_f64(self.u[i]))?;
            for v in problem.controls().point(self.policy.get(i)) {
                write!(w, "{},", format_f64(*v))?;
            }
            writeln!(w, "{}", format_f64(self.mu.weights()[i]))?;
        }
        Ok(())
    }
}

fn policy_cost(costs: &[f64], n_ctrl: usize, policy: &Policy) -> Vec<f64> {
    (0..policy.len())
        .map(|i| costs[i * n_ctrl + policy.get(i)])
        .collect()
}

/// Average cost of one policy: solves the stationary Fokker-Planck equation
/// for the policy's generator and returns `c = <f(., policy(.)), mu>` with
/// the measure.
pub fn objective(
    problem: &ControlProblem,
    grid: &Grid,
    policy: &Policy,
) -> Result<(f64, InvariantMeasure)> {
    let g = assemble_generator(problem, grid, policy)?;
    let mu = stationary_measure(&g, FPK_TOL)?;
    let costs = cost_table(problem, grid)?;
    let f_pol = policy_cost(&costs, problem.controls().len(), policy);
    let c = neumaier_dot(&f_pol, mu.weights());
    Ok((c, mu))
}

/// Solves the ergodic Poisson equation `G u = f - c` with the anchored
/// normalization `u[anchor] = 0`.
///
/// The system is singular with kernel spanned by constants; replacing the
/// anchor equation makes it uniquely solvable, and the discrete Fredholm
/// condition `<f - c, mu> = 0` (which holds up to solver residual because
/// `c` is computed from `mu`) guarantees the full system is still satisfied.
pub fn solve_poisson(
    g_policy: &GeneratorMatrix,
    f_policy: &[f64],
    c: f64,
    mu: &InvariantMeasure,
    anchor: usize,
) -> Result<Vec<f64>> {
    let n = g_policy.n_nodes();
    if f_policy.len() != n || mu.len() != n {
        return Err(Error::InvalidArgument(
            "cost vector or measure does not match generator".into(),
        ));
    }
    if anchor >= n {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} out of range for {n} nodes"
        )));
    }
    let rhs: Vec<f64> = f_policy.iter().map(|f| f - c).collect();
    let imbalance = neumaier_dot(&rhs, mu.weights()).abs();
    let tol = COMPAT_TOL * (1.0 + norm_inf(&rhs));
    if imbalance > tol {
        return Err(Error::IncompatibleRhs { imbalance, tol });
    }
    let u = anchored_solve(g_policy, &rhs, anchor)?;
    Ok(u)
}

/// Direct banded solve of `G u = rhs` with row `anchor` replaced by
/// `u[anchor] = 0`, plus iterative refinement; the returned vector is
/// shifted so the anchor entry is exactly zero.
fn anchored_solve(g: &GeneratorMatrix, rhs: &[f64], anchor: usize) -> Result<Vec<f64>> {
    let csr = &g.csr;
    let n = csr.n;
    let bw = csr.bandwidth();
    let mut banded = BandedMatrix::new(n, bw, bw);
    for i in 0..n {
        if i == anchor {
            banded.set(i, i, 1.0);
            continue;
        }
        let (cols, vals) = csr.row(i);
        for (c, v) in cols.iter().zip(vals) {
            banded.set(i, *c, *v);
        }
    }
    let lu = banded
        .factorize()
        .map_err(|e| Error::Numerical(format!("anchored Poisson system singular ({e})")))?;
    let mut b: Vec<f64> = rhs.to_vec();
    b[anchor] = 0.0;
    let mut u = b.clone();
    lu.solve(&mut u);
    // Refinement against the anchored system.
    let mut gu = vec![0.0; n];
    for _ in 0..3 {
        csr.apply(&u, &mut gu);
        gu[anchor] = u[anchor];
        let mut res: Vec<f64> = b.iter().zip(&gu).map(|(r, a)| r - a).collect();
        if norm_inf(&res) <= 1e-14 * (1.0 + norm_inf(&b)) {
            break;
        }
        lu.solve(&mut res);
        for (ui, d) in u.iter_mut().zip(&res) {
            *ui += d;
        }
    }
    let shift = u[anchor];
    u.iter_mut().for_each(|v| *v -= shift);
    u[anchor] = 0.0;
    Ok(u)
}

/// Pointwise Bellman improvement: at every node the control minimizing
/// `-(G_k u)_i + f(x_i, alpha_k)`, ties broken by the lowest control index.
pub fn improve_policy(problem: &ControlProblem, grid: &Grid, u: &[f64]) -> Result<Policy> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("corrector must be finite".into()));
    }
    if u.len() != grid.n_nodes() {
        return Err(Error::InvalidArgument(
            "corrector length does not match grid".into(),
        ));
    }
    let gens = assemble_control_generators(problem, grid)?;
    let costs = cost_table(problem, grid)?;
    Ok(improve_with(&gens, &costs, u))
}

fn improve_with(gens: &[GeneratorMatrix], costs: &[f64], u: &[f64]) -> Policy {
    let n = u.len();
    let n_ctrl = gens.len();
    let mut best_val = vec![f64::INFINITY; n];
    let mut best_idx = vec![0usize; n];
    let mut gu = vec![0.0; n];
    for (k, g) in gens.iter().enumerate() {
        g.apply(u, &mut gu);
        for i in 0..n {
            let val = -gu[i] + costs[i * n_ctrl + k];
            if val < best_val[i] {
                best_val[i] = val;
                best_idx[i] = k;
            }
        }
    }
    Policy::new(best_idx)
}

/// The Bellman residual `r_i = min_k { -(G_k u)_i + f_ik } - c` computed
/// from precomputed control generators.
pub(crate) fn hjb_residual_with(
    gens: &[GeneratorMatrix],
    costs: &[f64],
    c: f64,
    u: &[f64],
) -> Vec<f64> {
    let n = u.len();
    let n_ctrl = gens.len();
    let mut best = vec![f64::INFINITY; n];
    let mut gu = vec![0.0; n];
    for (k, g) in gens.iter().enumerate() {
        g.apply(u, &mut gu);
        for i in 0..n {
            let val = -gu[i] + costs[i * n_ctrl + k];
            if val < best[i] {
                best[i] = val;
            }
        }
    }
    best.iter_mut().for_each(|v| *v -= c);
    best
}

/// Options for [`policy_iteration`].
#[derive(Debug, Clone)]
pub struct PolicyIterationOpts {
    /// Corrector anchor node; defaults to the grid center.
    pub anchor: Option<usize>,
    /// Convergence threshold on `|c_{k+1} - c_k|`; the policy fixpoint is
    /// the preferred stopping rule and is checked first.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting policy; defaults to control index 0 everywhere.
    pub initial_policy: Option<Policy>,
}

impl Default for PolicyIterationOpts {
    fn default() -> Self {
        Self {
            anchor: None,
            tol: 1e-10,
            max_iter: 200,
            initial_policy: None,
        }
    }
}

/// Howard policy iteration for the average-cost problem: repeat
/// (measure solve -> Poisson solve -> pointwise improvement) until the
/// policy is a fixpoint or the average cost stalls.
///
/// The returned solution satisfies the discrete Bellman equation
/// `min_k { -(G_k u)_i + f_ik } = c` at every node up to the reported
/// residual, and `c` is always the measure pairing `<f, mu>`.
pub fn policy_iteration(
    problem: &ControlProblem,
    grid: &Grid,
    opts: &PolicyIterationOpts,
) -> Result<ErgodicSolution> {
    let n = grid.n_nodes();
    let n_ctrl = problem.controls().len();
    let anchor = opts.anchor.unwrap_or_else(|| grid.center_index());
    if anchor >= n {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} out of range for {n} nodes"
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "need tol > 0 and max_iter >= 1".into(),
        ));
    }
    let mut policy = match &opts.initial_policy {
        Some(p) => {
            if p.len() != n || p.as_slice().iter().any(|&k| k >= n_ctrl) {
                return Err(Error::InvalidArgument("invalid initial policy".into()));
            }
            p.clone()
        }
        None => Policy::uniform(n, 0),
    };
    let gens = assemble_control_generators(problem, grid)?;
    let costs = cost_table(problem, grid)?;

    let mut history: Vec<f64> = Vec::new();
    let mut state: Option<(f64, Vec<f64>, InvariantMeasure, GeneratorMatrix)> = None;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let g = policy_generator_from_controls(&gens, &policy)?;
        let mu = stationary_measure(&g, FPK_TOL)?;
        let f_pol = policy_cost(&costs, n_ctrl, &policy);
        let c = neumaier_dot(&f_pol, mu.weights());
        let u = solve_poisson(&g, &f_pol, c, &mu, anchor)?;
        history.push(c);
        let improved = improve_with(&gens, &costs, &u);
        state = Some((c, u, mu, g));
        if improved == policy {
            converged = true;
            break;
        }
        let k = history.len();
        if k >= 2 && (history[k - 1] - history[k - 2]).abs() <= opts.tol {
            converged = true;
            break;
        }
        policy = improved;
    }
    let (c, u, mu, g) = state.expect("at least one evaluation");
    let f_pol = policy_cost(&costs, n_ctrl, &policy);
    let mut gu = vec![0.0; n];
    g.apply(&u, &mut gu);
    let poisson_residual = gu
        .iter()
        .zip(&f_pol)
        .map(|(gui, fi)| (gui - (fi - c)).abs())
        .fold(0.0f64, f64::max);
    let hjb_residual_sup = norm_inf(&hjb_residual_with(&gens, &costs, c, &u));
    let solution = ErgodicSolution {
        c,
        u,
        policy,
        mu,
        anchor_index: anchor,
        iterations: history.len(),
        history,
        poisson_residual,
        hjb_residual_sup,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::MaxIterations {
            max_iter: opts.max_iter,
            best: Box::new(solution),
        })
    }
}

/// Hard cap on the number of enumerable policies.
pub const ENUMERATION_BOUND: f64 = 1e6;

/// Evaluates the average cost of every deterministic policy and returns the
/// exact discrete minimum; ties broken lexicographically. Only feasible at
/// toy scale, which is exactly its role: an oracle the scalable solvers are
/// checked against.
pub fn enumerate_policies_oracle(
    problem: &ControlProblem,
    grid: &Grid,
) -> Result<(f64, Policy)> {
    let n = grid.n_nodes();
    let n_ctrl = problem.controls().len();
    if n_ctrl == 1 {
        let policy = Policy::uniform(n, 0);
        let (c, _) = objective(problem, grid, &policy)?;
        return Ok((c, policy));
    }
    let total = (n_ctrl as f64).powi(n as i32);
    if !(total <= ENUMERATION_BOUND) {
        return Err(Error::SearchSpaceTooLarge {
            policies: total,
            bound: ENUMERATION_BOUND,
        });
    }
    let gens = assemble_control_generators(problem, grid)?;
    let costs = cost_table(problem, grid)?;

    // Per-(node, control) rows for fast gathers.
    let rows: Vec<Vec<(&[usize], &[f64])>> = (0..n)
        .map(|i| gens.iter().map(|g| g.row(i)).collect())
        .collect();

    let mut assignment = vec![0usize; n];
    let mut best_c = f64::INFINITY;
    let mut best_policy = assignment.clone();
    let mut mat = vec![0.0; n * n];
    let mut piv = vec![0usize; n];
    let mut w = vec![0.0; n];
    loop {
        // Bordered transpose system for this policy: G' with the
        // largest-diagonal row replaced by the normalization.
        mat.iter_mut().for_each(|v| *v = 0.0);
        let mut r = 0usize;
        let mut best_diag = f64::NEG_INFINITY;
        for i in 0..n {
            let (cols, vals) = rows[i][assignment[i]];
            for (c, v) in cols.iter().zip(vals) {
                mat[c * n + i] = *v;
                if *c == i && v.abs() > best_diag {
                    best_diag = v.abs();
                    r = i;
                }
            }
        }
        for j in 0..n {
            mat[r * n + j] = 1.0;
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        w[r] = 1.0;
        if !crate::linalg::dense_lu_factor(&mut mat, n, &mut piv) {
            return Err(Error::Numerical(
                "enumeration: singular bordered system (reducible policy chain?)".into(),
            ));
        }
        crate::linalg::dense_lu_solve(&mat, n, &piv, &mut w);
        let sum: f64 = w.iter().sum();
        let mut c_val = 0.0;
        for i in 0..n {
            c_val += costs[i * n_ctrl + assignment[i]] * w[i];
        }
        c_val /= sum;
        if c_val.is_finite() && c_val < best_c {
            best_c = c_val;
            best_policy.copy_from_slice(&assignment);
        }

        // Lexicographic odometer, last node fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok((best_c, Policy::new(best_policy)));
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < n_ctrl {
                break;
            }
            assignment[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Csr;
    use crate::problem::{builtin_problem, ControlProblem, ControlSet, GrowthParams};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn lq1d() -> ControlProblem {
        builtin_problem(
            "lq1d",
            &BTreeMap::from([("M".to_string(), 4.0), ("n_ctrl".to_string(), 81.0)]),
        )
        .unwrap()
    }

    fn ou1d() -> ControlProblem {
        builtin_problem("ou1d", &BTreeMap::new()).unwrap()
    }

    #[test]
    fn constant_cost_gives_constant_objective() {
        let p = ControlProblem::new(
            "const_cost",
            1,
            ControlSet::new(vec![vec![0.0]]).unwrap(),
            GrowthParams::new(1.0, 1.0, 0.0, 1.0, 2.0, 3.0, 1.0, 1.0, 1.0).unwrap(),
            Arc::new(|_x, _a| vec![1.0]),
            Arc::new(|x, _a| vec![-x[0]]),
            Arc::new(|_x, _a| 2.5),
        )
        .unwrap();
        let grid = Grid::new(1, 2.0, 21).unwrap();
        let (c, _) = objective(&p, &grid, &Policy::uniform(21, 0)).unwrap();
        assert!((c - 2.5).abs() < 1e-12);
    }

    #[test]
    fn two_state_toy_objective_and_poisson() {
        // G = [[-1, 1], [2, -2]], f = (0, 3): mu = (2/3, 1/3), c = 1,
        // and the anchored corrector is u = (0, -1).
        let csr = Csr::from_rows(vec![
            vec![(0, -1.0), (1, 1.0)],
            vec![(0, 2.0), (1, -2.0)],
        ]);
        let (mu, _) = crate::fpk::stationary_weights(&csr, 1e-12).unwrap();
        let f = [0.0, 3.0];
        let c = neumaier_dot(&f, &mu);
        assert!((c - 1.0).abs() < 1e-14);

        // Anchored solve through the same banded path used in production.
        let grid = Grid::new(1, 1.0, 3).unwrap();
        let g3 = crate::discretize::GeneratorMatrix::from_dense(
            grid,
            crate::discretize::GeneratorTag::Policy,
            &[
                vec![-1.0, 1.0, 0.0],
                vec![2.0, -3.0, 1.0],
                vec![0.0, 2.0, -2.0],
            ],
        )
        .unwrap();
        let mu3 = stationary_measure(&g3, 1e-12).unwrap();
        let f3 = [0.0, 1.0, 3.0];
        let c3 = neumaier_dot(&f3, mu3.weights());
        let u = solve_poisson(&g3, &f3, c3, &mu3, 0).unwrap();
        assert_eq!(u[0], 0.0);
        let mut gu = vec![0.0; 3];
        g3.apply(&u, &mut gu);
        for i in 0..3 {
            assert!((gu[i] - (f3[i] - c3)).abs() < 1e-12);
        }
    }

    #[test]
    fn ou1d_objective_matches_gaussian_moment() {
        let grid = Grid::new(1, 6.0, 241).unwrap();
        let (c, _) = objective(&ou1d(), &grid, &Policy::uniform(241, 0)).unwrap();
        assert!((c - 1.0).abs() < 1e-2, "c = {c}");
    }

    #[test]
    fn poisson_zero_rhs_gives_zero_corrector() {
        let grid = Grid::new(1, 2.0, 21).unwrap();
        let p = ou1d();
        let g = assemble_generator(&p, &grid, &Policy::uniform(21, 0)).unwrap();
        let mu = stationary_measure(&g, FPK_TOL).unwrap();
        let f = vec![4.25; 21];
        let u = solve_poisson(&g, &f, 4.25, &mu, grid.center_index()).unwrap();
        assert!(norm_inf(&u) < 1e-12);
    }

    #[test]
    fn ou1d_corrector_is_negative_half_square() {
        let grid = Grid::new(1, 6.0, 241).unwrap();
        let p = ou1d();
        let pol = Policy::uniform(241, 0);
        let g = assemble_generator(&p, &grid, &pol).unwrap();
        let mu = stationary_measure(&g, FPK_TOL).unwrap();
        let costs = cost_table(&p, &grid).unwrap();
        let c = neumaier_dot(&costs, mu.weights());
        let u = solve_poisson(&g, &costs, c, &mu, grid.center_index()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..241 {
            let x = grid.node_coords(i)[0];
            if x.abs() <= 3.0 {
                worst = worst.max((u[i] + x * x / 2.0).abs());
            }
        }
        assert!(worst <= 5e-3, "max corrector error {worst}");
        // Poisson residual after anchoring.
        let mut gu = vec![0.0; 241];
        g.apply(&u, &mut gu);
        let res = gu
            .iter()
            .zip(&costs)
            .map(|(a, f)| (a - (f - c)).abs())
            .fold(0.0f64, f64::max);
        assert!(res <= 1e-8, "poisson residual {res}");
    }

    #[test]
    fn incompatible_rhs_is_rejected() {
        let grid = Grid::new(1, 2.0, 21).unwrap();
        let p = ou1d();
        let g = assemble_generator(&p, &grid, &Policy::uniform(21, 0)).unwrap();
        let mu = stationary_measure(&g, FPK_TOL).unwrap();
        let f = vec![1.0; 21];
        // c far from <f, mu> = 1 breaks the Fredholm condition.
        match solve_poisson(&g, &f, 0.0, &mu, 0) {
            Err(Error::IncompatibleRhs { .. }) => {}
            other => panic!("expected IncompatibleRhs, got {other:?}"),
        }
    }

    #[test]
    fn improvement_picks_nearest_control_for_pointwise_cost() {
        // Drift-free controls and u = 0 reduce improvement to minimizing
        // f(x, alpha) = (alpha - g(x))^2 pointwise.
        let p = ControlProblem::new(
            "tracking",
            1,
            ControlSet::linspace(-1.0, 1.0, 9).unwrap(),
            GrowthParams::new(1.0, 1.0, 1.0, 1.0, 2.0, 5.0, 2.0, 1.0, 0.0).unwrap(),
            Arc::new(|_x, _a| vec![1.0]),
            Arc::new(|_x, _a| vec![0.0]),
            Arc::new(|x, a| {
                let target = 0.5 * x[0];
                (a[0] - target) * (a[0] - target)
            }),
        )
        .unwrap();
        let grid = Grid::new(1, 1.0, 11).unwrap();
        let u = vec![0.0; 11];
        let pol = improve_policy(&p, &grid, &u).unwrap();
        let step = 0.25; // control spacing
        for i in 0..11 {
            let x = grid.node_coords(i)[0];
            let picked = p.controls().point(pol.get(i))[0];
            assert!(
                (picked - 0.5 * x).abs() <= step / 2.0 + 1e-12,
                "x = {x}, picked {picked}"
            );
        }
    }

    #[test]
    fn improvement_recovers_lq_feedback_from_analytic_corrector() {
        // With u = -x^2 the Hamiltonian at interior nodes is
        // 2 + (alpha + x)^2 exactly, so the argmin is the control nearest -x.
        let p = lq1d();
        let grid = Grid::new(1, 6.0, 241).unwrap();
        let u: Vec<f64> = (0..241)
            .map(|i| {
                let x = grid.node_coords(i)[0];
                -x * x
            })
            .collect();
        let pol = improve_policy(&p, &grid, &u).unwrap();
        for i in 0..241 {
            let x = grid.node_coords(i)[0];
            if x.abs() <= 3.0 {
                let picked = p.controls().point(pol.get(i))[0];
                assert!(
                    (picked + x).abs() <= 0.05 + 1e-12,
                    "x = {x}, picked {picked}"
                );
            }
        }
    }

    #[test]
    fn singleton_control_improvement_is_identity() {
        let p = ou1d();
        let grid = Grid::new(1, 2.0, 11).unwrap();
        let pol = improve_policy(&p, &grid, &vec![0.0; 11]).unwrap();
        assert_eq!(pol, Policy::uniform(11, 0));
    }

    #[test]
    fn policy_iteration_on_singleton_converges_immediately() {
        let grid = Grid::new(1, 6.0, 241).unwrap();
        let sol = policy_iteration(&ou1d(), &grid, &PolicyIterationOpts::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!((sol.c - 1.0).abs() < 1e-2);
        assert_eq!(sol.u[sol.anchor_index], 0.0);
        assert!(sol.poisson_residual <= 1e-8);
        assert!(sol.hjb_residual_sup <= 1e-8);
    }

    #[test]
    fn policy_iteration_solves_ergodic_lq() {
        let grid = Grid::new(1, 6.0, 241).unwrap();
        let sol = policy_iteration(&lq1d(), &grid, &PolicyIterationOpts::default()).unwrap();
        assert!((sol.c - 2.0).abs() < 2e-2, "c = {}", sol.c);
        assert!(sol.iterations <= 50);
        // Monotone history.
        for w in sol.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // Feedback close to -x and corrector close to -x^2 (up to the
        // anchor constant, which is zero at the center).
        let p = lq1d();
        let mut u_dev = 0.0f64;
        for i in 0..241 {
            let x = grid.node_coords(i)[0];
            if x.abs() <= 3.0 {
                let picked = p.controls().point(sol.policy.get(i))[0];
                assert!((picked + x).abs() <= 0.1 + 1e-12);
                u_dev = u_dev.max((sol.u[i] + x * x).abs());
            }
        }
        assert!(u_dev <= 2e-2, "corrector deviation {u_dev}");
        // Fixpoint consistency: improving the final corrector returns the
        // final policy.
        let again = improve_policy(&p, &grid, &sol.u).unwrap();
        assert_eq!(again, sol.policy);
    }

    #[test]
    fn max_iter_error_carries_best_solution() {
        let grid = Grid::new(1, 6.0, 121).unwrap();
        let opts = PolicyIterationOpts {
            max_iter: 1,
            tol: 1e-16,
            ..Default::default()
        };
        match policy_iteration(&lq1d(), &grid, &opts) {
            Err(Error::MaxIterations { best, .. }) => {
                assert_eq!(best.history.len(), 1);
                assert!(best.c.is_finite());
            }
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }

    #[test]
    fn oracle_handles_singleton_and_size_bound() {
        let grid = Grid::new(1, 2.0, 11).unwrap();
        let (c, pol) = enumerate_policies_oracle(&ou1d(), &grid).unwrap();
        assert_eq!(pol, Policy::uniform(11, 0));
        assert!(c.is_finite());

        let grid_big = Grid::new(1, 6.0, 241).unwrap();
        match enumerate_policies_oracle(&lq1d(), &grid_big) {
            Err(Error::SearchSpaceTooLarge { .. }) => {}
            other => panic!("expected SearchSpaceTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn oracle_dominated_control_wins_everywhere() {
        // Identical generators for both controls; control 0 has strictly
        // smaller cost at every node, so the constant-0 policy is optimal.
        let p = ControlProblem::new(
            "dominated",
            1,
            ControlSet::new(vec![vec![0.0], vec![1.0]]).unwrap(),
            GrowthParams::new(1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0).unwrap(),
            Arc::new(|_x, _a| vec![1.0]),
            Arc::new(|x, _a| vec![-x[0]]),
            Arc::new(|x, a| x[0] * x[0] + a[0]),
        )
        .unwrap();
        let grid = Grid::new(1, 1.0, 5).unwrap();
        let (_, pol) = enumerate_policies_oracle(&p, &grid).unwrap();
        assert_eq!(pol, Policy::uniform(5, 0));
    }

    #[test]
    fn policy_iteration_matches_oracle_on_small_instance() {
        let p = builtin_problem(
            "lq1d",
            &BTreeMap::from([("M".to_string(), 2.0), ("n_ctrl".to_string(), 3.0)]),
        )
        .unwrap();
        let grid = Grid::new(1, 2.0, 12).unwrap();
        let (c_oracle, pol_oracle) = enumerate_policies_oracle(&p, &grid).unwrap();
        let sol = policy_iteration(&p, &grid, &PolicyIterationOpts::default()).unwrap();
        assert!(
            (sol.c - c_oracle).abs() <= 1e-10,
            "pi {} vs oracle {}",
            sol.c,
            c_oracle
        );
        assert_eq!(sol.policy, pol_oracle);
    }

    #[test]
    fn exchange_property_holds_exactly() {
        // sum_i min_k f(i,k) q_i equals the minimum over policies of
        // sum_i f(i, policy(i)) q_i, both sides reduced in node order.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..7);
            let k = rng.gen_range(2..4);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let f: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let lhs: f64 = (0..n)
                .map(|i| {
                    let row = &f[i * k..(i + 1) * k];
                    row.iter().copied().fold(f64::INFINITY, f64::min) * q[i]
                })
                .sum();
            // Enumerate all k^n policies.
            let mut best = f64::INFINITY;
            let mut assignment = vec![0usize; n];
            loop {
                let val: f64 = (0..n).map(|i| f[i * k + assignment[i]] * q[i]).sum();
                if val < best {
                    best = val;
                }
                let mut pos = n;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    assignment[pos] += 1;
                    if assignment[pos] < k {
                        break;
                    }
                    assignment[pos] = 0;
                }
                if assignment.iter().all(|&a| a == 0) {
                    break;
                }
            }
            assert_eq!(lhs.to_bits(), best.to_bits());
        }
    }

    #[test]
    fn solution_csv_has_expected_columns() {
        let grid = Grid::new(1, 2.0, 5).unwrap();
        let p = ou1d();
        let sol = policy_iteration(&p, &grid, &PolicyIterationOpts::default()).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,u,alpha0,mu");
        assert_eq!(lines.count(), 5);
    }
}
