//! Dense two-phase revised simplex with Bland's rule, for standard-form
//! problems `min c'x  s.t.  A x = b, x >= 0`.
//!
//! Bland's entering/leaving rule (always the lowest eligible index) is
//! cycling-proof, which matters more than speed here: the solver is a
//! verification oracle capped at a few thousand columns, not a production
//! path. The basis inverse is kept explicitly and refreshed implicitly by
//! the product-form updates.

#[derive(Debug)]
pub enum SimplexError {
    Infeasible(f64),
    Unbounded { entering: usize },
    Breakdown(String),
}

impl std::fmt::Display for SimplexError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimplexError::Infeasible(v) => {
                write!(f, "infeasible: phase-1 objective {v:.3e} > 0")
            }
            SimplexError::Unbounded { entering } => {
                write!(f, "unbounded in direction of column {entering}")
            }
            SimplexError::Breakdown(msg) => write!(f, "simplex breakdown: {msg}"),
        }
    }
}

/// Solution of a standard-form LP.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// Primal solution, length = number of columns.
    pub x: Vec<f64>,
    /// Row multipliers `y = c_B' B^{-1}` at optimality.
    pub duals: Vec<f64>,
    /// Optimal objective value.
    pub objective: f64,
}

/// Reduced-cost threshold below which a column counts as improving.
const REDUCED_COST_TOL: f64 = 1e-9;
/// Pivot magnitude below which a ratio-test entry is treated as zero.
const PIVOT_TOL: f64 = 1e-11;
/// Residual infeasibility accepted at the end of phase 1.
const PHASE1_TOL: f64 = 1e-8;

const MAX_PIVOTS: usize = 2_000_000;

struct Tableau<'a> {
    m: usize,
    n: usize,
    /// Column-major constraint matrix, m * n.
    a: &'a [f64],
    /// Explicit basis inverse, row-major m * m.
    binv: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Basic variable values B^{-1} b.
    xb: Vec<f64>,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    /// B^{-1} a_j
    fn ftran(&self, col: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let mut s = 0.0;
            let row = &self.binv[i * m..(i + 1) * m];
            for (r, c) in row.iter().zip(col) {
                s += r * c;
            }
            out[i] = s;
        }
    }

    /// y = c_B' B^{-1}
    fn multipliers(&self, cost_of: &dyn Fn(usize) -> f64, out: &mut [f64]) {
        let m = self.m;
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                s += cost_of(self.basis[i]) * self.binv[i * m + j];
            }
            out[j] = s;
        }
    }

    fn pivot(&mut self, entering: usize, leaving_row: usize, direction: &[f64]) {
        let m = self.m;
        let pivot = direction[leaving_row];
        // Update basic values.
        let theta = self.xb[leaving_row] / pivot;
        for i in 0..m {
            if i != leaving_row {
                self.xb[i] -= theta * direction[i];
            }
        }
        self.xb[leaving_row] = theta;
        // Row operations on the explicit inverse.
        let (before, rest) = self.binv.split_at_mut(leaving_row * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= pivot;
        }
        for (i, chunk) in before.chunks_mut(m).enumerate() {
            let d = direction[i];
            if d != 0.0 {
                for (t, p) in chunk.iter_mut().zip(prow.iter()) {
                    *t -= d * p;
                }
            }
        }
        for (offset, chunk) in after.chunks_mut(m).enumerate() {
            let d = direction[leaving_row + 1 + offset];
            if d != 0.0 {
                for (t, p) in chunk.iter_mut().zip(prow.iter()) {
                    *t -= d * p;
                }
            }
        }
        self.in_basis[self.basis[leaving_row]] = false;
        self.in_basis[entering] = true;
        self.basis[leaving_row] = entering;
        self.iterations += 1;
    }

    /// One simplex phase under Bland's rule. `allowed` filters the columns
    /// that may enter. Returns Ok(()) at phase optimality.
    fn run_phase(
        &mut self,
        cost_of: &dyn Fn(usize) -> f64,
        allowed: &dyn Fn(usize) -> bool,
    ) -> Result<(), SimplexError> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut dir = vec![0.0; m];
        loop {
            if self.iterations > MAX_PIVOTS {
                return Err(SimplexError::Breakdown(format!(
                    "pivot limit {MAX_PIVOTS} exceeded"
                )));
            }
            self.multipliers(cost_of, &mut y);
            // Bland: entering = lowest-index improving column.
            let mut entering = None;
            for j in 0..self.n {
                if !allowed(j) || self.in_basis[j] {
                    continue;
                }
                let col = self.column(j);
                let mut yta = 0.0;
                for (yi, ai) in y.iter().zip(col) {
                    yta += yi * ai;
                }
                if cost_of(j) - yta < -REDUCED_COST_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(entering) = entering else {
                return Ok(());
            };
            self.ftran(self.column(entering), &mut dir);
            // Ratio test; among minimizers pick the lowest basic index
            // (Bland's leaving rule).
            let mut leaving: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..m {
                if dir[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / dir[i];
                    let better = match leaving {
                        None => true,
                        Some(l) => {
                            ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12
                                    && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        leaving = Some(i);
                    }
                }
            }
            let Some(leaving) = leaving else {
                return Err(SimplexError::Unbounded { entering });
            };
            self.pivot(entering, leaving, &dir.clone());
        }
    }
}

/// Solves `min c'x  s.t.  A x = b, x >= 0` with `a` given column-major
/// (`m` rows, `n` columns).
pub fn solve_standard_form(
    m: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    cost: &[f64],
) -> Result<SimplexSolution, SimplexError> {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    assert_eq!(cost.len(), n);

    // Phase 1 works on [A | I] with artificial columns n..n+m; flip rows
    // with negative right-hand sides so the artificial basis is feasible.
    let mut a_ext = vec![0.0; m * (n + m)];
    let mut b_signed = b.to_vec();
    let mut row_sign = vec![1.0; m];
    for i in 0..m {
        if b_signed[i] < 0.0 {
            row_sign[i] = -1.0;
            b_signed[i] = -b_signed[i];
        }
    }
    for j in 0..n {
        for i in 0..m {
            a_ext[j * m + i] = row_sign[i] * a[j * m + i];
        }
    }
    for i in 0..m {
        a_ext[(n + i) * m + i] = 1.0;
    }

    let mut in_basis = vec![false; n + m];
    for flag in in_basis.iter_mut().skip(n) {
        *flag = true;
    }
    let mut t = Tableau {
        m,
        n: n + m,
        a: &a_ext,
        binv: {
            let mut id = vec![0.0; m * m];
            for i in 0..m {
                id[i * m + i] = 1.0;
            }
            id
        },
        basis: (n..n + m).collect(),
        in_basis,
        xb: b_signed.clone(),
        iterations: 0,
    };

    // Phase 1: minimize the sum of artificials.
    let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    t.run_phase(&phase1_cost, &|_| true)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(j, _)| **j >= n)
        .map(|(_, v)| v.max(0.0))
        .sum();
    if infeasibility > PHASE1_TOL {
        return Err(SimplexError::Infeasible(infeasibility));
    }

    // Drive remaining artificials (basic at zero) out of the basis.
    let mut dir = vec![0.0; m];
    for row in 0..m {
        if t.basis[row] < n {
            continue;
        }
        let mut replaced = false;
        for j in 0..n {
            if t.in_basis[j] {
                continue;
            }
            t.ftran(t.column(j), &mut dir);
            if dir[row].abs() > PIVOT_TOL {
                let d = dir.clone();
                t.pivot(j, row, &d);
                replaced = true;
                break;
            }
        }
        if !replaced {
            return Err(SimplexError::Breakdown(format!(
                "redundant row {row}: no column can replace its artificial"
            )));
        }
    }

    // Phase 2 on the original columns only.
    let phase2_cost = |j: usize| if j < n { cost[j] } else { f64::INFINITY };
    t.run_phase(&phase2_cost, &|j| j < n)?;

    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[i];
        }
    }
    let mut duals = vec![0.0; m];
    t.multipliers(&|j| if j < n { cost[j] } else { 0.0 }, &mut duals);
    // Undo the row sign flips.
    for i in 0..m {
        duals[i] *= row_sign[i];
    }
    let objective = x.iter().zip(cost).map(|(xi, ci)| xi * ci).sum();
    Ok(SimplexSolution { x, duals, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min -x1 - 2 x2 s.t. x1 + x2 + s1 = 4, x1 + 3 x2 + s2 = 6, x >= 0.
    /// Optimum at (3, 1) with value -5.
    #[test]
    fn small_inequality_lp() {
        let m = 2;
        let n = 4;
        // columns: x1, x2, s1, s2 (column-major)
        let a = [1.0, 1.0, 1.0, 3.0, 1.0, 0.0, 0.0, 1.0];
        let b = [4.0, 6.0];
        let cost = [-1.0, -2.0, 0.0, 0.0];
        let sol = solve_standard_form(m, n, &a, &b, &cost).unwrap();
        assert!((sol.objective + 5.0).abs() < 1e-10);
        assert!((sol.x[0] - 3.0).abs() < 1e-10);
        assert!((sol.x[1] - 1.0).abs() < 1e-10);
        // Duals certify optimality: y = (-1/2, -1/2).
        assert!((sol.duals[0] + 0.5).abs() < 1e-10);
        assert!((sol.duals[1] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn infeasible_lp_is_detected() {
        // x1 = 1 and x1 = 2 simultaneously.
        let a = [1.0, 1.0];
        let b = [1.0, 2.0];
        let cost = [0.0];
        match solve_standard_form(2, 1, &a, &b, &cost) {
            Err(SimplexError::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_lp_is_detected() {
        // min -x1 s.t. x1 - x2 = 0: both can grow without bound.
        let a = [1.0, -1.0];
        let b = [0.0];
        let cost = [-1.0, 0.0];
        match solve_standard_form(1, 2, &a, &[0.0], &cost) {
            Err(SimplexError::Unbounded { .. }) => {}
            other => panic!("expected unbounded, got {other:?} (b = {b:?})"),
        }
    }

    #[test]
    fn negative_rhs_rows_are_handled() {
        // -x1 = -3  =>  x1 = 3; minimize x1.
        let a = [-1.0];
        let b = [-3.0];
        let cost = [1.0];
        let sol = solve_standard_form(1, 1, &a, &b, &cost).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        // Dual of min{x : -x = -3} is y with -y <= 1, objective -3y = 3 at
        // y = -1.
        assert!((sol.duals[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_lp_terminates_with_bland() {
        // A classic degenerate instance; Bland's rule must not cycle.
        // min -0.75 x1 + 150 x2 - 0.02 x3 + 6 x4 (Beale's example), with
        // slacks appended.
        let m = 3;
        let n = 7;
        let cols: Vec<[f64; 3]> = vec![
            [0.25, 0.5, 0.0],
            [-60.0, -90.0, 0.0],
            [-0.04, -0.02, 1.0],
            [9.0, 3.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let mut a = vec![0.0; m * n];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..m {
                a[j * m + i] = col[i];
            }
        }
        let b = [0.0, 0.0, 1.0];
        let cost = [-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        let sol = solve_standard_form(m, n, &a, &b, &cost).unwrap();
        assert!((sol.objective + 0.05).abs() < 1e-9, "{}", sol.objective);
    }
}
