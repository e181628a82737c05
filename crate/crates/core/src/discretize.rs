//! Truncated tensor grids and monotone finite-difference discretizations of
//! the controlled generator `L_alpha` as Markov generator matrices.
//!
//! Every assembled matrix has zero row sums and nonnegative off-diagonals,
//! so it is the transition-rate matrix of a continuous-time Markov chain on
//! the grid. That property is what makes the discrete problem a genuine
//! average-cost Markov decision problem, for which measure-LP duality holds
//! exactly.
//!
//! The stencil is Kushner-Dupuis style: cross-derivative terms are split
//! into corner rates (positive part to aligned corners, negative part to
//! anti-aligned corners), and the drift uses a central difference whenever
//! the remaining axis diffusion budget keeps the stencil monotone, falling
//! back to first-order upwinding otherwise. Boundary nodes use a reflecting
//! (no-flux) closure: rates pointing outside the box are removed, which
//! preserves the zero row sum and keeps the chain conservative.

use std::io::Write;

use crate::problem::ControlProblem;
use crate::util::{neumaier_sum, NeumaierSum};
use crate::{Error, Result};

/// Uniform tensor grid on `[-R, R]^m`.
///
/// Flat indices are row-major with axis 0 most significant: in 2-D,
/// `flat = i0 * n + i1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    radius: f64,
    n_per_axis: usize,
    spacing: f64,
    n_nodes: usize,
    cell_volume: f64,
}

impl Grid {
    /// Builds the uniform grid with `n_per_axis` nodes per axis, so the
    /// spacing is `2R / (n_per_axis - 1)`.
    pub fn new(dim: usize, radius: f64, n_per_axis: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidArgument("grid dim must be >= 1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid radius must be positive, got {radius}"
            )));
        }
        if n_per_axis < 3 {
            return Err(Error::InvalidArgument(format!(
                "n_per_axis must be >= 3, got {n_per_axis}"
            )));
        }
        let spacing = 2.0 * radius / (n_per_axis - 1) as f64;
        let n_nodes = n_per_axis.pow(dim as u32);
        Ok(Self {
            dim,
            radius,
            n_per_axis,
            spacing,
            n_nodes,
            cell_volume: spacing.powi(dim as i32),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Decomposes a flat index into per-axis indices.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.n_nodes);
        let mut out = vec![0usize; self.dim];
        let mut rest = flat;
        for ax in (0..self.dim).rev() {
            out[ax] = rest % self.n_per_axis;
            rest /= self.n_per_axis;
        }
        out
    }

    /// Recomposes a flat index from per-axis indices.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim);
        let mut flat = 0usize;
        for &i in multi {
            debug_assert!(i < self.n_per_axis);
            flat = flat * self.n_per_axis + i;
        }
        flat
    }

    /// Coordinates of a node, written into `out` (length `dim`).
    pub fn coords_into(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for ax in (0..self.dim).rev() {
            let i = rest % self.n_per_axis;
            rest /= self.n_per_axis;
            out[ax] = -self.radius + i as f64 * self.spacing;
        }
    }

    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coords_into(flat, &mut out);
        out
    }

    /// Flat index of the node nearest the origin (exactly the origin when
    /// `n_per_axis` is odd). Used as the default corrector anchor.
    pub fn center_index(&self) -> usize {
        let mid = (self.n_per_axis - 1) / 2;
        self.flat_index(&vec![mid; self.dim])
    }
}

/// Feedback policy: one control index per grid node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    indices: Vec<usize>,
}

impl Policy {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// The constant policy using control index `k` everywhere.
    pub fn uniform(n_nodes: usize, k: usize) -> Self {
        Self {
            indices: vec![k; n_nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, node: usize) -> usize {
        self.indices[node]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }
}

/// Compressed sparse rows with columns sorted ascending within each row.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn diag(&self, i: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&i) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[i] = s;
        }
    }

    /// y = A' x
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let xi = x[i];
            if xi != 0.0 {
                for (c, v) in cols.iter().zip(vals) {
                    y[*c] += v * xi;
                }
            }
        }
    }

    pub fn transpose(&self) -> Csr {
        let n = self.n;
        let mut counts = vec![0usize; n];
        for &c in &self.cols {
            counts[c] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let mut cols = vec![0usize; self.cols.len()];
        let mut vals = vec![0.0; self.vals.len()];
        let mut next = row_ptr.clone();
        for i in 0..n {
            let (rc, rv) = self.row(i);
            for (c, v) in rc.iter().zip(rv) {
                let slot = next[*c];
                cols[slot] = i;
                vals[slot] = *v;
                next[*c] += 1;
            }
        }
        // Rows of the transpose come out sorted because the outer loop scans
        // source rows in ascending order.
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.n {
            let (cols, _) = self.row(i);
            for &c in cols {
                bw = bw.max(i.abs_diff(c));
            }
        }
        bw
    }

    /// Strong connectivity of the directed graph of strictly positive
    /// off-diagonal entries: forward and backward reachability from node 0.
    pub fn strongly_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let fwd = |csr: &Csr| -> bool {
            let mut seen = vec![false; csr.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(i) = stack.pop() {
                let (cols, vals) = csr.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    if *c != i && *v > 0.0 && !seen[*c] {
                        seen[*c] = true;
                        count += 1;
                        stack.push(*c);
                    }
                }
            }
            count == csr.n
        };
        fwd(self) && fwd(&self.transpose())
    }
}

/// What a generator matrix was assembled for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorTag {
    /// Constant policy with this control index.
    Control(usize),
    /// A node-dependent policy.
    Policy,
}

/// Sparse Markov-generator discretization of `L_alpha` on a grid: zero row
/// sums, nonnegative off-diagonals, nonpositive diagonal.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub grid: Grid,
    pub tag: GeneratorTag,
    pub(crate) csr: Csr,
}

impl GeneratorMatrix {
    pub fn n_nodes(&self) -> usize {
        self.csr.n
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.csr.diag(i)
    }

    /// Sorted (columns, values) view of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.csr.row(i)
    }

    /// y = G x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.csr.apply(x, y)
    }

    /// y = G' x
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.csr.apply_transpose(x, y)
    }

    /// Builds a generator from dense rows; intended for small hand-written
    /// chains in tests and toy models. Validates the generator invariants
    /// loosely (off-diagonals nonnegative, row sums near zero).
    pub fn from_dense(grid: Grid, tag: GeneratorTag, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n != grid.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "matrix size {n} does not match grid with {} nodes",
                grid.n_nodes()
            )));
        }
        let mut sparse_rows = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument("matrix not square".into()));
            }
            let sum = neumaier_sum(row.iter().copied());
            if sum.abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {sum:.3e}, not a generator row"
                )));
            }
            let mut entries = Vec::new();
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "negative off-diagonal at ({i}, {j})"
                    )));
                }
                if v != 0.0 || i == j {
                    entries.push((j, v));
                }
            }
            sparse_rows.push(entries);
        }
        Ok(Self {
            grid,
            tag,
            csr: Csr::from_rows(sparse_rows),
        })
    }

    /// Writes the coordinate-triplet text form: one `row col value` line per
    /// stored entry, sorted row-major, values with full double precision.
    pub fn write_coo(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for i in 0..self.csr.n {
            let (cols, vals) = self.csr.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {}", i, c, crate::util::format_f64(*v))?;
            }
        }
        Ok(())
    }
}

/// Relative slack allowed before a diffusion budget counts as negative;
/// absorbs roundoff when the dominance condition holds with equality.
const DOMINANCE_SLACK: f64 = 1e-12;

/// Assembles the generator matrix for one feedback policy.
///
/// Fails with [`Error::DiagonalDominance`] when the cross-term splitting
/// leaves a negative axis budget `a_ii/h - sum_{j != i} |a_ij|/h` at some
/// node; the caller must refine the grid or reduce the anisotropy.
pub fn assemble_generator(
    problem: &ControlProblem,
    grid: &Grid,
    policy: &Policy,
) -> Result<GeneratorMatrix> {
    if problem.dim() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "problem dimension {} does not match grid dimension {}",
            problem.dim(),
            grid.dim()
        )));
    }
    if policy.len() != grid.n_nodes() {
        return Err(Error::InvalidArgument(format!(
            "policy length {} does not match grid with {} nodes",
            policy.len(),
            grid.n_nodes()
        )));
    }
    let rows = assemble_rows(problem, grid, |i| policy.get(i))?;
    Ok(GeneratorMatrix {
        grid: grid.clone(),
        tag: GeneratorTag::Policy,
        csr: Csr::from_rows(rows),
    })
}

/// One generator per control index, i.e. the family `{L_alpha}` entering the
/// Bellman minimum, assembled with the corresponding constant policy.
pub fn assemble_control_generators(
    problem: &ControlProblem,
    grid: &Grid,
) -> Result<Vec<GeneratorMatrix>> {
    (0..problem.controls().len())
        .map(|k| {
            let rows = assemble_rows(problem, grid, |_| k)?;
            Ok(GeneratorMatrix {
                grid: grid.clone(),
                tag: GeneratorTag::Control(k),
                csr: Csr::from_rows(rows),
            })
        })
        .collect()
}

fn assemble_rows(
    problem: &ControlProblem,
    grid: &Grid,
    control_at: impl Fn(usize) -> usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let m = grid.dim();
    let h = grid.spacing();
    let n_axis = grid.n_per_axis();
    let inv_h2 = 1.0 / (h * h);
    let mut rows = Vec::with_capacity(grid.n_nodes());
    let mut x = vec![0.0; m];
    for node in 0..grid.n_nodes() {
        let multi = grid.multi_index(node);
        grid.coords_into(node, &mut x);
        let k = control_at(node);
        let (a, b, _) = problem.eval_coefficients(&x, k)?;

        // Rate entries as (axis offsets, rate); offsets in {-1, 0, +1}^m.
        let mut entries: Vec<(Vec<isize>, f64)> = Vec::new();

        // Cross terms, split into corner rates.
        for p in 0..m {
            for q in (p + 1)..m {
                let cpq = 2.0 * a[p * m + q];
                let rate = cpq.abs() * 0.5 * inv_h2;
                if rate == 0.0 {
                    continue;
                }
                let aligned = cpq > 0.0;
                for sign in [1isize, -1] {
                    let mut off = vec![0isize; m];
                    off[p] = sign;
                    off[q] = if aligned { sign } else { -sign };
                    entries.push((off, rate));
                }
            }
        }

        // Axis terms: remaining diffusion budget plus drift, central when the
        // budget covers |b|/2h, upwind otherwise.
        for p in 0..m {
            let mut budget = a[p * m + p] * inv_h2;
            for q in 0..m {
                if q != p {
                    budget -= a[p * m + q].abs() * inv_h2;
                }
            }
            if budget < 0.0 {
                let scale = a[p * m + p] * inv_h2;
                if budget < -DOMINANCE_SLACK * scale.max(1.0) {
                    return Err(Error::DiagonalDominance {
                        node,
                        control: k,
                        axis: p,
                        margin: budget * h,
                    });
                }
                budget = 0.0;
            }
            // Central differencing needs strict slack in the monotonicity
            // budget: at |b| = 2h * budget the central rate vanishes and
            // would disconnect the chain, so that case upwinds.
            let bp = b[p];
            let (rate_plus, rate_minus) = if bp.abs() < 2.0 * h * budget {
                (budget + bp / (2.0 * h), budget - bp / (2.0 * h))
            } else {
                (budget + bp.max(0.0) / h, budget + (-bp).max(0.0) / h)
            };
            for (sign, rate) in [(1isize, rate_plus), (-1, rate_minus)] {
                if rate != 0.0 {
                    let mut off = vec![0isize; m];
                    off[p] = sign;
                    entries.push((off, rate));
                }
            }
        }

        // Map offsets to flat targets, dropping anything outside the box
        // (reflecting closure removes outward rates).
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(entries.len() + 1);
        'entry: for (off, rate) in entries {
            let mut target = multi.clone();
            for ax in 0..m {
                let t = multi[ax] as isize + off[ax];
                if t < 0 || t >= n_axis as isize {
                    continue 'entry;
                }
                target[ax] = t as usize;
            }
            row.push((grid.flat_index(&target), rate));
        }
        row.sort_by_key(|(c, _)| *c);
        // Merge duplicates defensively (offsets are distinct by construction).
        row.dedup_by(|next, prev| {
            if next.0 == prev.0 {
                prev.1 += next.1;
                true
            } else {
                false
            }
        });
        // Diagonal closes the row to a zero sum; compensated so the checker
        // sees row sums at roundoff level.
        let mut total = NeumaierSum::new();
        for (_, v) in &row {
            total.add(*v);
        }
        let diag = -total.value();
        let pos = row.partition_point(|(c, _)| *c < node);
        row.insert(pos, (node, diag));
        rows.push(row);
    }
    Ok(rows)
}

/// Assembles the generator for a node-dependent policy by gathering rows
/// from the per-control family; row `i` comes from `gens[policy(i)]`.
/// Bitwise identical to [`assemble_generator`] with the same policy.
pub fn policy_generator_from_controls(
    gens: &[GeneratorMatrix],
    policy: &Policy,
) -> Result<GeneratorMatrix> {
    if gens.is_empty() {
        return Err(Error::InvalidArgument("empty generator family".into()));
    }
    let n = gens[0].n_nodes();
    if policy.len() != n {
        return Err(Error::InvalidArgument(
            "policy length does not match generators".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let k = policy.get(i);
        if k >= gens.len() {
            return Err(Error::InvalidArgument(format!(
                "policy uses control {k}, family has {}",
                gens.len()
            )));
        }
        let (cols, vals) = gens[k].row(i);
        rows.push(cols.iter().copied().zip(vals.iter().copied()).collect());
    }
    Ok(GeneratorMatrix {
        grid: gens[0].grid.clone(),
        tag: GeneratorTag::Policy,
        csr: Csr::from_rows(rows),
    })
}

/// Diagnostics from [`check_markov_generator`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct GeneratorDiagnostics {
    pub n_nodes: usize,
    /// Largest |row sum|; zero for an exact generator.
    pub max_abs_row_sum: f64,
    /// Smallest stored off-diagonal entry; negative values break monotonicity.
    pub min_off_diagonal: f64,
    /// Largest diagonal entry; must be <= 0.
    pub max_diagonal: f64,
    /// Strong connectivity of the positive off-diagonal graph.
    pub irreducible: bool,
}

/// Verifies the Markov-generator invariants exhaustively and reports the
/// worst deviations together with an irreducibility flag.
pub fn check_markov_generator(g: &GeneratorMatrix) -> GeneratorDiagnostics {
    let n = g.csr.n;
    let mut max_abs_row_sum = 0.0f64;
    let mut min_off = f64::INFINITY;
    let mut max_diag = f64::NEG_INFINITY;
    for i in 0..n {
        let (cols, vals) = g.csr.row(i);
        let mut sum = NeumaierSum::new();
        for (c, v) in cols.iter().zip(vals) {
            sum.add(*v);
            if *c == i {
                max_diag = max_diag.max(*v);
            } else {
                min_off = min_off.min(*v);
            }
        }
        max_abs_row_sum = max_abs_row_sum.max(sum.value().abs());
    }
    if !min_off.is_finite() {
        min_off = 0.0;
    }
    if !max_diag.is_finite() {
        max_diag = 0.0;
    }
    GeneratorDiagnostics {
        n_nodes: n,
        max_abs_row_sum,
        min_off_diagonal: min_off,
        max_diagonal: max_diag,
        irreducible: g.csr.strongly_connected(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use std::collections::BTreeMap;

    fn no_params() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn grid_three_nodes() {
        let g = Grid::new(1, 1.0, 3).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.node_coords(0), vec![-1.0]);
        assert_eq!(g.node_coords(1), vec![0.0]);
        assert_eq!(g.node_coords(2), vec![1.0]);
    }

    #[test]
    fn grid_2d_row_major_center() {
        let g = Grid::new(2, 1.0, 3).unwrap();
        assert_eq!(g.n_nodes(), 9);
        assert_eq!(g.node_coords(4), vec![0.0, 0.0]);
        assert_eq!(g.center_index(), 4);
        assert_eq!(g.flat_index(&[1, 1]), 4);
        assert_eq!(g.multi_index(5), vec![1, 2]);
    }

    #[test]
    fn grid_fine_1d() {
        let g = Grid::new(1, 6.0, 241).unwrap();
        assert_eq!(g.n_nodes(), 241);
        assert!((g.spacing() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(Grid::new(1, -1.0, 11).is_err());
        assert!(Grid::new(1, 1.0, 2).is_err());
        assert!(Grid::new(0, 1.0, 3).is_err());
    }

    #[test]
    fn flat_index_is_a_bijection() {
        let g = Grid::new(3, 1.0, 4).unwrap();
        for flat in 0..g.n_nodes() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
    }

    /// Pure diffusion interior row: a = 1, b = 0, h = 1.
    #[test]
    fn interior_pure_diffusion_row() {
        let problem = builtin_problem("ou1d", &no_params()).unwrap();
        // ou1d has b = -x; at the origin that is zero, which gives the pure
        // central second difference.
        let grid = Grid::new(1, 1.0, 3).unwrap();
        let g = assemble_generator(&problem, &grid, &Policy::uniform(3, 0)).unwrap();
        let (cols, vals) = g.row(1);
        assert_eq!(cols, &[0, 1, 2]);
        assert_eq!(vals, &[1.0, -2.0, 1.0]);
    }

    /// Drifted interior row, h = 0.5: the diffusion budget 1/h^2 = 4 covers
    /// |b|/2h = 2, so the drift is differenced centrally.
    #[test]
    fn interior_drift_row_is_central_when_monotone() {
        let problem =
            crate::problem::tests_support::constant_drift_problem(2.0);
        let grid = Grid::new(1, 1.0, 5).unwrap();
        let g = assemble_generator(&problem, &grid, &Policy::uniform(5, 0)).unwrap();
        let (cols, vals) = g.row(2);
        assert_eq!(cols, &[1, 2, 3]);
        // left = 4 - b/2h = 2, right = 4 + b/2h = 6
        assert!((vals[0] - 2.0).abs() < 1e-14);
        assert!((vals[1] + 8.0).abs() < 1e-14);
        assert!((vals[2] - 6.0).abs() < 1e-14);
    }

    /// Once |b| exceeds 2a/h the scheme switches to pure upwinding.
    #[test]
    fn interior_drift_row_upwinds_when_needed() {
        let problem =
            crate::problem::tests_support::constant_drift_problem(10.0);
        let grid = Grid::new(1, 1.0, 5).unwrap(); // h = 0.5, 2a/h = 4 < 10
        let g = assemble_generator(&problem, &grid, &Policy::uniform(5, 0)).unwrap();
        let (cols, vals) = g.row(2);
        assert_eq!(cols, &[1, 2, 3]);
        // left = 1/h^2 = 4, right = 4 + b/h = 24
        assert!((vals[0] - 4.0).abs() < 1e-14);
        assert!((vals[1] + 28.0).abs() < 1e-14);
        assert!((vals[2] - 24.0).abs() < 1e-14);
    }

    /// Reflecting closure: the outward rate at the boundary is removed.
    #[test]
    fn boundary_row_reflects() {
        let problem = crate::problem::tests_support::constant_drift_problem(0.0);
        let grid = Grid::new(1, 1.0, 3).unwrap();
        let g = assemble_generator(&problem, &grid, &Policy::uniform(3, 0)).unwrap();
        let (cols, vals) = g.row(0);
        assert_eq!(cols, &[0, 1]);
        assert_eq!(vals, &[-1.0, 1.0]);
    }

    #[test]
    fn policy_rows_match_control_rows() {
        use rand::{Rng, SeedableRng};
        let problem = builtin_problem(
            "lq1d",
            &BTreeMap::from([("M".to_string(), 2.0), ("n_ctrl".to_string(), 5.0)]),
        )
        .unwrap();
        let grid = Grid::new(1, 2.0, 21).unwrap();
        let gens = assemble_control_generators(&problem, &grid).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let pol = Policy::new(
                (0..grid.n_nodes()).map(|_| rng.gen_range(0..5)).collect(),
            );
            let g = assemble_generator(&problem, &grid, &pol).unwrap();
            for i in 0..grid.n_nodes() {
                let (ca, va) = g.row(i);
                let (cb, vb) = gens[pol.get(i)].row(i);
                assert_eq!(ca, cb);
                assert_eq!(va, vb);
            }
        }
    }

    #[test]
    fn singleton_control_family_has_one_member() {
        let problem = builtin_problem("ou1d", &no_params()).unwrap();
        let grid = Grid::new(1, 2.0, 11).unwrap();
        let gens = assemble_control_generators(&problem, &grid).unwrap();
        assert_eq!(gens.len(), 1);
        let direct =
            assemble_generator(&problem, &grid, &Policy::uniform(11, 0)).unwrap();
        for i in 0..11 {
            assert_eq!(gens[0].row(i), direct.row(i));
        }
    }

    #[test]
    fn lq1d_zero_control_is_pure_diffusion() {
        let problem = builtin_problem(
            "lq1d",
            &BTreeMap::from([("M".to_string(), 1.0), ("n_ctrl".to_string(), 3.0)]),
        )
        .unwrap();
        let grid = Grid::new(1, 1.0, 5).unwrap();
        let gens = assemble_control_generators(&problem, &grid).unwrap();
        assert_eq!(gens.len(), 3);
        let h = grid.spacing();
        let (cols, vals) = gens[1].row(2); // alpha = 0
        assert_eq!(cols, &[1, 2, 3]);
        assert!((vals[0] - 1.0 / (h * h)).abs() < 1e-12);
        assert!((vals[2] - 1.0 / (h * h)).abs() < 1e-12);
    }

    #[test]
    fn generator_invariants_hold_exhaustively() {
        for (name, radius, n) in [("ou1d", 6.0, 121), ("doublewell1d", 3.0, 61)] {
            let problem = builtin_problem(name, &no_params()).unwrap();
            let grid = Grid::new(1, radius, n).unwrap();
            for g in assemble_control_generators(&problem, &grid).unwrap() {
                let d = check_markov_generator(&g);
                assert!(d.max_abs_row_sum <= 1e-12, "{name}: {}", d.max_abs_row_sum);
                assert!(d.min_off_diagonal >= 0.0);
                assert!(d.max_diagonal <= 0.0);
                assert!(d.irreducible, "{name} generator must be irreducible");
                // Constants in the kernel: G 1 = 0.
                let ones = vec![1.0; g.n_nodes()];
                let mut out = vec![0.0; g.n_nodes()];
                g.apply(&ones, &mut out);
                assert!(out.iter().all(|v| v.abs() <= 1e-12));
            }
        }
    }

    #[test]
    fn ou2d_generator_invariants() {
        let problem = builtin_problem("ou2d", &no_params()).unwrap();
        let grid = Grid::new(2, 3.0, 21).unwrap();
        let g = assemble_generator(
            &problem,
            &grid,
            &Policy::uniform(grid.n_nodes(), 0),
        )
        .unwrap();
        let d = check_markov_generator(&g);
        assert!(d.max_abs_row_sum <= 1e-12);
        assert!(d.min_off_diagonal >= 0.0);
        assert!(d.irreducible);
    }

    #[test]
    fn diagonal_dominance_failure_names_the_witness() {
        // Cross term larger than the axis diffusion: a = [[1, 1.5], [1.5, 1]].
        let problem = crate::problem::tests_support::anisotropic_problem(1.5);
        let grid = Grid::new(2, 1.0, 5).unwrap();
        let err = assemble_generator(
            &problem,
            &grid,
            &Policy::uniform(grid.n_nodes(), 0),
        )
        .unwrap_err();
        match err {
            Error::DiagonalDominance {
                node,
                control,
                margin,
                ..
            } => {
                assert_eq!(control, 0);
                assert!(node < grid.n_nodes());
                assert!(margin < 0.0);
            }
            other => panic!("expected DiagonalDominance, got {other}"),
        }
    }

    #[test]
    fn check_markov_on_hand_written_chains() {
        let grid = Grid::new(1, 1.0, 3).unwrap();
        // Padded to 3 states to fit the smallest grid; state 2 is isolated
        // from 0 and 1 in the second example below.
        let g = GeneratorMatrix::from_dense(
            grid.clone(),
            GeneratorTag::Policy,
            &[
                vec![-1.0, 1.0, 0.0],
                vec![2.0, -3.0, 1.0],
                vec![0.0, 1.0, -1.0],
            ],
        )
        .unwrap();
        let d = check_markov_generator(&g);
        assert_eq!(d.max_abs_row_sum, 0.0);
        assert_eq!(d.min_off_diagonal, 1.0);
        assert!(d.irreducible);

        let absorbing = GeneratorMatrix::from_dense(
            grid,
            GeneratorTag::Policy,
            &[
                vec![-1.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![0.0, 1.0, -1.0],
            ],
        )
        .unwrap();
        let d = check_markov_generator(&absorbing);
        assert!(!d.irreducible, "state 1 absorbs");
    }

    #[test]
    fn maximum_principle_spot_check() {
        // (I - tau G) v = w with w >= 0 must give v >= 0 for the
        // pure-diffusion generator.
        let problem = crate::problem::tests_support::constant_drift_problem(0.0);
        let grid = Grid::new(1, 1.0, 21).unwrap();
        let g = assemble_generator(&problem, &grid, &Policy::uniform(21, 0)).unwrap();
        let n = g.n_nodes();
        let tau = 0.7;
        let mut banded = crate::linalg::BandedMatrix::new(n, 1, 1);
        for i in 0..n {
            let (cols, vals) = g.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let entry = if *c == i { 1.0 - tau * v } else { -tau * v };
                banded.set(i, *c, entry);
            }
        }
        let lu = banded.factorize().unwrap();
        let mut v: Vec<f64> = (0..n)
            .map(|i| if i % 3 == 0 { 1.0 } else { 0.25 })
            .collect();
        lu.solve(&mut v);
        assert!(v.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn coo_export_is_sorted_row_major() {
        let problem = crate::problem::tests_support::constant_drift_problem(0.0);
        let grid = Grid::new(1, 1.0, 3).unwrap();
        let g = assemble_generator(&problem, &grid, &Policy::uniform(3, 0)).unwrap();
        let mut buf = Vec::new();
        g.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let triplets: Vec<(usize, usize)> = text
            .lines()
            .map(|l| {
                let mut it = l.split_whitespace();
                let r: usize = it.next().unwrap().parse().unwrap();
                let c: usize = it.next().unwrap().parse().unwrap();
                let _v: f64 = it.next().unwrap().parse().unwrap();
                (r, c)
            })
            .collect();
        let mut sorted = triplets.clone();
        sorted.sort();
        assert_eq!(triplets, sorted);
        assert_eq!(triplets.len(), 3 * 3 - 2); // tridiagonal with 3 nodes
    }
}
