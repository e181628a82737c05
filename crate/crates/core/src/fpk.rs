//! Stationary Fokker-Planck-Kolmogorov solves and measure diagnostics.
//!
//! The discrete invariant measure of a generator `G` is the probability
//! vector solving `G' mu = 0`. For an irreducible generator the kernel of
//! `G'` is one-dimensional and the normalized solution is unique and
//! strictly positive; both facts are checked, not assumed.
//!
//! Measures here are cell masses, not densities: `sum mu_i = 1` exactly.
//! Continuum comparisons divide by the cell volume.

use std::io::Write;

use crate::discretize::{Csr, GeneratorMatrix, Grid};
use crate::linalg::{BandedLu, BandedMatrix};
use crate::util::{format_f64, neumaier_sum, norm_inf, NeumaierSum};
use crate::{Error, Result};

/// Nonnegative probability vector on a grid together with the achieved
/// stationarity residual `max |G' mu|`.
#[derive(Debug, Clone)]
pub struct InvariantMeasure {
    pub grid: Grid,
    weights: Vec<f64>,
    residual: f64,
}

impl InvariantMeasure {
    /// Wraps explicit weights; they must sum to one within 1e-12. The
    /// residual is whatever the caller measured.
    pub fn from_weights(grid: Grid, weights: Vec<f64>, residual: f64) -> Result<Self> {
        if weights.len() != grid.n_nodes() {
            return Err(Error::InvalidArgument(
                "weight vector does not match grid".into(),
            ));
        }
        let sum = neumaier_sum(weights.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            grid,
            weights,
            residual,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// CSV export: node coordinates, cell mass, density (mass / cell volume).
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        let m = self.grid.dim();
        for ax in 0..m {
            write!(w, "x{ax},")?;
        }
        writeln!(w, "weight,density")?;
        let vol = self.grid.cell_volume();
        let mut x = vec![0.0; m];
        for (i, &wi) in self.weights.iter().enumerate() {
            self.grid.coords_into(i, &mut x);
            for v in &x {
                write!(w, "{},", format_f64(*v))?;
            }
            writeln!(w, "{},{}", format_f64(wi), format_f64(wi / vol))?;
        }
        Ok(())
    }
}

/// One bordered solve: `G'` with row `replaced` overwritten by the
/// normalization row. By Sherman-Morrison this collapses to solving
/// `M w = e_r` with `M` equal to `G'` with a unit row at `r`, then
/// normalizing; iterative refinement runs against the true bordered system.
struct BorderedSolve {
    lu: BandedLu,
    replaced: usize,
    /// Kernel direction `w = M^{-1} e_r`.
    kernel: Vec<f64>,
}

impl BorderedSolve {
    fn new(gt: &Csr, replaced: usize) -> Result<Self> {
        let n = gt.n;
        let bw = gt.bandwidth();
        let mut banded = BandedMatrix::new(n, bw, bw);
        for i in 0..n {
            if i == replaced {
                banded.set(i, i, 1.0);
                continue;
            }
            let (cols, vals) = gt.row(i);
            for (c, v) in cols.iter().zip(vals) {
                banded.set(i, *c, *v);
            }
        }
        // The unit-row reduction is singular exactly when the invariant
        // measure vanishes at the replaced node; a tiny pivot floor turns
        // that case into inverse iteration instead of a hard failure, and
        // the caller re-borders at a better node afterwards.
        let floor = 1e-20 * banded.max_abs().max(1.0);
        let lu = banded.factorize_with_floor(floor).map_err(|e| {
            Error::Numerical(format!("stationary solve: singular bordered system ({e})"))
        })?;
        let mut kernel = vec![0.0; n];
        kernel[replaced] = 1.0;
        lu.solve(&mut kernel);
        Ok(Self {
            lu,
            replaced,
            kernel,
        })
    }

    /// Applies the bordered inverse to `rhs` via Sherman-Morrison.
    fn apply_inverse(&self, rhs: &mut Vec<f64>) {
        self.lu.solve(rhs);
        let r = self.replaced;
        let t_sum = neumaier_sum(rhs.iter().copied());
        let w_sum = neumaier_sum(self.kernel.iter().copied());
        let gamma = (t_sum - rhs[r]) / (w_sum - self.kernel[r] + 1.0);
        for (t, w) in rhs.iter_mut().zip(&self.kernel) {
            *t -= gamma * w;
        }
    }
}

const REFINEMENT_STEPS: usize = 4;

fn bordered_stationary(gt: &Csr, replaced: usize, tol: f64, strict: bool) -> Result<Vec<f64>> {
    let n = gt.n;
    let solver = BorderedSolve::new(gt, replaced)?;
    let w_sum = neumaier_sum(solver.kernel.iter().copied());
    if w_sum == 0.0 || !w_sum.is_finite() {
        return Err(Error::Numerical(
            "stationary solve: kernel direction degenerate".into(),
        ));
    }
    let mut mu: Vec<f64> = solver.kernel.iter().map(|w| w / w_sum).collect();
    let mut res = vec![0.0; n];
    for _ in 0..REFINEMENT_STEPS {
        gt.apply(&mu, &mut res);
        let worst = norm_inf(&res);
        let mass_defect = 1.0 - neumaier_sum(mu.iter().copied());
        if worst <= tol && mass_defect.abs() <= 1e-14 {
            break;
        }
        let mut rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        rhs[replaced] = mass_defect;
        solver.apply_inverse(&mut rhs);
        for (m, d) in mu.iter_mut().zip(&rhs) {
            *m += d;
        }
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "stationary solve: refinement diverged".into(),
        ));
    }
    // Exact renormalization; the relative change is at roundoff level.
    let sum = neumaier_sum(mu.iter().copied());
    mu.iter_mut().for_each(|v| *v /= sum);
    gt.apply(&mu, &mut res);
    if strict && norm_inf(&res) > tol {
        return Err(Error::Numerical(format!(
            "stationary solve: residual {:.3e} above tolerance {:.3e} after refinement \
             (pivot ratio {:.3e})",
            norm_inf(&res),
            tol,
            solver.lu.pivot_ratio()
        )));
    }
    Ok(mu)
}

/// Index of the largest weight, and of the runner-up.
fn top_two(weights: &[f64]) -> (usize, usize) {
    let mut i1 = 0usize;
    for (i, w) in weights.iter().enumerate() {
        if *w > weights[i1] {
            i1 = i;
        }
    }
    let mut i2 = usize::MAX;
    for (i, w) in weights.iter().enumerate() {
        if i != i1 && (i2 == usize::MAX || *w > weights[i2]) {
            i2 = i;
        }
    }
    (i1, i2)
}

pub(crate) fn stationary_weights(csr: &Csr, tol: f64) -> Result<(Vec<f64>, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if !csr.strongly_connected() {
        return Err(Error::ReducibleGenerator);
    }
    let gt = csr.transpose();
    let n = csr.n;
    if n == 1 {
        return Ok((vec![1.0], 0.0));
    }

    // First pass seeds from the largest diagonal magnitude. That row can sit
    // where the measure is numerically zero (strongly advected chains), which
    // makes the reduced system ill-conditioned, so the definitive solve
    // re-borders at the measure's peak, where conditioning is governed by
    // max(mu) >= 1/N.
    let mut seed = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let d = gt.diag(i).abs();
        if d > best {
            best = d;
            seed = i;
        }
    }
    let rough = bordered_stationary(&gt, seed, tol, false)?;
    let (r1, r2) = top_two(&rough);
    let mu = if r1 == seed {
        rough
    } else {
        bordered_stationary(&gt, r1, tol, true)?
    };
    // Kernel one-dimensionality: an independent solve bordered at a
    // different node must reproduce the same measure.
    let mu2 = bordered_stationary(&gt, r2, tol, true)?;
    let dev = mu
        .iter()
        .zip(&mu2)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if dev > 10.0 * tol {
        return Err(Error::Numerical(format!(
            "kernel one-dimensionality check failed: independent solves \
             differ by {dev:.3e} > {:.3e}",
            10.0 * tol
        )));
    }
    let mut res = vec![0.0; n];
    gt.apply(&mu, &mut res);
    let residual = norm_inf(&res);
    if residual > tol {
        return Err(Error::Numerical(format!(
            "stationary solve: residual {residual:.3e} above tolerance {tol:.3e}"
        )));
    }
    Ok((mu, residual))
}

/// Solves `G' mu = 0`, `sum mu = 1` by a sparse (banded) direct solve of the
/// bordered system with iterative refinement.
///
/// Errors on a reducible generator (the invariant measure would not be
/// unique) and on numerical breakdown; the kernel's one-dimensionality is
/// verified by a second solve with a different replaced row.
pub fn stationary_measure(g: &GeneratorMatrix, tol: f64) -> Result<InvariantMeasure> {
    let (weights, residual) = stationary_weights(&g.csr, tol)?;
    Ok(InvariantMeasure {
        grid: g.grid.clone(),
        weights,
        residual,
    })
}

/// Grid sums `sum_i |x_i|^l mu_i` for each requested order.
pub fn measure_moments(mu: &InvariantMeasure, orders: &[u32]) -> Vec<f64> {
    let m = mu.grid.dim();
    let mut x = vec![0.0; m];
    orders
        .iter()
        .map(|&ell| {
            let mut acc = NeumaierSum::new();
            for (i, &w) in mu.weights.iter().enumerate() {
                mu.grid.coords_into(i, &mut x);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                acc.add(r2.sqrt().powi(ell as i32) * w);
            }
            acc.value()
        })
        .collect()
}

/// Harnack-style ratio over one centered sub-box.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoxRatio {
    pub half_width: f64,
    pub max_weight: f64,
    pub min_weight: f64,
    /// `max / min`; infinite when the box contains a nonpositive weight.
    pub ratio: f64,
}

/// Positivity diagnostics for a measure.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PositivityReport {
    pub min_weight: f64,
    pub argmin_node: usize,
    /// Number of exactly-zero or negative weights; any such entry is a
    /// positivity violation for an irreducible generator.
    pub n_nonpositive: usize,
    pub strictly_positive: bool,
    pub box_ratios: Vec<BoxRatio>,
}

/// Reports strict positivity and max/min ratios over centered sub-boxes of
/// half-width `R/4, R/2, 3R/4, R`.
pub fn positivity_report(mu: &InvariantMeasure) -> PositivityReport {
    let n = mu.len();
    let mut min_weight = f64::INFINITY;
    let mut argmin = 0usize;
    let mut n_nonpositive = 0usize;
    for (i, &w) in mu.weights.iter().enumerate() {
        if w < min_weight {
            min_weight = w;
            argmin = i;
        }
        if w <= 0.0 {
            n_nonpositive += 1;
        }
    }
    let m = mu.grid.dim();
    let radius = mu.grid.radius();
    let mut x = vec![0.0; m];
    let mut box_ratios = Vec::new();
    for j in 1..=4usize {
        let half = radius * j as f64 / 4.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            mu.grid.coords_into(i, &mut x);
            let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if linf <= half + 1e-12 {
                lo = lo.min(mu.weights[i]);
                hi = hi.max(mu.weights[i]);
            }
        }
        let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        box_ratios.push(BoxRatio {
            half_width: half,
            max_weight: hi,
            min_weight: lo,
            ratio,
        });
    }
    PositivityReport {
        min_weight,
        argmin_node: argmin,
        n_nonpositive,
        strictly_positive: n_nonpositive == 0,
        box_ratios,
    }
}

/// Squared Hellinger distance between two nonnegative weight vectors:
/// `1/2 sum (sqrt(p_i) - sqrt(q_i))^2`.
pub fn hellinger_sq_weights(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * neumaier_sum(p.iter().zip(q).map(|(a, b)| {
        let d = a.sqrt() - b.sqrt();
        d * d
    }))
}

/// Total variation in the positive-plus-negative-parts convention:
/// `sum |p_i - q_i|`, at most 2 for probability vectors.
pub fn tv_distance_weights(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    neumaier_sum(p.iter().zip(q).map(|(a, b)| (a - b).abs()))
}

/// Squared Hellinger distance between two measures on the same grid.
pub fn hellinger_sq(mu1: &InvariantMeasure, mu2: &InvariantMeasure) -> Result<f64> {
    if mu1.grid != mu2.grid {
        return Err(Error::GridMismatch);
    }
    Ok(hellinger_sq_weights(&mu1.weights, &mu2.weights))
}

/// Total variation distance between two measures on the same grid.
pub fn tv_distance(mu1: &InvariantMeasure, mu2: &InvariantMeasure) -> Result<f64> {
    if mu1.grid != mu2.grid {
        return Err(Error::GridMismatch);
    }
    Ok(tv_distance_weights(&mu1.weights, &mu2.weights))
}
