//! Controlled-diffusion problem instances, sampled validation of the
//! standing assumptions, and analytic benchmark problems.
//!
//! A problem bundles the coefficients of the generator
//! `L_alpha phi = trace(a(x,alpha) D^2 phi) + b(x,alpha) . grad phi`,
//! the running cost `f(x, alpha)`, a finite discretization of the compact
//! control set, and the growth/ellipticity constants the assumptions refer
//! to. Coefficient functions are opaque, so the assumptions are checked by
//! seeded sampling with explicit witnesses rather than proved.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretize::Grid;
use crate::util::norm2;
use crate::{Error, Result};

type MatrixFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type VectorFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type ScalarFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type ShiftFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Finite discretization of the compact control set `A`, with its
/// axis-aligned bounding box.
#[derive(Debug, Clone)]
pub struct ControlSet {
    points: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ControlSet {
    /// Builds the set from explicit points; all points must share one
    /// dimension and be pairwise distinct. The bounding box is tight.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("control set must be nonempty".into()));
        }
        let k = points[0].len();
        if k == 0 {
            return Err(Error::InvalidArgument(
                "control points must have dimension >= 1".into(),
            ));
        }
        for p in &points {
            if p.len() != k {
                return Err(Error::InvalidArgument(
                    "control points have inconsistent dimensions".into(),
                ));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("control point not finite".into()));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate control points at indices {i} and {j}"
                    )));
                }
            }
        }
        let mut lo = points[0].clone();
        let mut hi = points[0].clone();
        for p in &points {
            for d in 0..k {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Ok(Self { points, lo, hi })
    }

    /// Equispaced scalar controls on `[lo, hi]`; a single point collapses to
    /// the midpoint.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one control".into()));
        }
        let points = if n == 1 {
            vec![vec![0.5 * (lo + hi)]]
        } else {
            (0..n)
                .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
                .collect()
        };
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension of the control vectors.
    pub fn control_dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }
}

/// Growth and ellipticity constants referenced by the standing assumptions:
/// ellipticity window `[lambda_lo, lambda_hi]`, confinement
/// `sup_alpha b.x <= gamma1 - gamma2 |x|^chi`, cost growth
/// `|f| <= k_f (1+|x|)^d`, drift growth `|b| <= k_b (1+|x|)^theta`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthParams {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub chi: f64,
    pub k_f: f64,
    pub d: f64,
    pub k_b: f64,
    pub theta: f64,
}

impl GrowthParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda_lo: f64,
        lambda_hi: f64,
        gamma1: f64,
        gamma2: f64,
        chi: f64,
        k_f: f64,
        d: f64,
        k_b: f64,
        theta: f64,
    ) -> Result<Self> {
        if !(lambda_lo > 0.0) || lambda_hi < lambda_lo {
            return Err(Error::InvalidArgument(format!(
                "need lambda_hi >= lambda_lo > 0, got [{lambda_lo}, {lambda_hi}]"
            )));
        }
        if !(gamma2 > 0.0) || !(chi > 0.0) {
            return Err(Error::InvalidArgument(
                "confinement needs gamma2 > 0 and chi > 0".into(),
            ));
        }
        if !(k_f > 0.0) || !(d >= 1.0) {
            return Err(Error::InvalidArgument(
                "cost growth needs k_f > 0 and d >= 1".into(),
            ));
        }
        if !(k_b > 0.0) || !(0.0 <= theta && theta <= d) {
            return Err(Error::InvalidArgument(
                "drift growth needs k_b > 0 and 0 <= theta <= d".into(),
            ));
        }
        if !gamma1.is_finite() {
            return Err(Error::InvalidArgument("gamma1 must be finite".into()));
        }
        Ok(Self {
            lambda_lo,
            lambda_hi,
            gamma1,
            gamma2,
            chi,
            k_f,
            d,
            k_b,
            theta,
        })
    }
}

/// A controlled-diffusion problem instance. Immutable after construction;
/// the coefficient functions must be pure and reentrant, which makes the
/// whole problem safe to share across threads.
#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    dim: usize,
    controls: ControlSet,
    growth: GrowthParams,
    diffusion: Arc<MatrixFn>,
    drift: Arc<VectorFn>,
    cost: Arc<ScalarFn>,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("n_controls", &self.controls.len())
            .finish()
    }
}

impl ControlProblem {
    /// Wraps user-supplied coefficients. `diffusion` must return the
    /// row-major `dim x dim` matrix `a(x, alpha)`, `drift` the vector
    /// `b(x, alpha)`, `cost` the scalar `f(x, alpha)`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        controls: ControlSet,
        growth: GrowthParams,
        diffusion: Arc<MatrixFn>,
        drift: Arc<VectorFn>,
        cost: Arc<ScalarFn>,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidArgument("state dimension must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            controls,
            growth,
            diffusion,
            drift,
            cost,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn growth(&self) -> &GrowthParams {
        &self.growth
    }

    /// Evaluates `(a, b, f)` at a state for the indexed control. Pure:
    /// repeated calls produce bitwise-identical results.
    pub fn eval_coefficients(
        &self,
        x: &[f64],
        alpha_index: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        if alpha_index >= self.controls.len() {
            return Err(Error::InvalidArgument(format!(
                "control index {alpha_index} out of range (set has {})",
                self.controls.len()
            )));
        }
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "state has dimension {}, problem has {}",
                x.len(),
                self.dim
            )));
        }
        let alpha = self.controls.point(alpha_index);
        let a = (self.diffusion)(x, alpha);
        let b = (self.drift)(x, alpha);
        if a.len() != self.dim * self.dim || b.len() != self.dim {
            return Err(Error::InvalidArgument(
                "coefficient function returned wrong dimensions".into(),
            ));
        }
        let f = (self.cost)(x, alpha);
        Ok((a, b, f))
    }

    /// Derived problem with drift `b + eps * shift(x)`, used by the
    /// invariant-measure perturbation studies. Everything else is shared.
    pub fn perturb_drift(&self, shift: Arc<ShiftFn>, eps: f64) -> ControlProblem {
        let base = Arc::clone(&self.drift);
        let dim = self.dim;
        ControlProblem {
            name: format!("{}_drift_eps_{eps}", self.name),
            dim: self.dim,
            controls: self.controls.clone(),
            growth: self.growth.clone(),
            diffusion: Arc::clone(&self.diffusion),
            drift: Arc::new(move |x: &[f64], alpha: &[f64]| {
                let mut b = base(x, alpha);
                let s = shift(x);
                debug_assert_eq!(s.len(), dim);
                for i in 0..dim {
                    b[i] += eps * s[i];
                }
                b
            }),
            cost: Arc::clone(&self.cost),
        }
    }
}

/// Table of `f(x_i, alpha_k)` over all grid nodes and controls, row-major
/// `n_nodes x n_controls`.
pub fn cost_table(problem: &ControlProblem, grid: &Grid) -> Result<Vec<f64>> {
    if problem.dim() != grid.dim() {
        return Err(Error::InvalidArgument(
            "problem and grid dimensions differ".into(),
        ));
    }
    let n = grid.n_nodes();
    let n_ctrl = problem.controls().len();
    let mut table = vec![0.0; n * n_ctrl];
    let mut x = vec![0.0; grid.dim()];
    for i in 0..n {
        grid.coords_into(i, &mut x);
        for k in 0..n_ctrl {
            let alpha = problem.controls().point(k);
            table[i * n_ctrl + k] = (problem.cost)(&x, alpha);
        }
    }
    Ok(table)
}

/// One assumption's sampled verdict with its worst-case witness.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    /// Worst margin `rhs - lhs` over all samples; negative means violated.
    pub margin: f64,
    pub witness_x: Vec<f64>,
    pub witness_alpha: Vec<f64>,
    /// The two sides of the binding inequality at the witness.
    pub lhs: f64,
    pub rhs: f64,
}

impl AssumptionCheck {
    fn worst() -> Self {
        Self {
            passed: true,
            margin: f64::INFINITY,
            witness_x: Vec::new(),
            witness_alpha: Vec::new(),
            lhs: 0.0,
            rhs: 0.0,
        }
    }

    fn observe(&mut self, margin: f64, x: &[f64], alpha: &[f64], lhs: f64, rhs: f64) {
        if margin < self.margin {
            self.margin = margin;
            self.witness_x = x.to_vec();
            self.witness_alpha = alpha.to_vec();
            self.lhs = lhs;
            self.rhs = rhs;
        }
    }

    fn finish(&mut self, tol: f64) {
        self.passed = self.margin >= -tol;
    }
}

/// Sampled verdicts for the ellipticity (A3), confinement (A4), cost growth
/// (A5) and drift growth (A6) assumptions.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub n_samples: usize,
    pub radius: f64,
    pub seed: u64,
    pub a3: AssumptionCheck,
    pub a4: AssumptionCheck,
    pub a5: AssumptionCheck,
    pub a6: AssumptionCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.a3.passed && self.a4.passed && self.a5.passed && self.a6.passed
    }
}

/// Roundoff slack for assumption margins; several benchmarks satisfy their
/// inequalities with exact equality.
const ASSUMPTION_TOL: f64 = 1e-9;

/// Checks the standing assumptions on `n_samples` points drawn uniformly
/// from the ball of the given radius, crossed with every control.
/// Violations are reported with witnesses, never thrown. Deterministic for
/// a fixed seed.
pub fn validate_assumptions(
    problem: &ControlProblem,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_samples < 1 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let m = problem.dim();
    let g = problem.growth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a3 = AssumptionCheck::worst();
    let mut a4 = AssumptionCheck::worst();
    let mut a5 = AssumptionCheck::worst();
    let mut a6 = AssumptionCheck::worst();

    let mut x = vec![0.0; m];
    let mut xi = vec![0.0; m];
    for _ in 0..n_samples {
        sample_in_ball(&mut rng, radius, &mut x);
        sample_unit(&mut rng, &mut xi);
        let r = norm2(&x);

        let mut a4_lhs = f64::NEG_INFINITY;
        let mut a4_alpha: &[f64] = problem.controls().point(0);
        for k in 0..problem.controls().len() {
            let alpha = problem.controls().point(k);
            let (a, b, f) = problem.eval_coefficients(&x, k)?;

            // A3: xi . a xi within [lambda_lo, lambda_hi] for unit xi,
            // computed scale-free as a Rayleigh quotient.
            let mut quad = 0.0;
            let mut nrm = 0.0;
            for p in 0..m {
                nrm += xi[p] * xi[p];
                for q in 0..m {
                    quad += xi[p] * a[p * m + q] * xi[q];
                }
            }
            let s = quad / nrm;
            let lower = s - g.lambda_lo;
            let upper = g.lambda_hi - s;
            if lower <= upper {
                a3.observe(lower, &x, alpha, s, g.lambda_lo);
            } else {
                a3.observe(upper, &x, alpha, s, g.lambda_hi);
            }

            // A4 takes the sup over controls before comparing.
            let bx: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
            if bx > a4_lhs {
                a4_lhs = bx;
                a4_alpha = alpha;
            }

            // A5: |f| <= k_f (1+|x|)^d.
            let a5_rhs = g.k_f * (1.0 + r).powf(g.d);
            a5.observe(a5_rhs - f.abs(), &x, alpha, f.abs(), a5_rhs);

            // A6: |b| <= k_b (1+|x|)^theta.
            let bn = norm2(&b);
            let a6_rhs = g.k_b * (1.0 + r).powf(g.theta);
            a6.observe(a6_rhs - bn, &x, alpha, bn, a6_rhs);
        }
        let a4_rhs = g.gamma1 - g.gamma2 * r.powf(g.chi);
        a4.observe(a4_rhs - a4_lhs, &x, a4_alpha, a4_lhs, a4_rhs);
    }

    for check in [&mut a3, &mut a4, &mut a5, &mut a6] {
        let scale = check.lhs.abs().max(check.rhs.abs()).max(1.0);
        check.finish(ASSUMPTION_TOL * scale);
    }
    Ok(AssumptionReport {
        n_samples,
        radius,
        seed,
        a3,
        a4,
        a5,
        a6,
    })
}

fn sample_in_ball(rng: &mut ChaCha8Rng, radius: f64, out: &mut [f64]) {
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut() {
            *v = rng.gen_range(-radius..=radius);
            norm_sq += *v * *v;
        }
        if norm_sq <= radius * radius {
            return;
        }
    }
}

fn sample_unit(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut() {
            *v = rng.gen_range(-1.0..=1.0);
            norm_sq += *v * *v;
        }
        if norm_sq >= 1e-6 && norm_sq <= 1.0 {
            let n = norm_sq.sqrt();
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}

/// Names of the shipped benchmark problems.
pub fn builtin_names() -> &'static [&'static str] {
    &["doublewell1d", "lq1d", "ou1d", "ou2d"]
}

/// Parameter keys accepted by a builtin problem.
pub fn builtin_param_names(name: &str) -> Result<&'static [&'static str]> {
    match name {
        "ou1d" | "ou2d" => Ok(&[]),
        "lq1d" => Ok(&["M", "n_ctrl"]),
        "doublewell1d" => Ok(&["n_ctrl"]),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: builtin_names().iter().map(|s| s.to_string()).collect(),
        }),
    }
}

fn check_params(name: &str, params: &BTreeMap<String, f64>) -> Result<()> {
    let allowed = builtin_param_names(name)?;
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "problem `{name}` does not accept parameter `{key}`; allowed: [{}]",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn integer_param(params: &BTreeMap<String, f64>, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(&v) => {
            if v.fract() != 0.0 || v < 1.0 || v > 1e6 {
                Err(Error::InvalidArgument(format!(
                    "parameter `{key}` must be a positive integer, got {v}"
                )))
            } else {
                Ok(v as usize)
            }
        }
    }
}

/// Returns a named benchmark instance.
///
/// * `ou1d` - 1-D Ornstein-Uhlenbeck, `a = 1`, `b = -x`, `f = x^2`,
///   singleton control: the linear (ergodic Poisson) case with invariant
///   measure N(0, 1) and `c = 1`.
/// * `lq1d` - ergodic linear-quadratic control, `a = 1`, `b = alpha`,
///   `f = x^2 + alpha^2`, `A = [-M, M]` discretized into `n_ctrl` points;
///   the optimal feedback is `alpha = -x` with `c = 2`.
/// * `doublewell1d` - `a = 1`, `b = x - x^3`, `f = 1_{x > 0} + alpha^2`,
///   `A = [-1, 1]`; the indicator cost is Borel-measurable but
///   discontinuous.
/// * `ou2d` - anisotropic 2-D Ornstein-Uhlenbeck with a diffusion cross
///   term, `a = [[1, 1/4], [1/4, 1]]`, `b = (-x_1, -2 x_2)`, `f = |x|^2`;
///   the invariant measure is N(0, S) with `S = [[1, 1/6], [1/6, 1/2]]`,
///   so `c = 1.5`.
pub fn builtin_problem(name: &str, params: &BTreeMap<String, f64>) -> Result<ControlProblem> {
    check_params(name, params)?;
    match name {
        "ou1d" => ControlProblem::new(
            "ou1d",
            1,
            ControlSet::new(vec![vec![0.0]])?,
            GrowthParams::new(1.0, 1.0, 0.0, 1.0, 2.0, 1.0, 2.0, 1.0, 1.0)?,
            Arc::new(|_x, _a| vec![1.0]),
            Arc::new(|x, _a| vec![-x[0]]),
            Arc::new(|x, _a| x[0] * x[0]),
        ),
        "lq1d" => {
            let m_max = match params.get("M") {
                None => 4.0,
                Some(&v) => {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "parameter `M` must be positive, got {v}"
                        )));
                    }
                    v
                }
            };
            let n_ctrl = integer_param(params, "n_ctrl", 81)?;
            ControlProblem::new(
                "lq1d",
                1,
                ControlSet::linspace(-m_max, m_max, n_ctrl)?,
                GrowthParams::new(
                    1.0,
                    1.0,
                    11.0 * (m_max + 1.0),
                    1.0,
                    1.0,
                    1.0 + m_max * m_max,
                    2.0,
                    m_max,
                    0.0,
                )?,
                Arc::new(|_x, _a| vec![1.0]),
                Arc::new(|_x, a| vec![a[0]]),
                Arc::new(|x, a| x[0] * x[0] + a[0] * a[0]),
            )
        }
        "doublewell1d" => {
            let n_ctrl = integer_param(params, "n_ctrl", 5)?;
            ControlProblem::new(
                "doublewell1d",
                1,
                ControlSet::linspace(-1.0, 1.0, n_ctrl)?,
                GrowthParams::new(1.0, 1.0, 0.6, 0.5, 4.0, 2.0, 3.0, 1.0, 3.0)?,
                Arc::new(|_x, _a| vec![1.0]),
                Arc::new(|x, _a| vec![x[0] - x[0] * x[0] * x[0]]),
                Arc::new(|x, a| if x[0] > 0.0 { 1.0 } else { 0.0 } + a[0] * a[0]),
            )
        }
        "ou2d" => ControlProblem::new(
            "ou2d",
            2,
            ControlSet::new(vec![vec![0.0]])?,
            GrowthParams::new(0.7, 1.3, 0.0, 1.0, 2.0, 1.0, 2.0, 2.0, 1.0)?,
            Arc::new(|_x, _a| vec![1.0, 0.25, 0.25, 1.0]),
            Arc::new(|x, _a| vec![-x[0], -2.0 * x[1]]),
            Arc::new(|x, _a| x[0] * x[0] + x[1] * x[1]),
        ),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: builtin_names().iter().map(|s| s.to_string()).collect(),
        }),
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// 1-D problem with constant drift and unit diffusion; only used to
    /// exercise the stencil.
    pub fn constant_drift_problem(b0: f64) -> ControlProblem {
        ControlProblem::new(
            "const_drift",
            1,
            ControlSet::new(vec![vec![0.0]]).unwrap(),
            GrowthParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, b0.abs() + 1.0, 0.0)
                .unwrap(),
            Arc::new(|_x, _a| vec![1.0]),
            Arc::new(move |_x, _a| vec![b0]),
            Arc::new(|_x, _a| 0.0),
        )
        .unwrap()
    }

    /// 2-D driftless problem with an adjustable diffusion cross term.
    pub fn anisotropic_problem(a12: f64) -> ControlProblem {
        ControlProblem::new(
            "anisotropic",
            2,
            ControlSet::new(vec![vec![0.0]]).unwrap(),
            GrowthParams::new(0.1, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap(),
            Arc::new(move |_x, _a| vec![1.0, a12, a12, 1.0]),
            Arc::new(|_x, _a| vec![0.0, 0.0]),
            Arc::new(|_x, _a| 0.0),
        )
        .unwrap()
    }
}
