//! The four subcommands: solve, verify, sweep, oracle. Each writes CSV/JSON
//! artifacts into the output directory and reports through the exit-code
//! contract: 0 success, 1 verification failure, 2 usage/config error,
//! 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ergodic_hjb::discretize::{Grid, Policy};
use ergodic_hjb::dual::{lp_dual_solve, optimality_report, OptimalityReport, OptimalityTolerances};
use ergodic_hjb::primal::{
    enumerate_policies_oracle, policy_iteration, ErgodicSolution, PolicyIterationOpts,
};
use ergodic_hjb::problem::{builtin_problem, validate_assumptions, ControlProblem};
use ergodic_hjb::util::format_f64;
use ergodic_hjb::verify::{
    continuity_f_study, distance_estimate_study, moment_truncation_sweep,
    uniqueness_up_to_constant,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, StudiesConfig, SweepAxis};

pub enum CliError {
    /// Exit 2: bad usage or configuration.
    Config(String),
    /// Exit 1: a verification verdict failed.
    Verification(Vec<String>),
    /// Exit 3: a solver failed; stage names where.
    Numerical { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) => 1,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(msg) => format!("config error: {msg}"),
            CliError::Verification(names) => {
                format!("verification failed: {}", names.join(", "))
            }
            CliError::Numerical { stage, message } => {
                format!("numerical failure in {stage}: {message}")
            }
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize, Clone)]
struct Provenance {
    config_sha256: String,
    version: &'static str,
    seed: u64,
    problem: String,
    grid_radius: f64,
    grid_n_per_axis: usize,
}

fn provenance(cfg: &RunConfig, config_text: &str) -> Provenance {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    Provenance {
        config_sha256: format!("{:x}", hasher.finalize()),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        problem: cfg.problem.name.clone(),
        grid_radius: cfg.grid.radius,
        grid_n_per_axis: cfg.grid.n_per_axis,
    }
}

fn build_instance(cfg: &RunConfig) -> Result<(ControlProblem, Grid)> {
    let problem = builtin_problem(&cfg.problem.name, &cfg.problem.params)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let grid = Grid::new(problem.dim(), cfg.grid.radius, cfg.grid.n_per_axis)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(anchor) = cfg.solver.anchor {
        if anchor >= grid.n_nodes() {
            return Err(CliError::Config(format!(
                "[solver] anchor {anchor} out of range for {} nodes",
                grid.n_nodes()
            )));
        }
    }
    Ok((problem, grid))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical {
            stage: "serialize".into(),
            message: e.to_string(),
        })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Numerical {
        stage: "write".into(),
        message: format!("{}: {e}", path.display()),
    })
}

fn write_error_json(out_dir: &Path, prov: &Provenance, stage: &str, message: &str) {
    #[derive(Serialize)]
    struct ErrorJson<'a> {
        stage: &'a str,
        error: &'a str,
        provenance: &'a Provenance,
    }
    let _ = fs::create_dir_all(out_dir);
    let _ = serde_json::to_string_pretty(&ErrorJson {
        stage,
        error: message,
        provenance: prov,
    })
    .map(|mut text| {
        text.push('\n');
        fs::write(out_dir.join("error.json"), text)
    });
}

fn numerical(stage: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Numerical {
        stage: stage.into(),
        message: e.to_string(),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!(
        "cannot create output directory {}: {e}",
        dir.display()
    )))
}

fn solve_with_opts(
    problem: &ControlProblem,
    grid: &Grid,
    cfg: &RunConfig,
) -> std::result::Result<ErgodicSolution, ergodic_hjb::Error> {
    let opts = PolicyIterationOpts {
        anchor: cfg.solver.anchor,
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        initial_policy: None,
    };
    policy_iteration(problem, grid, &opts)
}

#[derive(Serialize)]
struct Residuals {
    poisson: f64,
    hjb_sup: f64,
}

#[derive(Serialize)]
struct SolveSummary {
    c: f64,
    iterations: usize,
    anchor_index: usize,
    history: Vec<f64>,
    residuals: Residuals,
    optimality: OptimalityReport,
    provenance: Provenance,
}

/// `solve`: writes `solution.csv` and `summary.json`.
pub fn run_solve(cfg: &RunConfig, config_text: &str, out_dir: &Path) -> Result<()> {
    let prov = provenance(cfg, config_text);
    let (problem, grid) = build_instance(cfg)?;
    ensure_out_dir(out_dir)?;
    let sol = solve_with_opts(&problem, &grid, cfg).map_err(|e| {
        write_error_json(out_dir, &prov, "policy_iteration", &e.to_string());
        numerical("policy_iteration", e)
    })?;
    let report = optimality_report(&problem, &grid, &sol, &OptimalityTolerances::default())
        .map_err(|e| {
            write_error_json(out_dir, &prov, "optimality_report", &e.to_string());
            numerical("optimality_report", e)
        })?;

    let mut csv = Vec::new();
    sol.write_csv(&problem, &mut csv)
        .map_err(|e| numerical("write solution.csv", e))?;
    fs::write(out_dir.join("solution.csv"), csv)
        .map_err(|e| numerical("write solution.csv", e))?;

    let summary = SolveSummary {
        c: sol.c,
        iterations: sol.iterations,
        anchor_index: sol.anchor_index,
        history: sol.history.clone(),
        residuals: Residuals {
            poisson: sol.poisson_residual,
            hjb_sup: sol.hjb_residual_sup,
        },
        optimality: report,
        provenance: prov,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    println!(
        "solve: c = {}, {} iterations, artifacts in {}",
        sol.c,
        sol.iterations,
        out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StudyVerdict {
    study: String,
    pass: bool,
    detail: serde_json::Value,
}

fn nearest_control_index(problem: &ControlProblem, target: f64) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for k in 0..problem.controls().len() {
        let d = (problem.controls().point(k)[0] - target).abs();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn run_one_study(
    name: &str,
    problem: &ControlProblem,
    grid: &Grid,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<StudyVerdict> {
    let studies: &StudiesConfig = &cfg.studies;
    match name {
        "assumptions" => {
            let report = validate_assumptions(problem, 10_000, 10.0, cfg.seed)
                .map_err(|e| numerical("assumptions", e))?;
            let mut csv = String::from("assumption,passed,margin,lhs,rhs\n");
            for (label, check) in [
                ("A3", &report.a3),
                ("A4", &report.a4),
                ("A5", &report.a5),
                ("A6", &report.a6),
            ] {
                csv.push_str(&format!(
                    "{label},{},{},{},{}\n",
                    check.passed,
                    format_f64(check.margin),
                    format_f64(check.lhs),
                    format_f64(check.rhs)
                ));
            }
            fs::write(out_dir.join("assumptions.csv"), csv)
                .map_err(|e| numerical("write assumptions.csv", e))?;
            let pass = report.all_passed();
            Ok(StudyVerdict {
                study: name.into(),
                pass,
                detail: serde_json::to_value(&report).unwrap(),
            })
        }
        "uniqueness" => {
            let n = grid.n_nodes();
            let k = problem.controls().len();
            let center = grid.center_index();
            let offset = (center + grid.n_per_axis() / 4).min(n - 1);
            let inits = [Policy::uniform(n, 0), Policy::uniform(n, k - 1)];
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for anchor2 in [center, offset] {
                for (j, init2) in inits.iter().enumerate() {
                    let dev = uniqueness_up_to_constant(
                        problem,
                        grid,
                        (center, anchor2),
                        (&inits[0], init2),
                    )
                    .map_err(|e| numerical("uniqueness", e))?;
                    worst = worst.max(dev);
                    rows.push((center, anchor2, 0usize, j, dev));
                }
            }
            let mut csv = String::from("anchor_a,anchor_b,init_a,init_b,deviation\n");
            for (a, b, ia, ib, dev) in &rows {
                csv.push_str(&format!("{a},{b},{ia},{ib},{}\n", format_f64(*dev)));
            }
            fs::write(out_dir.join("uniqueness.csv"), csv)
                .map_err(|e| numerical("write uniqueness.csv", e))?;
            Ok(StudyVerdict {
                study: name.into(),
                pass: worst <= 1e-8,
                detail: serde_json::json!({ "max_deviation": worst, "tolerance": 1e-8 }),
            })
        }
        "distance" => {
            let pert: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync> =
                Arc::new(|x: &[f64]| x.iter().map(|v| -0.2 * v).collect());
            let study = distance_estimate_study(problem, pert, &studies.epsilons, grid)
                .map_err(|e| numerical("distance", e))?;
            let mut csv = Vec::new();
            study
                .write_csv(&mut csv)
                .map_err(|e| numerical("write distance.csv", e))?;
            fs::write(out_dir.join("distance.csv"), csv)
                .map_err(|e| numerical("write distance.csv", e))?;
            Ok(StudyVerdict {
                study: name.into(),
                pass: study.pass(),
                detail: serde_json::to_value(&study).unwrap(),
            })
        }
        "continuity" => {
            if problem.controls().len() < 2 {
                return Ok(StudyVerdict {
                    study: name.into(),
                    pass: true,
                    detail: serde_json::json!({
                        "skipped": "problem has a single control; nothing to compare"
                    }),
                });
            }
            let n = grid.n_nodes();
            let base = nearest_control_index(problem, 0.0);
            let mut deltas = studies.deltas.clone();
            deltas.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let pairs: Vec<(Policy, Policy)> = deltas
                .iter()
                .map(|d| {
                    (
                        Policy::uniform(n, nearest_control_index(problem, *d)),
                        Policy::uniform(n, base),
                    )
                })
                .collect();
            let study = continuity_f_study(problem, grid, &pairs)
                .map_err(|e| numerical("continuity", e))?;
            let mut csv = Vec::new();
            study
                .write_csv(&mut csv)
                .map_err(|e| numerical("write continuity.csv", e))?;
            fs::write(out_dir.join("continuity.csv"), csv)
                .map_err(|e| numerical("write continuity.csv", e))?;
            // Along the shrinking family the cost difference must shrink too.
            let monotone = study.rows.windows(2).all(|w| w[1].lhs <= w[0].lhs + 1e-12);
            Ok(StudyVerdict {
                study: name.into(),
                pass: study.pass() && monotone,
                detail: serde_json::json!({
                    "max_implied_c": study.max_implied_c,
                    "all_finite": study.all_finite,
                    "family_monotone": monotone,
                }),
            })
        }
        "moments" => {
            let sweep = moment_truncation_sweep(
                problem,
                &studies.orders,
                &studies.radii,
                grid.spacing(),
            )
            .map_err(|e| numerical("moments", e))?;
            let mut csv = Vec::new();
            sweep
                .write_csv(&mut csv)
                .map_err(|e| numerical("write moments.csv", e))?;
            fs::write(out_dir.join("moments.csv"), csv)
                .map_err(|e| numerical("write moments.csv", e))?;
            Ok(StudyVerdict {
                study: name.into(),
                pass: sweep.pass(),
                detail: serde_json::to_value(&sweep).unwrap(),
            })
        }
        "accuracy" => {
            let sol = solve_with_opts(problem, grid, cfg)
                .map_err(|e| numerical("accuracy solve", e))?;
            let verdict = accuracy_verdict(problem, grid, &sol);
            let mut csv = String::from("quantity,value,target,tolerance,pass\n");
            for row in &verdict.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.quantity,
                    format_f64(row.value),
                    format_f64(row.target),
                    format_f64(row.tolerance),
                    row.pass
                ));
            }
            fs::write(out_dir.join("accuracy.csv"), csv)
                .map_err(|e| numerical("write accuracy.csv", e))?;
            let pass = verdict.rows.iter().all(|r| r.pass);
            Ok(StudyVerdict {
                study: name.into(),
                pass,
                detail: serde_json::to_value(&verdict).unwrap(),
            })
        }
        other => Err(CliError::Config(format!("unknown study `{other}`"))),
    }
}

#[derive(Serialize)]
struct AccuracyRow {
    quantity: String,
    value: f64,
    target: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct AccuracyVerdict {
    rows: Vec<AccuracyRow>,
}

fn accuracy_verdict(problem: &ControlProblem, grid: &Grid, sol: &ErgodicSolution) -> AccuracyVerdict {
    let mut rows = Vec::new();
    let mut push = |quantity: &str, value: f64, target: f64, tol: f64| {
        rows.push(AccuracyRow {
            quantity: quantity.to_string(),
            value,
            target,
            tolerance: tol,
            pass: (value - target).abs() <= tol,
        });
    };
    let window = grid.radius().min(3.0) / 2.0 + 1.5; // |x| <= 3 capped to the box
    match problem.name() {
        "ou1d" => {
            push("c", sol.c, 1.0, 1e-2);
            let mut u_err = 0.0f64;
            for i in 0..grid.n_nodes() {
                let x = grid.node_coords(i)[0];
                if x.abs() <= window.min(3.0) {
                    u_err = u_err.max((sol.u[i] + x * x / 2.0).abs());
                }
            }
            push("corrector_error", u_err, 0.0, 5e-3);
        }
        "lq1d" => {
            push("c", sol.c, 2.0, 2e-2);
            let (lo, hi) = problem.controls().bounds();
            let step = (hi[0] - lo[0]) / (problem.controls().len().max(2) - 1) as f64;
            let mut inside = Vec::new();
            let mut alpha_err = 0.0f64;
            for i in 0..grid.n_nodes() {
                let x = grid.node_coords(i)[0];
                if x.abs() <= window.min(3.0) {
                    let a = problem.controls().point(sol.policy.get(i))[0];
                    alpha_err = alpha_err.max((a + x).abs());
                    inside.push((x, sol.u[i]));
                }
            }
            let shift: f64 =
                inside.iter().map(|(x, u)| u + x * x).sum::<f64>() / inside.len() as f64;
            let u_err = inside
                .iter()
                .map(|(x, u)| (u + x * x - shift).abs())
                .fold(0.0f64, f64::max);
            push("feedback_error", alpha_err, 0.0, step + 1e-12);
            push("corrector_error", u_err, 0.0, 2e-2);
        }
        "ou2d" => {
            push("c", sol.c, 1.5, 1e-2);
        }
        _ => {}
    }
    AccuracyVerdict { rows }
}

#[derive(Serialize)]
struct VerifyReport {
    studies: Vec<StudyVerdict>,
    all_pass: bool,
    provenance: Provenance,
}

/// `verify`: one CSV plus one verdict entry per selected study; exits 0 only
/// if every verdict passes.
pub fn run_verify(cfg: &RunConfig, config_text: &str, out_dir: &Path) -> Result<()> {
    let prov = provenance(cfg, config_text);
    let (problem, grid) = build_instance(cfg)?;
    ensure_out_dir(out_dir)?;
    let mut verdicts = Vec::new();
    for name in &cfg.studies.names {
        let verdict = match run_one_study(name, &problem, &grid, cfg, out_dir) {
            Ok(v) => v,
            Err(CliError::Numerical { stage, message }) => {
                write_error_json(out_dir, &prov, &stage, &message);
                return Err(CliError::Numerical { stage, message });
            }
            Err(other) => return Err(other),
        };
        println!(
            "verify: study {} -> {}",
            verdict.study,
            if verdict.pass { "pass" } else { "FAIL" }
        );
        verdicts.push(verdict);
    }
    let all_pass = verdicts.iter().all(|v| v.pass);
    let failing: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| v.study.clone())
        .collect();
    let report = VerifyReport {
        studies: verdicts,
        all_pass,
        provenance: prov,
    };
    write_json(&out_dir.join("verify_report.json"), &report)?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Verification(failing))
    }
}

#[derive(Serialize)]
struct SweepSummary {
    axis: String,
    values: Vec<f64>,
    c: Vec<f64>,
    hjb_residual_sup: Vec<f64>,
    /// Observed order of convergence per Richardson triplet; present only
    /// when three or more values share a constant refinement ratio.
    observed_orders: Option<Vec<f64>>,
    provenance: Provenance,
}

/// `sweep`: refinement table over h, R or the control-set resolution.
pub fn run_sweep(cfg: &RunConfig, config_text: &str, out_dir: &Path) -> Result<()> {
    let prov = provenance(cfg, config_text);
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a [sweep] section".into()))?;
    let values = &sweep.values;
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    if values.len() > 1 && !increasing && !decreasing {
        return Err(CliError::Config(
            "sweep values must be strictly monotone".into(),
        ));
    }
    if sweep.axis == SweepAxis::NCtrl {
        let allowed = ergodic_hjb::problem::builtin_param_names(&cfg.problem.name)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !allowed.contains(&"n_ctrl") {
            return Err(CliError::Config(format!(
                "problem `{}` does not take n_ctrl; sweep over h or R instead",
                cfg.problem.name
            )));
        }
    }
    ensure_out_dir(out_dir)?;

    let base_spacing = 2.0 * cfg.grid.radius / (cfg.grid.n_per_axis - 1) as f64;
    let mut c_values = Vec::new();
    let mut residuals = Vec::new();
    let mut runtimes = Vec::new();
    for &v in values {
        let mut run_cfg = cfg.clone();
        match sweep.axis {
            SweepAxis::Spacing => {
                if !(v > 0.0) {
                    return Err(CliError::Config(format!("sweep spacing {v} must be positive")));
                }
                let n = (2.0 * cfg.grid.radius / v).round() as usize + 1;
                if n < 3 {
                    return Err(CliError::Config(format!(
                        "sweep spacing {v} leaves fewer than 3 nodes"
                    )));
                }
                run_cfg.grid.n_per_axis = n;
                run_cfg.solver.anchor = None;
            }
            SweepAxis::Radius => {
                if !(v > 0.0) {
                    return Err(CliError::Config(format!("sweep radius {v} must be positive")));
                }
                run_cfg.grid.radius = v;
                run_cfg.grid.n_per_axis = ((2.0 * v / base_spacing).round() as usize + 1).max(3);
                run_cfg.solver.anchor = None;
            }
            SweepAxis::NCtrl => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(CliError::Config(format!(
                        "sweep n_ctrl value {v} must be a positive integer"
                    )));
                }
                run_cfg
                    .problem
                    .params
                    .insert("n_ctrl".to_string(), v);
            }
        }
        let (problem, grid) = build_instance(&run_cfg)?;
        let start = Instant::now();
        let sol = solve_with_opts(&problem, &grid, &run_cfg).map_err(|e| {
            write_error_json(out_dir, &prov, "sweep solve", &e.to_string());
            numerical("sweep solve", e)
        })?;
        runtimes.push(start.elapsed().as_secs_f64());
        c_values.push(sol.c);
        residuals.push(sol.hjb_residual_sup);
    }

    // Observed order from Richardson triplets when the refinement ratio is
    // constant. Wall times are reported but excluded from the
    // reproducibility contract.
    let observed_orders = if values.len() >= 3 {
        let ratios: Vec<f64> = values.windows(2).map(|w| w[0] / w[1]).collect();
        let constant = ratios
            .windows(2)
            .all(|w| (w[0] - w[1]).abs() <= 1e-9 * w[0].abs());
        if constant {
            let mut orders = Vec::new();
            for k in 0..(c_values.len() - 2) {
                let e01 = (c_values[k] - c_values[k + 1]).abs();
                let e12 = (c_values[k + 1] - c_values[k + 2]).abs();
                if e01 > 0.0 && e12 > 0.0 {
                    orders.push((e01 / e12).ln() / ratios[k].abs().ln());
                } else {
                    orders.push(f64::NAN);
                }
            }
            Some(orders)
        } else {
            None
        }
    } else {
        None
    };

    let axis_name = match sweep.axis {
        SweepAxis::Spacing => "h",
        SweepAxis::Radius => "R",
        SweepAxis::NCtrl => "n_ctrl",
    };
    let mut csv = format!("{axis_name},c,hjb_residual_sup,runtime_seconds\n");
    for i in 0..values.len() {
        csv.push_str(&format!(
            "{},{},{},{:.6}\n",
            format_f64(values[i]),
            format_f64(c_values[i]),
            format_f64(residuals[i]),
            runtimes[i]
        ));
    }
    fs::write(out_dir.join("sweep.csv"), csv).map_err(|e| numerical("write sweep.csv", e))?;
    let summary = SweepSummary {
        axis: axis_name.to_string(),
        values: values.clone(),
        c: c_values,
        hjb_residual_sup: residuals,
        observed_orders,
        provenance: prov,
    };
    write_json(&out_dir.join("sweep_summary.json"), &summary)?;
    println!("sweep: {} values along {axis_name}, artifacts in {}", values.len(), out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleComparison {
    c_enumeration: f64,
    c_lp_dual: f64,
    c_policy_iteration: f64,
    max_pairwise_diff: f64,
    tolerance: f64,
    agree: bool,
    provenance: Provenance,
}

/// `oracle`: runs enumeration, the dual LP and policy iteration on one
/// small instance and requires pairwise agreement within 1e-9.
pub fn run_oracle(cfg: &RunConfig, config_text: &str, out_dir: &Path) -> Result<()> {
    let prov = provenance(cfg, config_text);
    let (problem, grid) = build_instance(cfg)?;
    let n = grid.n_nodes();
    let k = problem.controls().len();
    let policies = (k as f64).powi(n as i32);
    if policies > 1e6 || n * k > 5000 {
        return Err(CliError::Config(format!(
            "instance too large for the oracle: |A|^N = {policies:.3e} (bound 1e6), \
             N*|A| = {} (bound 5000); shrink the grid or the control set",
            n * k
        )));
    }
    ensure_out_dir(out_dir)?;
    let (c_enum, _) = enumerate_policies_oracle(&problem, &grid).map_err(|e| {
        write_error_json(out_dir, &prov, "enumeration", &e.to_string());
        numerical("enumeration", e)
    })?;
    let dual = lp_dual_solve(&problem, &grid, cfg.solver.anchor.unwrap_or(grid.center_index()))
        .map_err(|e| {
            write_error_json(out_dir, &prov, "lp_dual_solve", &e.to_string());
            numerical("lp_dual_solve", e)
        })?;
    let sol = solve_with_opts(&problem, &grid, cfg).map_err(|e| {
        write_error_json(out_dir, &prov, "policy_iteration", &e.to_string());
        numerical("policy_iteration", e)
    })?;
    let diffs = [
        (c_enum - dual.c).abs(),
        (c_enum - sol.c).abs(),
        (dual.c - sol.c).abs(),
    ];
    let max_pairwise_diff = diffs.iter().copied().fold(0.0f64, f64::max);
    let agree = max_pairwise_diff <= 1e-9;
    let comparison = OracleComparison {
        c_enumeration: c_enum,
        c_lp_dual: dual.c,
        c_policy_iteration: sol.c,
        max_pairwise_diff,
        tolerance: 1e-9,
        agree,
        provenance: prov,
    };
    write_json(&out_dir.join("comparison.json"), &comparison)?;
    println!(
        "oracle: enumeration {c_enum}, lp {}, policy iteration {}, max diff {max_pairwise_diff:.3e}",
        dual.c, sol.c
    );
    if agree {
        Ok(())
    } else {
        Err(CliError::Verification(vec![format!(
            "oracle disagreement {max_pairwise_diff:.3e} > 1e-9"
        )]))
    }
}

/// Writes `config` artifacts are relative to; the `--out` flag, then the
/// configured directory.
pub fn resolve_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir))
}

/// Keeps stderr reporting in one place.
pub fn fail(err: &CliError) -> i32 {
    let mut stderr = std::io::stderr();
    let _ = writeln!(stderr, "{}", err.message());
    err.exit_code()
}
