//! Strict run-configuration parsing: flat TOML sections, every key
//! validated, unknown keys rejected with a nearest-match suggestion.
//! Numerical studies die from silently ignored typos, so nothing is.

use std::collections::BTreeMap;

use ergodic_hjb::problem::{builtin_names, builtin_param_names};
use toml::Value;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub radius: f64,
    pub n_per_axis: usize,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub anchor: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            anchor: None,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

pub const STUDY_NAMES: &[&str] = &[
    "assumptions",
    "uniqueness",
    "distance",
    "continuity",
    "moments",
    "accuracy",
];

#[derive(Debug, Clone)]
pub struct StudiesConfig {
    pub names: Vec<String>,
    pub epsilons: Vec<f64>,
    pub radii: Vec<f64>,
    pub orders: Vec<u32>,
    pub deltas: Vec<f64>,
}

impl Default for StudiesConfig {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            epsilons: vec![0.5, 0.25, 0.125],
            radii: Vec::new(), // filled from the grid radius when absent
            orders: vec![0, 2, 4],
            deltas: vec![0.5, 0.25, 0.125],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepAxis {
    Spacing,
    Radius,
    NCtrl,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub studies: StudiesConfig,
    pub sweep: Option<SweepConfig>,
    pub output_dir: String,
    pub seed: u64,
}

/// Levenshtein distance for key suggestions.
fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1];
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur.push((prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

fn suggest(key: &str, known: &[&str]) -> String {
    known
        .iter()
        .map(|k| (edit_distance(key, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3)
        .map(|(_, k)| format!("; did you mean `{k}`?"))
        .unwrap_or_default()
}

fn reject_unknown(section: &str, table: &toml::Table, known: &[&str]) -> Result<()> {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError(format!(
                "unknown key `{key}` in [{section}]{}; allowed: [{}]",
                suggest(key, known),
                known.join(", ")
            )));
        }
    }
    Ok(())
}

fn need_f64(section: &str, key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(x) => Ok(*x as f64),
        _ => Err(ConfigError(format!(
            "[{section}] {key} must be a number, got {v}"
        ))),
    }
}

fn need_usize(section: &str, key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(x) if *x >= 0 => Ok(*x as usize),
        _ => Err(ConfigError(format!(
            "[{section}] {key} must be a nonnegative integer, got {v}"
        ))),
    }
}

fn need_number_list(section: &str, key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|item| need_f64(section, key, item))
            .collect(),
        _ => Err(ConfigError(format!(
            "[{section}] {key} must be an array of numbers"
        ))),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let clamped = offset.min(text.len());
    let mut line = 1;
    let mut col = 1;
    for ch in text[..clamped].chars() {
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Parses and fully validates a configuration document. Unknown sections,
/// unknown keys and out-of-range values are all hard errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        let place = e
            .span()
            .map(|s| {
                let (line, col) = line_col(text, s.start);
                format!(" at line {line}, column {col}")
            })
            .unwrap_or_default();
        ConfigError(format!("config parse error{place}: {}", e.message()))
    })?;

    let top_known = ["problem", "grid", "solver", "studies", "sweep", "output", "seed"];
    reject_unknown("top level", &table, &top_known)?;

    // seed
    let seed = match table.get("seed") {
        None => 0u64,
        Some(Value::Integer(s)) if *s >= 0 => *s as u64,
        Some(v) => {
            return Err(ConfigError(format!(
                "seed must be a nonnegative integer, got {v}"
            )))
        }
    };

    // [problem]
    let problem_tbl = match table.get("problem") {
        Some(Value::Table(t)) => t,
        _ => return Err(ConfigError("missing required section [problem]".into())),
    };
    let name = match problem_tbl.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(v) => return Err(ConfigError(format!("[problem] name must be a string, got {v}"))),
        None => return Err(ConfigError("missing required key [problem] name".into())),
    };
    let allowed_params = builtin_param_names(&name).map_err(|_| {
        ConfigError(format!(
            "unknown problem `{name}`{}; available: [{}]",
            suggest(&name, builtin_names()),
            builtin_names().join(", ")
        ))
    })?;
    let mut problem_known = vec!["name"];
    problem_known.extend_from_slice(allowed_params);
    reject_unknown("problem", problem_tbl, &problem_known)?;
    let mut params = BTreeMap::new();
    for (key, value) in problem_tbl {
        if key != "name" {
            params.insert(key.clone(), need_f64("problem", key, value)?);
        }
    }

    // [grid]
    let grid_tbl = match table.get("grid") {
        Some(Value::Table(t)) => t,
        _ => return Err(ConfigError("missing required section [grid]".into())),
    };
    reject_unknown("grid", grid_tbl, &["radius", "n_per_axis"])?;
    let radius = match grid_tbl.get("radius") {
        Some(v) => need_f64("grid", "radius", v)?,
        None => return Err(ConfigError("missing required key [grid] radius".into())),
    };
    if !(radius > 0.0) {
        return Err(ConfigError(format!(
            "[grid] radius must be positive, got {radius}"
        )));
    }
    let n_per_axis = match grid_tbl.get("n_per_axis") {
        Some(v) => need_usize("grid", "n_per_axis", v)?,
        None => return Err(ConfigError("missing required key [grid] n_per_axis".into())),
    };
    if n_per_axis < 3 {
        return Err(ConfigError(format!(
            "[grid] n_per_axis must be >= 3, got {n_per_axis}"
        )));
    }

    // [solver]
    let mut solver = SolverConfig::default();
    if let Some(v) = table.get("solver") {
        let Value::Table(t) = v else {
            return Err(ConfigError("[solver] must be a table".into()));
        };
        reject_unknown("solver", t, &["anchor", "tol", "max_iter"])?;
        if let Some(v) = t.get("anchor") {
            solver.anchor = Some(need_usize("solver", "anchor", v)?);
        }
        if let Some(v) = t.get("tol") {
            solver.tol = need_f64("solver", "tol", v)?;
            if !(solver.tol > 0.0) {
                return Err(ConfigError("[solver] tol must be positive".into()));
            }
        }
        if let Some(v) = t.get("max_iter") {
            solver.max_iter = need_usize("solver", "max_iter", v)?;
            if solver.max_iter == 0 {
                return Err(ConfigError("[solver] max_iter must be >= 1".into()));
            }
        }
    }

    // [studies]
    let mut studies = StudiesConfig::default();
    if let Some(v) = table.get("studies") {
        let Value::Table(t) = v else {
            return Err(ConfigError("[studies] must be a table".into()));
        };
        reject_unknown(
            "studies",
            t,
            &["names", "epsilons", "radii", "orders", "deltas"],
        )?;
        if let Some(v) = t.get("names") {
            let Value::Array(items) = v else {
                return Err(ConfigError("[studies] names must be an array".into()));
            };
            for item in items {
                let Value::String(s) = item else {
                    return Err(ConfigError("[studies] names must contain strings".into()));
                };
                if !STUDY_NAMES.contains(&s.as_str()) {
                    return Err(ConfigError(format!(
                        "unknown study `{s}`{}; available: [{}]",
                        suggest(s, STUDY_NAMES),
                        STUDY_NAMES.join(", ")
                    )));
                }
                if s == "accuracy" && !["ou1d", "lq1d", "ou2d"].contains(&name.as_str()) {
                    return Err(ConfigError(format!(
                        "study `accuracy` needs a closed-form benchmark \
                         (ou1d, lq1d or ou2d), not `{name}`"
                    )));
                }
                studies.names.push(s.clone());
            }
        }
        if let Some(v) = t.get("epsilons") {
            studies.epsilons = need_number_list("studies", "epsilons", v)?;
        }
        if let Some(v) = t.get("radii") {
            studies.radii = need_number_list("studies", "radii", v)?;
        }
        if let Some(v) = t.get("orders") {
            studies.orders = need_number_list("studies", "orders", v)?
                .into_iter()
                .map(|x| {
                    if x < 0.0 || x.fract() != 0.0 {
                        Err(ConfigError(format!(
                            "[studies] orders must be nonnegative integers, got {x}"
                        )))
                    } else {
                        Ok(x as u32)
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
        }
        if let Some(v) = t.get("deltas") {
            studies.deltas = need_number_list("studies", "deltas", v)?;
        }
    }
    if studies.radii.is_empty() {
        studies.radii = vec![radius, radius + 2.0, radius + 4.0];
    }

    // [sweep]
    let mut sweep = None;
    if let Some(v) = table.get("sweep") {
        let Value::Table(t) = v else {
            return Err(ConfigError("[sweep] must be a table".into()));
        };
        reject_unknown("sweep", t, &["axis", "values"])?;
        let axis = match t.get("axis") {
            Some(Value::String(s)) => match s.as_str() {
                "h" => SweepAxis::Spacing,
                "R" => SweepAxis::Radius,
                "n_ctrl" => SweepAxis::NCtrl,
                other => {
                    return Err(ConfigError(format!(
                        "[sweep] axis must be one of h, R, n_ctrl; got `{other}`"
                    )))
                }
            },
            _ => return Err(ConfigError("[sweep] needs axis = \"h\" | \"R\" | \"n_ctrl\"".into())),
        };
        let values = match t.get("values") {
            Some(v) => need_number_list("sweep", "values", v)?,
            None => return Err(ConfigError("[sweep] needs a values array".into())),
        };
        if values.is_empty() {
            return Err(ConfigError("[sweep] values must be nonempty".into()));
        }
        sweep = Some(SweepConfig { axis, values });
    }

    // [output]
    let mut output_dir = "out".to_string();
    if let Some(v) = table.get("output") {
        let Value::Table(t) = v else {
            return Err(ConfigError("[output] must be a table".into()));
        };
        reject_unknown("output", t, &["dir"])?;
        if let Some(Value::String(s)) = t.get("dir") {
            output_dir = s.clone();
        } else if t.contains_key("dir") {
            return Err(ConfigError("[output] dir must be a string".into()));
        }
    }

    Ok(RunConfig {
        problem: ProblemConfig { name, params },
        grid: GridConfig { radius, n_per_axis },
        solver,
        studies,
        sweep,
        output_dir,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[problem]\nname = \"ou1d\"\n[grid]\nradius = 6.0\nn_per_axis = 241\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.problem.name, "ou1d");
        assert_eq!(cfg.solver.anchor, None);
        assert_eq!(cfg.solver.tol, 1e-10);
        assert_eq!(cfg.solver.max_iter, 200);
        assert_eq!(cfg.output_dir, "out");
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn typo_suggests_nearest_key() {
        let text = "[problem]\nname = \"ou1d\"\n[grid]\nradiuz = 6.0\nn_per_axis = 241\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("radiuz"), "{err}");
        assert!(err.contains("did you mean `radius`?"), "{err}");
    }

    #[test]
    fn negative_radius_is_rejected() {
        let text = "[problem]\nname = \"ou1d\"\n[grid]\nradius = -1.0\nn_per_axis = 241\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("positive"), "{err}");
    }

    #[test]
    fn parse_error_carries_line_and_column() {
        let text = "[problem\nname = \"ou1d\"\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_problem_and_study_are_rejected() {
        let text = "[problem]\nname = \"ou9d\"\n[grid]\nradius = 1.0\nn_per_axis = 11\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("ou1d"), "{err}");

        let text = "[problem]\nname = \"ou1d\"\n[grid]\nradius = 1.0\nn_per_axis = 11\n[studies]\nnames = [\"uniquness\"]\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("did you mean `uniqueness`?"), "{err}");
    }

    #[test]
    fn problem_params_are_validated() {
        let text =
            "[problem]\nname = \"ou1d\"\nM = 4.0\n[grid]\nradius = 1.0\nn_per_axis = 11\n";
        assert!(parse_config(text).is_err());
        let text = "[problem]\nname = \"lq1d\"\nM = 4.0\nn_ctrl = 81\n[grid]\nradius = 6.0\nn_per_axis = 241\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.problem.params["M"], 4.0);
    }

    #[test]
    fn sweep_section_parses() {
        let text = "[problem]\nname = \"ou1d\"\n[grid]\nradius = 6.0\nn_per_axis = 241\n[sweep]\naxis = \"h\"\nvalues = [0.2, 0.1, 0.05]\n";
        let cfg = parse_config(text).unwrap();
        let sweep = cfg.sweep.unwrap();
        assert_eq!(sweep.axis, SweepAxis::Spacing);
        assert_eq!(sweep.values.len(), 3);
    }

    #[test]
    fn accuracy_study_needs_closed_form() {
        let text = "[problem]\nname = \"doublewell1d\"\n[grid]\nradius = 3.0\nn_per_axis = 61\n[studies]\nnames = [\"accuracy\"]\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("closed-form"), "{err}");
    }
}
