//! Experiment configs:
//!
//! ```toml
//! [experiment]
//! name = "lp"
//! seeds = 20            # or an explicit list, [0, 3, 7]
//! modes = ["greybox", "blackbox"]
//! T = 50
//! delta = 0.05
//! sigma = 0.01
//! lambda = "horizon"    # or a fixed positive number
//! doubling = false
//! beta_scale = 1.0
//!
//! [solver]
//! phase1_points = 2048
//!
//! [[problem]]
//! family = "lp_gp"
//! constraints = 2
//! ```
//!
//! Families: `lp_gp`, `additive`, `squared_composition`, `hybrid_chain`,
//! `one_layer`, `one_layer_reduction`, `margin`, `whitebox_infeasible` and
//! `file` (with `path`, relative to the config file). Generated families draw
//! a fresh instance for every seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{load_problem, parse_toml, Registry};
use crate::acquisition::SolverBudget;
use crate::benchmarks::{
    generate_composite, generate_lp_gp, generate_margin_instance, generate_one_layer, ground_truth,
    one_layer_reduction, whitebox_infeasible, Benchmark, Composite, LpGpOptions,
};
use crate::error::{Error, Result};
use crate::optimizer::{LambdaRule, Mode, RunConfig};
use crate::problem::Problem;

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SeedList {
    /// Seeds `0..n`.
    Count(u64),
    List(Vec<u64>),
}

impl SeedList {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedList::Count(n) => (0..*n).collect(),
            SeedList::List(v) => v.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LambdaSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    name: String,
    seeds: SeedList,
    #[serde(default = "default_modes")]
    modes: Vec<String>,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "default_sigma")]
    sigma: f64,
    #[serde(default)]
    lambda: Option<LambdaSetting>,
    #[serde(default)]
    doubling: bool,
    #[serde(default = "default_beta_scale")]
    beta_scale: f64,
}

fn default_modes() -> Vec<String> {
    vec!["greybox".into(), "blackbox".into()]
}

fn default_delta() -> f64 {
    RunConfig::default().delta
}

fn default_sigma() -> f64 {
    RunConfig::default().sigma
}

fn default_beta_scale() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemEntry {
    family: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    constraints: Option<usize>,
    #[serde(default)]
    features: Option<usize>,
    #[serde(default)]
    margin: Option<f64>,
    #[serde(default)]
    path: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    experiment: ExperimentSection,
    #[serde(default)]
    solver: SolverBudget,
    #[serde(rename = "problem", default)]
    problems: Vec<ProblemEntry>,
}

#[derive(Clone, Debug)]
pub enum ProblemSource {
    LpGp(LpGpOptions),
    Composite(Composite),
    OneLayer { constraints: usize },
    OneLayerReduction,
    Margin { margin: f64 },
    WhiteboxInfeasible,
    File(Box<Problem>),
}

impl ProblemSource {
    /// Default label used in output file names.
    pub fn family(&self) -> String {
        match self {
            ProblemSource::LpGp(_) => "lp_gp".into(),
            ProblemSource::Composite(v) => v.as_str().into(),
            ProblemSource::OneLayer { constraints } => format!("one_layer_k{constraints}"),
            ProblemSource::OneLayerReduction => "one_layer_reduction".into(),
            ProblemSource::Margin { margin } => format!("margin_{margin}"),
            ProblemSource::WhiteboxInfeasible => "whitebox_infeasible".into(),
            ProblemSource::File(p) => p.name().into(),
        }
    }

    /// The instance for one seed.
    pub fn instantiate(&self, seed: u64) -> Result<Benchmark> {
        match self {
            ProblemSource::LpGp(o) => generate_lp_gp(seed, o).map(|i| i.benchmark),
            ProblemSource::Composite(v) => generate_composite(*v, seed),
            ProblemSource::OneLayer { constraints } => generate_one_layer(seed, *constraints),
            ProblemSource::OneLayerReduction => one_layer_reduction(seed),
            ProblemSource::Margin { margin } => generate_margin_instance(seed, *margin),
            ProblemSource::WhiteboxInfeasible => whitebox_infeasible(),
            ProblemSource::File(p) => Ok(Benchmark::from_problem((**p).clone(), "file", seed)),
        }
    }
}

/// Fills in a missing optimum by a grid sweep for inputs of up to three
/// dimensions.
fn with_swept_optimum(problem: Problem) -> Result<Problem> {
    if problem.ground_truth().is_some() || problem.input_dim() > 3 {
        return Ok(problem);
    }
    match ground_truth(&problem) {
        Some(gt) => problem.with_ground_truth(gt),
        None => Ok(problem),
    }
}

/// A validated experiment: which problems, seeds and modes to run, and the
/// shared run settings (`base.seed` and `base.mode` are set per job).
#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub base: RunConfig,
    pub problems: Vec<(String, ProblemSource)>,
}

impl Experiment {
    pub fn from_path(path: &Path, registry: &Registry) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Experiment::parse(&text, &path.display().to_string(), dir, registry)
    }

    /// `base_dir` resolves relative problem paths.
    pub fn parse(text: &str, source: &str, base_dir: &Path, registry: &Registry) -> Result<Self> {
        let file: ExperimentFile = parse_toml(text, source)?;
        let e = file.experiment;
        let at = |field: &str| format!("{source}: experiment.{field}");
        let modes = e
            .modes
            .iter()
            .map(|m| {
                m.parse::<Mode>()
                    .map_err(|err| Error::config(at("modes"), err.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if modes.is_empty() {
            return Err(Error::config(at("modes"), "at least one mode is required"));
        }
        let lambda = match e.lambda {
            None => LambdaRule::Horizon,
            Some(LambdaSetting::Fixed(l)) => LambdaRule::Fixed(l),
            Some(LambdaSetting::Named(s)) if s == "horizon" => LambdaRule::Horizon,
            Some(LambdaSetting::Named(s)) => {
                return Err(Error::config(
                    at("lambda"),
                    format!("expected \"horizon\" or a number, got `{s}`"),
                ))
            }
        };
        let base = RunConfig {
            horizon: e.horizon,
            delta: e.delta,
            sigma: e.sigma,
            lambda,
            budget: file.solver,
            seed: 0,
            mode: modes[0],
            doubling: e.doubling,
            beta_scale: e.beta_scale,
        };
        base.validate()
            .map_err(|err| Error::config(format!("{source}: experiment"), err.to_string()))?;
        let seeds = e.seeds.seeds();
        if seeds.is_empty() {
            return Err(Error::config(at("seeds"), "at least one seed is required"));
        }
        if file.problems.is_empty() {
            return Err(Error::config(
                format!("{source}: problem"),
                "at least one [[problem]] is required",
            ));
        }
        let mut problems = Vec::with_capacity(file.problems.len());
        for (i, entry) in file.problems.into_iter().enumerate() {
            let at = format!("{source}: problem[{i}]");
            let src = source_from_entry(&entry, base_dir, registry).map_err(|err| match err {
                Error::ConfigParse { .. } => err,
                other => Error::config(&at, other.to_string()),
            })?;
            let label = entry.name.clone().unwrap_or_else(|| src.family());
            if label.is_empty() || label.contains(['/', '\\']) {
                return Err(Error::config(
                    &at,
                    format!("`{label}` cannot be used as a file-name label"),
                ));
            }
            if problems.iter().any(|(l, _)| *l == label) {
                return Err(Error::config(
                    &at,
                    format!("duplicate problem label `{label}`; set `name`"),
                ));
            }
            problems.push((label, src));
        }
        Ok(Experiment {
            name: e.name,
            seeds,
            modes,
            base,
            problems,
        })
    }

    pub fn run_config(&self, seed: u64, mode: Mode) -> RunConfig {
        RunConfig {
            seed,
            mode,
            ..self.base.clone()
        }
    }
}

fn source_from_entry(e: &ProblemEntry, base_dir: &Path, registry: &Registry) -> Result<ProblemSource> {
    let unused = |field: &str, set: bool| -> Result<()> {
        if set {
            Err(Error::InvalidParameter(format!(
                "`{field}` does not apply to family `{}`",
                e.family
            )))
        } else {
            Ok(())
        }
    };
    let family = e.family.as_str();
    if family != "lp_gp" {
        unused("features", e.features.is_some())?;
    }
    if !matches!(family, "lp_gp" | "one_layer") {
        unused("constraints", e.constraints.is_some())?;
    }
    if family != "margin" {
        unused("margin", e.margin.is_some())?;
    }
    if family != "file" {
        unused("path", e.path.is_some())?;
    }
    Ok(match family {
        "lp_gp" => {
            let mut o = LpGpOptions::default();
            o.constraints = e.constraints.unwrap_or(o.constraints);
            o.features = e.features.unwrap_or(o.features);
            ProblemSource::LpGp(o)
        }
        "one_layer" => ProblemSource::OneLayer {
            constraints: e.constraints.unwrap_or(2),
        },
        "one_layer_reduction" => ProblemSource::OneLayerReduction,
        "margin" => ProblemSource::Margin {
            margin: e
                .margin
                .ok_or_else(|| Error::InvalidParameter("family `margin` needs `margin`".into()))?,
        },
        "whitebox_infeasible" => ProblemSource::WhiteboxInfeasible,
        "file" => {
            let rel = e
                .path
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("family `file` needs `path`".into()))?;
            let problem = load_problem(&base_dir.join(rel), registry)?;
            ProblemSource::File(Box::new(with_swept_optimum(problem)?))
        }
        other => ProblemSource::Composite(other.parse().map_err(|_| {
            Error::InvalidParameter(format!(
                "unknown family `{other}` (expected lp_gp, additive, squared_composition, hybrid_chain, \
                 one_layer, one_layer_reduction, margin, whitebox_infeasible or file)"
            ))
        })?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Experiment> {
        Experiment::parse(text, "exp.toml", Path::new("."), &Registry::builtin())
    }

    const BASIC: &str = r#"
[experiment]
name = "smoke"
seeds = 2
T = 10

[[problem]]
family = "hybrid_chain"

[[problem]]
family = "lp_gp"
constraints = 1
features = 16
"#;

    #[test]
    fn defaults_fill_in() {
        let e = parse(BASIC).unwrap();
        assert_eq!(e.seeds, vec![0, 1]);
        assert_eq!(e.modes, vec![Mode::Greybox, Mode::Blackbox]);
        assert_eq!(e.base.horizon, 10);
        assert_eq!(e.base.sigma, 0.01);
        assert_eq!(e.base.lambda, LambdaRule::Horizon);
        assert_eq!(e.problems[0].0, "hybrid_chain");
        assert!(matches!(&e.problems[1].1, ProblemSource::LpGp(o) if o.constraints == 1 && o.features == 16));
    }

    #[test]
    fn explicit_seed_list_and_fixed_lambda() {
        let text = BASIC.replace("seeds = 2", "seeds = [4, 9]\nlambda = 2.5\nmodes = [\"greybox\"]");
        let e = parse(&text).unwrap();
        assert_eq!(e.seeds, vec![4, 9]);
        assert_eq!(e.base.lambda, LambdaRule::Fixed(2.5));
        assert_eq!(e.run_config(9, Mode::Greybox).seed, 9);
    }

    #[test]
    fn errors_point_at_fields() {
        let err = parse(&BASIC.replace("T = 10", "T = \"ten\"")).unwrap_err();
        assert!(
            matches!(err, Error::ConfigParse { ref location, .. } if location == "exp.toml:5:5"),
            "{err}"
        );
        let err = parse(&BASIC.replace("family = \"hybrid_chain\"", "family = \"nope\"")).unwrap_err();
        assert!(err.to_string().contains("problem[0]"), "{err}");
        let err = parse(&BASIC.replace("T = 10", "T = 10\nmodes = [\"grey\", \"white\"]")).unwrap_err();
        assert!(err.to_string().contains("experiment.modes"), "{err}");
        let err = parse(&BASIC.replace("constraints = 1", "margin = 0.3")).unwrap_err();
        assert!(err.to_string().contains("margin"), "{err}");
    }

    #[test]
    fn solver_section_is_strict() {
        let text = format!("{BASIC}\n[solver]\nphase1_points = 64\n");
        assert_eq!(parse(&text).unwrap().base.budget.phase1_points, 64);
        assert!(parse(&format!("{BASIC}\n[solver]\npoints = 64\n")).is_err());
    }
}
