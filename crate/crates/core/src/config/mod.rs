//! TOML problem files, sidecars and experiment configs.
//!
//! A problem file lists its functions in order, objective first:
//!
//! ```toml
//! name = "chain"
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [[function]]
//! [[function.node]]
//! kind = "black"
//! parents = ["x0"]
//! oracle = { type = "named", name = "sin" }
//! kernel = { family = "se", lengthscales = [0.5], output_scale = 1.0 }
//! B = 1.0
//! L = 1.0
//! C = 1.0
//!
//! [[function.node]]
//! kind = "white"
//! parents = ["z0"]
//! expr = { type = "power", exponent = 2.0 }
//! L = 2.0
//! C = 1.0
//! ```

mod experiment;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmarks::Sidecar;
use crate::error::{Error, Result};
use crate::functions::{FourierFunction, KernelExpansion};
use crate::gp::Kernel;
use crate::graph::{Domain, GreyBoxGraph, Input, NamedFn, NodeKind, NodeSpec, Oracle, WhiteBoxExpr};
use crate::problem::{GroundTruth, Problem};

pub use experiment::{Experiment, ProblemSource, SeedList};

/// Named functions that problem files can refer to, for white-box
/// expressions and black-box oracles alike.
#[derive(Clone, Debug)]
pub struct Registry {
    fns: BTreeMap<String, NamedFn>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { fns: BTreeMap::new() }
    }

    /// `sin`, `cos`, `exp`, `tanh`, `square` of one input, and the
    /// Branin function rescaled to `[-1, 1]^2`.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register(NamedFn::new("sin", 1, |s| s[0].sin()));
        r.register(NamedFn::new("cos", 1, |s| s[0].cos()));
        r.register(NamedFn::new("exp", 1, |s| s[0].exp()));
        r.register(NamedFn::new("tanh", 1, |s| s[0].tanh()));
        r.register(NamedFn::new("square", 1, |s| s[0] * s[0]));
        r.register(NamedFn::new("branin", 2, branin_unit));
        r
    }

    pub fn register(&mut self, f: NamedFn) {
        self.fns.insert(f.name().to_string(), f);
    }

    pub fn get(&self, name: &str) -> Option<&NamedFn> {
        self.fns.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(String::as_str)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

fn branin_unit(s: &[f64]) -> f64 {
    use std::f64::consts::PI;
    let x1 = 7.5 * s[0] + 2.5;
    let x2 = 7.5 * s[1] + 7.5;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    ((x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0 - 54.8) / 51.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_kernel: Option<Kernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    #[serde(rename = "function")]
    pub functions: Vec<FunctionFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    #[serde(rename = "node")]
    pub nodes: Vec<NodeFile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindName {
    White,
    Black,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFile {
    /// Optional; when present it must equal the node's position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub kind: KindName,
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<ExprFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub rkhs_bound: Option<f64>,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "C")]
    pub output_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExprFile {
    Identity,
    Affine {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    Quadratic {
        matrix: Vec<f64>,
        linear: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    Product {
        #[serde(default = "one")]
        scale: f64,
    },
    Power {
        exponent: f64,
    },
    Named {
        name: String,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleFile {
    Constant { value: f64 },
    Expansion(KernelExpansion),
    Fourier(FourierFunction),
    Named { name: String },
}

/// Byte offset to 1-based `line:col`.
pub(crate) fn line_col(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("{line}:{col}")
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let at = e.span().map_or_else(|| "?".to_string(), |s| line_col(text, s.start));
        Error::config(format!("{source}:{at}"), e.message().trim().to_string())
    })
}

fn expr_from_file(e: &ExprFile, registry: &Registry, at: &str) -> Result<WhiteBoxExpr> {
    Ok(match e.clone() {
        ExprFile::Identity => WhiteBoxExpr::Identity,
        ExprFile::Affine { coeffs, offset } => WhiteBoxExpr::Affine { coeffs, offset },
        ExprFile::Quadratic { matrix, linear, offset } => WhiteBoxExpr::Quadratic { matrix, linear, offset },
        ExprFile::Product { scale } => WhiteBoxExpr::Product { scale },
        ExprFile::Power { exponent } => WhiteBoxExpr::Power { exponent },
        ExprFile::Named { name } => WhiteBoxExpr::Registered(lookup(registry, &name, at)?),
    })
}

fn oracle_from_file(o: &OracleFile, registry: &Registry, at: &str) -> Result<Oracle> {
    Ok(match o.clone() {
        OracleFile::Constant { value } => Oracle::Constant(value),
        OracleFile::Expansion(f) => Oracle::Expansion(f),
        OracleFile::Fourier(f) => Oracle::Fourier(f),
        OracleFile::Named { name } => Oracle::Custom(lookup(registry, &name, at)?),
    })
}

fn lookup(registry: &Registry, name: &str, at: &str) -> Result<NamedFn> {
    registry.get(name).cloned().ok_or_else(|| {
        let known: Vec<&str> = registry.names().collect();
        Error::config(
            at,
            format!("unknown function `{name}` (registered: {})", known.join(", ")),
        )
    })
}

fn node_from_file(n: &NodeFile, index: usize, registry: &Registry, at: &str) -> Result<NodeSpec> {
    if let Some(id) = n.id {
        if id != index {
            return Err(Error::config(at, format!("id {id} does not match position {index}")));
        }
    }
    let parents = n
        .parents
        .iter()
        .map(|p| {
            p.parse::<Input>()
                .map_err(|e| Error::config(format!("{at}.parents"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    match n.kind {
        KindName::White => {
            if n.oracle.is_some() || n.kernel.is_some() || n.rkhs_bound.is_some() || n.model.is_some() {
                return Err(Error::config(
                    at,
                    "white-box nodes take `expr` only, not oracle/kernel/B/model",
                ));
            }
            let expr = n
                .expr
                .as_ref()
                .ok_or_else(|| Error::config(at, "white-box node needs `expr`"))?;
            let expr = expr_from_file(expr, registry, &format!("{at}.expr"))?;
            Ok(NodeSpec::white(expr, parents, n.lipschitz, n.output_bound))
        }
        KindName::Black => {
            if n.expr.is_some() {
                return Err(Error::config(at, "black-box nodes take `oracle`, not `expr`"));
            }
            let missing = |field: &str| Error::config(at, format!("black-box node needs `{field}`"));
            let oracle = oracle_from_file(n.oracle.as_ref().ok_or_else(|| missing("oracle"))?, registry, at)?;
            let kernel = n.kernel.clone().ok_or_else(|| missing("kernel"))?;
            let b = n.rkhs_bound.ok_or_else(|| missing("B"))?;
            let node = NodeSpec::black(oracle, kernel, b, parents, n.lipschitz, n.output_bound);
            Ok(match &n.model {
                Some(m) => node.with_model(m.clone()),
                None => node,
            })
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        parse_toml(text, source)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidProblem(format!("cannot serialize problem: {e}")))
    }

    /// Validated problem; semantic errors name the offending function and node.
    pub fn build(&self, registry: &Registry) -> Result<Problem> {
        let domain = Domain::new(self.lower.clone(), self.upper.clone())
            .map_err(|e| Error::config("lower/upper", e.to_string()))?;
        if self.functions.is_empty() {
            return Err(Error::config("function", "at least the objective is required"));
        }
        let mut graphs = Vec::with_capacity(self.functions.len());
        for (fi, func) in self.functions.iter().enumerate() {
            let at = format!("function[{fi}]");
            let nodes = func
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| node_from_file(n, i, registry, &format!("{at}.node[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            let graph = GreyBoxGraph::new(domain.clone(), nodes).map_err(|e| Error::config(&at, e.to_string()))?;
            graphs.push(graph);
        }
        let objective = graphs.remove(0);
        let mut problem =
            Problem::new(self.name.clone(), objective, graphs).map_err(|e| Error::config("function", e.to_string()))?;
        if let Some(k) = &self.baseline_kernel {
            problem = problem
                .with_baseline_kernel(k.clone())
                .map_err(|e| Error::config("baseline_kernel", e.to_string()))?;
        }
        if let Some(gt) = &self.ground_truth {
            problem = problem
                .with_ground_truth(gt.clone())
                .map_err(|e| Error::config("ground_truth", e.to_string()))?;
        }
        Ok(problem)
    }

    /// File form of a problem. Closures become `named` references, so the
    /// reader needs a registry that knows them.
    pub fn from_problem(problem: &Problem) -> Self {
        let functions = problem
            .functions()
            .map(|g| FunctionFile {
                nodes: g.nodes().iter().enumerate().map(|(i, n)| node_to_file(n, i)).collect(),
            })
            .collect();
        ProblemFile {
            name: problem.name().to_string(),
            lower: problem.domain().lower().to_vec(),
            upper: problem.domain().upper().to_vec(),
            baseline_kernel: Some(problem.baseline_kernel().clone()),
            ground_truth: problem.ground_truth().cloned(),
            functions,
        }
    }
}

fn node_to_file(n: &NodeSpec, index: usize) -> NodeFile {
    let parents = n.parents.iter().map(Input::to_string).collect();
    let mut file = NodeFile {
        id: Some(index),
        kind: KindName::White,
        parents,
        expr: None,
        oracle: None,
        kernel: None,
        rkhs_bound: None,
        lipschitz: n.lipschitz,
        output_bound: n.output_bound,
        model: None,
    };
    match &n.kind {
        NodeKind::WhiteBox(e) => {
            file.expr = Some(match e {
                WhiteBoxExpr::Identity => ExprFile::Identity,
                WhiteBoxExpr::Affine { coeffs, offset } => ExprFile::Affine {
                    coeffs: coeffs.clone(),
                    offset: *offset,
                },
                WhiteBoxExpr::Quadratic { matrix, linear, offset } => ExprFile::Quadratic {
                    matrix: matrix.clone(),
                    linear: linear.clone(),
                    offset: *offset,
                },
                WhiteBoxExpr::Product { scale } => ExprFile::Product { scale: *scale },
                WhiteBoxExpr::Power { exponent } => ExprFile::Power { exponent: *exponent },
                WhiteBoxExpr::Registered(f) => ExprFile::Named {
                    name: f.name().to_string(),
                },
            });
        }
        NodeKind::BlackBox(b) => {
            file.kind = KindName::Black;
            file.oracle = Some(match &b.oracle {
                Oracle::Constant(value) => OracleFile::Constant { value: *value },
                Oracle::Expansion(f) => OracleFile::Expansion(f.clone()),
                Oracle::Fourier(f) => OracleFile::Fourier(f.clone()),
                Oracle::Custom(f) => OracleFile::Named {
                    name: f.name().to_string(),
                },
            });
            file.kernel = Some(b.kernel.clone());
            file.rkhs_bound = Some(b.rkhs_bound);
            file.model = b.model.clone();
        }
    }
    file
}

pub fn parse_problem(text: &str, source: &str, registry: &Registry) -> Result<Problem> {
    ProblemFile::parse(text, source)?.build(registry)
}

pub fn load_problem(path: &Path, registry: &Registry) -> Result<Problem> {
    let text = fs::read_to_string(path)?;
    parse_problem(&text, &path.display().to_string(), registry)
}

pub fn problem_to_toml(problem: &Problem) -> Result<String> {
    ProblemFile::from_problem(problem).to_toml()
}

pub fn sidecar_to_toml(sidecar: &Sidecar) -> Result<String> {
    toml::to_string(sidecar).map_err(|e| Error::InvalidProblem(format!("cannot serialize sidecar: {e}")))
}

pub fn parse_sidecar(text: &str, source: &str) -> Result<Sidecar> {
    parse_toml(text, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"
name = "chain"
lower = [-1.0]
upper = [1.0]

[[function]]
[[function.node]]
kind = "black"
parents = ["x0"]
oracle = { type = "named", name = "sin" }
kernel = { family = "se", lengthscales = [0.5], output_scale = 1.0 }
B = 1.0
L = 1.0
C = 1.0

[[function.node]]
kind = "white"
parents = ["z0"]
expr = { type = "power", exponent = 2.0 }
L = 2.0
C = 1.0
"#;

    #[test]
    fn parses_and_evaluates() {
        let p = parse_problem(CHAIN, "chain.toml", &Registry::builtin()).unwrap();
        let v = p.objective().value(&[0.5]).unwrap();
        assert!((v - 0.5f64.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let broken = CHAIN.replace("L = 2.0", "L = = 2.0");
        let err = parse_problem(&broken, "chain.toml", &Registry::builtin()).unwrap_err();
        match err {
            Error::ConfigParse { location, .. } => assert!(location.starts_with("chain.toml:20:"), "{location}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = CHAIN.replace("B = 1.0", "B = 1.0\nbogus = 3");
        let err = parse_problem(&text, "p", &Registry::builtin()).unwrap_err();
        assert!(
            matches!(err, Error::ConfigParse { ref location, .. } if location.starts_with("p:")),
            "{err}"
        );
    }

    #[test]
    fn semantic_errors_name_the_node() {
        let text = CHAIN.replace("\"z0\"", "\"z1\"");
        let err = parse_problem(&text, "p", &Registry::builtin()).unwrap_err();
        assert!(
            matches!(err, Error::ConfigParse { ref location, .. } if location == "function[0]"),
            "{err}"
        );
        let text = CHAIN.replace("name = \"sin\"", "name = \"nope\"");
        let err = parse_problem(&text, "p", &Registry::builtin()).unwrap_err();
        assert!(err.to_string().contains("function[0].node[0]"), "{err}");
    }

    #[test]
    fn generated_problems_round_trip() {
        let b = crate::benchmarks::generate_lp_gp(
            1,
            &crate::benchmarks::LpGpOptions {
                features: 32,
                ..Default::default()
            },
        )
        .unwrap()
        .benchmark;
        let text = problem_to_toml(&b.problem).unwrap();
        let back = parse_problem(&text, "lp", &Registry::empty()).unwrap();
        assert_eq!(problem_to_toml(&back).unwrap(), text);
        for x in b.problem.domain().grid(7) {
            assert_eq!(b.problem.evaluate_unchecked(&x), back.evaluate_unchecked(&x));
        }
        let side = sidecar_to_toml(&b.sidecar).unwrap();
        assert_eq!(parse_sidecar(&side, "s").unwrap(), b.sidecar);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), "2:2");
        assert_eq!(line_col("ab", 0), "1:1");
    }
}
