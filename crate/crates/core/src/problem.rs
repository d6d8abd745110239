//! An optimization problem: one objective graph, zero or more constraint
//! graphs `g_k(x) <= 0` over the same input box, and optional ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Kernel;
use crate::graph::{Domain, GreyBoxGraph, Input, NodeKind, NodeSpec, Oracle};

/// Known optimum used for regret accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x: Vec<f64>,
    pub f: f64,
}

/// True values of every function at one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Node outputs per function, objective first.
    pub z: Vec<Vec<f64>>,
    pub f: f64,
    pub g: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Problem {
    name: String,
    objective: GreyBoxGraph,
    constraints: Vec<GreyBoxGraph>,
    ground_truth: Option<GroundTruth>,
    baseline_kernel: Kernel,
}

/// Grid resolution used for sweeps over an `n`-dimensional box.
pub fn sweep_resolution(n: usize) -> usize {
    match n {
        0..=2 => 201,
        3 => 41,
        4 => 15,
        _ => 7,
    }
}

impl Problem {
    pub fn new(name: impl Into<String>, objective: GreyBoxGraph, constraints: Vec<GreyBoxGraph>) -> Result<Self> {
        for (k, g) in constraints.iter().enumerate() {
            if g.domain() != objective.domain() {
                return Err(Error::InvalidProblem(format!(
                    "constraint {k} is defined over a different input box than the objective"
                )));
            }
        }
        let width: f64 = {
            let d = objective.domain();
            (0..d.dim()).map(|i| d.upper()[i] - d.lower()[i]).sum::<f64>() / d.dim() as f64
        };
        let baseline_kernel = Kernel::squared_exponential((0.2 * width).max(1e-3), 1.0)?;
        let p = Problem {
            name: name.into(),
            objective,
            constraints,
            ground_truth: None,
            baseline_kernel,
        };
        p.check_models()?;
        Ok(p)
    }

    /// Black-box nodes sharing a model name must describe the same function.
    fn check_models(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (fi, graph) in self.functions().enumerate() {
            for (i, node) in graph.nodes().iter().enumerate() {
                let Some(bb) = node.black_box() else { continue };
                let Some(name) = bb.model.as_deref() else { continue };
                match seen.get(name) {
                    None => {
                        seen.insert(name, (fi, i));
                    }
                    Some(&(f0, i0)) => {
                        let first = self.function(f0).node(i0);
                        let a = first.black_box().expect("recorded nodes are black boxes");
                        if a.kernel != bb.kernel
                            || a.rkhs_bound != bb.rkhs_bound
                            || a.oracle != bb.oracle
                            || first.parents.len() != node.parents.len()
                        {
                            return Err(Error::InvalidProblem(format!(
                                "model `{name}` is declared with different kernels, bounds, oracles or arities"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn with_ground_truth(mut self, gt: GroundTruth) -> Result<Self> {
        self.objective.domain().check(&gt.x)?;
        self.ground_truth = Some(gt);
        Ok(self)
    }

    pub fn without_ground_truth(mut self) -> Self {
        self.ground_truth = None;
        self
    }

    /// Kernel used for the opaque surrogates of the black-box baseline.
    pub fn with_baseline_kernel(mut self, kernel: Kernel) -> Result<Self> {
        if !kernel.supports_dim(self.input_dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: kernel.lengthscales().len(),
            });
        }
        self.baseline_kernel = kernel;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn objective(&self) -> &GreyBoxGraph {
        &self.objective
    }

    pub fn constraints(&self) -> &[GreyBoxGraph] {
        &self.constraints
    }

    /// Objective first, then the constraints in order.
    pub fn functions(&self) -> impl Iterator<Item = &GreyBoxGraph> {
        std::iter::once(&self.objective).chain(self.constraints.iter())
    }

    pub fn function(&self, index: usize) -> &GreyBoxGraph {
        if index == 0 {
            &self.objective
        } else {
            &self.constraints[index - 1]
        }
    }

    pub fn function_count(&self) -> usize {
        1 + self.constraints.len()
    }

    /// `f` for the objective, `g<k>` for constraint `k`.
    pub fn function_label(index: usize) -> String {
        if index == 0 {
            "f".to_string()
        } else {
            format!("g{}", index - 1)
        }
    }

    pub fn domain(&self) -> &Domain {
        self.objective.domain()
    }

    pub fn input_dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn baseline_kernel(&self) -> &Kernel {
        &self.baseline_kernel
    }

    /// Node count summed over all functions.
    pub fn total_nodes(&self) -> usize {
        self.functions().map(GreyBoxGraph::len).sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let z = self
            .functions()
            .map(|g| g.propagate_true(x))
            .collect::<Result<Vec<_>>>()?;
        let f = *z[0].last().expect("non-empty graph");
        let g = z[1..].iter().map(|v| *v.last().expect("non-empty graph")).collect();
        Ok(Evaluation { z, f, g })
    }

    /// Noise-free values without domain or bound checks.
    pub fn evaluate_unchecked(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let f = *self.objective.propagate_unchecked(x).last().expect("non-empty graph");
        let g = self
            .constraints
            .iter()
            .map(|c| *c.propagate_unchecked(x).last().expect("non-empty graph"))
            .collect();
        (f, g)
    }

    /// The same problem with every function replaced by one opaque black-box
    /// node of `x`. The norm bound of each composite is its grid maximum of
    /// `|f|` plus 10%. Functions that already are a single black-box node of
    /// the full input are kept as they are.
    pub fn blackbox_baseline(&self) -> Result<Problem> {
        let n = self.input_dim();
        let grid = self.domain().grid(sweep_resolution(n));
        let all_x: Vec<Input> = (0..n).map(Input::X).collect();
        let mut graphs = Vec::with_capacity(self.function_count());
        for (k, graph) in self.functions().enumerate() {
            if graph.len() == 1 && graph.node(0).is_black_box() && graph.node(0).parents == all_x {
                graphs.push(graph.clone());
                continue;
            }
            let sup = grid
                .iter()
                .map(|x| graph.propagate_unchecked(x).last().expect("non-empty graph").abs())
                .fold(0.0, f64::max);
            let bound = (1.1 * sup).max(1e-6);
            let inner = graph.clone();
            let label = format!("{}:{}", self.name, Problem::function_label(k));
            let oracle = Oracle::custom(label, n, move |x| {
                *inner.propagate_unchecked(x).last().expect("non-empty graph")
            });
            let lipschitz = graph.nodes().iter().map(|nd| nd.lipschitz).product::<f64>().max(1e-12);
            let node = NodeSpec {
                kind: NodeKind::BlackBox(crate::graph::BlackBoxSpec {
                    oracle,
                    kernel: self.baseline_kernel.clone(),
                    rkhs_bound: bound,
                    model: None,
                }),
                parents: all_x.clone(),
                lipschitz,
                output_bound: bound,
            };
            graphs.push(GreyBoxGraph::new(self.domain().clone(), vec![node])?);
        }
        let objective = graphs.remove(0);
        let mut p = Problem::new(self.name.clone(), objective, graphs)?;
        p.baseline_kernel = self.baseline_kernel.clone();
        p.ground_truth = self.ground_truth.clone();
        Ok(p)
    }
}
