//! Nested grey-box functions as ordered chains of elementary node functions.
//!
//! Node `i` computes `z_i = phi_i(parents)` where every parent is either an
//! input coordinate `x_j` or an earlier node output `z_j` (`j < i`). The last
//! node's output is the function value.

mod expr;
mod oracle;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::Kernel;

pub use expr::{Interval, NamedFn, WhiteBoxExpr};
pub use oracle::Oracle;

/// Axis-aligned box of admissible inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::EmptyDomain("domain has no coordinates".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::EmptyDomain(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::EmptyDomain(format!("coordinate {i}: [{lo}, {hi}]")));
            }
        }
        Ok(Domain { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Domain::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        for (i, v) in x.iter().enumerate() {
            if !(self.lower[i] <= *v && *v <= self.upper[i]) {
                return Err(Error::DomainViolation {
                    index: i,
                    value: *v,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.check(x).is_ok()
    }

    /// Maps a point of the unit cube into the box.
    #[inline]
    pub fn from_unit(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = self.lower[i] + u[i].clamp(0.0, 1.0) * (self.upper[i] - self.lower[i]);
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if self.upper[i] > self.lower[i] {
                    rng.random_range(self.lower[i]..=self.upper[i])
                } else {
                    self.lower[i]
                }
            })
            .collect()
    }

    /// Tensor grid with `per_axis` points on each coordinate, last axis fastest.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let per_axis = per_axis.max(1);
        let axis = |i: usize, k: usize| {
            if per_axis == 1 {
                0.5 * (self.lower[i] + self.upper[i])
            } else {
                self.lower[i] + (self.upper[i] - self.lower[i]) * k as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            out.push((0..n).map(|i| axis(i, idx[i])).collect());
            for i in (0..n).rev() {
                idx[i] += 1;
                if idx[i] < per_axis {
                    break;
                }
                idx[i] = 0;
            }
        }
        out
    }
}

/// A node input: coordinate `x_j` or the output `z_j` of node `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Input {
    X(usize),
    Z(usize),
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::X(j) => write!(f, "x{j}"),
            Input::Z(j) => write!(f, "z{j}"),
        }
    }
}

impl FromStr for Input {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("`{s}` is not an input reference (expected x<k> or z<k>)"));
        let (head, tail) = s.split_at_checked(1).ok_or_else(bad)?;
        let idx: usize = tail.parse().map_err(|_| bad())?;
        match head {
            "x" => Ok(Input::X(idx)),
            "z" => Ok(Input::Z(idx)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlackBoxSpec {
    pub oracle: Oracle,
    pub kernel: Kernel,
    pub rkhs_bound: f64,
    /// Surrogate identifier. Nodes of different functions carrying the same
    /// name share one GP; `None` gives the node its own model.
    pub model: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    WhiteBox(WhiteBoxExpr),
    BlackBox(BlackBoxSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub kind: NodeKind,
    pub parents: Vec<Input>,
    pub lipschitz: f64,
    pub output_bound: f64,
}

impl NodeSpec {
    pub fn white(expr: WhiteBoxExpr, parents: Vec<Input>, lipschitz: f64, output_bound: f64) -> Self {
        NodeSpec {
            kind: NodeKind::WhiteBox(expr),
            parents,
            lipschitz,
            output_bound,
        }
    }

    pub fn black(
        oracle: Oracle,
        kernel: Kernel,
        rkhs_bound: f64,
        parents: Vec<Input>,
        lipschitz: f64,
        output_bound: f64,
    ) -> Self {
        NodeSpec {
            kind: NodeKind::BlackBox(BlackBoxSpec {
                oracle,
                kernel,
                rkhs_bound,
                model: None,
            }),
            parents,
            lipschitz,
            output_bound,
        }
    }

    pub fn with_model(mut self, name: impl Into<String>) -> Self {
        if let NodeKind::BlackBox(spec) = &mut self.kind {
            spec.model = Some(name.into());
        }
        self
    }

    pub fn is_black_box(&self) -> bool {
        matches!(self.kind, NodeKind::BlackBox(_))
    }

    pub fn black_box(&self) -> Option<&BlackBoxSpec> {
        match &self.kind {
            NodeKind::BlackBox(b) => Some(b),
            NodeKind::WhiteBox(_) => None,
        }
    }

    /// Noise-free value of the node function at its gathered inputs.
    #[inline]
    pub fn eval(&self, inputs: &[f64]) -> f64 {
        match &self.kind {
            NodeKind::WhiteBox(e) => e.eval(inputs),
            NodeKind::BlackBox(b) => b.oracle.eval(inputs),
        }
    }
}

/// Noisy black-box observation taken at a planned augmented state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub node: usize,
    pub input: Vec<f64>,
    pub value: f64,
}

/// Validated, immutable grey-box function.
#[derive(Clone, Debug, PartialEq)]
pub struct GreyBoxGraph {
    domain: Domain,
    nodes: Vec<NodeSpec>,
    white: Vec<usize>,
    black: Vec<usize>,
}

impl GreyBoxGraph {
    pub fn new(domain: Domain, nodes: Vec<NodeSpec>) -> Result<Self> {
        let white = (0..nodes.len()).filter(|&i| !nodes[i].is_black_box()).collect();
        let black = (0..nodes.len()).filter(|&i| nodes[i].is_black_box()).collect();
        let graph = GreyBoxGraph {
            domain,
            nodes,
            white,
            black,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Checks ordering, bounds and arity of every node.
    pub fn validate(&self) -> Result<()> {
        let n = self.domain.dim();
        if n == 0 {
            return Err(Error::EmptyDomain("domain has no coordinates".into()));
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidProblem("graph has no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let invalid = |reason: String| Error::InvalidNode { node: i, reason };
            if node.parents.is_empty() {
                return Err(invalid("node has no inputs".into()));
            }
            for p in &node.parents {
                match *p {
                    Input::X(j) if j >= n => {
                        return Err(invalid(format!("reads x{j} but the input has {n} coordinates")))
                    }
                    Input::Z(j) if j >= i => return Err(Error::CyclicGraph { node: i, parent: j }),
                    _ => {}
                }
            }
            if !(node.lipschitz.is_finite() && node.lipschitz > 0.0) {
                return Err(invalid(format!(
                    "Lipschitz constant {} must be positive",
                    node.lipschitz
                )));
            }
            if !(node.output_bound.is_finite() && node.output_bound > 0.0) {
                return Err(invalid(format!("output bound {} must be positive", node.output_bound)));
            }
            let arity = node.parents.len();
            match &node.kind {
                NodeKind::WhiteBox(expr) => expr.check(arity).map_err(|e| invalid(e.to_string()))?,
                NodeKind::BlackBox(bb) => {
                    if !(bb.rkhs_bound.is_finite() && bb.rkhs_bound > 0.0) {
                        return Err(invalid(format!("RKHS bound {} must be positive", bb.rkhs_bound)));
                    }
                    if node.output_bound < bb.rkhs_bound {
                        return Err(Error::BoundViolation {
                            node: i,
                            output_bound: node.output_bound,
                            rkhs_bound: bb.rkhs_bound,
                        });
                    }
                    if !bb.kernel.supports_dim(arity) {
                        return Err(invalid(format!(
                            "kernel has {} lengthscales but the node reads {arity} inputs",
                            bb.kernel.lengthscales().len()
                        )));
                    }
                    if let Some(d) = bb.oracle.input_dim() {
                        if d != arity {
                            return Err(invalid(format!("oracle takes {d} inputs but the node reads {arity}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn input_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeSpec {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn white_set(&self) -> &[usize] {
        &self.white
    }

    pub fn black_set(&self) -> &[usize] {
        &self.black
    }

    pub fn terminal(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Collects node `i`'s inputs from `x` and the computed prefix of `z`.
    #[inline]
    pub fn gather(&self, i: usize, x: &[f64], z: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        for p in &self.nodes[i].parents {
            buf.push(match *p {
                Input::X(j) => x[j],
                Input::Z(j) => z[j],
            });
        }
    }

    /// Evaluates every node noise-free at `x`; no domain or bound checks.
    pub fn propagate_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.nodes.len());
        let mut buf = Vec::new();
        for i in 0..self.nodes.len() {
            self.gather(i, x, &z, &mut buf);
            z.push(self.nodes[i].eval(&buf));
        }
        z
    }

    /// True intermediate values `z` at `x`; `z[m - 1]` is the function value.
    pub fn propagate_true(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(x)?;
        let z = self.propagate_unchecked(x);
        for (i, v) in z.iter().enumerate() {
            let bound = self.nodes[i].output_bound;
            if !(v.abs() <= bound) {
                return Err(Error::OutputBoundViolation {
                    node: i,
                    value: v.abs(),
                    bound,
                });
            }
        }
        Ok(z)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(*self.propagate_true(x)?.last().expect("graph is non-empty"))
    }

    /// Queries every black-box node at its planned augmented state
    /// `[x, z_plan prefix]` and adds Gaussian noise with standard deviation
    /// `sigma`.
    pub fn evaluate_plan<R: Rng>(
        &self,
        x: &[f64],
        z_plan: &[f64],
        sigma: f64,
        rng: &mut R,
    ) -> Result<Vec<Observation>> {
        self.domain.check(x)?;
        if z_plan.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                found: z_plan.len(),
            });
        }
        Ok(self
            .black
            .iter()
            .map(|&i| self.observe_node(i, x, z_plan, sigma, rng))
            .collect())
    }

    /// One noisy query of node `i` at `[x, z_plan prefix]`; no domain check.
    pub fn observe_node<R: Rng>(&self, i: usize, x: &[f64], z_plan: &[f64], sigma: f64, rng: &mut R) -> Observation {
        let mut input = Vec::new();
        self.gather(i, x, z_plan, &mut input);
        let clean = self.nodes[i].eval(&input);
        let noise: f64 = if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        Observation {
            node: i,
            input,
            value: clean + noise,
        }
    }

    /// Coefficients `A_i` such that, with probability at least `1 - delta`,
    /// `|z_true - z_plan|` at the terminal node is bounded by
    /// `sum_i A_i beta_i sigma_i` over black-box nodes.
    ///
    /// Obtained by propagating symbolic error vectors through
    /// `e_i <= 2 L_i sum_{parents j} e_j (+ 2 beta_i sigma_i for black boxes)`.
    pub fn discrepancy_constants(&self) -> BTreeMap<usize, f64> {
        let m = self.nodes.len();
        let nb = self.black.len();
        let slot: BTreeMap<usize, usize> = self.black.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut err: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (i, node) in self.nodes.iter().enumerate() {
            let mut e = vec![0.0; nb];
            for p in &node.parents {
                if let Input::Z(j) = *p {
                    for k in 0..nb {
                        e[k] += 2.0 * node.lipschitz * err[j][k];
                    }
                }
            }
            if let Some(&k) = slot.get(&i) {
                e[k] += 2.0;
            }
            err.push(e);
        }
        self.black
            .iter()
            .enumerate()
            .map(|(k, &i)| (i, err[m - 1][k]))
            .collect()
    }
}
