//! Problem generators with ground truth from a dense-grid oracle.

mod composite;
mod constructed;
mod lp_gp;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Domain, GreyBoxGraph, Input, Interval, NodeKind, NodeSpec, Oracle, WhiteBoxExpr};
use crate::problem::{sweep_resolution, GroundTruth, Problem};

pub use composite::{build_composite, generate_composite, Composite};
pub use constructed::{generate_margin_instance, generate_one_layer, one_layer_reduction, whitebox_infeasible};
pub use lp_gp::{generate_lp_gp, lp_gp_kernel, surrogate_kernel, LpGpInstance, LpGpOptions};

/// Constants of one node as set by a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeConstants {
    pub function: usize,
    pub node: usize,
    pub lipschitz: f64,
    pub output_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rkhs_bound: Option<f64>,
}

/// Provenance stored next to a generated problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub family: String,
    pub seed: u64,
    /// Instances discarded before an acceptable one was drawn.
    pub rejections: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    pub constants: Vec<NodeConstants>,
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub problem: Problem,
    pub sidecar: Sidecar,
}

impl Benchmark {
    /// Wraps a problem that was not generated here, such as one read from a file.
    pub fn from_problem(problem: Problem, family: &str, seed: u64) -> Self {
        Benchmark::new(problem, family, seed, 0)
    }

    fn new(problem: Problem, family: &str, seed: u64, rejections: usize) -> Self {
        let constants = problem
            .functions()
            .enumerate()
            .flat_map(|(fi, g)| {
                g.nodes().iter().enumerate().map(move |(i, n)| NodeConstants {
                    function: fi,
                    node: i,
                    lipschitz: n.lipschitz,
                    output_bound: n.output_bound,
                    rkhs_bound: n.black_box().map(|b| b.rkhs_bound),
                })
            })
            .collect();
        let sidecar = Sidecar {
            family: family.to_string(),
            seed,
            rejections,
            ground_truth: problem.ground_truth().cloned(),
            constants,
        };
        Benchmark { problem, sidecar }
    }
}

/// Largest `|z_i|` of every node over the sweep grid of `domain`. Bounds and
/// Lipschitz constants of `nodes` are ignored.
pub fn sweep_node_magnitudes(domain: &Domain, nodes: &[NodeSpec]) -> Result<Vec<f64>> {
    let graph = GreyBoxGraph::new(domain.clone(), relaxed(nodes))?;
    let mut mag = vec![0.0f64; nodes.len()];
    for x in domain.grid(sweep_resolution(domain.dim())) {
        for (m, z) in mag.iter_mut().zip(graph.propagate_unchecked(&x)) {
            *m = m.max(z.abs());
        }
    }
    Ok(mag)
}

fn relaxed(nodes: &[NodeSpec]) -> Vec<NodeSpec> {
    nodes
        .iter()
        .cloned()
        .map(|mut n| {
            n.lipschitz = 1.0;
            n.output_bound = f64::MAX;
            n
        })
        .collect()
}

/// `max(B, 1.1 * sweep maximum)`, never below `1e-6`.
pub fn output_bound(rkhs_bound: Option<f64>, sweep_max: f64) -> f64 {
    rkhs_bound.unwrap_or(0.0).max(1.1 * sweep_max).max(1e-6)
}

/// Conservative ranges every node can reach, true or planned: black-box
/// nodes span `[-C, C]`, white-box nodes the enclosure of their expression.
pub fn reachable_intervals(domain: &Domain, nodes: &[NodeSpec]) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::with_capacity(nodes.len());
    for node in nodes {
        let inputs: Vec<Interval> = node
            .parents
            .iter()
            .map(|p| match *p {
                Input::X(j) => Interval::new(domain.lower()[j], domain.upper()[j]),
                Input::Z(j) => out[j],
            })
            .collect();
        let iv = match &node.kind {
            NodeKind::BlackBox(_) => Interval::symmetric(node.output_bound),
            NodeKind::WhiteBox(e) => e.range(&inputs).unwrap_or(Interval::symmetric(node.output_bound)),
        };
        out.push(iv);
    }
    out
}

/// Input box of node `i` from the reachable ranges of its parents.
pub fn node_input_box(domain: &Domain, nodes: &[NodeSpec], i: usize) -> Vec<Interval> {
    let reach = reachable_intervals(domain, nodes);
    nodes[i]
        .parents
        .iter()
        .map(|p| match *p {
            Input::X(j) => Interval::new(domain.lower()[j], domain.upper()[j]),
            Input::Z(j) => reach[j],
        })
        .collect()
}

/// Lipschitz estimate with respect to the 1-norm: the largest axis-wise
/// finite-difference slope of `oracle` on a grid over `region`, times 1.2.
pub fn estimate_lipschitz(oracle: &Oracle, region: &[Interval]) -> f64 {
    let d = region.len();
    let per_axis = match d {
        1 => 401,
        2 => 101,
        3 => 25,
        _ => 9,
    };
    let lower: Vec<f64> = region.iter().map(|iv| iv.lo).collect();
    let upper: Vec<f64> = region.iter().map(|iv| iv.hi).collect();
    let Ok(dom) = Domain::new(lower, upper) else {
        return 1.0;
    };
    let steps: Vec<f64> = region.iter().map(|iv| iv.width() / (per_axis - 1) as f64).collect();
    let mut slope = 0.0f64;
    let mut shifted = vec![0.0; d];
    for p in dom.grid(per_axis) {
        let base = oracle.eval(&p);
        for j in 0..d {
            if steps[j] <= 0.0 || p[j] + steps[j] > region[j].hi + 1e-12 {
                continue;
            }
            shifted.copy_from_slice(&p);
            shifted[j] += steps[j];
            slope = slope.max((oracle.eval(&shifted) - base).abs() / steps[j]);
        }
    }
    (1.2 * slope).max(1e-6)
}

/// Lipschitz constant of a white-box expression with respect to the 1-norm
/// over `region`: a bound on its largest partial derivative.
pub fn white_lipschitz(expr: &WhiteBoxExpr, region: &[Interval]) -> f64 {
    let mag: Vec<f64> = region.iter().map(Interval::magnitude).collect();
    let l = match expr {
        WhiteBoxExpr::Identity => 1.0,
        WhiteBoxExpr::Affine { coeffs, .. } => coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max),
        WhiteBoxExpr::Quadratic { matrix, linear, .. } => {
            let n = linear.len();
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| (matrix[j * n + k] + matrix[k * n + j]).abs() * mag[k])
                        .sum::<f64>()
                        + linear[j].abs()
                })
                .fold(0.0, f64::max)
        }
        WhiteBoxExpr::Product { scale } => (0..mag.len())
            .map(|j| scale.abs() * (0..mag.len()).filter(|&k| k != j).map(|k| mag[k]).product::<f64>())
            .fold(0.0, f64::max),
        WhiteBoxExpr::Power { exponent } if *exponent >= 1.0 => exponent * mag[0].powf(exponent - 1.0),
        _ => {
            let e = expr.clone();
            let oracle = Oracle::custom("white", region.len(), move |s| e.eval(s));
            return estimate_lipschitz(&oracle, region);
        }
    };
    l.max(1e-6)
}

fn order_points(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    // (excess, objective): feasible points by objective, others by excess
    match (a.0 <= 0.0, b.0 <= 0.0) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a.1.total_cmp(&b.1),
        (false, false) => a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)),
    }
}

/// Constrained optimum over a dense grid, polished by Nelder-Mead. `None`
/// when no grid point satisfies every constraint.
pub fn grid_ground_truth(problem: &Problem, per_axis: usize) -> Option<GroundTruth> {
    let mut best: Option<(Vec<f64>, (f64, f64))> = None;
    for x in problem.domain().grid(per_axis) {
        let k = excess_and_value(problem, &x);
        if best.as_ref().is_none_or(|(_, b)| order_points(&k, b) == Ordering::Less) {
            best = Some((x, k));
        }
    }
    let (x0, k0) = best?;
    if k0.0 > 0.0 {
        return None;
    }
    Some(polish_ground_truth(problem, x0, 1.0 / (per_axis.max(2) - 1) as f64))
}

fn excess_and_value(problem: &Problem, x: &[f64]) -> (f64, f64) {
    let (f, g) = problem.evaluate_unchecked(x);
    (g.iter().map(|v| v.max(0.0)).sum::<f64>(), f)
}

/// Nelder-Mead refinement of a feasible starting point; `step` is the initial
/// simplex size in unit-cube coordinates.
pub fn polish_ground_truth(problem: &Problem, x0: Vec<f64>, step: f64) -> GroundTruth {
    let domain = problem.domain();
    let n = domain.dim();
    let k0 = excess_and_value(problem, &x0);
    let to_unit: Vec<f64> = (0..n)
        .map(|i| {
            let w = domain.upper()[i] - domain.lower()[i];
            if w > 0.0 {
                (x0[i] - domain.lower()[i]) / w
            } else {
                0.0
            }
        })
        .collect();
    let mut x = vec![0.0; n];
    let (u, k) = crate::acquisition::polish(
        &to_unit,
        step,
        400,
        |u| {
            domain.from_unit(u, &mut x);
            excess_and_value(problem, &x)
        },
        order_points,
    );
    if order_points(&k, &k0) == Ordering::Less {
        let mut xs = vec![0.0; n];
        domain.from_unit(&u, &mut xs);
        GroundTruth { x: xs, f: k.1 }
    } else {
        GroundTruth { x: x0, f: k0.1 }
    }
}

/// Default ground-truth resolution for an `n`-dimensional problem.
pub fn ground_truth(problem: &Problem) -> Option<GroundTruth> {
    grid_ground_truth(problem, sweep_resolution(problem.input_dim()))
}
