use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    estimate_lipschitz, ground_truth, node_input_box, output_bound, reachable_intervals, sweep_node_magnitudes,
    white_lipschitz, Benchmark,
};
use crate::error::{Error, Result};
use crate::functions::KernelExpansion;
use crate::gp::Kernel;
use crate::graph::{Domain, GreyBoxGraph, Input, Interval, NodeKind, NodeSpec, Oracle, WhiteBoxExpr};
use crate::problem::Problem;

/// The three small nested families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Composite {
    /// `phi_1(x_1, x_2) + phi_2(x_2, x_3) + phi_3(x_1, x_3)`
    Additive,
    /// `phi_1(x)^2 + phi_2(x)^2`
    SquaredComposition,
    /// `phi_3(phi_1(x)^2 + 3 phi_1(x) - 3)`
    HybridChain,
}

impl Composite {
    pub const ALL: [Composite; 3] = [
        Composite::Additive,
        Composite::SquaredComposition,
        Composite::HybridChain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Composite::Additive => "additive",
            Composite::SquaredComposition => "squared_composition",
            Composite::HybridChain => "hybrid_chain",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Composite::Additive => 3,
            _ => 2,
        }
    }

    /// Number of black-box oracles the family takes.
    pub fn oracle_count(self) -> usize {
        match self {
            Composite::Additive => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Composite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Composite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Composite::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown family `{s}`")))
    }
}

const RKHS_BOUND: f64 = 1.0;
const CENTERS: usize = 10;

fn input_kernel() -> Kernel {
    Kernel::squared_exponential(0.5, 1.0).expect("valid kernel")
}

/// Kernel of the outer node of the hybrid chain, which reads a wider range.
fn outer_kernel() -> Kernel {
    Kernel::squared_exponential(1.0, 1.0).expect("valid kernel")
}

fn hybrid_middle() -> WhiteBoxExpr {
    WhiteBoxExpr::Quadratic {
        matrix: vec![1.0],
        linear: vec![3.0],
        offset: -3.0,
    }
}

fn structure(variant: Composite, oracles: Vec<Oracle>) -> Vec<NodeSpec> {
    let bb = |o: Oracle, kernel: Kernel, parents: Vec<Input>| NodeSpec::black(o, kernel, RKHS_BOUND, parents, 1.0, 1.0);
    let mut o = oracles.into_iter();
    let mut next = || o.next().expect("oracle count checked");
    match variant {
        Composite::Additive => vec![
            bb(next(), input_kernel(), vec![Input::X(0), Input::X(1)]),
            bb(next(), input_kernel(), vec![Input::X(1), Input::X(2)]),
            bb(next(), input_kernel(), vec![Input::X(0), Input::X(2)]),
            NodeSpec::white(
                WhiteBoxExpr::Affine {
                    coeffs: vec![1.0; 3],
                    offset: 0.0,
                },
                vec![Input::Z(0), Input::Z(1), Input::Z(2)],
                1.0,
                1.0,
            ),
        ],
        Composite::SquaredComposition => vec![
            bb(next(), input_kernel(), vec![Input::X(0), Input::X(1)]),
            bb(next(), input_kernel(), vec![Input::X(0), Input::X(1)]),
            NodeSpec::white(
                WhiteBoxExpr::Quadratic {
                    matrix: vec![1.0, 0.0, 0.0, 1.0],
                    linear: vec![0.0, 0.0],
                    offset: 0.0,
                },
                vec![Input::Z(0), Input::Z(1)],
                1.0,
                1.0,
            ),
        ],
        Composite::HybridChain => vec![
            bb(next(), input_kernel(), vec![Input::X(0), Input::X(1)]),
            NodeSpec::white(hybrid_middle(), vec![Input::Z(0)], 1.0, 1.0),
            bb(next(), outer_kernel(), vec![Input::Z(1)]),
        ],
    }
}

/// Output bounds from a grid sweep, then Lipschitz constants: analytic for
/// white-box nodes, finite-difference estimates for black-box nodes.
pub(super) fn calibrate(domain: &Domain, mut nodes: Vec<NodeSpec>) -> Result<Vec<NodeSpec>> {
    let mags = sweep_node_magnitudes(domain, &nodes)?;
    for (node, mag) in nodes.iter_mut().zip(&mags) {
        node.output_bound = output_bound(node.black_box().map(|b| b.rkhs_bound), *mag);
    }
    for i in 0..nodes.len() {
        let region = node_input_box(domain, &nodes, i);
        nodes[i].lipschitz = match &nodes[i].kind {
            NodeKind::WhiteBox(e) => white_lipschitz(e, &region),
            NodeKind::BlackBox(b) => estimate_lipschitz(&b.oracle, &region),
        };
    }
    Ok(nodes)
}

/// Builds a family member from explicit oracles (in node order) and attaches
/// grid ground truth.
pub fn build_composite(variant: Composite, oracles: Vec<Oracle>) -> Result<Problem> {
    if oracles.len() != variant.oracle_count() {
        return Err(Error::InvalidParameter(format!(
            "{variant} takes {} oracles, got {}",
            variant.oracle_count(),
            oracles.len()
        )));
    }
    let domain = Domain::cube(variant.input_dim(), -1.0, 1.0)?;
    let nodes = calibrate(&domain, structure(variant, oracles))?;
    let graph = GreyBoxGraph::new(domain, nodes)?;
    let problem = Problem::new(variant.as_str(), graph, vec![])?.with_baseline_kernel(input_kernel())?;
    match ground_truth(&problem) {
        Some(gt) => problem.with_ground_truth(gt),
        None => Ok(problem),
    }
}

/// Random member of a family: black-box nodes are kernel expansions with
/// RKHS norm exactly 1.
pub fn generate_composite(variant: Composite, seed: u64) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EC3_3000);
    let square = Domain::cube(2, -1.0, 1.0)?;
    let mut draw = |kernel: Kernel, region: &Domain| -> Result<Oracle> {
        Ok(Oracle::Expansion(KernelExpansion::random(
            kernel, region, CENTERS, RKHS_BOUND, &mut rng,
        )?))
    };
    let oracles = match variant {
        Composite::Additive | Composite::SquaredComposition => (0..variant.oracle_count())
            .map(|_| draw(input_kernel(), &square))
            .collect::<Result<Vec<_>>>()?,
        Composite::HybridChain => {
            let inner = draw(input_kernel(), &square)?;
            // the outer function lives on the range the middle node can reach
            let probe = calibrate(&square, structure(variant, vec![inner.clone(), Oracle::Constant(0.0)]))?;
            let reach: Interval = reachable_intervals(&square, &probe)[1];
            let region = Domain::new(vec![reach.lo], vec![reach.hi])?;
            let outer = draw(outer_kernel(), &region)?;
            vec![inner, outer]
        }
    };
    let problem = build_composite(variant, oracles)?;
    Ok(Benchmark::new(problem, variant.as_str(), seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_structure() {
        let b = generate_composite(Composite::Additive, 1).unwrap();
        let g = b.problem.objective();
        assert_eq!(g.black_set(), &[0, 1, 2]);
        assert_eq!(g.white_set(), &[3]);
        for &i in g.black_set() {
            assert_eq!(g.node(i).parents.len(), 2);
            assert!(g.node(i).parents.iter().all(|p| matches!(p, Input::X(_))));
        }
    }

    #[test]
    fn squared_composition_of_zero_stubs_is_zero() {
        let p = build_composite(
            Composite::SquaredComposition,
            vec![Oracle::Constant(0.0), Oracle::Constant(0.0)],
        )
        .unwrap();
        for x in p.domain().grid(5) {
            assert_eq!(p.objective().value(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn hybrid_middle_constant_matches_derivative_bound() {
        let b = generate_composite(Composite::HybridChain, 4).unwrap();
        let g = b.problem.objective();
        let c = g.node(0).output_bound;
        // sup |2u + 3| over [-C, C]
        assert!((g.node(1).lipschitz - (2.0 * c + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn regeneration_is_reproducible() {
        let a = generate_composite(Composite::HybridChain, 9).unwrap();
        let b = generate_composite(Composite::HybridChain, 9).unwrap();
        assert_eq!(a.sidecar, b.sidecar);
        assert!(a.problem.ground_truth().is_some());
    }
}
