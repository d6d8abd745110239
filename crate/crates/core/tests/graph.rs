use greybox::functions::KernelExpansion;
use greybox::gp::Kernel;
use greybox::graph::{Domain, GreyBoxGraph, Input, NodeSpec, Oracle, WhiteBoxExpr};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn se() -> Kernel {
    Kernel::squared_exponential(0.5, 1.0).unwrap()
}

fn phi() -> KernelExpansion {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    KernelExpansion::random(se(), &Domain::cube(2, -1.0, 1.0).unwrap(), 5, 1.0, &mut rng).unwrap()
}

fn black(parents: Vec<Input>) -> NodeSpec {
    NodeSpec::black(Oracle::Expansion(phi()), se(), 1.0, parents, 2.0, 1.0)
}

fn affine(parents: Vec<Input>) -> NodeSpec {
    NodeSpec::white(
        WhiteBoxExpr::Affine {
            coeffs: vec![0.7, -1.3],
            offset: 0.25,
        },
        parents,
        1.3,
        5.0,
    )
}

fn product(parents: Vec<Input>) -> NodeSpec {
    NodeSpec::white(WhiteBoxExpr::Product { scale: 2.0 }, parents, 10.0, 20.0)
}

fn quadratic(parents: Vec<Input>) -> NodeSpec {
    NodeSpec::white(
        WhiteBoxExpr::Quadratic {
            matrix: vec![1.0, 0.5, 0.0, -2.0],
            linear: vec![0.1, 0.3],
            offset: -1.0,
        },
        parents,
        100.0,
        2000.0,
    )
}

/// `d = Q(c, a)` with `a = phi(x)`, `b = A(x)`, `c = 2 a b`.
fn nested(x: &[f64]) -> f64 {
    let a = phi().eval(x);
    let b = 0.7 * x[0] - 1.3 * x[1] + 0.25;
    let c = 2.0 * a * b;
    c * c + 0.5 * c * a - 2.0 * a * a + 0.1 * c + 0.3 * a - 1.0
}

fn domain() -> Domain {
    Domain::cube(2, -1.0, 1.0).unwrap()
}

fn xs() -> [Input; 2] {
    [Input::X(0), Input::X(1)]
}

#[test]
fn four_node_graph_matches_direct_nesting() {
    let g = GreyBoxGraph::new(
        domain(),
        vec![
            black(xs().to_vec()),
            affine(xs().to_vec()),
            product(vec![Input::Z(0), Input::Z(1)]),
            quadratic(vec![Input::Z(2), Input::Z(0)]),
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let x = domain().sample(&mut rng);
        let v = g.value(&x).unwrap();
        let expect = nested(&x);
        assert!((v - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{v} vs {expect}");
    }
}

#[test]
fn value_does_not_depend_on_topological_order() {
    let first = GreyBoxGraph::new(
        domain(),
        vec![
            black(xs().to_vec()),
            affine(xs().to_vec()),
            product(vec![Input::Z(0), Input::Z(1)]),
            quadratic(vec![Input::Z(2), Input::Z(0)]),
        ],
    )
    .unwrap();
    let swapped = GreyBoxGraph::new(
        domain(),
        vec![
            affine(xs().to_vec()),
            black(xs().to_vec()),
            product(vec![Input::Z(1), Input::Z(0)]),
            quadratic(vec![Input::Z(2), Input::Z(1)]),
        ],
    )
    .unwrap();
    for x in domain().grid(15) {
        assert_eq!(first.value(&x).unwrap(), swapped.value(&x).unwrap());
    }
    let a = first.discrepancy_constants();
    let b = swapped.discrepancy_constants();
    assert_eq!(a[&0], b[&1]);
}

/// Sum over every directed path from node `i` to the terminal node of
/// `2 prod (2 L_v)` over the nodes `v` after `i` on the path.
fn path_constant(g: &GreyBoxGraph, i: usize) -> f64 {
    let last = g.len() - 1;
    fn walk(g: &GreyBoxGraph, node: usize, last: usize, weight: f64) -> f64 {
        if node == last {
            return weight;
        }
        let mut total = 0.0;
        for child in node + 1..g.len() {
            let edges = g.node(child).parents.iter().filter(|p| **p == Input::Z(node)).count();
            for _ in 0..edges {
                total += walk(g, child, last, weight * 2.0 * g.node(child).lipschitz);
            }
        }
        total
    }
    walk(g, i, last, 2.0)
}

#[derive(Debug, Clone)]
struct NodeDraw {
    black: bool,
    parents: Vec<usize>,
    lipschitz: f64,
}

fn random_graph() -> impl Strategy<Value = Vec<NodeDraw>> {
    (2usize..7).prop_flat_map(|m| {
        (0..m)
            .map(|i| {
                (any::<bool>(), prop::collection::vec(0..=i, 1..4), 0.1f64..3.0).prop_map(
                    |(black, parents, lipschitz)| NodeDraw {
                        black,
                        parents,
                        lipschitz,
                    },
                )
            })
            .collect::<Vec<_>>()
    })
}

/// Parent index `j < i` reads `z_j`; `j == i` reads `x_0`.
fn build(draws: &[NodeDraw]) -> GreyBoxGraph {
    let nodes = draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let parents: Vec<Input> = d
                .parents
                .iter()
                .map(|&j| if j == i { Input::X(0) } else { Input::Z(j) })
                .collect();
            if d.black {
                NodeSpec::black(Oracle::Constant(0.0), se(), 1.0, parents, d.lipschitz, 1.0)
            } else {
                let coeffs = vec![1.0; parents.len()];
                NodeSpec::white(WhiteBoxExpr::Affine { coeffs, offset: 0.0 }, parents, d.lipschitz, 1.0)
            }
        })
        .collect();
    GreyBoxGraph::new(Domain::cube(1, -1.0, 1.0).unwrap(), nodes).unwrap()
}

proptest! {
    #[test]
    fn discrepancy_constants_equal_path_sums(draws in random_graph()) {
        let g = build(&draws);
        let constants = g.discrepancy_constants();
        prop_assert_eq!(constants.len(), g.black_set().len());
        for (&i, &a) in &constants {
            let expect = path_constant(&g, i);
            prop_assert!((a - expect).abs() <= 1e-9 * expect.max(1.0), "node {}: {} vs {}", i, a, expect);
        }
    }
}
