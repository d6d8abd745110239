use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::composite::calibrate;
use super::{ground_truth, Benchmark};
use crate::error::{Error, Result};
use crate::functions::KernelExpansion;
use crate::gp::Kernel;
use crate::graph::{Domain, GreyBoxGraph, Input, NodeSpec, Oracle, WhiteBoxExpr};
use crate::problem::{sweep_resolution, Problem};

const MAX_ATTEMPTS: usize = 500;
const CENTERS: usize = 10;

fn kernel() -> Kernel {
    Kernel::squared_exponential(0.5, 1.0).expect("valid kernel")
}

fn square() -> Domain {
    Domain::cube(2, -1.0, 1.0).expect("valid domain")
}

fn draw_node<R: Rng>(rng: &mut R, model: &str) -> Result<NodeSpec> {
    let f = KernelExpansion::random(kernel(), &square(), CENTERS, 1.0, rng)?;
    Ok(NodeSpec::black(
        Oracle::Expansion(f),
        kernel(),
        1.0,
        vec![Input::X(0), Input::X(1)],
        1.0,
        1.0,
    )
    .with_model(model))
}

fn unit_vector<R: Rng>(rng: &mut R) -> Vec<f64> {
    let v: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let n = v[0].hypot(v[1]).max(1e-12);
    vec![v[0] / n, v[1] / n]
}

fn function(nodes: Vec<NodeSpec>) -> Result<GreyBoxGraph> {
    let domain = square();
    GreyBoxGraph::new(domain.clone(), calibrate(&domain, nodes)?)
}

/// Two shared black-box nodes `phi_1, phi_2` of `x` feeding a known objective
/// `F(z)` and `k` known affine constraints `G_k(z)` on `[-1, 1]^2`. Draws are
/// repeated until a feasible grid point exists.
pub fn generate_one_layer(seed: u64, k: usize) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0E1A_7E40);
    let z = vec![Input::Z(0), Input::Z(1)];
    for attempt in 0..MAX_ATTEMPTS {
        let phi = [draw_node(&mut rng, "phi0")?, draw_node(&mut rng, "phi1")?];
        let quadratic = rng.random_bool(0.5);
        let c = unit_vector(&mut rng);
        let objective = if quadratic {
            WhiteBoxExpr::Quadratic {
                matrix: vec![0.5, 0.0, 0.0, 0.5],
                linear: c,
                offset: 0.0,
            }
        } else {
            WhiteBoxExpr::Affine { coeffs: c, offset: 0.0 }
        };
        let with_top = |expr: WhiteBoxExpr| {
            let mut nodes = phi.to_vec();
            nodes.push(NodeSpec::white(expr, z.clone(), 1.0, 1.0));
            function(nodes)
        };
        let f = with_top(objective)?;
        let g = (0..k)
            .map(|_| {
                let coeffs = unit_vector(&mut rng);
                let offset = rng.random_range(-0.5..0.5);
                with_top(WhiteBoxExpr::Affine { coeffs, offset })
            })
            .collect::<Result<Vec<_>>>()?;
        let problem = Problem::new(format!("one_layer_k{k}"), f, g)?.with_baseline_kernel(kernel())?;
        if let Some(gt) = ground_truth(&problem) {
            let problem = problem.with_ground_truth(gt)?;
            return Ok(Benchmark::new(problem, "one_layer", seed, attempt));
        }
    }
    Err(Error::InvalidProblem(format!(
        "no feasible instance in {MAX_ATTEMPTS} draws"
    )))
}

/// `F(x, z) = z_1` over a single black-box node: plain black-box optimization
/// of `phi_1`.
pub fn one_layer_reduction(seed: u64) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0E1A_7E40);
    let nodes = vec![
        draw_node(&mut rng, "phi0")?,
        NodeSpec::white(WhiteBoxExpr::Identity, vec![Input::Z(0)], 1.0, 1.0),
    ];
    let problem = Problem::new("one_layer_reduction", function(nodes)?, vec![])?.with_baseline_kernel(kernel())?;
    let gt = ground_truth(&problem).ok_or_else(|| Error::InvalidProblem("no ground truth".into()))?;
    Ok(Benchmark::new(
        problem.with_ground_truth(gt)?,
        "one_layer_reduction",
        seed,
        0,
    ))
}

/// A black-box objective with one constraint `g(x) = phi_g(x) - min phi_g + margin`,
/// the minimum taken over the sweep grid. A positive margin makes every point
/// violate the constraint by at least `margin`; a negative one leaves a
/// feasible region around the minimizer of `phi_g`.
pub fn generate_margin_instance(seed: u64, margin: f64) -> Result<Benchmark> {
    if !margin.is_finite() {
        return Err(Error::InvalidParameter("margin must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3A_4612);
    let f = function(vec![draw_node(&mut rng, "phi_f")?])?;
    let phi_g = draw_node(&mut rng, "phi_g")?;
    let oracle = &phi_g.black_box().expect("black-box node").oracle;
    let min = square()
        .grid(sweep_resolution(2))
        .iter()
        .map(|x| oracle.eval(x))
        .fold(f64::INFINITY, f64::min);
    let shift = NodeSpec::white(
        WhiteBoxExpr::Affine {
            coeffs: vec![1.0],
            offset: margin - min,
        },
        vec![Input::Z(0)],
        1.0,
        1.0,
    );
    let g = function(vec![phi_g, shift])?;
    let name = if margin > 0.0 {
        "margin_infeasible"
    } else {
        "margin_feasible"
    };
    let problem = Problem::new(name, f, vec![g])?.with_baseline_kernel(kernel())?;
    let problem = match ground_truth(&problem) {
        Some(gt) => problem.with_ground_truth(gt)?,
        None => problem,
    };
    Ok(Benchmark::new(problem, name, seed, 0))
}

/// `min x_1 + x_2` subject to `x_1 <= 0` on `[1, 2] x [0, 1]`, where every
/// node is known.
pub fn whitebox_infeasible() -> Result<Benchmark> {
    let domain = Domain::new(vec![1.0, 0.0], vec![2.0, 1.0])?;
    let x = vec![Input::X(0), Input::X(1)];
    let affine = |coeffs: Vec<f64>| NodeSpec::white(WhiteBoxExpr::Affine { coeffs, offset: 0.0 }, x.clone(), 1.0, 3.3);
    let f = GreyBoxGraph::new(domain.clone(), vec![affine(vec![1.0, 1.0])])?;
    let g = GreyBoxGraph::new(domain, vec![affine(vec![1.0, 0.0])])?;
    let problem = Problem::new("whitebox_infeasible", f, vec![g])?;
    Ok(Benchmark::new(problem, "whitebox_infeasible", 0, 0))
}
