use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{estimate_lipschitz, polish_ground_truth, Benchmark};
use crate::error::{Error, Result};
use crate::functions::{sample_gp_function, FourierFunction};
use crate::gp::Kernel;
use crate::graph::{Domain, GreyBoxGraph, Input, Interval, NodeSpec, Oracle, WhiteBoxExpr};
use crate::problem::{sweep_resolution, Problem};

#[derive(Clone, Debug, PartialEq)]
pub struct LpGpOptions {
    /// Rows of `A_1 x + A_2 h(x) + b <= 0`.
    pub constraints: usize,
    /// Random Fourier features per component of `h`.
    pub features: usize,
    /// Draws tried before giving up on finding a feasible instance.
    pub max_attempts: usize,
}

impl Default for LpGpOptions {
    fn default() -> Self {
        LpGpOptions {
            constraints: 2,
            features: 256,
            max_attempts: 1000,
        }
    }
}

/// `min c1.x + c2.h(x)  s.t.  A1 x + A2 h(x) + b <= 0` over `[-2, 2]^2` with
/// both components of `h` drawn from a GP.
#[derive(Clone, Debug)]
pub struct LpGpInstance {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub a1: Vec<Vec<f64>>,
    pub a2: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub h: Vec<FourierFunction>,
    pub benchmark: Benchmark,
}

/// Kernel of the embedded GP, `0.5 exp(-|x - y|^2)`.
pub fn lp_gp_kernel() -> Kernel {
    Kernel::squared_exponential(0.5f64.sqrt(), 0.5).expect("valid kernel")
}

/// Surrogate kernel of every black-box node in both modes: the length scale
/// of the generating kernel with unit output scale.
pub fn surrogate_kernel() -> Kernel {
    Kernel::squared_exponential(0.5f64.sqrt(), 1.0).expect("valid kernel")
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn generate_lp_gp(seed: u64, options: &LpGpOptions) -> Result<LpGpInstance> {
    if options.features == 0 {
        return Err(Error::InvalidParameter("feature count must be positive".into()));
    }
    let k = options.constraints;
    let domain = Domain::cube(2, -2.0, 2.0)?;
    let grid = domain.grid(sweep_resolution(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1A_6B00);
    for attempt in 0..options.max_attempts.max(1) {
        let c1 = unit_vector(&mut rng, 2);
        let c2 = unit_vector(&mut rng, 2);
        let a1: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(&mut rng, 2)).collect();
        let a2: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(&mut rng, 2)).collect();
        let b = if k > 0 { unit_vector(&mut rng, k) } else { Vec::new() };
        let h: Vec<FourierFunction> = (0..2)
            .map(|_| sample_gp_function(&lp_gp_kernel(), 2, rng.random(), options.features))
            .collect::<Result<_>>()?;

        let hv: Vec<[f64; 2]> = grid.iter().map(|x| [h[0].eval(x), h[1].eval(x)]).collect();
        let f_at = |i: usize| dot(&c1, &grid[i]) + dot(&c2, &hv[i]);
        let g_at = |r: usize, i: usize| dot(&a1[r], &grid[i]) + dot(&a2[r], &hv[i]) + b[r];
        let feasible_best = (0..grid.len())
            .filter(|&i| (0..k).all(|r| g_at(r, i) <= 0.0))
            .min_by(|&i, &j| f_at(i).total_cmp(&f_at(j)));
        let Some(best) = feasible_best else { continue };

        let square = [Interval::symmetric(2.0), Interval::symmetric(2.0)];
        let h_nodes: Vec<NodeSpec> = (0..2)
            .map(|j| {
                let sup = hv.iter().map(|v| v[j].abs()).fold(0.0, f64::max);
                let bound = h[j].amplitude_norm().max(1.1 * sup);
                let oracle = Oracle::Fourier(h[j].clone());
                let lipschitz = estimate_lipschitz(&oracle, &square);
                NodeSpec::black(
                    oracle,
                    surrogate_kernel(),
                    bound,
                    vec![Input::X(0), Input::X(1)],
                    lipschitz,
                    bound,
                )
                .with_model(format!("h{j}"))
            })
            .collect();
        let parents = vec![Input::X(0), Input::X(1), Input::Z(0), Input::Z(1)];
        let terminal = |x_coef: &[f64], z_coef: &[f64], offset: f64, sup: f64| {
            let coeffs: Vec<f64> = x_coef.iter().chain(z_coef).cloned().collect();
            let lipschitz = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
            NodeSpec::white(
                WhiteBoxExpr::Affine { coeffs, offset },
                parents.clone(),
                lipschitz,
                (1.1 * sup).max(1e-6),
            )
        };
        let graph = |last: NodeSpec| {
            let mut nodes = h_nodes.clone();
            nodes.push(last);
            GreyBoxGraph::new(domain.clone(), nodes)
        };
        let f_sup = (0..grid.len()).map(|i| f_at(i).abs()).fold(0.0, f64::max);
        let objective = graph(terminal(&c1, &c2, 0.0, f_sup))?;
        let constraints = (0..k)
            .map(|r| {
                let sup = (0..grid.len()).map(|i| g_at(r, i).abs()).fold(0.0, f64::max);
                graph(terminal(&a1[r], &a2[r], b[r], sup))
            })
            .collect::<Result<Vec<_>>>()?;
        let problem = Problem::new("lp_gp", objective, constraints)?.with_baseline_kernel(surrogate_kernel())?;
        let gt = polish_ground_truth(&problem, grid[best].clone(), 1.0 / 200.0);
        let problem = problem.with_ground_truth(gt)?;
        return Ok(LpGpInstance {
            c1,
            c2,
            a1,
            a2,
            b,
            h,
            benchmark: Benchmark::new(problem, "lp_gp", seed, attempt),
        });
    }
    Err(Error::InvalidProblem(format!(
        "no feasible instance in {} draws",
        options.max_attempts
    )))
}
