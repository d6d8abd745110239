//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented on
//! each function.

use greybox::acquisition::SolverBudget;
use greybox::benchmarks::{generate_composite, generate_lp_gp, Composite, LpGpOptions};
use greybox::gp::{clipped_interval, ConfidenceModel, GpState, Kernel};
use greybox::metrics::compute_metrics;
use greybox::optimizer::{run, Mode, RunConfig};
use wasm_bindgen::prelude::*;

fn js_err(e: greybox::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Posterior band of a one-dimensional GP with an SE kernel on `[-1, 1]`.
///
/// Returns `points` rows of `[x, mean, lower, upper]`, where the band is
/// `mean +/- beta sd` clipped to `[-bound, bound]` and `beta` comes from the
/// confidence rule with noise `sigma`.
#[wasm_bindgen]
pub fn posterior_band(
    xs: Vec<f64>,
    ys: Vec<f64>,
    lengthscale: f64,
    sigma: f64,
    bound: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    if xs.len() != ys.len() {
        return Err(JsError::new("xs and ys differ in length"));
    }
    let kernel = Kernel::squared_exponential(lengthscale, 1.0).map_err(js_err)?;
    let lambda = 1.0 + 2.0 / xs.len().max(1) as f64;
    let mut state = GpState::new(kernel, 1, lambda).map_err(js_err)?;
    for (x, y) in xs.iter().zip(&ys) {
        state = state.update(&[*x], *y).map_err(js_err)?;
    }
    let conf = ConfidenceModel::new(bound, sigma, 1, 0.1).map_err(js_err)?;
    let beta = conf.beta(state.info_gain());
    let points = points.max(2);
    let mut out = Vec::with_capacity(4 * points);
    for k in 0..points {
        let x = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
        let (mean, sd) = state.posterior_sd(&[x]).map_err(js_err)?;
        let (lower, upper) = clipped_interval(mean, sd, beta, bound);
        out.extend([x, mean, lower, upper]);
    }
    Ok(out)
}

fn family(name: &str) -> Result<Composite, JsError> {
    Composite::ALL
        .into_iter()
        .find(|v| v.as_str() == name)
        .ok_or_else(|| JsError::new(&format!("unknown family `{name}`")))
}

/// Runs both modes on one generated instance with a reduced solver budget.
///
/// Returns `2 * steps` values: the grey-box best-so-far regret per step
/// followed by the black-box one.
#[wasm_bindgen]
pub fn optimize_demo(family_name: &str, seed: u32, steps: usize) -> Result<Vec<f64>, JsError> {
    let bench = generate_composite(family(family_name)?, seed as u64).map_err(js_err)?;
    let mut out = Vec::with_capacity(2 * steps);
    for mode in [Mode::Greybox, Mode::Blackbox] {
        let cfg = RunConfig {
            horizon: steps.max(1),
            seed: seed as u64,
            mode,
            budget: SolverBudget {
                phase1_points: 256,
                refine_starts: 2,
                refine_iters: 60,
                ..SolverBudget::default()
            },
            ..RunConfig::default()
        };
        let trace = run(&bench.problem, &cfg).map_err(js_err)?;
        let m = compute_metrics(&trace, bench.problem.ground_truth()).map_err(js_err)?;
        out.extend(&m.best_regret);
    }
    Ok(out)
}

/// Objective and worst constraint of an LP-GP instance on a square grid over
/// `[-2, 2]^2`.
///
/// Returns `resolution^2` objective values, then `resolution^2` values of the
/// largest constraint (row-major, first coordinate slowest), then the
/// optimizer `[x0, x1]`.
#[wasm_bindgen]
pub fn lp_gp_map(seed: u32, resolution: usize) -> Result<Vec<f64>, JsError> {
    let options = LpGpOptions {
        features: 64,
        ..LpGpOptions::default()
    };
    let inst = generate_lp_gp(seed as u64, &options).map_err(js_err)?;
    let problem = &inst.benchmark.problem;
    let grid = problem.domain().grid(resolution.max(2));
    let mut objective = Vec::with_capacity(grid.len());
    let mut worst = Vec::with_capacity(grid.len());
    for x in &grid {
        let (f, g) = problem.evaluate_unchecked(x);
        objective.push(f);
        worst.push(g.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let mut out = objective;
    out.extend(worst);
    match problem.ground_truth() {
        Some(gt) => out.extend(&gt.x),
        None => out.extend([f64::NAN, f64::NAN]),
    }
    Ok(out)
}
