//! End-to-end acceptance checks. Each check prints one PASS or FAIL line; the
//! process exits non-zero when any check fails. Arguments select checks by
//! name, e.g. `cargo test --test acceptance -- solver`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use greybox::acquisition::{Acquisition, Layout, SolverBudget, Surrogates};
use greybox::benchmarks::{generate_composite, generate_margin_instance, Composite};
use greybox::config::{Experiment, Registry};
use greybox::functions::KernelExpansion;
use greybox::gp::{bounds, lambda_for_horizon, ConfidenceModel, GpState, Kernel, KernelFamily, MaternNu};
use greybox::graph::{Domain, GreyBoxGraph, Input, NodeSpec, Oracle, WhiteBoxExpr};
use greybox::harness;
use greybox::metrics::{compute_metrics, median};
use greybox::optimizer::{run, Outcome, RunConfig};
use greybox::problem::Problem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

#[derive(Clone, Copy)]
enum Family {
    Se,
    Matern32,
    Matern52,
}

/// Reference kernel written out from the closed forms.
#[derive(Clone, Copy)]
struct RefKernel {
    family: Family,
    lengthscale: f64,
    scale: f64,
}

impl RefKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 =
            a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / (self.lengthscale * self.lengthscale);
        let r = r2.sqrt();
        self.scale
            * match self.family {
                Family::Se => (-r2 / 2.0).exp(),
                Family::Matern32 => (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp(),
                Family::Matern52 => (1.0 + 5f64.sqrt() * r + 5.0 * r2 / 3.0) * (-(5f64.sqrt()) * r).exp(),
            }
    }

    fn library(&self) -> Kernel {
        let family = match self.family {
            Family::Se => KernelFamily::SquaredExponential,
            Family::Matern32 => KernelFamily::Matern(MaternNu::ThreeHalves),
            Family::Matern52 => KernelFamily::Matern(MaternNu::FiveHalves),
        };
        Kernel::new(family, vec![self.lengthscale], self.scale).unwrap()
    }
}

/// Dense-inverse posterior: mean, variance and `0.5 ln det(I + K / lambda)`.
struct DenseGp {
    kernel: RefKernel,
    xs: Vec<Vec<f64>>,
    inv: DMatrix<f64>,
    weights: DVector<f64>,
    gain: f64,
}

impl DenseGp {
    fn new(kernel: RefKernel, lambda: f64, xs: &[Vec<f64>], ys: &[f64]) -> DenseGp {
        let t = xs.len();
        let gram = DMatrix::from_fn(t, t, |i, j| kernel.eval(&xs[i], &xs[j]));
        let inv = (&gram + DMatrix::identity(t, t) * lambda).try_inverse().unwrap();
        let weights = &inv * DVector::from_column_slice(ys);
        let gain = 0.5 * (DMatrix::identity(t, t) + gram / lambda).determinant().ln();
        DenseGp {
            kernel,
            xs: xs.to_vec(),
            inv,
            weights,
            gain,
        }
    }

    fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|x| self.kernel.eval(x, q)));
        let mean = k.dot(&self.weights);
        let var = self.kernel.eval(q, q) - (k.transpose() * &self.inv * &k)[(0, 0)];
        (mean, var)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn gp_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=6);
        let t = rng.random_range(1..=40);
        let family = [Family::Se, Family::Matern32, Family::Matern52][rng.random_range(0..3)];
        let kernel = RefKernel {
            family,
            lengthscale: rng.random_range(0.3..1.5),
            scale: rng.random_range(0.3..=1.0),
        };
        let lambda = rng.random_range(0.05..2.0);
        let xs: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();

        let mut state = GpState::new(kernel.library(), dim, lambda).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            state = state.update(x, *y).unwrap();
        }
        let dense = DenseGp::new(kernel, lambda, &xs, &ys);
        let mut ok = close(state.info_gain(), dense.gain, 1e-8);
        worst = worst.max((state.info_gain() - dense.gain).abs());
        for _ in 0..10 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect();
            let (m, v) = state.posterior(&q).unwrap();
            let (dm, dv) = dense.posterior(&q);
            worst = worst.max((m - dm).abs()).max((v - dv.max(0.0)).abs());
            ok &= close(m, dm, 1e-8) && close(v, dv.max(0.0), 1e-8);
        }
        failures += usize::from(!ok);
    }
    verdict(
        failures == 0,
        format!("{failures}/100 datasets disagree, worst gap {worst:.2e}"),
    )
}

fn confidence_coverage() -> Verdict {
    let (runs, updates, sigma, delta) = (50, 30, 0.1, 0.1);
    let mut covered_runs = 0;
    let (mut covered_checks, mut checks) = (0usize, 0usize);
    for run_id in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + run_id);
        let dim = 1 + (run_id as usize % 2);
        let domain = Domain::cube(dim, -1.0, 1.0).unwrap();
        let kernel = Kernel::squared_exponential(0.4, 1.0).unwrap();
        let f = KernelExpansion::random(kernel.clone(), &domain, 8, 1.0, &mut rng).unwrap();
        let conf = ConfidenceModel::new(1.0, sigma, 1, delta).unwrap();
        let mut state = GpState::new(kernel, dim, lambda_for_horizon(updates)).unwrap();
        let probes: Vec<Vec<f64>> = (0..100).map(|_| domain.sample(&mut rng)).collect();
        let mut all = true;
        for _ in 0..updates {
            let s = domain.sample(&mut rng);
            let noise: f64 = rng.sample(StandardNormal);
            state = state.update(&s, f.eval(&s) + sigma * noise).unwrap();
            for p in &probes {
                let (l, u) = bounds(&state, &conf, p).unwrap();
                let v = f.eval(p);
                let inside = l <= v && v <= u;
                checks += 1;
                covered_checks += usize::from(inside);
                all &= inside;
            }
        }
        covered_runs += usize::from(all);
    }
    let rate = covered_runs as f64 / runs as f64;
    verdict(
        rate >= 0.9,
        format!(
            "{covered_runs}/{runs} runs covered at every update ({:.4} of point checks)",
            covered_checks as f64 / checks as f64
        ),
    )
}

fn discrepancy_bound() -> Verdict {
    let (mut ok, mut total) = (0usize, 0usize);
    for seed in 0..40 {
        let b = generate_composite(Composite::HybridChain, seed).unwrap();
        let cfg = RunConfig {
            horizon: 30,
            seed,
            delta: 0.05,
            ..RunConfig::default()
        };
        let trace = run(&b.problem, &cfg).unwrap();
        for r in &trace.records {
            let gap = (r.z_true[0].last().unwrap() - r.z_bar[0].last().unwrap()).abs();
            total += 1;
            ok += usize::from(gap <= r.discrepancy_bound[0]);
        }
    }
    let rate = ok as f64 / total as f64;
    verdict(
        rate >= 0.95,
        format!("{ok}/{total} (run, step) pairs within the bound ({rate:.4})"),
    )
}

/// One-dimensional problem with a single shared black-box model feeding a
/// quadratic objective and, optionally, one affine constraint.
fn auxiliary_instance(constrained: bool) -> (Problem, KernelExpansion, RefKernel) {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let domain = Domain::new(vec![-1.0], vec![1.0]).unwrap();
    let reference = RefKernel {
        family: Family::Se,
        lengthscale: 0.4,
        scale: 1.0,
    };
    let phi = KernelExpansion::random(reference.library(), &domain, 6, 1.0, &mut rng).unwrap();
    let black = NodeSpec::black(
        Oracle::Expansion(phi.clone()),
        reference.library(),
        1.0,
        vec![Input::X(0)],
        3.0,
        1.0,
    )
    .with_model("phi");
    let parents = vec![Input::X(0), Input::Z(0)];
    let objective = NodeSpec::white(
        WhiteBoxExpr::Quadratic {
            matrix: vec![0.3, 0.0, 0.0, 1.0],
            linear: vec![0.2, -0.4],
            offset: 0.0,
        },
        parents.clone(),
        3.0,
        3.0,
    );
    let f = GreyBoxGraph::new(domain.clone(), vec![black.clone(), objective]).unwrap();
    let g = if constrained {
        let affine = NodeSpec::white(
            WhiteBoxExpr::Affine {
                coeffs: vec![0.5, 1.0],
                offset: 0.3,
            },
            parents,
            1.0,
            2.0,
        );
        vec![GreyBoxGraph::new(domain, vec![black, affine]).unwrap()]
    } else {
        vec![]
    };
    (Problem::new("auxiliary", f, g).unwrap(), phi, reference)
}

fn auxiliary_solver() -> Verdict {
    let (sigma, delta, lambda, bound) = (0.05, 0.1, 1.2, 1.0);
    let (x_points, theta_points) = (201usize, 101usize);
    let observed = [-0.7, -0.1, 0.4, 0.9];
    let noise = [0.03, -0.02, 0.01, -0.04];
    let mut details = Vec::new();
    let mut pass = true;
    for constrained in [false, true] {
        let (problem, phi, reference) = auxiliary_instance(constrained);
        let m = if constrained { 4 } else { 2 };
        let layout = Layout::new(&problem);
        let mut surrogates = Surrogates::new(&layout, sigma, delta, m, lambda, 1.0).unwrap();
        let xs: Vec<Vec<f64>> = observed.iter().map(|x| vec![*x]).collect();
        let ys: Vec<f64> = observed.iter().zip(noise).map(|(x, e)| phi.eval(&[*x]) + e).collect();
        for (x, y) in xs.iter().zip(&ys) {
            surrogates.observe(0, x, *y).unwrap();
        }
        let solution = Acquisition::new(&problem, &layout, &surrogates)
            .solve(&SolverBudget::grid(x_points, theta_points), 0)
            .unwrap();

        let dense = DenseGp::new(reference, lambda, &xs, &ys);
        let beta = bound + sigma * (2.0 * (dense.gain + 1.0 + (m as f64 / delta).ln())).sqrt();
        let mut best = (f64::INFINITY, f64::NAN);
        for i in 0..x_points {
            let x = -1.0 + 2.0 * i as f64 / (x_points - 1) as f64;
            let (mean, var) = dense.posterior(&[x]);
            let sd = var.max(0.0).sqrt();
            let (l, u) = (
                (mean - beta * sd).clamp(-bound, bound),
                (mean + beta * sd).clamp(-bound, bound),
            );
            for j in 0..theta_points {
                let z = l + (j as f64 / (theta_points - 1) as f64) * (u - l);
                let f = 0.3 * x * x + z * z + 0.2 * x - 0.4 * z;
                let g = 0.5 * x + z + 0.3;
                if (!constrained || g <= 1e-9) && f < best.0 {
                    best = (f, x);
                }
            }
        }
        let ok =
            solution.feasible && (solution.objective - best.0).abs() <= 1e-9 && (solution.x[0] - best.1).abs() <= 1e-9;
        pass &= ok;
        details.push(format!(
            "{}: solver {:.12} at x={:.3}, enumeration {:.12} at x={:.3}",
            if constrained { "constrained" } else { "unconstrained" },
            solution.objective,
            solution.x[0],
            best.0,
            best.1
        ));
    }
    verdict(pass, details.join("; "))
}

fn regret_decay() -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for family in Composite::ALL {
        let (mut early, mut late) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let b = generate_composite(family, seed).unwrap();
            let cfg = RunConfig {
                horizon: 100,
                seed,
                ..RunConfig::default()
            };
            let trace = run(&b.problem, &cfg).unwrap();
            let m = compute_metrics(&trace, b.problem.ground_truth()).unwrap();
            early.push(m.best_regret[9]);
            late.push(m.best_regret[99]);
        }
        let (e, l) = (median(&early).unwrap(), median(&late).unwrap());
        pass &= l <= 0.3 * e;
        details.push(format!("{family}: {e:.4} -> {l:.4}"));
    }
    verdict(
        pass,
        format!("median best regret T=10 -> T=100: {}", details.join(", ")),
    )
}

const COMPARISON: &str = r#"
[experiment]
name = "lp_gp_comparison"
seeds = 20
T = 50

[[problem]]
family = "lp_gp"
"#;

fn run_comparison(out: &Path) -> harness::Comparison {
    let exp = Experiment::parse(COMPARISON, "comparison.toml", Path::new("."), &Registry::builtin()).unwrap();
    let results: Vec<_> = harness::plan(&exp)
        .iter()
        .map(|job| harness::run_job(&exp, job).unwrap())
        .collect();
    harness::write_results(out, &results).unwrap();
    harness::compare(out).unwrap().remove(0)
}

fn greybox_beats_blackbox(out: &Path) -> Verdict {
    let c = run_comparison(out);
    let (g, b) = (
        c.greybox_median.unwrap_or(f64::NAN),
        c.blackbox_median.unwrap_or(f64::NAN),
    );
    let rate = c.win_rate().unwrap_or(0.0);
    verdict(
        g < b && rate >= 0.7,
        format!(
            "median CR_50 grey-box {g:.4} vs black-box {b:.4}; grey-box lower on {}/{} seeds ({rate:.2})",
            c.greybox_wins, c.paired_seeds
        ),
    )
}

fn infeasibility_detection() -> Verdict {
    let cfg = |seed| RunConfig {
        horizon: 200,
        seed,
        ..RunConfig::default()
    };
    let mut declared = 0;
    for seed in 0..20 {
        let b = generate_margin_instance(seed, 0.3).unwrap();
        let trace = run(&b.problem, &cfg(seed)).unwrap();
        declared += usize::from(matches!(trace.outcome, Outcome::InfeasibilityDeclared(t) if t <= 200));
    }
    let mut false_alarms = 0;
    for seed in 0..40 {
        let b = generate_margin_instance(seed, -0.3).unwrap();
        let trace = run(&b.problem, &cfg(seed)).unwrap();
        false_alarms += usize::from(trace.outcome != Outcome::Completed);
    }
    verdict(
        declared as f64 / 20.0 >= 0.95 && false_alarms == 0,
        format!("declared on {declared}/20 infeasible instances, {false_alarms}/40 feasible instances declared"),
    )
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let key = path.strip_prefix(root).unwrap().display().to_string();
            out.insert(key, std::fs::read(&path).unwrap());
        }
    }
}

fn byte_identical_rerun(first: &Path, second: &Path) -> Verdict {
    if !first.exists() {
        run_comparison(first);
    }
    run_comparison(second);
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    collect_files(first, first, &mut a);
    collect_files(second, second, &mut b);
    let csv = a.keys().filter(|k| k.ends_with(".csv")).count();
    let differing = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).count();
    verdict(
        differing == 0 && csv > 0,
        format!("{csv} CSV files, {} files in total, {differing} differ", a.len()),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    type Check<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);
    let checks: Vec<Check> = vec![
        ("1 gp-oracle-equivalence", Box::new(gp_oracle_equivalence)),
        ("2 confidence-coverage", Box::new(confidence_coverage)),
        ("3 discrepancy-bound", Box::new(discrepancy_bound)),
        ("4 auxiliary-solver-exactness", Box::new(auxiliary_solver)),
        ("5 regret-decay", Box::new(regret_decay)),
        ("6 greybox-beats-blackbox", Box::new(|| greybox_beats_blackbox(&first))),
        ("7 infeasibility-detection", Box::new(infeasibility_detection)),
        (
            "8 byte-identical-rerun",
            Box::new(|| byte_identical_rerun(&first, &second)),
        ),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        failed += usize::from(!v.pass);
        println!(
            "{} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if filters.is_empty() {
        println!("{} of 8 acceptance criteria passed", 8 - failed);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
