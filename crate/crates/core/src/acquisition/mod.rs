//! Optimistic auxiliary problems: minimize the planned objective over `x` and
//! over every intermediate vector the confidence intervals still allow.
//!
//! Intermediate values are searched through interval fractions `theta` in
//! `[0, 1]`: a black-box node takes `l + theta (u - l)` and a white-box node
//! its exact value. Every such forward pass lies in the plausible set, so the
//! search runs over the unit cube in `(x, theta)`.

mod layout;
mod nelder_mead;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeKind;
use crate::problem::Problem;

pub use layout::{Layout, ModelInfo, NodeInterval, Slot, Surrogates};
pub(crate) use nelder_mead::minimize as polish;

/// Constraint values at or below this count as satisfied.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Tensor grid used instead of Sobol points in the first phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_points: usize,
    pub theta_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBudget {
    pub phase1_points: usize,
    pub refine_starts: usize,
    pub refine_iters: usize,
    pub infeasibility_tolerance: f64,
    /// Replaces the Sobol design when set.
    pub grid: Option<GridSpec>,
}

impl Default for SolverBudget {
    fn default() -> Self {
        SolverBudget {
            phase1_points: 2048,
            refine_starts: 5,
            refine_iters: 200,
            infeasibility_tolerance: 1e-6,
            grid: None,
        }
    }
}

impl SolverBudget {
    pub fn grid(x_points: usize, theta_points: usize) -> Self {
        SolverBudget {
            refine_starts: 0,
            grid: Some(GridSpec { x_points, theta_points }),
            ..SolverBudget::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.grid {
            if g.x_points == 0 || g.theta_points == 0 {
                return Err(Error::InvalidParameter("grid axes need at least one point".into()));
            }
        } else if self.phase1_points == 0 {
            return Err(Error::InvalidParameter("phase1_points must be positive".into()));
        }
        if !(self.infeasibility_tolerance >= 0.0 && self.infeasibility_tolerance.is_finite()) {
            return Err(Error::InvalidParameter(
                "infeasibility_tolerance must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// The optimistic plan for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliarySolution {
    pub x: Vec<f64>,
    /// Interval fractions, one per slot of the layout.
    pub theta: Vec<f64>,
    /// Planned node values per function, objective first.
    pub z_bar: Vec<Vec<f64>>,
    /// Planned objective value.
    pub objective: f64,
    /// Planned constraint values.
    pub constraints: Vec<f64>,
    pub feasible: bool,
}

/// Evaluation of one point of the search cube.
#[derive(Clone, Debug)]
struct Scored {
    x: Vec<f64>,
    objective: f64,
    g: Vec<f64>,
}

impl Scored {
    fn excess(&self) -> f64 {
        self.g.iter().map(|v| v.max(0.0)).sum()
    }

    fn total(&self) -> f64 {
        self.g.iter().sum()
    }

    fn max_g(&self) -> f64 {
        self.g.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn feasible(&self) -> bool {
        self.g.iter().all(|v| *v <= FEASIBILITY_SLACK)
    }
}

fn nan_last(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => a.partial_cmp(&b).expect("non-NaN values compare"),
    }
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(p, q)| nan_last(*p, *q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Feasible points first, by objective, then by summed constraint value, then
/// by `x`. Infeasible points by total excess, then objective, then `x`.
fn candidate_order(a: &Scored, b: &Scored) -> Ordering {
    match (a.feasible(), b.feasible()) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => nan_last(a.objective, b.objective)
            .then_with(|| nan_last(a.total(), b.total()))
            .then_with(|| lex(&a.x, &b.x)),
        (false, false) => nan_last(a.excess(), b.excess())
            .then_with(|| nan_last(a.objective, b.objective))
            .then_with(|| lex(&a.x, &b.x)),
    }
}

fn worst_constraint_order(a: &Scored, b: &Scored) -> Ordering {
    nan_last(a.max_g(), b.max_g()).then_with(|| lex(&a.x, &b.x))
}

/// Auxiliary-problem solver bound to a problem, its layout and the current
/// surrogates.
pub struct Acquisition<'a> {
    problem: &'a Problem,
    layout: &'a Layout,
    surrogates: &'a Surrogates,
}

impl<'a> Acquisition<'a> {
    pub fn new(problem: &'a Problem, layout: &'a Layout, surrogates: &'a Surrogates) -> Self {
        Acquisition {
            problem,
            layout,
            surrogates,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.layout.slots().len()
    }

    fn search_dim(&self) -> usize {
        self.problem.input_dim() + self.slot_count()
    }

    /// Planned node values of every function at `x` for the given fractions.
    pub fn forward_plausible(&self, x: &[f64], theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.problem.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.problem.input_dim(),
                found: x.len(),
            });
        }
        if theta.len() != self.slot_count() {
            return Err(Error::DimensionMismatch {
                expected: self.slot_count(),
                found: theta.len(),
            });
        }
        let mut z: Vec<Vec<f64>> = self.problem.functions().map(|g| Vec::with_capacity(g.len())).collect();
        self.forward_into(x, theta, &mut z)?;
        Ok(z)
    }

    fn forward_into(&self, x: &[f64], theta: &[f64], z: &mut [Vec<f64>]) -> Result<()> {
        let mut slot_value: Vec<Option<f64>> = vec![None; self.slot_count()];
        let mut buf = Vec::new();
        for (fi, graph) in self.problem.functions().enumerate() {
            let zf = &mut z[fi];
            zf.clear();
            for i in 0..graph.len() {
                graph.gather(i, x, zf, &mut buf);
                let node = graph.node(i);
                let v = match &node.kind {
                    NodeKind::WhiteBox(e) => e.eval(&buf),
                    NodeKind::BlackBox(_) => {
                        let slot = self.layout.slot_of(fi, i).expect("black-box node has a slot");
                        match slot_value[slot] {
                            Some(v) => v,
                            None => {
                                let iv = self.surrogates.interval(self.layout.slots()[slot].model, &buf)?;
                                let th = theta[slot].clamp(0.0, 1.0);
                                let v = iv.lower + th * (iv.upper - iv.lower);
                                slot_value[slot] = Some(v);
                                v
                            }
                        }
                    }
                };
                zf.push(v);
            }
        }
        Ok(())
    }

    /// Smallest slack of the plausible-set constraints along `z_bar`:
    /// `min(z - l, u - z)` over black-box nodes and `-|z - phi(s)|` over
    /// white-box nodes. Non-negative for a plausible plan.
    pub fn plausibility_slack(&self, x: &[f64], z_bar: &[Vec<f64>]) -> Result<f64> {
        let mut slack = f64::INFINITY;
        let mut buf = Vec::new();
        for (fi, graph) in self.problem.functions().enumerate() {
            let zf = &z_bar[fi];
            if zf.len() != graph.len() {
                return Err(Error::DimensionMismatch {
                    expected: graph.len(),
                    found: zf.len(),
                });
            }
            for i in 0..graph.len() {
                graph.gather(i, x, zf, &mut buf);
                let node = graph.node(i);
                let s = match &node.kind {
                    NodeKind::WhiteBox(e) => {
                        let v = e.eval(&buf);
                        -(zf[i] - v).abs() / v.abs().max(1.0)
                    }
                    NodeKind::BlackBox(_) => {
                        let model = self.layout.model_of(fi, i).expect("black-box node has a model");
                        let iv = self.surrogates.interval(model, &buf)?;
                        (zf[i] - iv.lower).min(iv.upper - zf[i])
                    }
                };
                slack = slack.min(s);
            }
        }
        Ok(slack)
    }

    fn score(&self, u: &[f64], z: &mut [Vec<f64>]) -> Result<Scored> {
        let n = self.problem.input_dim();
        let mut x = vec![0.0; n];
        self.problem.domain().from_unit(&u[..n], &mut x);
        self.forward_into(&x, &u[n..], z)?;
        let objective = *z[0].last().expect("non-empty graph");
        let g = z[1..].iter().map(|v| *v.last().expect("non-empty graph")).collect();
        Ok(Scored { x, objective, g })
    }

    fn phase1(&self, budget: &SolverBudget, scramble: u32) -> Result<Vec<Vec<f64>>> {
        let n = self.problem.input_dim();
        let d = self.search_dim();
        match budget.grid {
            Some(spec) => {
                let total = (spec.x_points as f64).powi(n as i32) * (spec.theta_points as f64).powi((d - n) as i32);
                if total > 5e7 {
                    return Err(Error::InvalidParameter(format!("grid of {total} points is too large")));
                }
                let axis = |k: usize, count: usize| {
                    if count == 1 {
                        0.5
                    } else {
                        k as f64 / (count - 1) as f64
                    }
                };
                let counts: Vec<usize> = (0..d)
                    .map(|j| if j < n { spec.x_points } else { spec.theta_points })
                    .collect();
                let mut out = Vec::with_capacity(total as usize);
                let mut idx = vec![0usize; d];
                for _ in 0..total as usize {
                    out.push((0..d).map(|j| axis(idx[j], counts[j])).collect());
                    for j in (0..d).rev() {
                        idx[j] += 1;
                        if idx[j] < counts[j] {
                            break;
                        }
                        idx[j] = 0;
                    }
                }
                Ok(out)
            }
            None => {
                if d > sobol_burley::NUM_DIMENSIONS as usize {
                    return Err(Error::InvalidParameter(format!(
                        "search space has {d} dimensions; at most {} are supported",
                        sobol_burley::NUM_DIMENSIONS
                    )));
                }
                Ok((0..budget.phase1_points as u32)
                    .map(|i| {
                        (0..d as u32)
                            .map(|j| sobol_burley::sample(i, j, scramble) as f64)
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Minimizes the planned objective over the plausible set.
    ///
    /// The solution is always marked feasible when the problem has no
    /// constraints. `scramble` seeds the Sobol design.
    pub fn solve_unconstrained(&self, budget: &SolverBudget, scramble: u32) -> Result<AuxiliarySolution> {
        if !self.problem.constraints().is_empty() {
            return Err(Error::InvalidProblem(
                "unconstrained solve called on a problem with constraints".into(),
            ));
        }
        self.solve_constrained(budget, scramble)
    }

    /// Minimizes the planned objective subject to planned constraint values
    /// `<= 0`. Returns `feasible = false` when no candidate satisfies the
    /// planned constraints and a dedicated minimization of the largest
    /// planned constraint stays above the tolerance.
    pub fn solve_constrained(&self, budget: &SolverBudget, scramble: u32) -> Result<AuxiliarySolution> {
        budget.validate()?;
        let n = self.problem.input_dim();
        let mut z: Vec<Vec<f64>> = self.problem.functions().map(|g| Vec::with_capacity(g.len())).collect();

        let points = self.phase1(budget, scramble)?;
        let mut scored: Vec<(Vec<f64>, Scored)> = Vec::with_capacity(points.len());
        for u in points {
            let s = self.score(&u, &mut z)?;
            scored.push((u, s));
        }
        scored.sort_by(|a, b| candidate_order(&a.1, &b.1));

        let mut best = scored[0].clone();
        let starts: Vec<Vec<f64>> = distinct_starts(&scored, budget.refine_starts);
        let mut failure = None;
        for start in &starts {
            let (u, s) = nelder_mead::minimize(
                start,
                0.1,
                budget.refine_iters,
                |u| match self.score(u, &mut z) {
                    Ok(s) => s,
                    Err(e) => {
                        failure.get_or_insert(e);
                        worst_score(n)
                    }
                },
                candidate_order,
            );
            if candidate_order(&s, &best.1) == Ordering::Less {
                best = (u, s);
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }

        let mut feasible = best.1.feasible();
        if !feasible {
            // minimize the largest planned constraint before declaring
            scored.sort_by(|a, b| worst_constraint_order(&a.1, &b.1));
            let mut least = scored[0].clone();
            let starts = distinct_starts(&scored, budget.refine_starts.max(1));
            let mut failure = None;
            for start in &starts {
                let (u, s) = nelder_mead::minimize(
                    start,
                    0.1,
                    budget.refine_iters,
                    |u| match self.score(u, &mut z) {
                        Ok(s) => s,
                        Err(e) => {
                            failure.get_or_insert(e);
                            worst_score(n)
                        }
                    },
                    worst_constraint_order,
                );
                if worst_constraint_order(&s, &least.1) == Ordering::Less {
                    least = (u, s);
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
            feasible = least.1.max_g() <= budget.infeasibility_tolerance;
            best = least;
        }

        let (u, s) = best;
        let theta = u[n..].to_vec();
        let z_bar = self.forward_plausible(&s.x, &theta)?;
        Ok(AuxiliarySolution {
            x: s.x,
            theta,
            objective: s.objective,
            constraints: s.g,
            z_bar,
            feasible,
        })
    }

    /// Dispatches on whether the problem has constraints.
    pub fn solve(&self, budget: &SolverBudget, scramble: u32) -> Result<AuxiliarySolution> {
        self.solve_constrained(budget, scramble)
    }
}

fn worst_score(n: usize) -> Scored {
    Scored {
        x: vec![f64::NAN; n],
        objective: f64::NAN,
        g: vec![f64::INFINITY],
    }
}

/// Up to `count` leading candidates with pairwise distinct search points.
fn distinct_starts(sorted: &[(Vec<f64>, Scored)], count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (u, _) in sorted {
        if out.len() >= count {
            break;
        }
        if !out.iter().any(|v| v == u) {
            out.push(u.clone());
        }
    }
    out
}
