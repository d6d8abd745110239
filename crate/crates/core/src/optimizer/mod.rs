//! The optimization loop: plan optimistically, evaluate the true functions at
//! the planned input, observe every black-box node at its planned inputs and
//! update the surrogates.

mod trace;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{Acquisition, Layout, SolverBudget, Surrogates};
use crate::error::{Error, Result};
use crate::gp::lambda_for_horizon;
use crate::problem::Problem;

pub use trace::TraceTable;

/// Regularizer choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    /// `1 + 2 / T` for the horizon of the current round.
    Horizon,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Greybox,
    Blackbox,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Greybox => "greybox",
            Mode::Blackbox => "blackbox",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greybox" | "grey-box" | "grey" => Ok(Mode::Greybox),
            "blackbox" | "black-box" | "black" | "blackbox_baseline" => Ok(Mode::Blackbox),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode `{s}` (expected greybox or blackbox)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Horizon `T`; with doubling, the global step cap.
    pub horizon: usize,
    pub delta: f64,
    pub sigma: f64,
    pub lambda: LambdaRule,
    pub budget: SolverBudget,
    pub seed: u64,
    pub mode: Mode,
    pub doubling: bool,
    pub beta_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 50,
            delta: 0.05,
            sigma: 0.01,
            lambda: LambdaRule::Horizon,
            budget: SolverBudget::default(),
            seed: 0,
            mode: Mode::Greybox,
            doubling: false,
            beta_scale: 1.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon T must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta {} must lie in (0, 1)",
                self.delta
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma {} must be >= 0", self.sigma)));
        }
        if let LambdaRule::Fixed(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!("lambda {l} must be positive")));
            }
        }
        self.budget.validate()
    }

    fn lambda_for(&self, round_horizon: usize) -> f64 {
        match self.lambda {
            LambdaRule::Horizon => lambda_for_horizon(round_horizon),
            LambdaRule::Fixed(l) => l,
        }
    }
}

/// One noisy black-box query.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeObservation {
    pub function: usize,
    pub node: usize,
    pub model: usize,
    pub input: Vec<f64>,
    pub value: f64,
}

/// Width multiplier and posterior standard deviation of one black-box node at
/// its planned input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeStat {
    pub function: usize,
    pub node: usize,
    pub beta: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Global step index, starting at 1.
    pub t: usize,
    /// Doubling round, 0 without doubling.
    pub round: usize,
    pub x: Vec<f64>,
    pub z_true: Vec<Vec<f64>>,
    pub z_bar: Vec<Vec<f64>>,
    pub observations: Vec<NodeObservation>,
    pub f: f64,
    pub g: Vec<f64>,
    /// Smallest slack of the plausible-set constraints along the plan.
    pub plan_slack: f64,
    pub nodes: Vec<NodeStat>,
    /// `f(x_t) - f(x*)`, NaN without ground truth.
    pub regret: f64,
    pub violations: Vec<f64>,
    /// `sum_i A_i beta_i sd_i` per function, objective first.
    pub discrepancy_bound: Vec<f64>,
}

impl StepRecord {
    pub fn planned_objective(&self) -> f64 {
        *self.z_bar[0].last().expect("non-empty plan")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// The planned constraints could not be met at this step.
    InfeasibilityDeclared(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub problem: String,
    pub mode: Mode,
    pub seed: u64,
    pub input_dim: usize,
    pub constraint_count: usize,
    /// `(function, node)` of every black-box node, in column order.
    pub black_nodes: Vec<(usize, usize)>,
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
}

struct Engine<'a> {
    problem: &'a Problem,
    config: &'a RunConfig,
    layout: Layout,
    surrogates: Surrogates,
    constants: Vec<BTreeMap<usize, f64>>,
    rng: ChaCha8Rng,
    records: Vec<StepRecord>,
}

fn mix(seed: u64, t: usize) -> u32 {
    // splitmix64 finalizer
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as u32
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem, config: &'a RunConfig, first_horizon: usize) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(problem);
        let surrogates = Surrogates::new(
            &layout,
            config.sigma,
            config.delta,
            problem.total_nodes(),
            config.lambda_for(first_horizon),
            config.beta_scale,
        )?;
        Ok(Engine {
            problem,
            config,
            layout,
            surrogates,
            constants: problem.functions().map(|g| g.discrepancy_constants()).collect(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            records: Vec::new(),
        })
    }

    /// Runs one step; `false` when infeasibility was declared.
    fn step(&mut self, t: usize, round: usize) -> Result<bool> {
        let problem = self.problem;
        let acq = Acquisition::new(problem, &self.layout, &self.surrogates);
        let plan = acq.solve(&self.config.budget, mix(self.config.seed, t))?;
        if !plan.feasible {
            return Ok(false);
        }
        let plan_slack = acq.plausibility_slack(&plan.x, &plan.z_bar)?;
        let truth = problem.evaluate(&plan.x)?;

        let mut nodes = Vec::new();
        let mut discrepancy_bound = Vec::with_capacity(problem.function_count());
        let mut buf = Vec::new();
        for (fi, graph) in problem.functions().enumerate() {
            let mut bound = 0.0;
            for &i in graph.black_set() {
                let model = self.layout.model_of(fi, i).expect("black-box node has a model");
                graph.gather(i, &plan.x, &plan.z_bar[fi], &mut buf);
                let (_, sd) = self.surrogates.state(model).posterior_sd(&buf)?;
                let beta = self.surrogates.beta(model);
                bound += self.constants[fi][&i] * beta * sd;
                nodes.push(NodeStat {
                    function: fi,
                    node: i,
                    beta,
                    sd,
                });
            }
            discrepancy_bound.push(bound);
        }

        let mut observations = Vec::with_capacity(self.layout.slots().len());
        for slot in self.layout.slots() {
            let graph = problem.function(slot.function);
            let obs = graph.observe_node(
                slot.node,
                &plan.x,
                &plan.z_bar[slot.function],
                self.config.sigma,
                &mut self.rng,
            );
            observations.push(NodeObservation {
                function: slot.function,
                node: slot.node,
                model: slot.model,
                input: obs.input,
                value: obs.value,
            });
        }

        let regret = problem.ground_truth().map_or(f64::NAN, |gt| truth.f - gt.f);
        let violations = truth.g.iter().map(|v| v.max(0.0)).collect();
        self.records.push(StepRecord {
            t,
            round,
            x: plan.x,
            z_true: truth.z,
            z_bar: plan.z_bar,
            observations: observations.clone(),
            f: truth.f,
            g: truth.g,
            plan_slack,
            nodes,
            regret,
            violations,
            discrepancy_bound,
        });
        for obs in &observations {
            self.surrogates.observe(obs.model, &obs.input, obs.value)?;
        }
        Ok(true)
    }

    fn finish(self, outcome: Outcome) -> RunTrace {
        let problem = self.problem;
        let black_nodes = problem
            .functions()
            .enumerate()
            .flat_map(|(fi, g)| g.black_set().iter().map(move |&i| (fi, i)))
            .collect();
        RunTrace {
            problem: problem.name().to_string(),
            mode: self.config.mode,
            seed: self.config.seed,
            input_dim: problem.input_dim(),
            constraint_count: problem.constraints().len(),
            black_nodes,
            records: self.records,
            outcome,
        }
    }
}

/// Horizons of the doubling rounds whose steps fit under `cap`, the last one
/// possibly truncated.
pub fn doubling_schedule(cap: usize) -> Vec<usize> {
    let mut rounds = Vec::new();
    let mut used = 0;
    let mut horizon = 1usize;
    while used < cap {
        rounds.push(horizon);
        used += horizon;
        horizon *= 2;
    }
    rounds
}

fn run_rounds(problem: &Problem, config: &RunConfig, rounds: &[usize]) -> Result<RunTrace> {
    let mut engine = Engine::new(problem, config, rounds[0])?;
    let mut t = 0;
    for (r, &horizon) in rounds.iter().enumerate() {
        if r > 0 {
            engine.surrogates = engine.surrogates.with_lambda(config.lambda_for(horizon))?;
        }
        for _ in 0..horizon {
            if t >= config.horizon {
                break;
            }
            t += 1;
            if !engine.step(t, r)? {
                return Ok(engine.finish(Outcome::InfeasibilityDeclared(t)));
            }
        }
    }
    Ok(engine.finish(Outcome::Completed))
}

/// Unconstrained loop over `config.horizon` steps.
pub fn run_unconstrained(problem: &Problem, config: &RunConfig) -> Result<RunTrace> {
    if !problem.constraints().is_empty() {
        return Err(Error::InvalidProblem(format!(
            "problem `{}` has constraints; use the constrained loop",
            problem.name()
        )));
    }
    run_rounds(problem, config, &[config.horizon])
}

/// Constrained loop; stops with [`Outcome::InfeasibilityDeclared`] as soon as
/// the planned constraints cannot be met.
pub fn run_constrained(problem: &Problem, config: &RunConfig) -> Result<RunTrace> {
    run_rounds(problem, config, &[config.horizon])
}

/// The same loop on the opaque version of the problem, where every function
/// is one black-box node of `x`.
pub fn run_blackbox_baseline(problem: &Problem, config: &RunConfig) -> Result<RunTrace> {
    let opaque = problem.blackbox_baseline()?;
    let cfg = RunConfig {
        mode: Mode::Blackbox,
        ..config.clone()
    };
    if cfg.doubling {
        run_with_doubling(&opaque, &cfg)
    } else {
        run_constrained(&opaque, &cfg)
    }
}

/// Rounds with horizons 1, 2, 4, ... and the regularizer reset per round; data
/// is carried over. `config.horizon` caps the total number of steps.
pub fn run_with_doubling(problem: &Problem, config: &RunConfig) -> Result<RunTrace> {
    run_rounds(problem, config, &doubling_schedule(config.horizon))
}

/// Runs the loop selected by `config.mode` and `config.doubling`.
pub fn run(problem: &Problem, config: &RunConfig) -> Result<RunTrace> {
    match (config.mode, config.doubling) {
        (Mode::Blackbox, _) => run_blackbox_baseline(problem, config),
        (Mode::Greybox, true) => run_with_doubling(problem, config),
        (Mode::Greybox, false) => run_constrained(problem, config),
    }
}
