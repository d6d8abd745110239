use crate::error::{Error, Result};
use crate::gp::{ConfidenceModel, GpState, Kernel};
use crate::graph::Input;
use crate::problem::Problem;

/// One GP surrogate, possibly shared by black-box nodes of several functions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInfo {
    pub name: String,
    pub kernel: Kernel,
    pub rkhs_bound: f64,
    pub dim: usize,
}

/// One free interval fraction of the plausible-set parameterization.
///
/// Nodes of different functions that read the same model at the same
/// `x`-only inputs see identical intervals and share a slot, so their planned
/// values coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub model: usize,
    /// Function and node that own the slot; observations are taken there.
    pub function: usize,
    pub node: usize,
}

/// Maps the black-box nodes of a problem onto surrogates and slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    models: Vec<ModelInfo>,
    slots: Vec<Slot>,
    node_slot: Vec<Vec<Option<usize>>>,
}

impl Layout {
    pub fn new(problem: &Problem) -> Layout {
        let mut models: Vec<ModelInfo> = Vec::new();
        let mut slots: Vec<Slot> = Vec::new();
        let mut slot_parents: Vec<Vec<Input>> = Vec::new();
        let mut node_slot = Vec::with_capacity(problem.function_count());
        for (fi, graph) in problem.functions().enumerate() {
            let mut per_node = vec![None; graph.len()];
            for &i in graph.black_set() {
                let node = graph.node(i);
                let bb = node.black_box().expect("black set holds black boxes");
                let name = bb
                    .model
                    .clone()
                    .unwrap_or_else(|| format!("{}_{i}", Problem::function_label(fi)));
                let model = match models.iter().position(|m| m.name == name) {
                    Some(k) => k,
                    None => {
                        models.push(ModelInfo {
                            name,
                            kernel: bb.kernel.clone(),
                            rkhs_bound: bb.rkhs_bound,
                            dim: node.parents.len(),
                        });
                        models.len() - 1
                    }
                };
                let x_only = node.parents.iter().all(|p| matches!(p, Input::X(_)));
                let shared = if x_only {
                    (0..slots.len()).find(|&k| slots[k].model == model && slot_parents[k] == node.parents)
                } else {
                    None
                };
                per_node[i] = Some(shared.unwrap_or_else(|| {
                    slots.push(Slot {
                        model,
                        function: fi,
                        node: i,
                    });
                    slot_parents.push(node.parents.clone());
                    slots.len() - 1
                }));
            }
            node_slot.push(per_node);
        }
        Layout {
            models,
            slots,
            node_slot,
        }
    }

    pub fn models(&self) -> &[ModelInfo] {
        &self.models
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot_of(&self, function: usize, node: usize) -> Option<usize> {
        self.node_slot[function][node]
    }

    pub fn model_of(&self, function: usize, node: usize) -> Option<usize> {
        self.slot_of(function, node).map(|s| self.slots[s].model)
    }
}

/// Clipped confidence interval of one model at one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeInterval {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Current posterior and confidence parameters of every model.
#[derive(Clone, Debug)]
pub struct Surrogates {
    states: Vec<GpState>,
    confidence: Vec<ConfidenceModel>,
    beta: Vec<f64>,
}

impl Surrogates {
    /// Empty surrogates for every model in `layout`, with `m` the node count
    /// entering the confidence level.
    pub fn new(
        layout: &Layout,
        sigma: f64,
        delta: f64,
        node_count: usize,
        lambda: f64,
        beta_scale: f64,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(layout.models().len());
        let mut confidence = Vec::with_capacity(layout.models().len());
        for m in layout.models() {
            states.push(GpState::new(m.kernel.clone(), m.dim, lambda)?);
            confidence.push(ConfidenceModel::new(m.rkhs_bound, sigma, node_count, delta)?.with_beta_scale(beta_scale)?);
        }
        Surrogates::from_parts(states, confidence)
    }

    pub fn from_parts(states: Vec<GpState>, confidence: Vec<ConfidenceModel>) -> Result<Self> {
        if states.len() != confidence.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: confidence.len(),
            });
        }
        let beta = states
            .iter()
            .zip(&confidence)
            .map(|(s, c)| c.beta(s.info_gain()))
            .collect();
        Ok(Surrogates {
            states,
            confidence,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, model: usize) -> &GpState {
        &self.states[model]
    }

    pub fn confidence(&self, model: usize) -> &ConfidenceModel {
        &self.confidence[model]
    }

    /// Width multiplier for the next step, from the data seen so far.
    pub fn beta(&self, model: usize) -> f64 {
        self.beta[model]
    }

    pub fn interval(&self, model: usize, s: &[f64]) -> Result<NodeInterval> {
        let (mean, sd) = self.states[model].posterior_sd(s)?;
        let bound = self.confidence[model].rkhs_bound;
        let (lower, upper) = crate::gp::clipped_interval(mean, sd, self.beta[model], bound);
        Ok(NodeInterval { mean, sd, lower, upper })
    }

    pub fn observe(&mut self, model: usize, s: &[f64], y: f64) -> Result<()> {
        self.states[model] = self.states[model].update(s, y)?;
        self.beta[model] = self.confidence[model].beta(self.states[model].info_gain());
        Ok(())
    }

    /// Same data under a new regularizer.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let states = self
            .states
            .iter()
            .map(|s| s.with_lambda(lambda))
            .collect::<Result<Vec<_>>>()?;
        Surrogates::from_parts(states, self.confidence.clone())
    }
}
