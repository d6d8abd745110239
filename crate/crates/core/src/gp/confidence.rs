use serde::{Deserialize, Serialize};

use super::state::GpState;
use crate::error::{Error, Result};

/// Parameters of the high-probability confidence tube around one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    /// RKHS norm bound `B` of the node function.
    pub rkhs_bound: f64,
    /// Observation noise level.
    pub sigma: f64,
    /// Total node count over all functions of the problem.
    pub node_count: usize,
    pub delta: f64,
    #[serde(default = "one")]
    pub beta_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ConfidenceModel {
    pub fn new(rkhs_bound: f64, sigma: f64, node_count: usize, delta: f64) -> Result<Self> {
        let conf = ConfidenceModel {
            rkhs_bound,
            sigma,
            node_count,
            delta,
            beta_scale: 1.0,
        };
        conf.validate()?;
        Ok(conf)
    }

    pub fn with_beta_scale(mut self, scale: f64) -> Result<Self> {
        self.beta_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rkhs_bound > 0.0 && self.rkhs_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "RKHS bound {} must be positive",
                self.rkhs_bound
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise level {} must be >= 0",
                self.sigma
            )));
        }
        if self.node_count == 0 {
            return Err(Error::InvalidParameter("node count must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta {} must lie in (0, 1)",
                self.delta
            )));
        }
        if !(self.beta_scale > 0.0 && self.beta_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta scale {} must be positive",
                self.beta_scale
            )));
        }
        Ok(())
    }

    /// `beta = scale * (B + sigma * sqrt(2 (gamma + 1 + ln(m / delta))))`, where
    /// `gamma` is the information gain of the data seen before this step.
    pub fn beta(&self, info_gain_prev: f64) -> f64 {
        let gamma = info_gain_prev.max(0.0);
        let log_term = (self.node_count as f64 / self.delta).ln();
        self.beta_scale * (self.rkhs_bound + self.sigma * (2.0 * (gamma + 1.0 + log_term)).sqrt())
    }
}

/// Clipped confidence interval `[l, u]` at `s` for the given `beta`.
///
/// Both ends are clamped into `[-B, B]`, so `l <= u` holds even when the
/// posterior mean has drifted outside the norm ball.
pub fn clipped_interval(mean: f64, sd: f64, beta: f64, bound: f64) -> (f64, f64) {
    let lower = (mean - beta * sd).clamp(-bound, bound);
    let upper = (mean + beta * sd).clamp(-bound, bound);
    (lower, upper)
}

/// Lower and upper confidence bounds at `s`, with `beta` computed from the
/// state's current information gain.
pub fn bounds(state: &GpState, conf: &ConfidenceModel, s: &[f64]) -> Result<(f64, f64)> {
    let (mean, sd) = state.posterior_sd(s)?;
    Ok(clipped_interval(
        mean,
        sd,
        conf.beta(state.info_gain()),
        conf.rkhs_bound,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Kernel;

    #[test]
    fn zero_noise_beta_is_bound() {
        let c = ConfidenceModel::new(1.0, 0.0, 5, 0.1).unwrap();
        assert_eq!(c.beta(0.0), 1.0);
        assert_eq!(c.beta(123.0), 1.0);
    }

    #[test]
    fn beta_formula_value() {
        // B=1, sigma=0.1, gamma=0, m=1, delta=e^-1: 1 + 0.1 sqrt(2 (0 + 1 + 1)) = 1.2
        let c = ConfidenceModel::new(1.0, 0.1, 1, (-1.0f64).exp()).unwrap();
        assert!((c.beta(0.0) - 1.2).abs() < 1e-12);
        let scaled = c.clone().with_beta_scale(2.0).unwrap();
        assert!((scaled.beta(0.0) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn beta_monotone_in_gain() {
        let c = ConfidenceModel::new(2.0, 0.3, 4, 0.05).unwrap();
        let mut last = 0.0;
        for g in [0.0, 0.1, 0.5, 2.0, 10.0] {
            assert!(c.beta(g) >= last);
            last = c.beta(g);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ConfidenceModel::new(0.0, 0.1, 1, 0.1).is_err());
        assert!(ConfidenceModel::new(1.0, -0.1, 1, 0.1).is_err());
        assert!(ConfidenceModel::new(1.0, 0.1, 0, 0.1).is_err());
        assert!(ConfidenceModel::new(1.0, 0.1, 1, 1.0).is_err());
    }

    #[test]
    fn prior_interval_is_fully_clipped() {
        let k = Kernel::squared_exponential(0.5, 1.0).unwrap();
        let gp = GpState::new(k, 1, 1.0).unwrap();
        // beta * sd = 2 >= 2B
        let conf = ConfidenceModel::new(1.0, 1.0, 1, 0.5).unwrap();
        assert!(conf.beta(0.0) >= 2.0);
        assert_eq!(bounds(&gp, &conf, &[0.3]).unwrap(), (-1.0, 1.0));
    }

    #[test]
    fn interval_ordered_even_when_mean_leaves_ball() {
        let (l, u) = clipped_interval(5.0, 0.1, 1.0, 1.0);
        assert!(l <= u);
        assert_eq!((l, u), (1.0, 1.0));
    }

    #[test]
    fn width_shrinks_after_observing_point() {
        let k = Kernel::squared_exponential(0.3, 1.0).unwrap();
        let conf = ConfidenceModel::new(1.0, 0.05, 1, 0.1).unwrap();
        let gp = GpState::new(k, 1, 1.0).unwrap().update(&[0.0], 0.2).unwrap();
        let (l0, u0) = bounds(&gp, &conf, &[0.6]).unwrap();
        let next = gp.update(&[0.6], 0.1).unwrap();
        // same beta for the comparison: width shrink must come from the variance
        let (m, sd) = next.posterior_sd(&[0.6]).unwrap();
        let (l1, u1) = clipped_interval(m, sd, conf.beta(gp.info_gain()), 1.0);
        assert!(u1 - l1 < u0 - l0);
    }
}
