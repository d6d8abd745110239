//! Regret and violation series of a run, and their aggregation over seeds.

use crate::error::{Error, Result};
use crate::optimizer::{RunTrace, TraceTable};
use crate::problem::GroundTruth;

/// Per-step metric series of one run; entry `t - 1` covers steps `1..=t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    /// `f(x_t) - f(x*)`
    pub regret: Vec<f64>,
    /// `R_t`
    pub cumulative_regret: Vec<f64>,
    /// `sum [f(x_tau) - f(x*)]^+`
    pub cumulative_positive_regret: Vec<f64>,
    /// `V_{k,t}` per constraint: `violations[k][t - 1]`.
    pub violations: Vec<Vec<f64>>,
    /// `CR_t`
    pub constrained_regret: Vec<f64>,
    /// `min_{tau <= t} f(x_tau) - f(x*)`
    pub best_regret: Vec<f64>,
}

/// `CR_t = min_{tau <= t} [r_tau]^+ + sum_k [g_k(x_tau)]^+`, given the
/// instantaneous regrets and positive constraint parts.
pub fn constrained_regret(regret: &[f64], violations: &[Vec<f64>]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    regret
        .iter()
        .zip(violations)
        .map(|(r, v)| {
            let term = r.max(0.0) + v.iter().map(|x| x.max(0.0)).sum::<f64>();
            if r.is_nan() {
                return f64::NAN;
            }
            best = best.min(term);
            best
        })
        .collect()
}

impl MetricSeries {
    /// Series from raw objective values `f`, constraint values `g[t][k]` and
    /// the optimal value.
    pub fn from_values(f: &[f64], g: &[Vec<f64>], optimum: Option<f64>) -> Result<Self> {
        let f_star = optimum
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::MissingGroundTruth("optimal objective value is unknown".into()))?;
        if f.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: f.len(),
                found: g.len(),
            });
        }
        let k = g.first().map_or(0, Vec::len);
        let regret: Vec<f64> = f.iter().map(|v| v - f_star).collect();
        let positive: Vec<Vec<f64>> = g.iter().map(|row| row.iter().map(|v| v.max(0.0)).collect()).collect();
        let running = |vals: &mut dyn Iterator<Item = f64>| -> Vec<f64> {
            let mut acc = 0.0;
            vals.map(|v| {
                acc += v;
                acc
            })
            .collect()
        };
        let mut violations = Vec::with_capacity(k);
        for j in 0..k {
            violations.push(running(&mut positive.iter().map(|row| row[j])));
        }
        let mut best = f64::INFINITY;
        let best_regret = regret
            .iter()
            .map(|r| {
                best = best.min(*r);
                best
            })
            .collect();
        Ok(MetricSeries {
            cumulative_regret: running(&mut regret.iter().cloned()),
            cumulative_positive_regret: running(&mut regret.iter().map(|r| r.max(0.0))),
            constrained_regret: constrained_regret(&regret, &positive),
            violations,
            best_regret,
            regret,
        })
    }

    pub fn len(&self) -> usize {
        self.regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regret.is_empty()
    }
}

/// Metric series of a trace against the given optimum.
pub fn compute_metrics(trace: &RunTrace, ground_truth: Option<&GroundTruth>) -> Result<MetricSeries> {
    let f: Vec<f64> = trace.records.iter().map(|r| r.f).collect();
    let g: Vec<Vec<f64>> = trace.records.iter().map(|r| r.g.clone()).collect();
    MetricSeries::from_values(&f, &g, ground_truth.map(|gt| gt.f))
}

/// Metric series of an exported trace; the optimum is recovered from the
/// regret column.
pub fn metrics_from_table(table: &TraceTable) -> Result<MetricSeries> {
    MetricSeries::from_values(&table.f, &table.g, table.optimum_value())
}

/// Lower quartile, median and upper quartile with linear interpolation
/// between order statistics. NaN entries are ignored; `None` when nothing
/// remains.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Some((q(0.25), q(0.5), q(0.75)))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quartiles(values).map(|(_, m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_play_has_zero_regret() {
        let m = MetricSeries::from_values(&[1.0; 4], &vec![vec![-0.5]; 4], Some(1.0)).unwrap();
        assert!(m.cumulative_regret.iter().all(|v| *v == 0.0));
        assert!(m.constrained_regret.iter().all(|v| *v == 0.0));
        assert!(m.violations[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn overshoot_is_clipped() {
        let m = MetricSeries::from_values(&[0.7], &[vec![0.2]], Some(1.0)).unwrap();
        assert!((m.regret[0] + 0.3).abs() < 1e-15);
        assert_eq!(m.cumulative_positive_regret[0], 0.0);
        assert!((m.constrained_regret[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn missing_optimum_is_an_error() {
        assert!(matches!(
            MetricSeries::from_values(&[0.0], &[vec![]], None),
            Err(Error::MissingGroundTruth(_))
        ));
        assert!(MetricSeries::from_values(&[0.0], &[vec![]], Some(f64::NAN)).is_err());
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0]), Some((1.75, 2.5, 3.25)));
        assert_eq!(median(&[f64::NAN, 5.0]), Some(5.0));
        assert_eq!(quartiles(&[]), None);
    }
}
