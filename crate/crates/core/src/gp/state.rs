use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use crate::error::{Error, Result};

/// Negative posterior variances above this are treated as round-off.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// Regularizer used when the horizon is unknown.
pub const ANYTIME_LAMBDA: f64 = 1e-2;

/// `lambda = 1 + 2 / T` for a declared horizon `T`.
pub fn lambda_for_horizon(horizon: usize) -> f64 {
    1.0 + 2.0 / horizon as f64
}

/// How the factorization is maintained when a point is appended.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Factorize `K + lambda I` from scratch on every update.
    #[default]
    Refit,
    /// Extend the existing Cholesky factor by one row.
    Append,
}

/// Posterior of one black-box node: a kernel-ridge / GP model with
/// regularizer `lambda` over the observed `(s, y)` pairs.
///
/// The state is a value. [`GpState::update`] returns a new state and never
/// mutates the receiver, so a fixed state can be queried from many threads.
#[derive(Clone, Debug)]
pub struct GpState {
    kernel: Kernel,
    dim: usize,
    lambda: f64,
    fit_mode: FitMode,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Packed row-major lower Cholesky factor of `K + lambda I`.
    chol: Vec<f64>,
    /// `(K + lambda I)^{-1} y`
    alpha: Vec<f64>,
    info_gain: f64,
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl GpState {
    pub fn new(kernel: Kernel, dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularizer {lambda} must be positive"
            )));
        }
        if dim == 0 || !kernel.supports_dim(dim) {
            return Err(Error::DimensionMismatch {
                expected: kernel.lengthscales().len(),
                found: dim,
            });
        }
        Ok(GpState {
            kernel,
            dim,
            lambda,
            fit_mode: FitMode::Refit,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            alpha: Vec::new(),
            info_gain: 0.0,
        })
    }

    pub fn with_fit_mode(mut self, mode: FitMode) -> Self {
        self.fit_mode = mode;
        self
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Information gain of the stored inputs, `1/2 log det(I + K / lambda)`.
    pub fn info_gain(&self) -> f64 {
        self.info_gain
    }

    fn check_dim(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: s.len(),
            });
        }
        Ok(())
    }

    /// Posterior mean and variance at `s`.
    pub fn posterior(&self, s: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(s)?;
        let prior = self.kernel.eval(s, s);
        let t = self.inputs.len();
        if t == 0 {
            return Ok((0.0, prior));
        }
        // v = L^{-1} k(S, s) by forward substitution; mean = k . alpha
        let mut v = Vec::with_capacity(t);
        let mut mean = 0.0;
        let mut quad = 0.0;
        for i in 0..t {
            let ki = self.kernel.eval(&self.inputs[i], s);
            mean += ki * self.alpha[i];
            let row = &self.chol[row_start(i)..row_start(i) + i + 1];
            let vi = (ki - dot(&row[..i], &v)) / row[i];
            quad += vi * vi;
            v.push(vi);
        }
        let var = prior - quad;
        if var < 0.0 {
            if var < -VARIANCE_CLAMP {
                return Err(Error::NumericalBreakdown(format!(
                    "posterior variance {var:e} below clamp threshold"
                )));
            }
            return Ok((mean, 0.0));
        }
        Ok((mean, var))
    }

    pub fn posterior_sd(&self, s: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.posterior(s)?;
        Ok((m, v.sqrt()))
    }

    /// Returns the state conditioned on one more observation.
    pub fn update(&self, s_new: &[f64], y_new: f64) -> Result<GpState> {
        self.check_dim(s_new)?;
        if !y_new.is_finite() {
            return Err(Error::InvalidParameter(format!("observation {y_new} is not finite")));
        }
        let mut next = self.clone();
        next.inputs.push(s_new.to_vec());
        next.targets.push(y_new);
        match self.fit_mode {
            FitMode::Refit => next.refit()?,
            FitMode::Append => next.append_last()?,
        }
        Ok(next)
    }

    /// Same data under a different regularizer; the factorization and the
    /// information gain are recomputed.
    pub fn with_lambda(&self, lambda: f64) -> Result<GpState> {
        let mut next = GpState::new(self.kernel.clone(), self.dim, lambda)?.with_fit_mode(self.fit_mode);
        next.inputs = self.inputs.clone();
        next.targets = self.targets.clone();
        next.refit()?;
        Ok(next)
    }

    fn refit(&mut self) -> Result<()> {
        let t = self.inputs.len();
        if t == 0 {
            self.chol.clear();
            self.alpha.clear();
            self.info_gain = 0.0;
            return Ok(());
        }
        let mut k = DMatrix::from_row_slice(t, t, &self.kernel.gram(&self.inputs));
        for i in 0..t {
            k[(i, i)] += self.lambda;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::NumericalBreakdown("K + lambda I is not positive definite".into()))?;
        let l = chol.l();
        self.chol.clear();
        self.chol.reserve(row_start(t));
        for i in 0..t {
            for j in 0..=i {
                self.chol.push(l[(i, j)]);
            }
        }
        self.finish_fit()
    }

    fn append_last(&mut self) -> Result<()> {
        let t = self.inputs.len();
        let s = &self.inputs[t - 1];
        let mut row = Vec::with_capacity(t);
        let mut quad = 0.0;
        for i in 0..t - 1 {
            let ki = self.kernel.eval(&self.inputs[i], s);
            let prev = &self.chol[row_start(i)..row_start(i) + i + 1];
            let mut acc = ki;
            for (j, rj) in row.iter().enumerate() {
                acc -= prev[j] * rj;
            }
            let li = acc / prev[i];
            quad += li * li;
            row.push(li);
        }
        let diag_sq = self.kernel.eval(s, s) + self.lambda - quad;
        if !(diag_sq > 0.0) {
            return Err(Error::NumericalBreakdown(
                "appended pivot of K + lambda I is not positive".into(),
            ));
        }
        row.push(diag_sq.sqrt());
        self.chol.extend(row);
        self.finish_fit()
    }

    /// Solves for alpha and recomputes the information gain from the factor.
    fn finish_fit(&mut self) -> Result<()> {
        let t = self.inputs.len();
        // forward: L w = y
        let mut w = vec![0.0; t];
        for i in 0..t {
            let row = &self.chol[row_start(i)..row_start(i) + i + 1];
            let mut acc = self.targets[i];
            for j in 0..i {
                acc -= row[j] * w[j];
            }
            w[i] = acc / row[i];
        }
        // backward: L^T alpha = w
        let mut alpha = vec![0.0; t];
        for i in (0..t).rev() {
            let mut acc = w[i];
            for j in i + 1..t {
                acc -= self.chol[row_start(j) + i] * alpha[j];
            }
            alpha[i] = acc / self.chol[row_start(i) + i];
        }
        self.alpha = alpha;
        // log det(K + lambda I) = 2 sum log L_ii; det(I + K/lambda) = det(K + lambda I) / lambda^t
        let log_diag: f64 = (0..t).map(|i| self.chol[row_start(i) + i].ln()).sum();
        let gain = log_diag - 0.5 * t as f64 * self.lambda.ln();
        if !gain.is_finite() {
            return Err(Error::NumericalBreakdown("information gain is not finite".into()));
        }
        self.info_gain = gain.max(0.0);
        Ok(())
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            kernel: self.kernel.clone(),
            dim: self.dim,
            lambda: self.lambda,
            fit_mode: self.fit_mode,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn from_snapshot(snap: GpSnapshot) -> Result<GpState> {
        if snap.inputs.len() != snap.targets.len() {
            return Err(Error::DimensionMismatch {
                expected: snap.inputs.len(),
                found: snap.targets.len(),
            });
        }
        let mut state = GpState::new(snap.kernel, snap.dim, snap.lambda)?.with_fit_mode(snap.fit_mode);
        for s in &snap.inputs {
            state.check_dim(s)?;
        }
        state.inputs = snap.inputs;
        state.targets = snap.targets;
        state.refit()?;
        Ok(state)
    }

    /// Text form for run resumption (TOML).
    pub fn to_text(&self) -> String {
        toml::to_string(&self.snapshot()).expect("snapshot is always serializable")
    }

    pub fn from_text(text: &str) -> Result<GpState> {
        let snap: GpSnapshot = toml::from_str(text).map_err(|e| Error::config("gp state", e.to_string()))?;
        GpState::from_snapshot(snap)
    }
}

/// Serializable content of a [`GpState`]; the factorization is rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: Kernel,
    pub dim: usize,
    pub lambda: f64,
    #[serde(default)]
    pub fit_mode: FitMode,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::testing::{dense_info_gain, dense_posterior, random_dataset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn se(ls: f64) -> Kernel {
        Kernel::squared_exponential(ls, 1.0).unwrap()
    }

    #[test]
    fn empty_state_returns_prior() {
        let k = Kernel::squared_exponential(0.3, 0.7).unwrap();
        let gp = GpState::new(k, 2, 1.0).unwrap();
        assert_eq!(gp.posterior(&[0.1, 0.2]).unwrap(), (0.0, 0.7));
        assert_eq!(gp.info_gain(), 0.0);
    }

    #[test]
    fn single_point_closed_form() {
        // mean = k(s,s) y / (k(s,s) + lambda)
        let k = Kernel::squared_exponential(0.5, 0.8).unwrap();
        let lambda = 1.1;
        let gp = GpState::new(k, 1, lambda).unwrap().update(&[0.3], 2.0).unwrap();
        let (m, v) = gp.posterior(&[0.3]).unwrap();
        assert!((m - 0.8 * 2.0 / (0.8 + lambda)).abs() < 1e-14);
        assert!((v - (0.8 - 0.64 / (0.8 + lambda))).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let gp = GpState::new(se(1.0), 2, 1.0).unwrap();
        assert!(matches!(gp.posterior(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(gp.update(&[1.0, 2.0, 3.0], 0.0).is_err());
        assert!(GpState::new(se(1.0), 2, 0.0).is_err());
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (kernel, dim, lambda, xs, ys) = random_dataset(&mut rng, 20, 3);
            let mut gp = GpState::new(kernel.clone(), dim, lambda).unwrap();
            for (x, y) in xs.iter().zip(&ys) {
                gp = gp.update(x, *y).unwrap();
            }
            for _ in 0..50 {
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                let (m, v) = gp.posterior(&q).unwrap();
                let (mo, vo) = dense_posterior(&kernel, lambda, &xs, &ys, &q);
                assert!((m - mo).abs() < 1e-8 && (v - vo.max(0.0)).abs() < 1e-8);
            }
            assert!((gp.info_gain() - dense_info_gain(&kernel, lambda, &xs)).abs() < 1e-8);
        }
    }

    #[test]
    fn append_mode_agrees_with_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (kernel, dim, lambda, xs, ys) = random_dataset(&mut rng, 30, 4);
        let mut a = GpState::new(kernel.clone(), dim, lambda).unwrap();
        let mut b = GpState::new(kernel, dim, lambda)
            .unwrap()
            .with_fit_mode(FitMode::Append);
        for (x, y) in xs.iter().zip(&ys) {
            a = a.update(x, *y).unwrap();
            b = b.update(x, *y).unwrap();
        }
        let q = vec![0.1; dim];
        let (ma, va) = a.posterior(&q).unwrap();
        let (mb, vb) = b.posterior(&q).unwrap();
        assert!((ma - mb).abs() < 1e-10 && (va - vb).abs() < 1e-10);
        assert!((a.info_gain() - b.info_gain()).abs() < 1e-10);
    }

    #[test]
    fn update_does_not_mutate_receiver() {
        let gp = GpState::new(se(0.5), 1, 1.0).unwrap();
        let next = gp.update(&[0.0], 1.0).unwrap();
        assert!(gp.is_empty());
        assert_eq!(next.len(), 1);
    }

    #[test]
    fn interpolation_pull_towards_observation() {
        let gp = GpState::new(se(0.5), 1, 0.01).unwrap();
        let prior_gap = (gp.posterior(&[0.2]).unwrap().0 - 3.0).abs();
        let post = gp.update(&[0.2], 3.0).unwrap();
        let post_gap = (post.posterior(&[0.2]).unwrap().0 - 3.0).abs();
        assert!(post_gap < prior_gap);
    }

    #[test]
    fn variance_non_increasing_along_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let (kernel, dim, lambda, xs, ys) = random_dataset(&mut rng, 15, 3);
            let probe: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut gp = GpState::new(kernel.clone(), dim, lambda).unwrap();
            let mut last = gp.posterior(&probe).unwrap().1;
            for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
                gp = gp.update(x, *y).unwrap();
                let v = gp.posterior(&probe).unwrap().1;
                let (_, vo) = dense_posterior(&kernel, lambda, &xs[..=i], &ys[..=i], &probe);
                assert!((v - vo.max(0.0)).abs() < 1e-8);
                assert!(v <= last + 1e-12);
                last = v;
            }
        }
    }

    #[test]
    fn info_gain_monotone_and_starts_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (kernel, dim, lambda, xs, ys) = random_dataset(&mut rng, 25, 2);
        let mut gp = GpState::new(kernel, dim, lambda).unwrap();
        assert_eq!(gp.info_gain(), 0.0);
        let mut last = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            gp = gp.update(x, *y).unwrap();
            assert!(gp.info_gain() >= last);
            last = gp.info_gain();
        }
    }

    #[test]
    fn lambda_change_recomputes_gain() {
        let gp = GpState::new(se(0.4), 1, 3.0)
            .unwrap()
            .update(&[0.0], 1.0)
            .unwrap()
            .update(&[0.5], -1.0)
            .unwrap();
        let g = gp.with_lambda(1.0).unwrap();
        assert!(g.info_gain() > gp.info_gain());
        let xs = gp.inputs().to_vec();
        assert!((g.info_gain() - dense_info_gain(gp.kernel(), 1.0, &xs)).abs() < 1e-12);
    }

    #[test]
    fn text_roundtrip_preserves_posterior() {
        let gp = GpState::new(Kernel::matern(1.5, 0.3, 0.9).unwrap(), 2, 1.04)
            .unwrap()
            .update(&[0.1, 0.2], 0.5)
            .unwrap()
            .update(&[-0.3, 0.7], -0.25)
            .unwrap();
        let back = GpState::from_text(&gp.to_text()).unwrap();
        assert_eq!(back.snapshot(), gp.snapshot());
        assert_eq!(back.posterior(&[0.0, 0.0]).unwrap(), gp.posterior(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn horizon_lambda() {
        assert_eq!(lambda_for_horizon(2), 2.0);
        assert_eq!(lambda_for_horizon(100), 1.02);
    }
}
