//! Concrete function families used as black-box ground truth: finite kernel
//! expansions with a known RKHS norm, and random-Fourier-feature draws that
//! stand in for Gaussian-process sample paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Kernel, KernelFamily};
use crate::graph::Domain;

/// `phi(s) = sum_j w_j k(c_j, s)`, whose RKHS norm is `sqrt(w^T K w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    pub kernel: Kernel,
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub type RkhsTestFunction = KernelExpansion;

impl KernelExpansion {
    pub fn new(kernel: Kernel, centers: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "kernel expansion needs matching non-empty centers ({}) and weights ({})",
                centers.len(),
                weights.len()
            )));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) || !kernel.supports_dim(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: centers.iter().map(Vec::len).max().unwrap_or(0),
            });
        }
        Ok(KernelExpansion {
            kernel,
            centers,
            weights,
        })
    }

    /// Random centers in `region`, Gaussian weights rescaled so that the
    /// RKHS norm equals `norm`.
    pub fn random<R: Rng>(kernel: Kernel, region: &Domain, n_centers: usize, norm: f64, rng: &mut R) -> Result<Self> {
        let centers: Vec<Vec<f64>> = (0..n_centers.max(1)).map(|_| region.sample(rng)).collect();
        let weights: Vec<f64> = centers.iter().map(|_| rng.sample(StandardNormal)).collect();
        let mut f = KernelExpansion::new(kernel, centers, weights)?;
        let current = f.rkhs_norm();
        if current > 0.0 {
            let c = norm / current;
            f.weights.iter_mut().for_each(|w| *w *= c);
        }
        Ok(f)
    }

    pub fn input_dim(&self) -> usize {
        self.centers[0].len()
    }

    #[inline]
    pub fn eval(&self, s: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * self.kernel.eval(c, s))
            .sum()
    }

    pub fn rkhs_norm(&self) -> f64 {
        let n = self.centers.len();
        let g = self.kernel.gram(&self.centers);
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += self.weights[i] * g[i * n + j] * self.weights[j];
            }
        }
        q.max(0.0).sqrt()
    }
}

/// Parameters that fully determine a [`FourierFunction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSpec {
    pub seed: u64,
    pub features: usize,
    pub input_dim: usize,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

/// Random-Fourier-feature approximation of a draw from a zero-mean GP with
/// squared-exponential covariance:
/// `h(x) = sum_j a_j cos(w_j . x + b_j)` with `a_j = sqrt(2 v / D) xi_j`.
///
/// Features are drawn sequentially from the seed, so a function with `2D`
/// features extends the one with `D` features.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "FourierSpec", into = "FourierSpec")]
pub struct FourierFunction {
    spec: FourierSpec,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl PartialEq for FourierFunction {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl TryFrom<FourierSpec> for FourierFunction {
    type Error = Error;

    fn try_from(spec: FourierSpec) -> Result<Self> {
        FourierFunction::from_spec(spec)
    }
}

impl From<FourierFunction> for FourierSpec {
    fn from(f: FourierFunction) -> Self {
        f.spec
    }
}

impl FourierFunction {
    pub fn from_spec(spec: FourierSpec) -> Result<Self> {
        let d = spec.input_dim;
        if d == 0 || spec.features == 0 {
            return Err(Error::InvalidParameter(
                "fourier function needs features and inputs".into(),
            ));
        }
        if !(spec.lengthscales.len() == 1 || spec.lengthscales.len() == d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: spec.lengthscales.len(),
            });
        }
        if spec.lengthscales.iter().any(|l| !(*l > 0.0)) || !(spec.variance > 0.0) {
            return Err(Error::InvalidParameter(
                "lengthscales and variance must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut frequencies = Vec::with_capacity(spec.features * d);
        let mut phases = Vec::with_capacity(spec.features);
        let mut amplitudes = Vec::with_capacity(spec.features);
        let scale = (2.0 * spec.variance / spec.features as f64).sqrt();
        for _ in 0..spec.features {
            for k in 0..d {
                let l = if spec.lengthscales.len() == 1 {
                    spec.lengthscales[0]
                } else {
                    spec.lengthscales[k]
                };
                let z: f64 = rng.sample(StandardNormal);
                frequencies.push(z / l);
            }
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
            let xi: f64 = rng.sample(StandardNormal);
            amplitudes.push(scale * xi);
        }
        Ok(FourierFunction {
            spec,
            frequencies,
            phases,
            amplitudes,
        })
    }

    pub fn spec(&self) -> &FourierSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    #[inline]
    fn feature_arg(&self, j: usize, x: &[f64]) -> f64 {
        let d = self.spec.input_dim;
        let w = &self.frequencies[j * d..(j + 1) * d];
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.phases[j]
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (0..self.spec.features)
            .map(|j| self.amplitudes[j] * self.feature_arg(j, x).cos())
            .sum()
    }

    /// Euclidean norm of the amplitude vector `a`.
    pub fn amplitude_norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Covariance induced by this feature set, `(2 v / D) sum_j cos(.)cos(.)`.
    pub fn feature_covariance(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.spec.features as f64;
        (0..self.spec.features)
            .map(|j| self.feature_arg(j, x).cos() * self.feature_arg(j, y).cos())
            .sum::<f64>()
            * 2.0
            * self.spec.variance
            / d
    }
}

/// Deterministic RFF draw from a GP with the given squared-exponential kernel.
pub fn sample_gp_function(
    kernel: &Kernel,
    input_dim: usize,
    seed: u64,
    feature_count: usize,
) -> Result<FourierFunction> {
    if kernel.family() != KernelFamily::SquaredExponential {
        return Err(Error::UnsupportedKernel(format!(
            "{:?} (random Fourier sampling supports squared exponential only)",
            kernel.family()
        )));
    }
    if !kernel.supports_dim(input_dim) {
        return Err(Error::DimensionMismatch {
            expected: kernel.lengthscales().len(),
            found: input_dim,
        });
    }
    FourierFunction::from_spec(FourierSpec {
        seed,
        features: feature_count,
        input_dim,
        lengthscales: kernel.lengthscales().to_vec(),
        variance: kernel.output_scale(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_kernel() -> Kernel {
        Kernel::squared_exponential(0.5f64.sqrt(), 0.5).unwrap()
    }

    #[test]
    fn expansion_norm_is_rescaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = Kernel::squared_exponential(0.2, 1.0).unwrap();
        let dom = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = KernelExpansion::random(k, &dom, 10, 1.5, &mut rng).unwrap();
        assert!((f.rkhs_norm() - 1.5).abs() < 1e-12);
        // |f(s)| <= ||f|| sqrt(k(s, s))
        for _ in 0..200 {
            let s = dom.sample(&mut rng);
            assert!(f.eval(&s).abs() <= 1.5 + 1e-12);
        }
    }

    #[test]
    fn same_seed_same_function() {
        let a = sample_gp_function(&lp_kernel(), 2, 42, 256).unwrap();
        let b = sample_gp_function(&lp_kernel(), 2, 42, 256).unwrap();
        let c = sample_gp_function(&lp_kernel(), 2, 43, 256).unwrap();
        for x in [[0.0, 0.0], [1.3, -0.7], [-2.0, 2.0]] {
            assert_eq!(a.eval(&x), b.eval(&x));
            assert_ne!(a.eval(&x), c.eval(&x));
        }
    }

    #[test]
    fn rejects_non_se_kernel() {
        let k = Kernel::matern(2.5, 1.0, 1.0).unwrap();
        assert!(matches!(
            sample_gp_function(&k, 2, 0, 16),
            Err(Error::UnsupportedKernel(_))
        ));
    }

    #[test]
    fn serde_regenerates_from_spec() {
        let f = sample_gp_function(&lp_kernel(), 2, 9, 64).unwrap();
        let text = toml::to_string(&f).unwrap();
        let g: FourierFunction = toml::from_str(&text).unwrap();
        assert_eq!(f.eval(&[0.4, 0.1]), g.eval(&[0.4, 0.1]));
    }

    #[test]
    fn monte_carlo_covariance_matches_kernel() {
        // empirical covariance over 2000 seeds within 3 standard errors
        let k = lp_kernel();
        let x = [0.2, -0.3];
        let y = [0.7, 0.1];
        let n = 2000;
        let (mut sxy, mut sx, mut sy) = (Vec::with_capacity(n), 0.0, 0.0);
        for seed in 0..n as u64 {
            let f = sample_gp_function(&k, 2, seed, 512).unwrap();
            let (a, b) = (f.eval(&x), f.eval(&y));
            sx += a;
            sy += b;
            sxy.push(a * b);
        }
        let nf = n as f64;
        let mean_xy = sxy.iter().sum::<f64>() / nf;
        let cov = mean_xy - (sx / nf) * (sy / nf);
        let var_xy = sxy.iter().map(|v| (v - mean_xy).powi(2)).sum::<f64>() / (nf - 1.0);
        let se = (var_xy / nf).sqrt();
        let target = k.eval(&x, &y);
        assert!((cov - target).abs() < 3.0 * se, "cov {cov} vs {target} (se {se})");
    }

    #[test]
    fn feature_covariance_converges() {
        let k = lp_kernel();
        let small = sample_gp_function(&k, 2, 5, 2048).unwrap();
        let large = sample_gp_function(&k, 2, 5, 4096).unwrap();
        let pts = [[0.0, 0.0], [0.5, -0.5], [1.0, 1.0], [-1.5, 0.3], [2.0, -2.0]];
        let mut max_diff: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                max_diff = max_diff.max((small.feature_covariance(a, b) - large.feature_covariance(a, b)).abs());
            }
        }
        assert!(max_diff < 0.02, "max diff {max_diff}");
    }
}
