//! Stationary and linear covariance functions.
//!
//! Every kernel carries an `output_scale` in `(0, 1]`, so the stationary
//! families satisfy `k(s, s) = output_scale <= 1` everywhere. The linear
//! kernel only satisfies that bound on the ellipsoid `sum (s_i / l_i)^2 <= 1`;
//! callers pick lengthscales that cover their domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn from_value(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(MaternNu::Half),
            1.5 => Ok(MaternNu::ThreeHalves),
            2.5 => Ok(MaternNu::FiveHalves),
            other => Err(Error::UnsupportedKernel(format!(
                "Matern smoothness {other} (supported: 0.5, 1.5, 2.5)"
            ))),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern(MaternNu),
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct Kernel {
    family: KernelFamily,
    lengthscales: Vec<f64>,
    output_scale: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, output_scale: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidParameter("kernel needs at least one lengthscale".into()));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!("lengthscale {l} must be positive")));
        }
        if !(output_scale > 0.0 && output_scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "output scale {output_scale} must lie in (0, 1] so that k(s, s) <= 1"
            )));
        }
        Ok(Kernel {
            family,
            lengthscales,
            output_scale,
        })
    }

    pub fn squared_exponential(lengthscale: f64, output_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, vec![lengthscale], output_scale)
    }

    pub fn matern(nu: f64, lengthscale: f64, output_scale: f64) -> Result<Self> {
        Self::new(
            KernelFamily::Matern(MaternNu::from_value(nu)?),
            vec![lengthscale],
            output_scale,
        )
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// Whether the kernel accepts inputs of dimension `dim`: a single
    /// lengthscale is shared by every coordinate.
    pub fn supports_dim(&self, dim: usize) -> bool {
        self.lengthscales.len() == 1 || self.lengthscales.len() == dim
    }

    #[inline]
    fn lengthscale(&self, i: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[i]
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self.family {
            KernelFamily::Linear => {
                let mut dot = 0.0;
                for i in 0..a.len() {
                    let l = self.lengthscale(i);
                    dot += a[i] * b[i] / (l * l);
                }
                self.output_scale * dot
            }
            KernelFamily::SquaredExponential => self.output_scale * (-0.5 * self.scaled_sq_dist(a, b)).exp(),
            KernelFamily::Matern(nu) => {
                let r = self.scaled_sq_dist(a, b).sqrt();
                let shape = match nu {
                    MaternNu::Half => (-r).exp(),
                    MaternNu::ThreeHalves => {
                        let q = 3f64.sqrt() * r;
                        (1.0 + q) * (-q).exp()
                    }
                    MaternNu::FiveHalves => {
                        let q = 5f64.sqrt() * r;
                        (1.0 + q + q * q / 3.0) * (-q).exp()
                    }
                };
                self.output_scale * shape
            }
        }
    }

    #[inline]
    fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..a.len() {
            let d = (a[i] - b[i]) / self.lengthscale(i);
            acc += d * d;
        }
        acc
    }

    /// Gram matrix in row-major order.
    pub fn gram(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(&points[i], &points[j]);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    lengthscales: Vec<f64>,
    output_scale: f64,
}

impl TryFrom<RawKernel> for Kernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        let family = match raw.family.as_str() {
            "squared_exponential" | "se" | "rbf" => KernelFamily::SquaredExponential,
            "linear" => KernelFamily::Linear,
            "matern" => {
                let nu = raw
                    .nu
                    .ok_or_else(|| Error::InvalidParameter("matern kernel requires `nu`".into()))?;
                KernelFamily::Matern(MaternNu::from_value(nu)?)
            }
            other => return Err(Error::UnsupportedKernel(other.to_string())),
        };
        Kernel::new(family, raw.lengthscales, raw.output_scale)
    }
}

impl From<Kernel> for RawKernel {
    fn from(k: Kernel) -> Self {
        let (family, nu) = match k.family {
            KernelFamily::SquaredExponential => ("squared_exponential", None),
            KernelFamily::Linear => ("linear", None),
            KernelFamily::Matern(nu) => ("matern", Some(nu.value())),
        };
        RawKernel {
            family: family.to_string(),
            nu,
            lengthscales: k.lengthscales,
            output_scale: k.output_scale,
        }
    }
}
