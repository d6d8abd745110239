use crate::functions::{FourierFunction, KernelExpansion};

use super::expr::NamedFn;

/// Noise-free ground-truth evaluator of a black-box node. The optimizer only
/// ever sees noisy values of it; the true value is used for simulation and
/// for regret accounting.
#[derive(Clone, Debug, PartialEq)]
pub enum Oracle {
    Constant(f64),
    Expansion(KernelExpansion),
    Fourier(FourierFunction),
    Custom(NamedFn),
}

impl Oracle {
    #[inline]
    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            Oracle::Constant(c) => *c,
            Oracle::Expansion(f) => f.eval(s),
            Oracle::Fourier(f) => f.eval(s),
            Oracle::Custom(f) => f.call(s),
        }
    }

    pub fn custom(name: impl Into<String>, arity: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Oracle::Custom(NamedFn::new(name, arity, f))
    }

    /// Input dimension when the oracle fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Oracle::Constant(_) => None,
            Oracle::Expansion(f) => Some(f.input_dim()),
            Oracle::Fourier(f) => Some(f.input_dim()),
            Oracle::Custom(f) => Some(f.arity()),
        }
    }
}
