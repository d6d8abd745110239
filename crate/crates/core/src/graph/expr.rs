use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]` used for reachable-range estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn symmetric(r: f64) -> Self {
        Interval { lo: -r, hi: r }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    fn scale(self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval::new(c * self.lo, c * self.hi)
        } else {
            Interval::new(c * self.hi, c * self.lo)
        }
    }

    fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval::new(
            p.iter().cloned().fold(f64::INFINITY, f64::min),
            p.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    fn square(self) -> Interval {
        if self.lo >= 0.0 {
            Interval::new(self.lo * self.lo, self.hi * self.hi)
        } else if self.hi <= 0.0 {
            Interval::new(self.hi * self.hi, self.lo * self.lo)
        } else {
            Interval::new(0.0, self.magnitude() * self.magnitude())
        }
    }
}

type SharedFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied function registered under a name.
#[derive(Clone)]
pub struct NamedFn {
    name: String,
    arity: usize,
    f: SharedFn,
}

impl NamedFn {
    pub fn new(name: impl Into<String>, arity: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        NamedFn {
            name: name.into(),
            arity,
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    #[inline]
    pub fn call(&self, s: &[f64]) -> f64 {
        (self.f)(s)
    }
}

impl fmt::Debug for NamedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NamedFn({}, arity {})", self.name, self.arity)
    }
}

impl PartialEq for NamedFn {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.arity == other.arity
    }
}

/// Known, cheap node functions.
#[derive(Clone, Debug, PartialEq)]
pub enum WhiteBoxExpr {
    /// `u`
    Identity,
    /// `sum_j c_j u_j + offset`
    Affine {
        coeffs: Vec<f64>,
        offset: f64,
    },
    /// `u^T Q u + c^T u + offset` with `Q` row-major.
    Quadratic {
        matrix: Vec<f64>,
        linear: Vec<f64>,
        offset: f64,
    },
    /// `scale * prod_j u_j`
    Product {
        scale: f64,
    },
    /// `u^p` for a single input.
    Power {
        exponent: f64,
    },
    Registered(NamedFn),
}

impl WhiteBoxExpr {
    /// Required input count, or `None` for variadic forms.
    pub fn arity(&self) -> Option<usize> {
        match self {
            WhiteBoxExpr::Identity | WhiteBoxExpr::Power { .. } => Some(1),
            WhiteBoxExpr::Affine { coeffs, .. } => Some(coeffs.len()),
            WhiteBoxExpr::Quadratic { linear, .. } => Some(linear.len()),
            WhiteBoxExpr::Product { .. } => None,
            WhiteBoxExpr::Registered(f) => Some(f.arity()),
        }
    }

    pub(crate) fn check(&self, inputs: usize) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidParameter(reason));
        if inputs == 0 {
            return fail("white-box node has no inputs".into());
        }
        if let Some(a) = self.arity() {
            if a != inputs {
                return fail(format!("expression expects {a} inputs but node has {inputs} parents"));
            }
        }
        match self {
            WhiteBoxExpr::Quadratic { matrix, linear, .. } if matrix.len() != linear.len() * linear.len() => {
                fail(format!(
                    "quadratic matrix has {} entries, expected {}",
                    matrix.len(),
                    linear.len() * linear.len()
                ))
            }
            WhiteBoxExpr::Power { exponent } if !exponent.is_finite() => fail("power exponent must be finite".into()),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            WhiteBoxExpr::Identity => u[0],
            WhiteBoxExpr::Affine { coeffs, offset } => coeffs.iter().zip(u).map(|(c, v)| c * v).sum::<f64>() + offset,
            WhiteBoxExpr::Quadratic { matrix, linear, offset } => {
                let n = linear.len();
                let mut acc = *offset;
                for i in 0..n {
                    let mut row = 0.0;
                    for j in 0..n {
                        row += matrix[i * n + j] * u[j];
                    }
                    acc += u[i] * row + linear[i] * u[i];
                }
                acc
            }
            WhiteBoxExpr::Product { scale } => scale * u.iter().product::<f64>(),
            WhiteBoxExpr::Power { exponent } => {
                if exponent.fract() == 0.0 && exponent.abs() < i32::MAX as f64 {
                    u[0].powi(*exponent as i32)
                } else {
                    u[0].powf(*exponent)
                }
            }
            WhiteBoxExpr::Registered(f) => f.call(u),
        }
    }

    /// Conservative enclosure of the expression over a box of inputs, or
    /// `None` when no enclosure can be derived (registered functions,
    /// non-integer powers over negative ranges).
    pub fn range(&self, inputs: &[Interval]) -> Option<Interval> {
        match self {
            WhiteBoxExpr::Identity => Some(inputs[0]),
            WhiteBoxExpr::Affine { coeffs, offset } => {
                let mut acc = Interval::new(*offset, *offset);
                for (c, iv) in coeffs.iter().zip(inputs) {
                    acc = acc.add(iv.scale(*c));
                }
                Some(acc)
            }
            WhiteBoxExpr::Quadratic { matrix, linear, offset } => {
                let n = linear.len();
                let mut acc = Interval::new(*offset, *offset);
                for i in 0..n {
                    // diagonal and linear terms of the same variable are enclosed jointly
                    let q = matrix[i * n + i];
                    acc = acc.add(univariate_quadratic(q, linear[i], inputs[i]));
                    for j in 0..n {
                        if i != j && matrix[i * n + j] != 0.0 {
                            acc = acc.add(inputs[i].mul(inputs[j]).scale(matrix[i * n + j]));
                        }
                    }
                }
                Some(acc)
            }
            WhiteBoxExpr::Product { scale } => {
                let mut acc = Interval::new(1.0, 1.0);
                for iv in inputs {
                    acc = acc.mul(*iv);
                }
                Some(acc.scale(*scale))
            }
            WhiteBoxExpr::Power { exponent } => {
                let iv = inputs[0];
                let p = *exponent;
                if p == 2.0 {
                    return Some(iv.square());
                }
                if iv.lo < 0.0 && p.fract() != 0.0 {
                    return None;
                }
                if p < 0.0 && iv.contains(0.0) {
                    return None;
                }
                let mut pts = vec![iv.lo.powf(p), iv.hi.powf(p)];
                if iv.contains(0.0) {
                    pts.push(0.0);
                }
                Some(Interval::new(
                    pts.iter().cloned().fold(f64::INFINITY, f64::min),
                    pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ))
            }
            WhiteBoxExpr::Registered(_) => None,
        }
    }
}

/// Exact range of `q u^2 + c u` over `iv`.
fn univariate_quadratic(q: f64, c: f64, iv: Interval) -> Interval {
    let f = |u: f64| q * u * u + c * u;
    let mut pts = vec![f(iv.lo), f(iv.hi)];
    if q != 0.0 {
        let vertex = -c / (2.0 * q);
        if iv.contains(vertex) {
            pts.push(f(vertex));
        }
    }
    Interval::new(
        pts.iter().cloned().fold(f64::INFINITY, f64::min),
        pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}
