//! Gaussian-process surrogates for black-box nodes: kernels, the posterior
//! state and the clipped confidence tube built on top of it.

mod confidence;
mod kernel;
mod state;

pub use confidence::{bounds, clipped_interval, ConfidenceModel};
pub use kernel::{Kernel, KernelFamily, MaternNu};
pub use state::{lambda_for_horizon, FitMode, GpSnapshot, GpState, ANYTIME_LAMBDA, VARIANCE_CLAMP};

#[cfg(test)]
pub(crate) mod testing {
    //! Dense-inverse and determinant oracles, deliberately not sharing the
    //! Cholesky path used by `GpState`.
    use super::{Kernel, KernelFamily, MaternNu};
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    pub fn random_dataset<R: Rng>(
        rng: &mut R,
        max_t: usize,
        max_dim: usize,
    ) -> (Kernel, usize, f64, Vec<Vec<f64>>, Vec<f64>) {
        let dim = rng.random_range(1..=max_dim);
        let t = rng.random_range(1..=max_t);
        let family = match rng.random_range(0..3) {
            0 => KernelFamily::SquaredExponential,
            1 => KernelFamily::Matern(MaternNu::FiveHalves),
            _ => KernelFamily::Matern(MaternNu::ThreeHalves),
        };
        let kernel = Kernel::new(family, vec![rng.random_range(0.2..1.5)], rng.random_range(0.3..=1.0)).unwrap();
        let lambda = rng.random_range(0.01..2.0);
        let xs = (0..t)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
        (kernel, dim, lambda, xs, ys)
    }

    pub fn dense_posterior(kernel: &Kernel, lambda: f64, xs: &[Vec<f64>], ys: &[f64], q: &[f64]) -> (f64, f64) {
        let t = xs.len();
        let mut k = DMatrix::from_row_slice(t, t, &kernel.gram(xs));
        k += DMatrix::identity(t, t) * lambda;
        let inv = k.try_inverse().expect("regularized gram is invertible");
        let kq = DVector::from_iterator(t, xs.iter().map(|x| kernel.eval(x, q)));
        let y = DVector::from_column_slice(ys);
        let mean = (kq.transpose() * &inv * y)[(0, 0)];
        let var = kernel.eval(q, q) - (kq.transpose() * &inv * &kq)[(0, 0)];
        (mean, var)
    }

    pub fn dense_info_gain(kernel: &Kernel, lambda: f64, xs: &[Vec<f64>]) -> f64 {
        let t = xs.len();
        let k = DMatrix::from_row_slice(t, t, &kernel.gram(xs));
        let m = DMatrix::identity(t, t) + k / lambda;
        0.5 * m.determinant().ln()
    }
}
