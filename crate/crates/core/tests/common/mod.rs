use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

// Solves (2ΦᵀΦ + κI) γ = 2Φᵀy, the stationarity condition of Σ(y - Φγ)² + ½κ|γ|².
pub fn ridge_closed_form(phi: &Array2<f64>, y: &Array1<f64>, kappa: f64) -> Vec<f64> {
    let (n, p) = phi.dim();
    let a = DMatrix::from_fn(n, p, |i, j| phi[[i, j]]);
    let b = DVector::from_iterator(n, y.iter().copied());
    let lhs = a.transpose() * &a * 2.0 + DMatrix::identity(p, p) * kappa;
    let rhs = a.transpose() * b * 2.0;
    lhs.cholesky()
        .expect("positive definite")
        .solve(&rhs)
        .iter()
        .copied()
        .collect()
}

pub fn random_instance(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let phi = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>());
    let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 2.0 - 1.0);
    (phi, y)
}
