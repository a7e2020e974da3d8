#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `n x r` matrix with orthonormal columns (Gram-Schmidt on a Gaussian draw).
pub fn orthonormal<R: Rng>(n: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    let mut q = gaussian_matrix(n, r, rng);
    for j in 0..r {
        for k in 0..j {
            let proj = q.column(k).dot(&q.column(j));
            let qk = q.column(k).into_owned();
            q.column_mut(j).axpy(-proj, &qk, 1.0);
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    q
}

/// Rows in the span of `v` (columns), with Gaussian coefficients.
pub fn rows_in_span<R: Rng>(n: usize, v: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    gaussian_matrix(n, v.ncols(), rng) * v.transpose()
}

/// Largest distance of a column of `a` from the span of orthonormal `q`.
pub fn span_gap(q: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let residual = a - q * (q.transpose() * a);
    residual
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}
