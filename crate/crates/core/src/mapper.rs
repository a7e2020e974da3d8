//! Streaming least-squares map from the current feature space back to the
//! previous one.
//!
//! Over the overlap the accumulator keeps `P1 = sum x_C x_C^T` and
//! `P2 = sum x_C x_P^T`; the map is `P = (P1 + lambda I)^{-1} P2` and an old
//! instance is recovered as `P^T x_C`.

use nalgebra::SymmetricEigen;

use crate::error::{ensure, Result};
use crate::linalg::{self, Matrix, Vector};

/// Largest condition number accepted for `P1 + lambda I`.
pub const MAX_CONDITION: f64 = 1e12;

/// First ridge tried when `P1` is too badly conditioned.
pub const INITIAL_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MappingAccumulator {
    gram: Matrix,
    cross: Matrix,
    pairs_seen: usize,
}

impl MappingAccumulator {
    pub fn new(current_dim: usize, previous_dim: usize) -> Self {
        Self {
            gram: Matrix::zeros(current_dim, current_dim),
            cross: Matrix::zeros(current_dim, previous_dim),
            pairs_seen: 0,
        }
    }

    pub fn current_dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn previous_dim(&self) -> usize {
        self.cross.ncols()
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn cross(&self) -> &Matrix {
        &self.cross
    }

    pub fn pairs_seen(&self) -> usize {
        self.pairs_seen
    }

    pub fn accumulate(&mut self, x_current: &Vector, x_previous: &Vector) -> Result<()> {
        ensure!(
            x_current.len() == self.current_dim() && x_previous.len() == self.previous_dim(),
            "mapping pair has dimensions ({}, {}) but accumulator expects ({}, {})",
            x_current.len(),
            x_previous.len(),
            self.current_dim(),
            self.previous_dim()
        );
        linalg::check_finite_vector(x_current, "current-space instance")?;
        linalg::check_finite_vector(x_previous, "previous-space instance")?;
        self.gram.ger(1.0, x_current, x_current, 1.0);
        self.cross.ger(1.0, x_current, x_previous, 1.0);
        self.pairs_seen += 1;
        Ok(())
    }

    /// Solve for the map, escalating the ridge by factors of 10 from
    /// [`INITIAL_RIDGE`] until the regularized Gram matrix has condition
    /// number at most [`MAX_CONDITION`].
    pub fn finalize(&self, ridge: f64) -> Result<MappingMatrix> {
        ensure!(self.pairs_seen >= 1, "cannot finalize a mapping without any pairs");
        ensure!(ridge >= 0.0 && ridge.is_finite(), "ridge must be nonnegative");
        let eig = SymmetricEigen::new(self.gram.clone());
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.max(0.0)).collect();
        let hi = eigenvalues.iter().copied().fold(0.0, f64::max);
        let lo = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let condition = |lambda: f64| {
            if hi + lambda == 0.0 {
                f64::INFINITY
            } else {
                (hi + lambda) / (lo + lambda)
            }
        };

        let mut lambda = ridge;
        if condition(lambda) > MAX_CONDITION {
            lambda = lambda.max(INITIAL_RIDGE);
            while condition(lambda) > MAX_CONDITION {
                lambda *= 10.0;
            }
        }

        // (Q diag(e + lambda) Q^T)^{-1} cross
        let q = &eig.eigenvectors;
        let mut projected = q.transpose() * &self.cross;
        for (i, mut row) in projected.row_iter_mut().enumerate() {
            row /= eigenvalues[i] + lambda;
        }
        let map = q * projected;
        linalg::check_finite_matrix(&map, "mapping matrix")?;
        Ok(MappingMatrix {
            map,
            ridge_used: lambda,
        })
    }
}

/// Linear map `psi(x_C) = map^T x_C`, stored as a `d2 x d1` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    map: Matrix,
    ridge_used: f64,
}

impl MappingMatrix {
    pub fn from_matrix(map: Matrix) -> Result<Self> {
        linalg::check_finite_matrix(&map, "mapping matrix")?;
        Ok(Self {
            map,
            ridge_used: 0.0,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.map
    }

    pub fn ridge_used(&self) -> f64 {
        self.ridge_used
    }

    pub fn recover(&self, x_current: &Vector) -> Result<Vector> {
        ensure!(
            x_current.len() == self.map.nrows(),
            "map expects dimension {} but instance has dimension {}",
            self.map.nrows(),
            x_current.len()
        );
        Ok(self.map.tr_mul(x_current))
    }
}
