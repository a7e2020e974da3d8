//! Dense linear-algebra primitives shared by the sketch, the row completer
//! and the space mapper.
//!
//! Matrices and vectors are `nalgebra` dynamic types. Every entry point
//! rejects non-finite input.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below `PINV_CUTOFF * sigma_max` count as zero.
pub const PINV_CUTOFF: f64 = 1e-10;

pub(crate) fn check_finite_matrix(m: &Matrix, what: &str) -> Result<()> {
    ensure!(
        m.iter().all(|v| v.is_finite()),
        "{what} contains a non-finite entry"
    );
    Ok(())
}

pub(crate) fn check_finite_vector(v: &Vector, what: &str) -> Result<()> {
    ensure!(
        v.iter().all(|x| x.is_finite()),
        "{what} contains a non-finite entry"
    );
    Ok(())
}

/// Truncated singular value decomposition `m ~ left * diag(singulars) * right^T`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `n x k`, orthonormal columns.
    pub left: Matrix,
    /// Nonincreasing, nonnegative.
    pub singulars: Vector,
    /// `d x k`, orthonormal columns.
    pub right: Matrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.left * Matrix::from_diagonal(&self.singulars) * self.right.transpose()
    }
}

/// Full (economy) decomposition, sorted by decreasing singular value, with
/// the sign of each right singular vector fixed so that its first nonzero
/// entry is nonnegative.
fn sorted_svd(m: &Matrix) -> ThinSvd {
    let p = m.nrows().min(m.ncols());
    if p == 0 {
        return ThinSvd {
            left: Matrix::zeros(m.nrows(), 0),
            singulars: Vector::zeros(0),
            right: Matrix::zeros(m.ncols(), 0),
        };
    }
    let (u, sv, v) = if m.nrows() >= m.ncols() {
        jacobi_svd(m.clone())
    } else {
        let (u, s, v) = jacobi_svd(m.transpose());
        (v, s, u)
    };

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let mut left = Matrix::zeros(m.nrows(), p);
    let mut right = Matrix::zeros(m.ncols(), p);
    let mut singulars = Vector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).clone_owned();
        let mut vcol = v.column(src).clone_owned();
        let scale = vcol.amax();
        let first = vcol.iter().copied().find(|x| x.abs() > 1e-12 * scale);
        if matches!(first, Some(x) if x < 0.0) {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        left.set_column(dst, &ucol);
        right.set_column(dst, &vcol);
        singulars[dst] = sv[src];
    }
    ThinSvd {
        left,
        singulars,
        right,
    }
}

/// One-sided Jacobi decomposition of a tall matrix (`n >= d`). Returns
/// `(u, sigma, v)` in no particular order; `u` is completed to orthonormal
/// columns where `sigma` vanishes.
fn jacobi_svd(mut a: Matrix) -> (Matrix, Vector, Matrix) {
    let (n, d) = a.shape();
    let mut v = Matrix::identity(d, d);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..d {
            for j in i + 1..d {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = Vector::from_fn(d, |j, _| a.column(j).norm());
    let top = sigma.max();
    let mut u = Matrix::zeros(n, d);
    let mut missing = Vec::new();
    for j in 0..d {
        if sigma[j] > f64::EPSILON * top * n as f64 && sigma[j] > 0.0 {
            u.set_column(j, &(a.column(j) / sigma[j]));
        } else {
            missing.push(j);
        }
    }
    // Complete the left factor against the standard basis.
    let mut candidate = 0;
    for j in missing {
        while candidate < n {
            let mut e = Vector::zeros(n);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                let proj = u.tr_mul(&e);
                e -= &u * proj;
            }
            let norm = e.norm();
            if norm > 1e-6 {
                u.set_column(j, &(e / norm));
                break;
            }
        }
    }
    (u, sigma, v)
}

fn rotate_columns(m: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let x = m[(r, i)];
        let y = m[(r, j)];
        m[(r, i)] = c * x - s * y;
        m[(r, j)] = s * x + c * y;
    }
}

/// Top-`k` singular triplets of `m`.
pub fn thin_svd(m: &Matrix, k: usize) -> Result<ThinSvd> {
    let p = m.nrows().min(m.ncols());
    ensure!(
        k >= 1 && k <= p,
        "thin_svd: k = {k} outside [1, {p}] for a {}x{} matrix",
        m.nrows(),
        m.ncols()
    );
    check_finite_matrix(m, "thin_svd input")?;
    let full = sorted_svd(m);
    Ok(ThinSvd {
        left: full.left.columns(0, k).into_owned(),
        singulars: full.singulars.rows(0, k).into_owned(),
        right: full.right.columns(0, k).into_owned(),
    })
}

/// All `min(n, d)` singular values of `m`, nonincreasing.
pub fn singular_values(m: &Matrix) -> Vector {
    sorted_svd(m).singulars
}

/// `argmin_z ||target - design z||^2 + ridge ||z||^2`.
///
/// With `ridge == 0` and a rank-deficient design the minimum-norm minimizer
/// is returned (pseudo-inverse semantics with the [`PINV_CUTOFF`] rank rule).
pub fn solve_least_squares(design: &Matrix, target: &Vector, ridge: f64) -> Result<Vector> {
    ensure!(
        design.nrows() == target.len(),
        "solve_least_squares: design has {} rows but target has length {}",
        design.nrows(),
        target.len()
    );
    ensure!(
        ridge >= 0.0 && ridge.is_finite(),
        "solve_least_squares: ridge must be finite and nonnegative, got {ridge}"
    );
    check_finite_matrix(design, "design")?;
    check_finite_vector(target, "target")?;

    let r = design.ncols();
    let svd = sorted_svd(design);
    let sigma_max = svd.singulars.iter().copied().fold(0.0, f64::max);
    let mut z = Vector::zeros(r);
    for (i, &s) in svd.singulars.iter().enumerate() {
        let gain = if ridge > 0.0 {
            s / (s * s + ridge)
        } else if s > PINV_CUTOFF * sigma_max {
            1.0 / s
        } else {
            0.0
        };
        if gain == 0.0 {
            continue;
        }
        let coef = svd.left.column(i).dot(target) * gain;
        z.axpy(coef, &svd.right.column(i), 1.0);
    }
    Ok(z)
}

/// Euclidean projection onto the closed ball of the given radius.
///
/// Idempotent; the origin and interior points are fixed.
pub fn project_l2_ball(w: &Vector, radius: f64) -> Vector {
    debug_assert!(radius > 0.0, "radius must be positive");
    let norm = w.norm();
    if norm <= radius {
        w.clone()
    } else {
        w * (radius / norm)
    }
}

/// Largest absolute entry of `a^T a - I`.
pub fn orthonormality_residual(a: &Matrix) -> f64 {
    let gram = a.transpose() * a;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_spectral_norm(m: &Matrix) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, e| acc.max(e.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    #[test]
    fn least_squares_identity_design() {
        let z = solve_least_squares(&Matrix::identity(2, 2), &dvector![3.0, -1.0], 0.0).unwrap();
        assert!((z - dvector![3.0, -1.0]).amax() < 1e-14);
    }

    #[test]
    fn least_squares_column_of_ones_is_mean() {
        let z = solve_least_squares(&dmatrix![1.0; 1.0; 1.0], &dvector![1.0, 2.0, 3.0], 0.0)
            .unwrap();
        assert!((z[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_rank_deficient_is_min_norm() {
        // pinv([[1,1],[1,1]]) = [[1,1],[1,1]]/4, applied to (2,2) gives (1,1).
        let z = solve_least_squares(&dmatrix![1.0, 1.0; 1.0, 1.0], &dvector![2.0, 2.0], 0.0)
            .unwrap();
        assert!((z - dvector![1.0, 1.0]).amax() < 1e-12);
    }

    #[test]
    fn least_squares_ridge_matches_normal_equations() {
        let a = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 7.0];
        let y = dvector![1.0, -1.0, 2.0];
        let ridge = 0.3;
        let z = solve_least_squares(&a, &y, ridge).unwrap();
        let lhs = (a.transpose() * &a + Matrix::identity(2, 2) * ridge) * &z;
        assert!((lhs - a.transpose() * y).amax() < 1e-12);
    }

    #[test]
    fn least_squares_rejects_mismatch_and_nan() {
        assert!(solve_least_squares(&Matrix::identity(2, 2), &dvector![1.0], 0.0).is_err());
        assert!(solve_least_squares(&Matrix::identity(1, 1), &dvector![f64::NAN], 0.0).is_err());
        assert!(solve_least_squares(&Matrix::identity(1, 1), &dvector![1.0], -1.0).is_err());
    }

    #[test]
    fn svd_of_diagonal() {
        let m = dmatrix![3.0, 0.0; 0.0, 2.0];
        let svd = thin_svd(&m, 2).unwrap();
        assert!((svd.singulars[0] - 3.0).abs() < 1e-14);
        assert!((svd.singulars[1] - 2.0).abs() < 1e-14);
        for j in 0..2 {
            // signed permutation of the identity, sign fixed to +
            assert!((svd.right[(j, j)] - 1.0).abs() < 1e-14);
            assert!((svd.left[(j, j)].abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_of_zero_matrix() {
        let svd = thin_svd(&Matrix::zeros(3, 2), 1).unwrap();
        assert_eq!(svd.singulars[0], 0.0);
        assert!(orthonormality_residual(&svd.right) < 1e-12);
        assert!(orthonormality_residual(&svd.left) < 1e-12);
    }

    #[test]
    fn svd_rank_range_checked() {
        assert!(thin_svd(&Matrix::zeros(3, 2), 0).is_err());
        assert!(thin_svd(&Matrix::zeros(3, 2), 3).is_err());
    }

    #[test]
    fn svd_wide_matrix() {
        let m = dmatrix![1.0, 2.0, 3.0, 4.0; -1.0, 0.5, 0.0, 2.0];
        let svd = thin_svd(&m, 2).unwrap();
        assert_eq!(svd.right.shape(), (4, 2));
        assert!((svd.reconstruct() - m).amax() < 1e-12);
    }

    #[test]
    fn ball_projection_examples() {
        assert_eq!(project_l2_ball(&dvector![0.3, 0.4], 1.0), dvector![0.3, 0.4]);
        let p = project_l2_ball(&dvector![3.0, 4.0], 1.0);
        assert!((p - dvector![0.6, 0.8]).amax() < 1e-15);
        assert_eq!(project_l2_ball(&dvector![0.0, 0.0], 0.5), dvector![0.0, 0.0]);
    }

    #[test]
    fn tall_rank_deficient_decomposition_is_exact() {
        // 8 x 6 of rank 2 with repeated and zero rows.
        let base = dmatrix![1.0, 2.0, 0.0, -1.0, 3.0, 0.5; 0.0, 1.0, 1.0, 2.0, -1.0, 0.0];
        let m = Matrix::from_fn(8, 6, |i, j| match i % 4 {
            0 => base[(0, j)],
            1 => base[(1, j)],
            2 => base[(0, j)] - 2.0 * base[(1, j)],
            _ => 0.0,
        });
        let svd = thin_svd(&m, 6).unwrap();
        assert!((svd.reconstruct() - &m).amax() < 1e-12);
        assert!(orthonormality_residual(&svd.left) < 1e-12);
        assert!(orthonormality_residual(&svd.right) < 1e-12);
        assert!(svd.singulars[2] < 1e-12);
    }
}
