//! One-pass row-space tracking with a Frequent Directions sketch.
//!
//! The sketch keeps an `l x d` buffer `B` whose Gram matrix under-approximates
//! that of the stream `A`: `0 <= A^T A - B^T B` and
//! `||A^T A - B^T B||_2 <= ||A - A_k||_F^2 / (l - k)` for every `k < l`.
//! Rows are written into empty slots; once the buffer is full it is rotated
//! onto its right singular vectors and every squared singular value is reduced
//! by the smallest one, which frees at least one slot.

use crate::error::{ensure, Result};
use crate::linalg::{self, orthonormality_residual, Matrix, Vector};

/// Relative threshold used when estimating the rank of a stream from the
/// sketch spectrum.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Sketch size used when the target rank is known: `max(2r, r + 4)`.
pub fn default_sketch_rows(rank: usize) -> usize {
    (2 * rank).max(rank + 4)
}

#[derive(Debug, Clone)]
pub struct FrequentDirections {
    sketch_rows: usize,
    dim: usize,
    buffer: Matrix,
    /// Rows `filled..` of the buffer are exactly zero.
    filled: usize,
    rows_seen: usize,
    shrinks: usize,
}

impl FrequentDirections {
    pub fn new(sketch_rows: usize, dim: usize) -> Result<Self> {
        ensure!(sketch_rows >= 2, "sketch needs at least 2 rows, got {sketch_rows}");
        ensure!(dim >= 1, "sketch dimension must be positive");
        Ok(Self {
            sketch_rows,
            dim,
            buffer: Matrix::zeros(sketch_rows, dim),
            filled: 0,
            rows_seen: 0,
            shrinks: 0,
        })
    }

    /// Sketch sized for a stream of known rank.
    pub fn for_rank(rank: usize, dim: usize) -> Result<Self> {
        ensure!(rank >= 1, "rank must be positive");
        Self::new(default_sketch_rows(rank), dim)
    }

    /// Sketch with `dim + 1` rows. It never discards mass, so `B^T B` equals
    /// `A^T A` up to rounding; used when the rank has to be estimated.
    pub fn lossless(dim: usize) -> Result<Self> {
        Self::new(dim + 1, dim)
    }

    pub fn sketch_rows(&self) -> usize {
        self.sketch_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn shrinks(&self) -> usize {
        self.shrinks
    }

    pub fn buffer(&self) -> &Matrix {
        &self.buffer
    }

    pub fn insert(&mut self, row: &[f64]) -> Result<()> {
        ensure!(
            row.len() == self.dim,
            "sketch row has length {} but sketch dimension is {}",
            row.len(),
            self.dim
        );
        ensure!(row.iter().all(|v| v.is_finite()), "sketch row is not finite");
        if self.filled == self.sketch_rows {
            self.shrink();
        }
        for (j, &v) in row.iter().enumerate() {
            self.buffer[(self.filled, j)] = v;
        }
        self.filled += 1;
        self.rows_seen += 1;
        Ok(())
    }

    pub fn insert_vector(&mut self, row: &Vector) -> Result<()> {
        self.insert(row.as_slice())
    }

    fn shrink(&mut self) {
        let p = self.sketch_rows.min(self.dim);
        let svd = linalg::thin_svd(&self.buffer, p).expect("buffer is finite and p is in range");
        // When l > d the l-th singular value of the l x d buffer is zero.
        let delta = if self.sketch_rows <= self.dim {
            svd.singulars[self.sketch_rows - 1].powi(2)
        } else {
            0.0
        };
        let top = svd.singulars[0];
        let floor = f64::EPSILON * top * (self.sketch_rows.max(self.dim) as f64);

        self.buffer.fill(0.0);
        let mut kept = 0;
        for i in 0..p {
            let shrunk = (svd.singulars[i].powi(2) - delta).max(0.0).sqrt();
            if shrunk <= floor {
                break;
            }
            let direction = svd.right.column(i);
            for j in 0..self.dim {
                self.buffer[(kept, j)] = shrunk * direction[j];
            }
            kept += 1;
        }
        self.filled = kept;
        self.shrinks += 1;
    }

    /// Singular values of the current buffer, nonincreasing.
    pub fn singular_values(&self) -> Vector {
        linalg::singular_values(&self.buffer)
    }

    /// Number of buffer singular values above `RANK_TOLERANCE * sigma_max`
    /// (at least 1 so a basis can always be formed).
    pub fn estimate_rank(&self) -> usize {
        let sv = self.singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max);
        sv.iter()
            .filter(|&&s| s > RANK_TOLERANCE * top)
            .count()
            .max(1)
    }

    /// Top-`r` right singular directions of the buffer.
    pub fn row_space(&self, r: usize) -> Result<RowSpaceBasis> {
        let p = self.sketch_rows.min(self.dim);
        ensure!(r >= 1 && r <= p, "row-space rank {r} outside [1, {p}]");
        let svd = linalg::thin_svd(&self.buffer, r)?;
        RowSpaceBasis::from_columns(svd.right)
    }
}

/// Orthonormal basis `V` (`d x r`) of a row space.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpaceBasis {
    basis: Matrix,
}

impl RowSpaceBasis {
    pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;

    pub fn from_columns(basis: Matrix) -> Result<Self> {
        ensure!(basis.ncols() >= 1, "row-space basis needs at least one column");
        ensure!(
            basis.ncols() <= basis.nrows(),
            "row-space basis has more columns ({}) than rows ({})",
            basis.ncols(),
            basis.nrows()
        );
        linalg::check_finite_matrix(&basis, "row-space basis")?;
        let residual = orthonormality_residual(&basis);
        ensure!(
            residual < Self::ORTHONORMAL_TOLERANCE,
            "row-space basis columns are not orthonormal (residual {residual:e})"
        );
        Ok(Self { basis })
    }

    /// Top-`r` right singular vectors of a fully stored matrix. Reference
    /// path for checking the streaming sketch.
    pub fn exact(a: &Matrix, r: usize) -> Result<Self> {
        let svd = linalg::thin_svd(a, r)?;
        Self::from_columns(svd.right)
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.basis
    }

    pub fn into_matrix(self) -> Matrix {
        self.basis
    }

    /// `||(I - V V^T) v||`.
    pub fn residual_norm(&self, v: &Vector) -> f64 {
        let coords = self.basis.transpose() * v;
        (v - &self.basis * coords).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn constructor_contracts() {
        let fd = FrequentDirections::new(4, 10).unwrap();
        assert_eq!(fd.buffer().shape(), (4, 10));
        assert!(fd.buffer().iter().all(|&v| v == 0.0));
        assert_eq!(fd.rows_seen(), 0);
        assert!(FrequentDirections::new(2, 1).is_ok());
        assert!(FrequentDirections::new(1, 10).is_err());
        assert!(FrequentDirections::new(3, 0).is_err());
    }

    #[test]
    fn first_insert_fills_slot_zero() {
        let mut fd = FrequentDirections::new(4, 3).unwrap();
        fd.insert(&e(0, 3)).unwrap();
        assert_eq!(fd.buffer().row(0).iter().copied().collect::<Vec<_>>(), e(0, 3));
        assert_eq!(fd.shrinks(), 0);
        assert_eq!(fd.rows_seen(), 1);
    }

    #[test]
    fn fifth_copy_triggers_shrink_and_keeps_direction() {
        let mut fd = FrequentDirections::new(4, 3).unwrap();
        for _ in 0..4 {
            fd.insert(&e(0, 3)).unwrap();
        }
        assert_eq!(fd.shrinks(), 0);
        fd.insert(&e(0, 3)).unwrap();
        assert_eq!(fd.shrinks(), 1);
        // four copies of e1 rotate into a single row 2*e1 (no mass lost since
        // l > d), then the fifth copy lands in the freed slot.
        assert!((fd.buffer()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((fd.buffer()[(1, 0)] - 1.0).abs() < 1e-12);
        let basis = fd.row_space(1).unwrap();
        assert!((basis.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut fd = FrequentDirections::new(4, 3).unwrap();
        assert!(fd.insert(&[1.0, 2.0]).is_err());
        assert!(fd.insert(&[1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn row_space_range_checked() {
        let mut fd = FrequentDirections::new(4, 3).unwrap();
        fd.insert(&e(0, 3)).unwrap();
        assert!(fd.row_space(0).is_err());
        assert!(fd.row_space(4).is_err());
        assert!(fd.row_space(3).is_ok());
    }

    #[test]
    fn zero_row_after_every_shrink() {
        let mut fd = FrequentDirections::new(3, 5).unwrap();
        let rows = [
            [1.0, 2.0, 0.0, -1.0, 0.5],
            [0.0, 1.0, 3.0, 1.0, 0.0],
            [2.0, 0.0, 1.0, 0.0, 1.0],
            [-1.0, 1.0, 1.0, 2.0, 0.0],
            [0.5, 0.5, -2.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0, -3.0],
        ];
        let mut last_shrinks = 0;
        for r in &rows {
            // the row inserted after a shrink occupies a freed slot, so check
            // the invariant on the state right after shrinking instead
            let mut probe = fd.clone();
            if probe.filled == probe.sketch_rows {
                probe.shrink();
                let zero_rows = (0..3)
                    .filter(|&i| probe.buffer().row(i).iter().all(|&v| v == 0.0))
                    .count();
                assert!(zero_rows >= 1);
            }
            fd.insert(r).unwrap();
            assert!(fd.shrinks() >= last_shrinks);
            last_shrinks = fd.shrinks();
        }
        assert!(fd.shrinks() >= 1);
    }

    #[test]
    fn default_size_rule() {
        assert_eq!(default_sketch_rows(1), 5);
        assert_eq!(default_sketch_rows(4), 8);
        assert_eq!(default_sketch_rows(10), 20);
    }
}
