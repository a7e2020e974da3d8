//! Row-by-row completion of the overlap matrix against a known row space.
//!
//! Each partially observed row `m_i` is assumed to lie in `span(V)`. Given the
//! observed coordinates `Omega_i`, the coefficients solve
//! `min_z ||m_{i,Omega_i} - V_{Omega_i} z||^2` and the row is rebuilt as `V z`.
//! Recovery is exact whenever `V_{Omega_i}` has full column rank, which holds
//! with high probability once `|Omega_i| >= 7 mu r ln(r b / delta)`.

use crate::error::{ensure, Result};
use crate::linalg::{self, orthonormality_residual, Matrix, Vector};
use crate::sketch::RowSpaceBasis;

/// Leading constant of the sample-size requirement.
pub const SAMPLE_CONSTANT: f64 = 7.0;

/// Normal matrices with a condition number above this are treated as
/// ill-posed and regularized.
pub const MAX_NORMAL_CONDITION: f64 = 1e12;

/// Ridge applied to ill-posed rows during stream completion.
pub const ILL_POSED_RIDGE: f64 = 1e-10;

/// A row of the overlap matrix with only some coordinates observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRow {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl ObservedRow {
    /// `indices` must be strictly increasing and below `dim`.
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        ensure!(
            indices.len() == values.len(),
            "observed row has {} indices but {} values",
            indices.len(),
            values.len()
        );
        ensure!(
            indices.windows(2).all(|w| w[0] < w[1]),
            "observed indices must be strictly increasing"
        );
        ensure!(
            indices.last().is_none_or(|&i| i < dim),
            "observed index out of range for dimension {dim}"
        );
        ensure!(values.iter().all(|v| v.is_finite()), "observed values must be finite");
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    /// Every coordinate observed.
    pub fn full(values: &[f64]) -> Self {
        Self {
            dim: values.len(),
            indices: (0..values.len()).collect(),
            values: values.to_vec(),
        }
    }

    /// Keep the coordinates of `dense` where `mask` is true.
    pub fn masked(dense: &[f64], mask: &[bool]) -> Result<Self> {
        ensure!(dense.len() == mask.len(), "mask length differs from row length");
        let (indices, values) = dense
            .iter()
            .zip(mask)
            .enumerate()
            .filter(|(_, (_, &keep))| keep)
            .map(|(j, (&v, _))| (j, v))
            .unzip();
        Self::new(dense.len(), indices, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of observed coordinates.
    pub fn observed(&self) -> usize {
        self.indices.len()
    }

    pub fn is_complete(&self) -> bool {
        self.indices.len() == self.dim
    }

    /// Dense row with unobserved coordinates set to zero.
    pub fn zero_filled(&self) -> Vector {
        let mut v = Vector::zeros(self.dim);
        for (&j, &x) in self.indices.iter().zip(&self.values) {
            v[j] = x;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionConfig {
    pub rank: usize,
    pub confidence: f64,
    pub min_entries: usize,
}

impl CompletionConfig {
    pub fn new(rank: usize, confidence: f64, min_entries: usize) -> Result<Self> {
        ensure!(rank >= 1, "completion rank must be positive");
        ensure!(
            confidence > 0.0 && confidence < 1.0,
            "confidence delta must lie in (0, 1), got {confidence}"
        );
        ensure!(min_entries >= 1, "min_entries must be positive");
        Ok(Self {
            rank,
            confidence,
            min_entries,
        })
    }

    /// Threshold derived from the sample-size bound with `mu` measured on
    /// the basis alone. When the bound exceeds the row length it cannot be
    /// met by any partially observed row; the threshold then falls back to
    /// `2r` (capped at the row length).
    pub fn from_basis(basis: &RowSpaceBasis, overlap_rows: usize, confidence: f64) -> Result<Self> {
        let r = basis.rank();
        let mu = incoherence(basis.matrix())?;
        let required = required_samples(mu, r, overlap_rows.max(1), confidence)?;
        let min_entries = if required <= basis.dim() {
            required
        } else {
            (2 * r).min(basis.dim())
        };
        Self::new(r, confidence, min_entries)
    }
}

/// `max_i (n / r) ||basis_(i)||^2` for an `n x r` basis with orthonormal
/// columns. Ranges from 1 (perfectly spread) to `n / r`.
pub fn incoherence(basis: &Matrix) -> Result<f64> {
    let (n, r) = basis.shape();
    ensure!(r >= 1 && n >= r, "incoherence needs an n x r basis with 1 <= r <= n");
    let residual = orthonormality_residual(basis);
    ensure!(
        residual <= 1e-6,
        "incoherence: basis columns are not orthonormal (residual {residual:e})"
    );
    let max_row = basis
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(0.0, f64::max);
    Ok(n as f64 / r as f64 * max_row)
}

/// `ceil(7 mu r ln(r b / delta))` observed entries per row.
pub fn required_samples(mu: f64, r: usize, b: usize, delta: f64) -> Result<usize> {
    required_samples_with_constant(SAMPLE_CONSTANT, mu, r, b, delta)
}

pub fn required_samples_with_constant(
    constant: f64,
    mu: f64,
    r: usize,
    b: usize,
    delta: f64,
) -> Result<usize> {
    ensure!(
        delta > 0.0 && delta < 1.0,
        "confidence delta must lie in (0, 1), got {delta}"
    );
    ensure!(mu >= 1.0 - 1e-12, "incoherence is at least 1, got {mu}");
    ensure!(r >= 1 && b >= 1, "rank and row count must be positive");
    ensure!(constant > 0.0, "sample constant must be positive");
    let raw = constant * mu * r as f64 * (r as f64 * b as f64 / delta).ln();
    // Guard against 32.99999... from rounding in the logarithm.
    Ok((raw - 1e-9).ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredRow {
    pub values: Vector,
    /// `V_Omega^T V_Omega` was singular or badly conditioned.
    pub ill_posed: bool,
}

/// Rebuild one row from its observed coordinates.
///
/// With `ridge == 0` and a singular normal matrix the minimum-norm
/// coefficients are used and the row is flagged.
pub fn recover_row(obs: &ObservedRow, basis: &RowSpaceBasis, ridge: f64) -> Result<RecoveredRow> {
    ensure!(
        obs.dim() == basis.dim(),
        "observed row has dimension {} but basis has dimension {}",
        obs.dim(),
        basis.dim()
    );
    ensure!(obs.observed() >= 1, "cannot recover a row with no observed entries");
    let v = basis.matrix();
    let sub = v.select_rows(obs.indices());
    let target = Vector::from_column_slice(obs.values());
    let ill_posed = normal_condition(&sub) > MAX_NORMAL_CONDITION;
    let z = linalg::solve_least_squares(&sub, &target, ridge)?;
    Ok(RecoveredRow {
        values: v * z,
        ill_posed,
    })
}

/// Condition number of `sub^T sub`; infinite when `sub` loses column rank.
fn normal_condition(sub: &Matrix) -> f64 {
    if sub.nrows() < sub.ncols() {
        return f64::INFINITY;
    }
    let sv = linalg::singular_values(sub);
    let (hi, lo) = (sv[0], sv[sv.len() - 1]);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionReport {
    /// One row per kept id, in arrival order.
    pub completed: Matrix,
    pub kept_row_ids: Vec<usize>,
    pub discarded_row_ids: Vec<usize>,
    /// Kept rows that needed regularization.
    pub ill_posed_row_ids: Vec<usize>,
}

/// Streaming completer: rows are pushed once, in arrival order.
#[derive(Debug, Clone)]
pub struct RowCompleter {
    basis: RowSpaceBasis,
    config: CompletionConfig,
    rows: Vec<Vector>,
    kept: Vec<usize>,
    discarded: Vec<usize>,
    ill_posed: Vec<usize>,
}

impl RowCompleter {
    pub fn new(basis: RowSpaceBasis, config: CompletionConfig) -> Self {
        Self {
            basis,
            config,
            rows: Vec::new(),
            kept: Vec::new(),
            discarded: Vec::new(),
            ill_posed: Vec::new(),
        }
    }

    pub fn basis(&self) -> &RowSpaceBasis {
        &self.basis
    }

    pub fn config(&self) -> &CompletionConfig {
        &self.config
    }

    /// Returns the completed row, or `None` when the row has fewer than
    /// `min_entries` observations and is discarded.
    pub fn push(&mut self, row_id: usize, obs: &ObservedRow) -> Result<Option<Vector>> {
        ensure!(
            obs.dim() == self.basis.dim(),
            "row {row_id} has dimension {} but basis has dimension {}",
            obs.dim(),
            self.basis.dim()
        );
        if obs.observed() < self.config.min_entries {
            self.discarded.push(row_id);
            return Ok(None);
        }
        let mut rec = recover_row(obs, &self.basis, 0.0)?;
        if rec.ill_posed {
            rec = recover_row(obs, &self.basis, ILL_POSED_RIDGE)?;
            self.ill_posed.push(row_id);
        }
        self.kept.push(row_id);
        self.rows.push(rec.values.clone());
        Ok(Some(rec.values))
    }

    pub fn finish(self) -> CompletionReport {
        let d = self.basis.dim();
        let mut completed = Matrix::zeros(self.rows.len(), d);
        for (i, row) in self.rows.iter().enumerate() {
            completed.set_row(i, &row.transpose());
        }
        CompletionReport {
            completed,
            kept_row_ids: self.kept,
            discarded_row_ids: self.discarded,
            ill_posed_row_ids: self.ill_posed,
        }
    }
}

/// Complete a stream of `(row_id, row)` pairs in one pass.
pub fn complete_stream<'a, I>(
    rows: I,
    basis: &RowSpaceBasis,
    cfg: &CompletionConfig,
) -> Result<CompletionReport>
where
    I: IntoIterator<Item = (usize, &'a ObservedRow)>,
{
    let mut completer = RowCompleter::new(basis.clone(), cfg.clone());
    for (id, row) in rows {
        completer.push(id, row)?;
    }
    Ok(completer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn observed_row_contracts() {
        assert!(ObservedRow::new(3, vec![0, 2], vec![1.0, 2.0]).is_ok());
        assert!(ObservedRow::new(3, vec![2, 0], vec![1.0, 2.0]).is_err());
        assert!(ObservedRow::new(3, vec![0, 0], vec![1.0, 2.0]).is_err());
        assert!(ObservedRow::new(3, vec![3], vec![1.0]).is_err());
        assert!(ObservedRow::new(3, vec![1], vec![1.0, 2.0]).is_err());
        let m = ObservedRow::masked(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(m.indices(), &[0, 2]);
        assert_eq!(m.zero_filled().as_slice(), &[1.0, 0.0, 3.0]);
    }

    #[test]
    fn incoherence_of_identity_columns() {
        let mut basis = Matrix::zeros(8, 2);
        basis[(0, 0)] = 1.0;
        basis[(1, 1)] = 1.0;
        assert!((incoherence(&basis).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn incoherence_of_hadamard_columns() {
        let h = dmatrix![
            1.0, 1.0;
            1.0, -1.0;
            1.0, 1.0;
            1.0, -1.0
        ] / 2.0;
        assert!((incoherence(&h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incoherence_of_single_axis() {
        let mut basis = Matrix::zeros(5, 1);
        basis[(0, 0)] = 1.0;
        assert!((incoherence(&basis).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn incoherence_rejects_non_orthonormal() {
        let basis = dmatrix![1.0; 1.0];
        assert!(incoherence(&basis).is_err());
    }

    #[test]
    fn required_samples_examples() {
        assert_eq!(required_samples(1.0, 1, 10, 0.1).unwrap(), 33);
        assert_eq!(required_samples(1.0, 1, 1, (-1.0f64).exp()).unwrap(), 7);
        assert_eq!(required_samples(2.0, 3, 20, 0.05).unwrap(), 298);
        assert!(required_samples(1.0, 1, 10, 0.0).is_err());
        assert!(required_samples(1.0, 1, 10, 1.0).is_err());
    }

    #[test]
    fn rank_one_recovery_from_single_entry() {
        let s = 1.0 / 2f64.sqrt();
        let basis = RowSpaceBasis::from_columns(dmatrix![s; s]).unwrap();
        let obs = ObservedRow::new(2, vec![0], vec![3.0]).unwrap();
        let rec = recover_row(&obs, &basis, 0.0).unwrap();
        assert!(!rec.ill_posed);
        assert!((rec.values[0] - 3.0).abs() < 1e-12);
        assert!((rec.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_observation_rejected() {
        let basis = RowSpaceBasis::from_columns(dmatrix![1.0; 0.0]).unwrap();
        let obs = ObservedRow::new(2, vec![], vec![]).unwrap();
        assert!(recover_row(&obs, &basis, 0.0).is_err());
    }

    #[test]
    fn singular_pattern_flagged_and_min_norm() {
        // basis spans e1 only; observing coordinate 1 carries no information.
        let basis = RowSpaceBasis::from_columns(dmatrix![1.0; 0.0]).unwrap();
        let obs = ObservedRow::new(2, vec![1], vec![0.0]).unwrap();
        let rec = recover_row(&obs, &basis, 0.0).unwrap();
        assert!(rec.ill_posed);
        assert_eq!(rec.values.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn stream_discards_sparse_rows() {
        let basis = RowSpaceBasis::from_columns(Matrix::identity(6, 6)).unwrap();
        let cfg = CompletionConfig::new(6, 0.1, 5).unwrap();
        let full = ObservedRow::full(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let sparse = ObservedRow::new(6, vec![0, 2, 4], vec![1.0, 3.0, 5.0]).unwrap();
        let rows = [full.clone(), sparse, full];
        let report = complete_stream(rows.iter().enumerate(), &basis, &cfg).unwrap();
        assert_eq!(report.kept_row_ids, vec![0, 2]);
        assert_eq!(report.discarded_row_ids, vec![1]);
        assert_eq!(report.completed.nrows(), 2);
        assert!((report.completed[(1, 5)] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn config_contracts() {
        assert!(CompletionConfig::new(0, 0.1, 1).is_err());
        assert!(CompletionConfig::new(1, 1.0, 1).is_err());
        assert!(CompletionConfig::new(1, 0.1, 0).is_err());
    }
}
