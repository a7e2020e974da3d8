//! CSV readers and writers for matrices, vectors and sparse triplets.

use std::io::{Read, Write};

use crate::completion::ObservedRow;
use crate::error::{ensure, Error, Result};
use crate::linalg::{Matrix, Vector};

fn parse_field(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            path: "<csv>".into(),
            line,
            msg: format!("invalid number {field:?}"),
        })
}

fn is_header(record: &csv::StringRecord) -> bool {
    record.iter().any(|f| f.trim().parse::<f64>().is_err())
}

/// Dense matrix without header, one row per line.
pub fn write_matrix<W: Write>(m: &Matrix, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Dense matrix; a leading non-numeric header row is skipped.
pub fn read_matrix<R: Read>(input: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && is_header(&rec) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| parse_field(f, i + 1))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            ensure!(
                row.len() == first.len(),
                "matrix row {} has {} columns, expected {}",
                i + 1,
                row.len(),
                first.len()
            );
        }
        rows.push(row);
    }
    ensure!(!rows.is_empty(), "matrix file is empty");
    let ncols = rows[0].len();
    Ok(Matrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

/// One value per line.
pub fn write_vector<W: Write>(v: &Vector, out: W) -> Result<()> {
    write_matrix(&Matrix::from_column_slice(v.len(), 1, v.as_slice()), out)
}

pub fn read_vector<R: Read>(input: R) -> Result<Vector> {
    let m = read_matrix(input)?;
    ensure!(m.ncols() == 1, "vector file must have a single column");
    Ok(m.column(0).into_owned())
}

/// Sparse `row_id,col_id,value` triplets (0-based ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    /// Group into observed rows of dimension `dim`, ordered by row id.
    pub fn into_rows(self, dim: usize) -> Result<Vec<(usize, ObservedRow)>> {
        let mut entries = self.entries;
        entries.sort_by_key(|e| (e.0, e.1));
        let mut rows: Vec<(usize, ObservedRow)> = Vec::new();
        let mut start = 0;
        while start < entries.len() {
            let id = entries[start].0;
            let end = entries[start..]
                .iter()
                .position(|e| e.0 != id)
                .map_or(entries.len(), |p| start + p);
            let group = &entries[start..end];
            for pair in group.windows(2) {
                ensure!(
                    pair[0].1 != pair[1].1,
                    "row {id} lists column {} twice",
                    pair[0].1
                );
            }
            let obs = ObservedRow::new(
                dim,
                group.iter().map(|e| e.1).collect(),
                group.iter().map(|e| e.2).collect(),
            )?;
            rows.push((id, obs));
            start = end;
        }
        Ok(rows)
    }
}

pub fn read_triplets<R: Read>(input: R) -> Result<Triplets> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && is_header(&rec) {
            continue;
        }
        ensure!(rec.len() == 3, "triplet line {} must have 3 fields", i + 1);
        let index = |k: usize| -> Result<usize> {
            rec[k].trim().parse().map_err(|_| Error::Parse {
                path: "<csv>".into(),
                line: i + 1,
                msg: format!("invalid index {:?}", &rec[k]),
            })
        };
        entries.push((index(0)?, index(1)?, parse_field(&rec[2], i + 1)?));
    }
    Ok(Triplets { entries })
}

/// Dense rows as `row_id,col_id,value` with a header.
pub fn write_triplets<W: Write>(rows: &[(usize, Vector)], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["row_id", "col_id", "value"])?;
    for (id, row) in rows {
        for (j, v) in row.iter().enumerate() {
            wtr.write_record([id.to_string(), j.to_string(), v.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
