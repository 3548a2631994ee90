//! Sparse rating matrices.
//!
//! A cell is either observed (any nonnegative value, including 0) or missing.
//! Missing cells are never stored, so an observed zero can't be mistaken for
//! an unfilled cell.

mod components;
mod ingest;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use components::{support_components, SupportComponents};
pub use ingest::{ingest_csv, ingest_str, CsvOptions, Delimiter};

/// Which side of the matrix an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Row,
    Col,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Col => f.write_str("column"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("line {line}: negative value {value}")]
    NegativeValue { line: u64, value: f64 },
    #[error("line {line}: value {text:?} is not a finite nonnegative decimal")]
    NonNumeric { line: u64, text: String },
    #[error("line {line}: expected 3 fields (row_id, col_id, value), found {found}")]
    FieldCount { line: u64, found: usize },
    #[error("duplicate rating for ({row_id}, {col_id}) on lines {first_line} and {second_line}")]
    Duplicate {
        row_id: String,
        col_id: String,
        first_line: u64,
        second_line: u64,
    },
    #[error("input contains no rating records")]
    Empty,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("entry ({row}, {col}) lies outside the {n_rows}x{n_cols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("entry ({row}, {col}) has value {value}; ratings must be finite and nonnegative")]
    InvalidValue { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) appears more than once")]
    DuplicateIndex { row: usize, col: usize },
    #[error("{axis} factor {index} is {value}; scale factors must be finite and positive")]
    NonPositiveFactor { axis: Axis, index: usize, value: f64 },
    #[error("expected {expected} {axis} entries, got {found}")]
    LengthMismatch {
        axis: Axis,
        expected: usize,
        found: usize,
    },
}

/// Sparse `m × n` matrix of observed nonnegative ratings, stored row-major
/// (CSR) with sorted column indices inside each row.
///
/// Rows and columns carry opaque string ids; a matrix built from triplets
/// uses the decimal index as id.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

impl RatingMatrix {
    /// Builds a matrix from `(row, col, value)` triplets in any order.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut cells: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(row, col, value) in &cells {
            if row >= n_rows || col >= n_cols {
                return Err(MatrixError::OutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            if !value.is_finite() || value < 0.0 {
                return Err(MatrixError::InvalidValue { row, col, value });
            }
        }
        cells.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = cells
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(MatrixError::DuplicateIndex {
                row: w[0].0,
                col: w[0].1,
            });
        }

        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(r, _, _) in &cells {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = cells.iter().map(|&(_, c, _)| c).collect();
        // -0.0 is an observed zero like any other.
        let values = cells.iter().map(|&(_, _, v)| v + 0.0).collect();

        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            row_ids: (0..n_rows).map(|i| i.to_string()).collect(),
            col_ids: (0..n_cols).map(|j| j.to_string()).collect(),
        })
    }

    /// Dense constructor for small literals: `None` is a missing cell.
    pub fn from_dense(rows: &[Vec<Option<f64>>]) -> Result<Self, MatrixError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        for row in rows {
            if row.len() != n_cols {
                return Err(MatrixError::LengthMismatch {
                    axis: Axis::Col,
                    expected: n_cols,
                    found: row.len(),
                });
            }
        }
        let triplets = rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, v)| v.map(|v| (i, j, v)))
        });
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    /// Replaces the default index ids with caller-supplied ids.
    pub fn with_ids(mut self, row_ids: Vec<String>, col_ids: Vec<String>) -> Result<Self, MatrixError> {
        if row_ids.len() != self.n_rows {
            return Err(MatrixError::LengthMismatch {
                axis: Axis::Row,
                expected: self.n_rows,
                found: row_ids.len(),
            });
        }
        if col_ids.len() != self.n_cols {
            return Err(MatrixError::LengthMismatch {
                axis: Axis::Col,
                expected: self.n_cols,
                found: col_ids.len(),
            });
        }
        self.row_ids = row_ids;
        self.col_ids = col_ids;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of observed cells (`p`), observed zeros included.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Number of strictly positive observed cells.
    pub fn n_positive(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    /// Observed value at `(i, j)`, or `None` when the cell is missing or the
    /// index is out of range.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i >= self.n_rows {
            return None;
        }
        let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[start..end]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[start + k])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    /// Observed cells of row `i` as `(col, value)` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[start..end]
            .iter()
            .copied()
            .zip(self.values[start..end].iter().copied())
    }

    /// Column indices of the observed cells of row `i`, ascending.
    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// All observed cells as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Strictly positive observed cells in row-major order.
    pub fn positive_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.iter().filter(|&(_, _, v)| v > 0.0)
    }

    /// Multiplies each observed `(i, j)` by `row_factors[i] · col_factors[j]`.
    /// Missing cells stay missing and observed zeros stay zero.
    pub fn apply_row_col_scales(&self, row_factors: &[f64], col_factors: &[f64]) -> Result<Self, MatrixError> {
        check_factors(Axis::Row, row_factors, self.n_rows)?;
        check_factors(Axis::Col, col_factors, self.n_cols)?;
        let mut scaled = self.clone();
        for (i, &d) in row_factors.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                scaled.values[k] = d * self.values[k] * col_factors[self.col_idx[k]];
            }
        }
        Ok(scaled)
    }

    /// Copy with the given cells turned into missing cells. Dimensions and
    /// ids are kept so indices stay comparable with the source.
    pub fn without_cells(&self, cells: &BTreeSet<(usize, usize)>) -> Self {
        self.filtered(|i, j| !cells.contains(&(i, j)))
    }

    /// Copy with every observation in the given rows removed.
    pub fn without_rows(&self, rows: &BTreeSet<usize>) -> Self {
        self.filtered(|i, _| !rows.contains(&i))
    }

    fn filtered(&self, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                if keep(i, j) {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
            row_ids: self.row_ids.clone(),
            col_ids: self.col_ids.clone(),
        }
    }

    /// Writes the observed cells as `row_id<delim>col_id<delim>value` lines,
    /// row-major, without a header.
    pub fn to_csv(&self, delimiter: u8) -> String {
        let d = delimiter as char;
        let mut out = String::new();
        for (i, j, v) in self.iter() {
            out.push_str(&self.row_ids[i]);
            out.push(d);
            out.push_str(&self.col_ids[j]);
            out.push(d);
            out.push_str(&format_float(v));
            out.push('\n');
        }
        out
    }

    /// Heap bytes owned by this matrix, ids excluded. Grows as `O(m + p)`.
    pub fn heap_bytes(&self) -> usize {
        self.row_ptr.capacity() * std::mem::size_of::<usize>()
            + self.col_idx.capacity() * std::mem::size_of::<usize>()
            + self.values.capacity() * std::mem::size_of::<f64>()
    }
}

fn check_factors(axis: Axis, factors: &[f64], expected: usize) -> Result<(), MatrixError> {
    if factors.len() != expected {
        return Err(MatrixError::LengthMismatch {
            axis,
            expected,
            found: factors.len(),
        });
    }
    match factors
        .iter()
        .enumerate()
        .find(|(_, f)| !(f.is_finite() && **f > 0.0))
    {
        Some((index, &value)) => Err(MatrixError::NonPositiveFactor { axis, index, value }),
        None => Ok(()),
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
