//! Diagonal scalings `S = D·M·E` of a nonnegative rating matrix.
//!
//! [`rz_scale`] computes the unit-product scaling: every row and column of
//! `S` has positive entries whose product is 1. It runs as alternating
//! mean-centering of `ln M` over the positive cells, which is the same thing
//! as geometric-mean balancing without overflow.
//!
//! [`sinkhorn_scale`] computes the unit-sum scaling for comparison. It fails
//! with [`ScalingError::Diverged`] on zero patterns (triangular support, for
//! one) that admit no finite factors.
//!
//! Factors are only determined up to a per-component gauge
//! `D → t·D, E → E/t`. [`Gauge`] picks the reported representative; `S` and
//! within-component predictions do not depend on it.

mod rz;
mod sinkhorn;

use std::fmt;

use thiserror::Error;

use crate::matrix::{Axis, RatingMatrix, SupportComponents};

pub use rz::{rz_scale, RzBalancer};
pub use sinkhorn::sinkhorn_scale;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gauge {
    /// Per component, mean log row factor equals mean log column factor.
    #[default]
    Symmetric,
    /// Per component, the lowest-indexed row gets factor exactly 1.
    FirstRowAnchored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    /// Unit product of positive entries per row and column.
    Rz,
    /// Unit row and column sums.
    Sinkhorn,
}

impl fmt::Display for ScalingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalingKind::Rz => f.write_str("rz"),
            ScalingKind::Sinkhorn => f.write_str("sinkhorn"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceConfig {
    /// Stop once the residual is at or below this value. For `Rz` this is
    /// the largest absolute mean of log-scaled entries over rows and columns.
    pub tol: f64,
    pub max_iters: usize,
    pub gauge: Gauge,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 1000,
            gauge: Gauge::Symmetric,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<(), ScalingError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(ScalingError::InvalidConfig(format!(
                "tol must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(ScalingError::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceReason {
    /// An accumulated factor left `[1e-150, 1e150]`.
    FactorOutOfRange,
    /// The residual failed to shrink by 0.999 over 50 sweeps.
    Stalled,
    /// `max_iters` sweeps ran without reaching `tol`.
    IterationLimit,
}

impl fmt::Display for DivergenceReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceReason::FactorOutOfRange => f.write_str("scaling factor left [1e-150, 1e150]"),
            DivergenceReason::Stalled => f.write_str("residual stalled"),
            DivergenceReason::IterationLimit => f.write_str("iteration limit reached"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("invalid balance config: {0}")]
    InvalidConfig(String),
    #[error("matrix has no positive entry")]
    NoPositiveEntries,
    #[error("{axis} {index} has no positive entry")]
    EmptyLine { axis: Axis, index: usize },
    #[error("not converged after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(
        "sinkhorn diverged after {iterations} sweeps ({reason}, residual {residual:e}); \
         worst row {worst_row}, worst column {worst_col}; \
         zero pattern admits no finite unit-sum scaling"
    )]
    Diverged {
        reason: DivergenceReason,
        iterations: usize,
        residual: f64,
        worst_row: usize,
        worst_col: usize,
    },
    #[error("scaling is {found_rows}x{found_cols} but matrix is {n_rows}x{n_cols}")]
    DimensionMismatch {
        n_rows: usize,
        n_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("{axis} {index} has positive entries but no factor")]
    MissingFactor { axis: Axis, index: usize },
}

impl ScalingError {
    /// Input admits no scaling at all (as opposed to a failed iteration).
    pub fn is_degenerate(&self) -> bool {
        matches!(self, ScalingError::NoPositiveEntries | ScalingError::EmptyLine { .. })
    }
}

/// Row and column factors of a converged scaling. Rows and columns without a
/// positive entry have no factor (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    kind: ScalingKind,
    row_factors: Vec<Option<f64>>,
    col_factors: Vec<Option<f64>>,
    residual: f64,
    iterations: usize,
    components: SupportComponents,
    gauge: Gauge,
}

impl ScalingResult {
    pub fn kind(&self) -> ScalingKind {
        self.kind
    }

    pub fn row_factors(&self) -> &[Option<f64>] {
        &self.row_factors
    }

    pub fn col_factors(&self) -> &[Option<f64>] {
        &self.col_factors
    }

    /// Residual at termination, as tracked by the iteration.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn components(&self) -> &SupportComponents {
        &self.components
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn n_rows(&self) -> usize {
        self.row_factors.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_factors.len()
    }

    /// The scaled matrix `S`. Zeros and missing cells keep their pattern.
    pub fn scaled_matrix(&self, m: &RatingMatrix) -> Result<RatingMatrix, ScalingError> {
        self.check_dims(m)?;
        let cells = m.iter().map(|(i, j, v)| {
            let s = match (v > 0.0, self.row_factors[i], self.col_factors[j]) {
                (true, Some(d), Some(e)) => d * v * e,
                _ => 0.0,
            };
            (i, j, s)
        });
        Ok(RatingMatrix::from_triplets(m.n_rows(), m.n_cols(), cells)
            .expect("scaling preserves the pattern of a valid matrix")
            .with_ids(m.row_ids().to_vec(), m.col_ids().to_vec())
            .expect("ids carried from the source"))
    }

    /// The same scaling reported in another gauge.
    pub fn with_gauge(&self, gauge: Gauge) -> ScalingResult {
        let mut row_log: Vec<Option<f64>> = self.row_factors.iter().map(|f| f.map(f64::ln)).collect();
        let mut col_log: Vec<Option<f64>> = self.col_factors.iter().map(|f| f.map(f64::ln)).collect();
        fix_gauge(&self.components, &mut row_log, &mut col_log, gauge);
        ScalingResult {
            row_factors: row_log.into_iter().map(|x| x.map(f64::exp)).collect(),
            col_factors: col_log.into_iter().map(|x| x.map(f64::exp)).collect(),
            gauge,
            ..self.clone()
        }
    }

    fn check_dims(&self, m: &RatingMatrix) -> Result<(), ScalingError> {
        if self.n_rows() != m.n_rows() || self.n_cols() != m.n_cols() {
            return Err(ScalingError::DimensionMismatch {
                n_rows: m.n_rows(),
                n_cols: m.n_cols(),
                found_rows: self.n_rows(),
                found_cols: self.n_cols(),
            });
        }
        Ok(())
    }

    pub fn heap_bytes(&self) -> usize {
        (self.row_factors.capacity() + self.col_factors.capacity()) * std::mem::size_of::<Option<f64>>()
            + self.components.heap_bytes()
    }
}

/// Builds a result from log-domain offsets, applying the gauge first.
fn finish(
    kind: ScalingKind,
    components: SupportComponents,
    mut row_log: Vec<Option<f64>>,
    mut col_log: Vec<Option<f64>>,
    residual: f64,
    iterations: usize,
    gauge: Gauge,
) -> ScalingResult {
    fix_gauge(&components, &mut row_log, &mut col_log, gauge);
    ScalingResult {
        kind,
        row_factors: row_log.into_iter().map(|x| x.map(f64::exp)).collect(),
        col_factors: col_log.into_iter().map(|x| x.map(f64::exp)).collect(),
        residual,
        iterations,
        components,
        gauge,
    }
}

/// Shifts `row_log += t_c`, `col_log -= t_c` within each component `c`.
fn fix_gauge(components: &SupportComponents, row_log: &mut [Option<f64>], col_log: &mut [Option<f64>], gauge: Gauge) {
    let k = components.n_components();
    let mut shift = vec![0.0; k];
    match gauge {
        Gauge::Symmetric => {
            let mut row_sum = vec![0.0; k];
            let mut row_n = vec![0usize; k];
            let mut col_sum = vec![0.0; k];
            let mut col_n = vec![0usize; k];
            for (label, x) in components.row_labels().iter().zip(row_log.iter()) {
                if let (Some(c), Some(x)) = (label, x) {
                    row_sum[*c] += x;
                    row_n[*c] += 1;
                }
            }
            for (label, x) in components.col_labels().iter().zip(col_log.iter()) {
                if let (Some(c), Some(x)) = (label, x) {
                    col_sum[*c] += x;
                    col_n[*c] += 1;
                }
            }
            for c in 0..k {
                let mean_r = row_sum[c] / row_n[c] as f64;
                let mean_c = col_sum[c] / col_n[c] as f64;
                shift[c] = (mean_c - mean_r) / 2.0;
            }
        }
        Gauge::FirstRowAnchored => {
            let mut anchored = vec![false; k];
            for (label, x) in components.row_labels().iter().zip(row_log.iter()) {
                if let (Some(c), Some(x)) = (label, x) {
                    if !anchored[*c] {
                        anchored[*c] = true;
                        shift[*c] = -x;
                    }
                }
            }
        }
    }
    for (label, x) in components.row_labels().iter().zip(row_log.iter_mut()) {
        if let (Some(c), Some(x)) = (label, x.as_mut()) {
            *x += shift[*c];
        }
    }
    for (label, x) in components.col_labels().iter().zip(col_log.iter_mut()) {
        if let (Some(c), Some(x)) = (label, x.as_mut()) {
            *x -= shift[*c];
        }
    }
}

/// Recomputes the convergence residual of `result` on `m` from scratch.
///
/// `Rz`: max over rows and columns with a positive entry of
/// `|mean ln(d_i · M_ij · e_j)|` over the positive cells.
/// `Sinkhorn`: max over rows and columns of `|sum of scaled entries − 1|`.
pub fn residual(m: &RatingMatrix, result: &ScalingResult, kind: ScalingKind) -> Result<f64, ScalingError> {
    result.check_dims(m)?;
    let (n_rows, n_cols) = (m.n_rows(), m.n_cols());
    let mut row_acc = vec![0.0; n_rows];
    let mut row_n = vec![0usize; n_rows];
    let mut col_acc = vec![0.0; n_cols];
    let mut col_n = vec![0usize; n_cols];
    for (i, j, v) in m.positive_cells() {
        let d = result.row_factors[i].ok_or(ScalingError::MissingFactor {
            axis: Axis::Row,
            index: i,
        })?;
        let e = result.col_factors[j].ok_or(ScalingError::MissingFactor {
            axis: Axis::Col,
            index: j,
        })?;
        let term = match kind {
            ScalingKind::Rz => d.ln() + v.ln() + e.ln(),
            ScalingKind::Sinkhorn => d * v * e,
        };
        row_acc[i] += term;
        row_n[i] += 1;
        col_acc[j] += term;
        col_n[j] += 1;
    }
    let line = |acc: f64, n: usize| match kind {
        ScalingKind::Rz => (acc / n as f64).abs(),
        ScalingKind::Sinkhorn => (acc - 1.0).abs(),
    };
    let rows = row_acc
        .iter()
        .zip(&row_n)
        .filter(|(_, &n)| n > 0)
        .map(|(&a, &n)| line(a, n));
    let cols = col_acc
        .iter()
        .zip(&col_n)
        .filter(|(_, &n)| n > 0)
        .map(|(&a, &n)| line(a, n));
    Ok(rows.chain(cols).fold(0.0, f64::max))
}

/// Positive cells of a matrix in both row-major and column-major order,
/// with values passed through `map` (`ln` for unit-product balancing).
struct PositivePattern {
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
}

impl PositivePattern {
    fn new(m: &RatingMatrix, map: impl Fn(f64) -> f64) -> Self {
        let (n_rows, n_cols) = (m.n_rows(), m.n_cols());
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        let mut col_count = vec![0usize; n_cols + 1];
        row_ptr.push(0);
        for i in 0..n_rows {
            for (j, v) in m.row(i).filter(|&(_, v)| v > 0.0) {
                row_cols.push(j);
                row_vals.push(map(v));
                col_count[j + 1] += 1;
            }
            row_ptr.push(row_cols.len());
        }
        for j in 0..n_cols {
            col_count[j + 1] += col_count[j];
        }
        let col_ptr = col_count;
        let mut next = col_ptr.clone();
        let mut col_rows = vec![0; row_cols.len()];
        let mut col_vals = vec![0.0; row_cols.len()];
        for i in 0..n_rows {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = row_cols[k];
                col_rows[next[j]] = i;
                col_vals[next[j]] = row_vals[k];
                next[j] += 1;
            }
        }
        Self {
            row_ptr,
            row_cols,
            row_vals,
            col_ptr,
            col_rows,
            col_vals,
        }
    }

    fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn n_cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    fn nnz(&self) -> usize {
        self.row_cols.len()
    }

    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.row_cols[r.clone()], &self.row_vals[r])
    }

    fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.col_rows[r.clone()], &self.col_vals[r])
    }
}
