//! Missing-entry prediction from a unit-product scaling.
//!
//! Filling the missing cells of `S = D·M·E` with 1 and undoing the scaling
//! gives `M′ = D⁻¹·S′·E⁻¹`. The model never materializes `M′`: a missing
//! cell `(i, j)` is `1 / (D_ii · E_jj)`, so only the two factor vectors and
//! the observed cells are kept.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::matrix::{support_components, RatingMatrix, SupportComponents};
use crate::scaling::{Gauge, ScalingResult};

/// What to do with a missing cell whose row and column lie in different
/// support components. Such an estimate depends on the arbitrary gauge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossComponentPolicy {
    #[default]
    Refuse,
    /// Report `1/(d·e)` under the symmetric gauge, tagged `CrossComponent`.
    EstimateWithWarning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredictionStatus {
    Observed,
    Estimated,
    CrossComponent,
    UndefinedRow,
    UndefinedCol,
}

impl PredictionStatus {
    pub const ALL: [PredictionStatus; 5] = [
        PredictionStatus::Observed,
        PredictionStatus::Estimated,
        PredictionStatus::CrossComponent,
        PredictionStatus::UndefinedRow,
        PredictionStatus::UndefinedCol,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictionStatus::Observed => "observed",
            PredictionStatus::Estimated => "estimated",
            PredictionStatus::CrossComponent => "cross-component",
            PredictionStatus::UndefinedRow => "undefined-row",
            PredictionStatus::UndefinedCol => "undefined-col",
        }
    }
}

impl fmt::Display for PredictionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: Option<f64>,
    pub status: PredictionStatus,
}

impl Prediction {
    fn absent(status: PredictionStatus) -> Self {
        Self { value: None, status }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompletionError {
    #[error("scaling is {found_rows}x{found_cols} but matrix is {n_rows}x{n_cols}")]
    DimensionMismatch {
        n_rows: usize,
        n_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("scaling components do not match the matrix support")]
    ComponentMismatch,
    #[error("cell ({row}, {col}) is outside the {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
}

/// Storage-free completion: factors, component labels and a shared handle
/// to the observed matrix. Immutable once built.
#[derive(Debug, Clone)]
pub struct CompletionModel {
    matrix: Arc<RatingMatrix>,
    row_factors: Vec<Option<f64>>,
    col_factors: Vec<Option<f64>>,
    components: SupportComponents,
    policy: CrossComponentPolicy,
}

impl CompletionModel {
    pub fn build(
        matrix: Arc<RatingMatrix>,
        scaling: &ScalingResult,
        policy: CrossComponentPolicy,
    ) -> Result<Self, CompletionError> {
        if scaling.n_rows() != matrix.n_rows() || scaling.n_cols() != matrix.n_cols() {
            return Err(CompletionError::DimensionMismatch {
                n_rows: matrix.n_rows(),
                n_cols: matrix.n_cols(),
                found_rows: scaling.n_rows(),
                found_cols: scaling.n_cols(),
            });
        }
        if *scaling.components() != support_components(&matrix) {
            return Err(CompletionError::ComponentMismatch);
        }
        let scaling = match policy {
            CrossComponentPolicy::EstimateWithWarning if scaling.gauge() != Gauge::Symmetric => {
                scaling.with_gauge(Gauge::Symmetric)
            }
            _ => scaling.clone(),
        };
        Ok(Self {
            matrix,
            row_factors: scaling.row_factors().to_vec(),
            col_factors: scaling.col_factors().to_vec(),
            components: scaling.components().clone(),
            policy,
        })
    }

    pub fn matrix(&self) -> &RatingMatrix {
        &self.matrix
    }

    pub fn matrix_arc(&self) -> &Arc<RatingMatrix> {
        &self.matrix
    }

    pub fn row_factors(&self) -> &[Option<f64>] {
        &self.row_factors
    }

    pub fn col_factors(&self) -> &[Option<f64>] {
        &self.col_factors
    }

    pub fn components(&self) -> &SupportComponents {
        &self.components
    }

    pub fn policy(&self) -> CrossComponentPolicy {
        self.policy
    }

    pub fn n_rows(&self) -> usize {
        self.row_factors.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_factors.len()
    }

    pub fn predict(&self, i: usize, j: usize) -> Result<Prediction, CompletionError> {
        if i >= self.n_rows() || j >= self.n_cols() {
            return Err(CompletionError::IndexOutOfRange {
                row: i,
                col: j,
                n_rows: self.n_rows(),
                n_cols: self.n_cols(),
            });
        }
        Ok(match self.matrix.get(i, j) {
            Some(v) => Prediction {
                value: Some(v),
                status: PredictionStatus::Observed,
            },
            None => self.estimate(i, j),
        })
    }

    /// Prediction for a cell known to be missing.
    fn estimate(&self, i: usize, j: usize) -> Prediction {
        let (Some(d), Some(row_comp)) = (self.row_factors[i], self.components.row_label(i)) else {
            return Prediction::absent(PredictionStatus::UndefinedRow);
        };
        let (Some(e), Some(col_comp)) = (self.col_factors[j], self.components.col_label(j)) else {
            return Prediction::absent(PredictionStatus::UndefinedCol);
        };
        let value = 1.0 / (d * e);
        if row_comp == col_comp {
            Prediction {
                value: Some(value),
                status: PredictionStatus::Estimated,
            }
        } else {
            Prediction {
                value: match self.policy {
                    CrossComponentPolicy::Refuse => None,
                    CrossComponentPolicy::EstimateWithWarning => Some(value),
                },
                status: PredictionStatus::CrossComponent,
            }
        }
    }

    /// Every missing cell in ascending `(i, j)` order.
    pub fn missing_predictions(&self) -> impl Iterator<Item = (usize, usize, Prediction)> + '_ {
        (0..self.n_rows()).flat_map(move |i| {
            let observed = self.matrix.row_cols(i);
            let mut next = 0;
            (0..self.n_cols()).filter_map(move |j| {
                if observed.get(next) == Some(&j) {
                    next += 1;
                    None
                } else {
                    Some((i, j, self.estimate(i, j)))
                }
            })
        })
    }

    pub fn predict_all_missing(&self) -> Vec<(usize, usize, Prediction)> {
        self.missing_predictions().collect()
    }

    /// Heap bytes held by the model: `O(m + n + p)`.
    pub fn heap_bytes(&self) -> usize {
        (self.row_factors.capacity() + self.col_factors.capacity()) * std::mem::size_of::<Option<f64>>()
            + self.components.heap_bytes()
            + self.matrix.heap_bytes()
    }
}
