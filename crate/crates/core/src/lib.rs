//! Scale-consistent completion of sparse, nonnegative rating matrices.
//!
//! The engine balances the observed ratings with the unit-product
//! (Rothblum–Zenios) diagonal scaling `S = D·M·E`, under which the product of
//! the positive entries of every row and column of `S` is 1. A missing cell
//! `(i, j)` is then estimated as `1 / (D_ii · E_jj)`: filling `S` with ones and
//! undoing the scaling. Rescaling a user's row by `α` and an item's column by
//! `β` rescales that estimate by exactly `αβ`.
//!
//! Modules:
//! - [`matrix`]: sparse storage with a hard observed/missing distinction,
//!   CSV ingestion and support-graph components.
//! - [`scaling`]: unit-product balancing and the Sinkhorn unit-sum baseline.
//! - [`completion`]: the storage-free predictor built from a scaling.
//! - [`eval`]: holdout evaluation and eccentric-user filtering.
//! - [`cli`]: the batch front-end behind the `unitcomplete` binary.

pub mod cli;
pub mod completion;
pub mod eval;
pub mod matrix;
pub mod scaling;

pub use completion::{CompletionModel, CrossComponentPolicy, Prediction, PredictionStatus};
pub use eval::{
    evaluate, filter_eccentric_users, make_mask, EvalError, EvaluationReport, MaskSpec,
    OutlierReport,
};
pub use matrix::{
    ingest_csv, ingest_str, support_components, CsvOptions, Delimiter, MatrixError, RatingMatrix,
    SupportComponents,
};
pub use scaling::{
    residual, rz_scale, sinkhorn_scale, BalanceConfig, Gauge, ScalingError, ScalingKind,
    ScalingResult,
};
