//! Holdout evaluation and eccentric-user filtering.
//!
//! [`evaluate`] hides a set of positive observed cells, rebuilds the model on
//! what is left and compares predictions with the hidden truths.
//!
//! [`filter_eccentric_users`] scores each user by the mean absolute relative
//! error of their own held-out cells. Relative error is unit-free, so a user
//! is never flagged just for rating on a larger scale. Flagged users are
//! dropped and the model is rebuilt once; flagged users keep the predictions
//! of the initial model and everyone else gets the refined one.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::completion::{CompletionError, CompletionModel, CrossComponentPolicy, Prediction, PredictionStatus};
use crate::matrix::RatingMatrix;
use crate::scaling::{rz_scale, BalanceConfig, ScalingError};

/// Users need this many positive ratings before their holdout error counts.
pub const MIN_RATINGS_TO_FLAG: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("mask fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("need at least 2 positive observed cells to hold any out, found {0}")]
    TooFewPositive(usize),
    #[error("fraction {fraction} of {n_positive} positive cells rounds to an empty mask")]
    EmptyMask { fraction: f64, n_positive: usize },
    #[error(
        "cannot hold out {target} cells without emptying a row or column (managed {achieved}); \
         bottleneck rows {rows:?}, columns {cols:?}"
    )]
    InfeasibleMask {
        target: usize,
        achieved: usize,
        rows: Vec<usize>,
        cols: Vec<usize>,
    },
    #[error("held-out cell ({row}, {col}) is not a positive observed cell")]
    InvalidMask { row: usize, col: usize },
    #[error("outlier threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("threshold {threshold} flags all {n_users} users")]
    AllUsersFlagged { threshold: f64, n_users: usize },
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
}

/// Held-out cells, in ascending `(row, col)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    held_out: BTreeSet<(usize, usize)>,
    seed: u64,
    fraction: f64,
}

impl MaskSpec {
    pub fn held_out(&self) -> &BTreeSet<(usize, usize)> {
        &self.held_out
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn len(&self) -> usize {
        self.held_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held_out.is_empty()
    }
}

/// Samples `round(fraction · n_positive)` positive cells without
/// replacement. Cells are visited in a seeded random order and a cell is
/// skipped when hiding it would leave its row or column without a positive
/// cell.
pub fn make_mask(m: &RatingMatrix, fraction: f64, seed: u64) -> Result<MaskSpec, EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::InvalidFraction(fraction));
    }
    let mut cells: Vec<(usize, usize)> = m.positive_cells().map(|(i, j, _)| (i, j)).collect();
    if cells.len() < 2 {
        return Err(EvalError::TooFewPositive(cells.len()));
    }
    let target = (fraction * cells.len() as f64).round() as usize;
    if target == 0 {
        return Err(EvalError::EmptyMask {
            fraction,
            n_positive: cells.len(),
        });
    }

    let (mut row_left, mut col_left) = positive_counts(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cells.shuffle(&mut rng);

    let mut held_out = BTreeSet::new();
    for &(i, j) in &cells {
        if held_out.len() == target {
            break;
        }
        if row_left[i] >= 2 && col_left[j] >= 2 {
            row_left[i] -= 1;
            col_left[j] -= 1;
            held_out.insert((i, j));
        }
    }
    if held_out.len() < target {
        let rows = (0..m.n_rows()).filter(|&i| row_left[i] == 1).collect();
        let cols = (0..m.n_cols()).filter(|&j| col_left[j] == 1).collect();
        return Err(EvalError::InfeasibleMask {
            target,
            achieved: held_out.len(),
            rows,
            cols,
        });
    }
    Ok(MaskSpec {
        held_out,
        seed,
        fraction,
    })
}

/// Per-user stratified mask: each row with at least `min_ratings` positive
/// cells hides `round(fraction · k)` of them, clamped to `[1, k − 1]`,
/// skipping cells whose column would be emptied. Other rows are untouched.
fn make_user_mask(m: &RatingMatrix, fraction: f64, seed: u64, min_ratings: usize) -> BTreeSet<(usize, usize)> {
    let (_, mut col_left) = positive_counts(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held_out = BTreeSet::new();
    for i in 0..m.n_rows() {
        let mut cols: Vec<usize> = m.row(i).filter(|&(_, v)| v > 0.0).map(|(j, _)| j).collect();
        let k = cols.len();
        if k < min_ratings.max(2) {
            continue;
        }
        let quota = ((fraction * k as f64).round() as usize).clamp(1, k - 1);
        cols.shuffle(&mut rng);
        let mut taken = 0;
        for j in cols {
            if taken == quota {
                break;
            }
            if col_left[j] >= 2 {
                col_left[j] -= 1;
                held_out.insert((i, j));
                taken += 1;
            }
        }
    }
    held_out
}

fn positive_counts(m: &RatingMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut rows = vec![0usize; m.n_rows()];
    let mut cols = vec![0usize; m.n_cols()];
    for (i, j, _) in m.positive_cells() {
        rows[i] += 1;
        cols[j] += 1;
    }
    (rows, cols)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutcome {
    pub row: usize,
    pub col: usize,
    pub truth: f64,
    pub prediction: Prediction,
}

impl CellOutcome {
    /// `|pred − truth| / truth` for estimated cells.
    pub fn relative_error(&self) -> Option<f64> {
        self.estimated().map(|p| (p - self.truth).abs() / self.truth)
    }

    fn estimated(&self) -> Option<f64> {
        match self.prediction.status {
            PredictionStatus::Estimated => self.prediction.value,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserError {
    pub row: usize,
    pub mean_abs_rel_error: f64,
    pub n_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Held-out cells in ascending `(row, col)` order.
    pub per_cell: Vec<CellOutcome>,
    /// Over estimated cells only; `None` when no held-out cell was estimable.
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub n_estimated: usize,
    pub n_unpredictable: usize,
    /// Users with at least one estimated held-out cell, ascending row.
    pub per_user: Vec<UserError>,
}

impl EvaluationReport {
    fn from_cells(per_cell: Vec<CellOutcome>) -> Self {
        let mut sq = 0.0;
        let mut abs = 0.0;
        let mut n_estimated = 0;
        let mut per_user: Vec<UserError> = Vec::new();
        for cell in &per_cell {
            let Some(pred) = cell.estimated() else {
                continue;
            };
            let err = pred - cell.truth;
            sq += err * err;
            abs += err.abs();
            n_estimated += 1;
            let rel = err.abs() / cell.truth;
            match per_user.last_mut() {
                Some(u) if u.row == cell.row => {
                    u.mean_abs_rel_error += rel;
                    u.n_evaluated += 1;
                }
                _ => per_user.push(UserError {
                    row: cell.row,
                    mean_abs_rel_error: rel,
                    n_evaluated: 1,
                }),
            }
        }
        for u in &mut per_user {
            u.mean_abs_rel_error /= u.n_evaluated as f64;
        }
        let n = n_estimated as f64;
        Self {
            n_unpredictable: per_cell.len() - n_estimated,
            per_cell,
            rmse: (n_estimated > 0).then(|| (sq / n).sqrt()),
            mae: (n_estimated > 0).then(|| abs / n),
            n_estimated,
            per_user,
        }
    }
}

/// Hides the mask cells, rebalances the remaining ratings and scores the
/// predictions of the hidden cells.
pub fn evaluate(
    m: &RatingMatrix,
    mask: &MaskSpec,
    cfg: &BalanceConfig,
    policy: CrossComponentPolicy,
) -> Result<EvaluationReport, EvalError> {
    evaluate_cells(m, &mask.held_out, cfg, policy)
}

fn evaluate_cells(
    m: &RatingMatrix,
    held_out: &BTreeSet<(usize, usize)>,
    cfg: &BalanceConfig,
    policy: CrossComponentPolicy,
) -> Result<EvaluationReport, EvalError> {
    let truths = held_out
        .iter()
        .map(|&(i, j)| match m.get(i, j) {
            Some(v) if v > 0.0 => Ok((i, j, v)),
            _ => Err(EvalError::InvalidMask { row: i, col: j }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let train = Arc::new(m.without_cells(held_out));
    let scaling = rz_scale(&train, cfg)?;
    let model = CompletionModel::build(train, &scaling, policy)?;
    let per_cell = truths
        .into_iter()
        .map(|(row, col, truth)| {
            Ok(CellOutcome {
                row,
                col,
                truth,
                prediction: model.predict(row, col)?,
            })
        })
        .collect::<Result<Vec<_>, CompletionError>>()?;
    Ok(EvaluationReport::from_cells(per_cell))
}

/// Which model answered a merged prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    Initial,
    Refined,
}

impl PredictionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionSource::Initial => "initial",
            PredictionSource::Refined => "refined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub flagged_users: BTreeSet<usize>,
    pub threshold: f64,
    /// Holdout errors of every user eligible for flagging.
    pub per_user: Vec<UserError>,
    /// Missing-cell predictions of flagged users, from the initial model.
    pub initial_predictions: Vec<(usize, usize, Prediction)>,
    pub initial_model: CompletionModel,
    /// Built without the flagged users' ratings.
    pub refined_model: CompletionModel,
}

impl OutlierReport {
    pub fn predict(&self, i: usize, j: usize) -> Result<(Prediction, PredictionSource), CompletionError> {
        if self.flagged_users.contains(&i) {
            Ok((self.initial_model.predict(i, j)?, PredictionSource::Initial))
        } else if self.initial_model.matrix().is_observed(i, j) {
            Ok((self.initial_model.predict(i, j)?, PredictionSource::Refined))
        } else {
            Ok((self.refined_model.predict(i, j)?, PredictionSource::Refined))
        }
    }

    /// Every cell missing from the original matrix, ascending `(i, j)`.
    pub fn merged_missing_predictions(&self) -> Vec<(usize, usize, Prediction, PredictionSource)> {
        let mut retained = self.initial_predictions.iter().peekable();
        self.initial_model
            .missing_predictions()
            .map(|(i, j, _)| {
                if self.flagged_users.contains(&i) {
                    let &(ri, rj, p) = retained.next().expect("retained predictions cover flagged rows");
                    debug_assert_eq!((ri, rj), (i, j));
                    (i, j, p, PredictionSource::Initial)
                } else {
                    let p = self.refined_model.predict(i, j).expect("index in range");
                    (i, j, p, PredictionSource::Refined)
                }
            })
            .collect()
    }
}

/// One identify-remove-rebalance pass over users whose holdout error exceeds
/// `threshold`.
pub fn filter_eccentric_users(
    m: &Arc<RatingMatrix>,
    cfg: &BalanceConfig,
    policy: CrossComponentPolicy,
    threshold: f64,
    fraction: f64,
    seed: u64,
) -> Result<OutlierReport, EvalError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(EvalError::InvalidThreshold(threshold));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::InvalidFraction(fraction));
    }
    let initial_scaling = rz_scale(m, cfg)?;
    let initial_model = CompletionModel::build(Arc::clone(m), &initial_scaling, policy)?;

    let held_out = make_user_mask(m, fraction, seed, MIN_RATINGS_TO_FLAG);
    let per_user = if held_out.is_empty() {
        Vec::new()
    } else {
        evaluate_cells(m, &held_out, cfg, policy)?.per_user
    };
    let flagged_users: BTreeSet<usize> = per_user
        .iter()
        .filter(|u| u.mean_abs_rel_error > threshold)
        .map(|u| u.row)
        .collect();

    let (row_counts, _) = positive_counts(m);
    let n_users = row_counts.iter().filter(|&&k| k > 0).count();
    if !flagged_users.is_empty() && (0..m.n_rows()).all(|i| row_counts[i] == 0 || flagged_users.contains(&i)) {
        return Err(EvalError::AllUsersFlagged { threshold, n_users });
    }

    let refined_model = if flagged_users.is_empty() {
        initial_model.clone()
    } else {
        let refined = Arc::new(m.without_rows(&flagged_users));
        let scaling = rz_scale(&refined, cfg)?;
        CompletionModel::build(refined, &scaling, policy)?
    };
    let initial_predictions = initial_model
        .missing_predictions()
        .filter(|(i, _, _)| flagged_users.contains(i))
        .collect();

    Ok(OutlierReport {
        flagged_users,
        threshold,
        per_user,
        initial_predictions,
        initial_model,
        refined_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[Option<f64>]]) -> RatingMatrix {
        RatingMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn rank_one(u: &[f64], v: &[f64]) -> RatingMatrix {
        let cells = u
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| v.iter().enumerate().map(move |(j, &b)| (i, j, a * b)));
        RatingMatrix::from_triplets(u.len(), v.len(), cells).unwrap()
    }

    #[test]
    fn mask_size_is_rounded_fraction() {
        let m = dense(&[&[Some(1.0), Some(2.0)], &[Some(3.0), Some(4.0)]]);
        for seed in 0..20 {
            assert_eq!(make_mask(&m, 0.5, seed).unwrap().len(), 2);
        }
    }

    #[test]
    fn mask_is_seed_deterministic() {
        let m = rank_one(&[1.0, 2.0, 3.0, 4.0], &[1.0, 5.0, 2.0, 7.0, 3.0]);
        assert_eq!(make_mask(&m, 0.3, 9).unwrap(), make_mask(&m, 0.3, 9).unwrap());
        assert_ne!(
            make_mask(&m, 0.3, 9).unwrap().held_out(),
            make_mask(&m, 0.3, 10).unwrap().held_out()
        );
    }

    #[test]
    fn infeasible_mask_names_bottleneck() {
        let m = dense(&[&[Some(1.0), None], &[Some(2.0), None]]);
        match make_mask(&m, 0.9, 1) {
            Err(EvalError::InfeasibleMask { target: 2, achieved: 0, rows, .. }) => assert_eq!(rows, [0, 1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mask_argument_errors() {
        let m = dense(&[&[Some(1.0), Some(2.0)]]);
        assert_eq!(make_mask(&m, 0.0, 0), Err(EvalError::InvalidFraction(0.0)));
        assert_eq!(make_mask(&m, 1.0, 0), Err(EvalError::InvalidFraction(1.0)));
        assert!(matches!(make_mask(&m, 0.2, 0), Err(EvalError::EmptyMask { .. })));
        let one = dense(&[&[Some(1.0), Some(0.0)]]);
        assert_eq!(make_mask(&one, 0.5, 0), Err(EvalError::TooFewPositive(1)));
    }

    #[test]
    fn mask_never_empties_a_line() {
        let m = rank_one(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0, 7.0]);
        for seed in 0..30 {
            let mask = make_mask(&m, 0.5, seed).unwrap();
            let train = m.without_cells(mask.held_out());
            for i in 0..3 {
                assert!(train.row(i).count() > 0);
            }
            for j in 0..4 {
                assert!((0..3).any(|i| train.is_observed(i, j)));
            }
        }
    }

    #[test]
    fn rank_one_evaluates_exactly() {
        let m = rank_one(&[1.0, 2.0], &[1.0, 3.0]);
        let mask = make_mask(&m, 0.25, 3).unwrap();
        let r = evaluate(&m, &mask, &BalanceConfig::default(), CrossComponentPolicy::Refuse).unwrap();
        assert_eq!(r.n_estimated, 1);
        assert!(r.rmse.unwrap() < 1e-9);
    }

    #[test]
    fn single_cell_error_definitions() {
        let cell = CellOutcome {
            row: 0,
            col: 0,
            truth: 6.0,
            prediction: Prediction {
                value: Some(3.0),
                status: PredictionStatus::Estimated,
            },
        };
        let r = EvaluationReport::from_cells(vec![cell]);
        assert_eq!(r.rmse, Some(3.0));
        assert_eq!(r.mae, Some(3.0));
        assert_eq!(r.per_user[0].mean_abs_rel_error, 0.5);

        let exact = CellOutcome {
            prediction: Prediction {
                value: Some(6.0),
                status: PredictionStatus::Estimated,
            },
            ..cell
        };
        let r = EvaluationReport::from_cells(vec![exact, exact]);
        assert_eq!((r.rmse, r.mae), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn unpredictable_cells_are_excluded() {
        let refused = CellOutcome {
            row: 0,
            col: 1,
            truth: 2.0,
            prediction: Prediction {
                value: None,
                status: PredictionStatus::CrossComponent,
            },
        };
        let r = EvaluationReport::from_cells(vec![refused]);
        assert_eq!(r.n_unpredictable, 1);
        assert_eq!(r.rmse, None);
        assert!(r.per_user.is_empty());
    }

    #[test]
    fn mask_must_hit_positive_cells() {
        let m = dense(&[&[Some(1.0), Some(0.0)], &[Some(1.0), None]]);
        let bad = MaskSpec {
            held_out: BTreeSet::from([(0, 1)]),
            seed: 0,
            fraction: 0.5,
        };
        assert_eq!(
            evaluate(&m, &bad, &BalanceConfig::default(), CrossComponentPolicy::Refuse),
            Err(EvalError::InvalidMask { row: 0, col: 1 })
        );
    }

    #[test]
    fn rank_one_flags_nobody() {
        let m = Arc::new(rank_one(&[1.0, 2.0, 0.5, 4.0], &[1.0, 3.0, 2.0, 0.25, 5.0]));
        let r = filter_eccentric_users(&m, &BalanceConfig::default(), CrossComponentPolicy::Refuse, 0.01, 0.3, 1).unwrap();
        assert!(r.flagged_users.is_empty());
        assert_eq!(r.per_user.len(), 4);
        assert_eq!(r.refined_model.row_factors(), r.initial_model.row_factors());

        let r = filter_eccentric_users(&m, &BalanceConfig::default(), CrossComponentPolicy::Refuse, f64::INFINITY, 0.3, 1)
            .unwrap();
        assert!(r.flagged_users.is_empty());
    }

    #[test]
    fn threshold_must_be_positive() {
        let m = Arc::new(rank_one(&[1.0, 2.0], &[1.0, 3.0, 4.0]));
        assert!(matches!(
            filter_eccentric_users(&m, &BalanceConfig::default(), CrossComponentPolicy::Refuse, 0.0, 0.3, 1),
            Err(EvalError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn flagging_everyone_is_an_error() {
        // row 1 deviates from row 0 as much as row 0 does from row 1
        let m = Arc::new(dense(&[
            &[Some(1.0), Some(10.0), Some(1.0), Some(10.0)],
            &[Some(10.0), Some(1.0), Some(10.0), Some(1.0)],
        ]));
        let err = filter_eccentric_users(&m, &BalanceConfig::default(), CrossComponentPolicy::Refuse, 0.1, 0.3, 4)
            .unwrap_err();
        assert_eq!(err, EvalError::AllUsersFlagged { threshold: 0.1, n_users: 2 });
    }
}
