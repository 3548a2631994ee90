use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::path::Path;
use std::sync::Arc;

use super::{CliError, RunConfig};
use crate::completion::{CompletionModel, Prediction, PredictionStatus};
use crate::eval::{evaluate, filter_eccentric_users, make_mask};
use crate::matrix::{format_float, ingest_csv, RatingMatrix};
use crate::scaling::{rz_scale, sinkhorn_scale, ScalingKind, ScalingResult};

/// Ordered `key=value` pairs, rendered space-separated on one line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, (k, v)) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn load(input: &Path, cfg: &RunConfig) -> Result<RatingMatrix, CliError> {
    cfg.balance().validate()?;
    let file = File::open(input).map_err(|e| CliError::io(input, e))?;
    Ok(ingest_csv(file, &cfg.csv())?)
}

struct CsvOut {
    path: std::path::PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = Self {
            writer: csv::Writer::from_writer(file),
            path,
        };
        out.record(header)?;
        Ok(out)
    }

    fn record<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<(), CliError> {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::Internal(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("summary.txt");
    fs::write(&path, format!("{summary}\n")).map_err(|e| CliError::io(&path, e))
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn write_factors(dir: &Path, name: &str, id_col: &str, ids: &[String], factors: &[Option<f64>]) -> Result<(), CliError> {
    let mut out = CsvOut::create(dir, name, &[id_col, "factor"])?;
    for (id, f) in ids.iter().zip(factors) {
        out.record(&[id.clone(), opt_float(*f)])?;
    }
    out.finish()
}

fn scaling_fields(summary: &mut Summary, m: &RatingMatrix, s: &ScalingResult) {
    summary
        .push("n_rows", m.n_rows())
        .push("n_cols", m.n_cols())
        .push("nnz", m.nnz())
        .push("iterations", s.iterations())
        .push("residual", format_float(s.residual()))
        .push("n_components", s.components().n_components());
}

/// Writes `row_factors.csv` and `col_factors.csv` (`id,factor`; empty factor
/// for rows or columns without a positive entry) and `summary.txt`.
pub fn cmd_scale(input: &Path, cfg: &RunConfig, kind: ScalingKind, out: &Path) -> Result<Summary, CliError> {
    let m = load(input, cfg)?;
    let scaling = match kind {
        ScalingKind::Rz => rz_scale(&m, &cfg.balance())?,
        ScalingKind::Sinkhorn => sinkhorn_scale(&m, &cfg.balance())?,
    };
    write_factors(out, "row_factors.csv", "row_id", m.row_ids(), scaling.row_factors())?;
    write_factors(out, "col_factors.csv", "col_id", m.col_ids(), scaling.col_factors())?;
    let mut summary = Summary::default();
    summary.push("command", "scale").push("kind", kind);
    scaling_fields(&mut summary, &m, &scaling);
    summary.push("status", "converged");
    write_summary(out, &summary)?;
    Ok(summary)
}

fn status_counts<'a>(preds: impl Iterator<Item = &'a Prediction>) -> BTreeMap<PredictionStatus, usize> {
    let mut counts: BTreeMap<PredictionStatus, usize> = PredictionStatus::ALL.iter().map(|&s| (s, 0)).collect();
    for p in preds {
        *counts.entry(p.status).or_default() += 1;
    }
    counts
}

fn push_counts(summary: &mut Summary, counts: &BTreeMap<PredictionStatus, usize>) {
    for (status, n) in counts {
        if *status != PredictionStatus::Observed {
            summary.push(&status.as_str().replace('-', "_"), n);
        }
    }
}

/// Writes `predictions.csv` (`row_id,col_id,predicted,status`, one line per
/// missing cell) and `summary.txt`.
pub fn cmd_complete(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let m = Arc::new(load(input, cfg)?);
    let scaling = rz_scale(&m, &cfg.balance())?;
    let model = CompletionModel::build(Arc::clone(&m), &scaling, cfg.cross_component)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    let mut file = CsvOut::create(out, "predictions.csv", &["row_id", "col_id", "predicted", "status"])?;
    let mut counts = status_counts(std::iter::empty());
    let mut n_missing = 0usize;
    for (i, j, p) in model.missing_predictions() {
        file.record(&[
            m.row_ids()[i].as_str(),
            m.col_ids()[j].as_str(),
            &opt_float(p.value),
            p.status.as_str(),
        ])?;
        *counts.entry(p.status).or_default() += 1;
        n_missing += 1;
    }
    file.finish()?;

    let mut summary = Summary::default();
    summary.push("command", "complete");
    scaling_fields(&mut summary, &m, &scaling);
    summary.push("n_missing", n_missing);
    push_counts(&mut summary, &counts);
    write_summary(out, &summary)?;
    Ok(summary)
}

/// Writes `report.csv` (per held-out cell) and `summary.txt` with rmse/mae.
pub fn cmd_evaluate(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let m = load(input, cfg)?;
    let mask = make_mask(&m, cfg.mask_fraction, cfg.seed)?;
    let report = evaluate(&m, &mask, &cfg.balance(), cfg.cross_component)?;

    let mut file = CsvOut::create(
        out,
        "report.csv",
        &["row_id", "col_id", "truth", "predicted", "status", "abs_error", "rel_error"],
    )?;
    for cell in &report.per_cell {
        let abs = cell.relative_error().map(|r| r * cell.truth);
        file.record(&[
            m.row_ids()[cell.row].clone(),
            m.col_ids()[cell.col].clone(),
            format_float(cell.truth),
            opt_float(cell.prediction.value),
            cell.prediction.status.as_str().to_string(),
            opt_float(abs),
            opt_float(cell.relative_error()),
        ])?;
    }
    file.finish()?;

    let mut summary = Summary::default();
    summary
        .push("command", "evaluate")
        .push("seed", cfg.seed)
        .push("mask_fraction", format_float(cfg.mask_fraction))
        .push("n_held_out", mask.len())
        .push("n_estimated", report.n_estimated)
        .push("n_unpredictable", report.n_unpredictable)
        .push("rmse", opt_float(report.rmse))
        .push("mae", opt_float(report.mae));
    write_summary(out, &summary)?;
    Ok(summary)
}

/// Writes `flagged.csv`, `user_errors.csv`, the merged `predictions.csv`
/// (`row_id,col_id,predicted,status,source`) and `summary.txt`.
pub fn cmd_filter(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let m = Arc::new(load(input, cfg)?);
    let report = filter_eccentric_users(
        &m,
        &cfg.balance(),
        cfg.cross_component,
        cfg.outlier_threshold,
        cfg.mask_fraction,
        cfg.seed,
    )?;

    let mut flagged = CsvOut::create(out, "flagged.csv", &["row_id"])?;
    for &i in &report.flagged_users {
        flagged.record(&[m.row_ids()[i].as_str()])?;
    }
    flagged.finish()?;

    let mut errors = CsvOut::create(
        out,
        "user_errors.csv",
        &["row_id", "mean_abs_rel_error", "n_evaluated", "flagged"],
    )?;
    for u in &report.per_user {
        errors.record(&[
            m.row_ids()[u.row].clone(),
            format_float(u.mean_abs_rel_error),
            u.n_evaluated.to_string(),
            report.flagged_users.contains(&u.row).to_string(),
        ])?;
    }
    errors.finish()?;

    let merged = report.merged_missing_predictions();
    let mut preds = CsvOut::create(out, "predictions.csv", &["row_id", "col_id", "predicted", "status", "source"])?;
    for (i, j, p, source) in &merged {
        preds.record(&[
            m.row_ids()[*i].as_str(),
            m.col_ids()[*j].as_str(),
            &opt_float(p.value),
            p.status.as_str(),
            source.as_str(),
        ])?;
    }
    preds.finish()?;

    let mut summary = Summary::default();
    summary
        .push("command", "filter")
        .push("seed", cfg.seed)
        .push("threshold", format_float(cfg.outlier_threshold))
        .push("n_users_scored", report.per_user.len())
        .push("n_flagged", report.flagged_users.len())
        .push("n_missing", merged.len());
    push_counts(&mut summary, &status_counts(merged.iter().map(|(_, _, p, _)| p)));
    write_summary(out, &summary)?;
    Ok(summary)
}
