use super::{finish, BalanceConfig, DivergenceReason, PositivePattern, ScalingError, ScalingKind, ScalingResult};
use crate::matrix::{support_components, Axis, RatingMatrix};

const FACTOR_MIN: f64 = 1e-150;
const FACTOR_MAX: f64 = 1e150;
const STALL_WINDOW: usize = 50;
const STALL_RATIO: f64 = 0.999;

/// Unit-sum scaling by alternate row and column normalization.
///
/// Needs a positive entry in every row and column. Patterns without a finite
/// unit-sum scaling (triangular support, for instance) end in
/// [`ScalingError::Diverged`] naming the worst row and column.
pub fn sinkhorn_scale(m: &RatingMatrix, cfg: &BalanceConfig) -> Result<ScalingResult, ScalingError> {
    cfg.validate()?;
    let p = PositivePattern::new(m, |v| v);
    if p.nnz() == 0 {
        return Err(ScalingError::NoPositiveEntries);
    }
    if let Some(i) = (0..p.n_rows()).find(|&i| p.row(i).0.is_empty()) {
        return Err(ScalingError::EmptyLine { axis: Axis::Row, index: i });
    }
    if let Some(j) = (0..p.n_cols()).find(|&j| p.col(j).0.is_empty()) {
        return Err(ScalingError::EmptyLine { axis: Axis::Col, index: j });
    }

    let mut d = vec![1.0; p.n_rows()];
    let mut e = vec![1.0; p.n_cols()];
    let mut history = Vec::new();
    let mut sweeps = 0;
    let (mut res, mut worst_row, mut worst_col) = line_residuals(&p, &d, &e);

    while res > cfg.tol {
        if sweeps >= cfg.max_iters {
            return Err(diverged(DivergenceReason::IterationLimit, sweeps, res, worst_row, worst_col));
        }
        for (i, di) in d.iter_mut().enumerate() {
            let (cols, vals) = p.row(i);
            let sum: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * e[j]).sum();
            *di = 1.0 / sum;
        }
        for (j, ej) in e.iter_mut().enumerate() {
            let (rows, vals) = p.col(j);
            let sum: f64 = rows.iter().zip(vals).map(|(&i, &v)| d[i] * v).sum();
            *ej = 1.0 / sum;
        }
        sweeps += 1;
        history.push(res);
        (res, worst_row, worst_col) = line_residuals(&p, &d, &e);

        let out_of_range = |f: &f64| !(FACTOR_MIN..=FACTOR_MAX).contains(f);
        if let Some(i) = d.iter().position(out_of_range) {
            return Err(diverged(DivergenceReason::FactorOutOfRange, sweeps, res, i, worst_col));
        }
        if let Some(j) = e.iter().position(out_of_range) {
            return Err(diverged(DivergenceReason::FactorOutOfRange, sweeps, res, worst_row, j));
        }
        if res > cfg.tol && sweeps >= STALL_WINDOW && res > STALL_RATIO * history[sweeps - STALL_WINDOW] {
            return Err(diverged(DivergenceReason::Stalled, sweeps, res, worst_row, worst_col));
        }
    }

    let row_log = d.iter().map(|x| Some(x.ln())).collect();
    let col_log = e.iter().map(|x| Some(x.ln())).collect();
    Ok(finish(
        ScalingKind::Sinkhorn,
        support_components(m),
        row_log,
        col_log,
        res,
        sweeps,
        cfg.gauge,
    ))
}

fn diverged(reason: DivergenceReason, iterations: usize, residual: f64, worst_row: usize, worst_col: usize) -> ScalingError {
    ScalingError::Diverged {
        reason,
        iterations,
        residual,
        worst_row,
        worst_col,
    }
}

/// Max deviation from unit sum, with the first row and column attaining the
/// per-axis maximum.
fn line_residuals(p: &PositivePattern, d: &[f64], e: &[f64]) -> (f64, usize, usize) {
    let argmax = |devs: &mut dyn Iterator<Item = f64>| {
        devs.enumerate()
            .fold((0usize, 0.0f64), |best, (k, dev)| if dev > best.1 { (k, dev) } else { best })
    };
    let (wr, rr) = argmax(&mut (0..p.n_rows()).map(|i| {
        let (cols, vals) = p.row(i);
        let s: f64 = cols.iter().zip(vals).map(|(&j, &v)| d[i] * v * e[j]).sum();
        (s - 1.0).abs()
    }));
    let (wc, rc) = argmax(&mut (0..p.n_cols()).map(|j| {
        let (rows, vals) = p.col(j);
        let s: f64 = rows.iter().zip(vals).map(|(&i, &v)| d[i] * v * e[j]).sum();
        (s - 1.0).abs()
    }));
    (rr.max(rc), wr, wc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::residual;

    fn dense(rows: &[&[f64]]) -> RatingMatrix {
        RatingMatrix::from_dense(
            &rows
                .iter()
                .map(|r| r.iter().map(|&v| Some(v)).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn all_ones_goes_to_halves() {
        let ones = dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let r = sinkhorn_scale(&ones, &BalanceConfig::default()).unwrap();
        let s = r.scaled_matrix(&ones).unwrap();
        for (_, _, v) in s.iter() {
            assert!((v - 0.5).abs() <= 1e-10);
        }
        assert!(residual(&ones, &r, ScalingKind::Sinkhorn).unwrap() <= 1e-10);
    }

    #[test]
    fn diagonal_goes_to_identity() {
        let a = dense(&[&[2.0, 0.0], &[0.0, 5.0]]);
        let r = sinkhorn_scale(&a, &BalanceConfig::default()).unwrap();
        let s = r.scaled_matrix(&a).unwrap();
        assert!((s.get(0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((s.get(1, 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.get(0, 1), Some(0.0));
        let d0e0 = r.row_factors()[0].unwrap() * r.col_factors()[0].unwrap();
        assert!((d0e0 - 0.5).abs() < 1e-12);
        assert!((r.row_factors()[0].unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn triangular_support_diverges() {
        let a = dense(&[&[1.0, 1.0], &[0.0, 1.0]]);
        match sinkhorn_scale(&a, &BalanceConfig::default()) {
            Err(ScalingError::Diverged { iterations, residual, .. }) => {
                assert!(iterations <= 1000);
                assert!(residual > 1e-10);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_line_is_degenerate() {
        let a = RatingMatrix::from_dense(&[vec![Some(1.0), None], vec![Some(0.0), None]]).unwrap();
        let err = sinkhorn_scale(&a, &BalanceConfig::default()).unwrap_err();
        assert_eq!(err, ScalingError::EmptyLine { axis: Axis::Row, index: 1 });
        assert!(err.is_degenerate());
    }

    #[test]
    fn rectangular_full_support_converges() {
        let a = dense(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        // unit sums on a 2x3 require equal totals: rows sum to 2, columns to 3
        assert!(sinkhorn_scale(&a, &BalanceConfig::default()).is_err());
        let sq = dense(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 10.0]]);
        let r = sinkhorn_scale(&sq, &BalanceConfig::default()).unwrap();
        assert!(residual(&sq, &r, ScalingKind::Sinkhorn).unwrap() <= 1e-10);
    }
}
