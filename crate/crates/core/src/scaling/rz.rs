use super::{finish, BalanceConfig, Gauge, PositivePattern, ScalingError, ScalingKind, ScalingResult};
use crate::matrix::{support_components, RatingMatrix};

/// Alternating log-domain balancer for the unit-product scaling.
///
/// One sweep sets every row offset `r_i = −mean_j(x_ij + c_j)` in ascending
/// row order, then every column offset `c_j = −mean_i(x_ij + r_i)` in
/// ascending column order, where `x = ln M` over the positive cells. A sweep
/// touches each positive cell twice, so it costs `O(p)`.
pub struct RzBalancer<'a> {
    matrix: &'a RatingMatrix,
    pattern: PositivePattern,
    row_off: Vec<f64>,
    col_off: Vec<f64>,
    sweeps: usize,
}

impl<'a> RzBalancer<'a> {
    pub fn new(matrix: &'a RatingMatrix) -> Result<Self, ScalingError> {
        let pattern = PositivePattern::new(matrix, f64::ln);
        if pattern.nnz() == 0 {
            return Err(ScalingError::NoPositiveEntries);
        }
        Ok(Self {
            matrix,
            row_off: vec![0.0; pattern.n_rows()],
            col_off: vec![0.0; pattern.n_cols()],
            pattern,
            sweeps: 0,
        })
    }

    pub fn sweep(&mut self) {
        for i in 0..self.pattern.n_rows() {
            let (cols, xs) = self.pattern.row(i);
            if cols.is_empty() {
                continue;
            }
            let sum: f64 = cols.iter().zip(xs).map(|(&j, &x)| x + self.col_off[j]).sum();
            self.row_off[i] = -sum / cols.len() as f64;
        }
        for j in 0..self.pattern.n_cols() {
            let (rows, xs) = self.pattern.col(j);
            if rows.is_empty() {
                continue;
            }
            let sum: f64 = rows.iter().zip(xs).map(|(&i, &x)| x + self.row_off[i]).sum();
            self.col_off[j] = -sum / rows.len() as f64;
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Max absolute mean of `x_ij + r_i + c_j` over rows and columns.
    pub fn residual(&self) -> f64 {
        let p = &self.pattern;
        let rows = (0..p.n_rows()).filter_map(|i| {
            let (cols, xs) = p.row(i);
            (!cols.is_empty()).then(|| {
                let s: f64 = cols.iter().zip(xs).map(|(&j, &x)| x + self.row_off[i] + self.col_off[j]).sum();
                (s / cols.len() as f64).abs()
            })
        });
        let cols = (0..p.n_cols()).filter_map(|j| {
            let (rows, xs) = p.col(j);
            (!rows.is_empty()).then(|| {
                let s: f64 = rows.iter().zip(xs).map(|(&i, &x)| x + self.row_off[i] + self.col_off[j]).sum();
                (s / rows.len() as f64).abs()
            })
        });
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn finish(self, residual: f64, gauge: Gauge) -> ScalingResult {
        let p = &self.pattern;
        let row_log = (0..p.n_rows())
            .map(|i| (!p.row(i).0.is_empty()).then_some(self.row_off[i]))
            .collect();
        let col_log = (0..p.n_cols())
            .map(|j| (!p.col(j).0.is_empty()).then_some(self.col_off[j]))
            .collect();
        finish(
            ScalingKind::Rz,
            support_components(self.matrix),
            row_log,
            col_log,
            residual,
            self.sweeps,
            gauge,
        )
    }
}

/// Unit-product scaling of `m`: afterwards the positive entries of each row
/// and column of `D·M·E` have geometric mean 1 to within `cfg.tol` in log
/// scale. Deterministic for identical input and config.
pub fn rz_scale(m: &RatingMatrix, cfg: &BalanceConfig) -> Result<ScalingResult, ScalingError> {
    cfg.validate()?;
    let mut balancer = RzBalancer::new(m)?;
    let mut res = balancer.residual();
    while res > cfg.tol {
        if balancer.sweeps() >= cfg.max_iters {
            return Err(ScalingError::NotConverged {
                iterations: balancer.sweeps(),
                residual: res,
            });
        }
        balancer.sweep();
        res = balancer.residual();
    }
    Ok(balancer.finish(res, cfg.gauge))
}
