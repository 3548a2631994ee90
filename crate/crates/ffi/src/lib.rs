//! C ABI for the `unitcomplete` engine.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every function returns a
//! [`UcStatus`]; on failure a message is available from
//! [`uc_last_error_message`] on the same thread. Undefined factors and
//! predictions are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use unitcomplete::completion::CompletionError;
use unitcomplete::{
    evaluate, ingest_str, make_mask, rz_scale, sinkhorn_scale, BalanceConfig, CompletionModel,
    CrossComponentPolicy, CsvOptions, Delimiter, EvalError, Gauge, MatrixError, PredictionStatus,
    RatingMatrix, ScalingError,
};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcStatus {
    Ok = 0,
    NullPointer = 1,
    ParseError = 2,
    InvalidArgument = 3,
    NotConverged = 4,
    Diverged = 5,
    Degenerate = 6,
    InfeasibleMask = 7,
    OutOfRange = 8,
    DimensionMismatch = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcGauge {
    Symmetric = 0,
    FirstRowAnchored = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcPolicy {
    Refuse = 0,
    EstimateWithWarning = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcPredictionStatus {
    Observed = 0,
    Estimated = 1,
    CrossComponent = 2,
    UndefinedRow = 3,
    UndefinedCol = 4,
}

/// Stopping rule and gauge for the balancing iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcBalanceConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub gauge: UcGauge,
}

/// A sparse rating matrix.
pub struct UcMatrix(RatingMatrix);

/// A completion model built from a unit-product scaling.
pub struct UcModel {
    model: CompletionModel,
    iterations: usize,
    residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(UcStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult) -> UcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal panic: {msg}"));
            UcStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(UcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len < need {
        return Err(Failure(
            UcStatus::DimensionMismatch,
            format!("{what} holds {len} values, need {need}"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, need))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn fill(out: &mut [f64], factors: &[Option<f64>]) {
    for (o, f) in out.iter_mut().zip(factors) {
        *o = f.unwrap_or(f64::NAN);
    }
}

impl From<MatrixError> for Failure {
    fn from(e: MatrixError) -> Self {
        let status = match e {
            MatrixError::OutOfRange { .. } | MatrixError::LengthMismatch { .. } => UcStatus::OutOfRange,
            MatrixError::InvalidValue { .. }
            | MatrixError::DuplicateIndex { .. }
            | MatrixError::NonPositiveFactor { .. } => UcStatus::InvalidArgument,
            _ => UcStatus::ParseError,
        };
        Failure(status, e.to_string())
    }
}

impl From<ScalingError> for Failure {
    fn from(e: ScalingError) -> Self {
        let status = match e {
            _ if e.is_degenerate() => UcStatus::Degenerate,
            ScalingError::InvalidConfig(_) => UcStatus::InvalidArgument,
            ScalingError::NotConverged { .. } => UcStatus::NotConverged,
            ScalingError::Diverged { .. } => UcStatus::Diverged,
            _ => UcStatus::DimensionMismatch,
        };
        Failure(status, e.to_string())
    }
}

impl From<CompletionError> for Failure {
    fn from(e: CompletionError) -> Self {
        let status = match e {
            CompletionError::IndexOutOfRange { .. } => UcStatus::OutOfRange,
            _ => UcStatus::DimensionMismatch,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Scaling(s) => s.into(),
            EvalError::Completion(c) => c.into(),
            EvalError::TooFewPositive(_) | EvalError::EmptyMask { .. } | EvalError::InfeasibleMask { .. } => {
                Failure(UcStatus::InfeasibleMask, e.to_string())
            }
            _ => Failure(UcStatus::InvalidArgument, e.to_string()),
        }
    }
}

impl From<UcBalanceConfig> for BalanceConfig {
    fn from(c: UcBalanceConfig) -> Self {
        BalanceConfig {
            tol: c.tol,
            max_iters: c.max_iters,
            gauge: match c.gauge {
                UcGauge::Symmetric => Gauge::Symmetric,
                UcGauge::FirstRowAnchored => Gauge::FirstRowAnchored,
            },
        }
    }
}

impl From<UcPolicy> for CrossComponentPolicy {
    fn from(p: UcPolicy) -> Self {
        match p {
            UcPolicy::Refuse => CrossComponentPolicy::Refuse,
            UcPolicy::EstimateWithWarning => CrossComponentPolicy::EstimateWithWarning,
        }
    }
}

impl From<PredictionStatus> for UcPredictionStatus {
    fn from(s: PredictionStatus) -> Self {
        match s {
            PredictionStatus::Observed => UcPredictionStatus::Observed,
            PredictionStatus::Estimated => UcPredictionStatus::Estimated,
            PredictionStatus::CrossComponent => UcPredictionStatus::CrossComponent,
            PredictionStatus::UndefinedRow => UcPredictionStatus::UndefinedRow,
            PredictionStatus::UndefinedCol => UcPredictionStatus::UndefinedCol,
        }
    }
}

unsafe fn config(cfg: *const UcBalanceConfig) -> BalanceConfig {
    cfg.as_ref().map_or_else(BalanceConfig::default, |&c| c.into())
}

/// Default configuration: tolerance 1e-10, 1000 sweeps, symmetric gauge.
#[no_mangle]
pub extern "C" fn uc_balance_config_default() -> UcBalanceConfig {
    let d = BalanceConfig::default();
    UcBalanceConfig {
        tol: d.tol,
        max_iters: d.max_iters,
        gauge: UcGauge::Symmetric,
    }
}

/// Message for the last failed call on this thread, or null after a
/// successful one. Valid until the next call into this library.
#[no_mangle]
pub extern "C" fn uc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses `row_id,col_id,value` text (comma or tab separated, detected
/// automatically). A nonzero `has_header` skips the first record.
///
/// # Safety
/// `text` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uc_matrix_from_csv(text: *const c_char, has_header: c_int, out: *mut *mut UcMatrix) -> UcStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Failure(UcStatus::ParseError, format!("input is not UTF-8: {e}")))?;
        let opts = CsvOptions {
            delimiter: Delimiter::Auto,
            has_header: has_header != 0,
        };
        let m = ingest_str(text, &opts)?;
        *out = Box::into_raw(Box::new(UcMatrix(m)));
        Ok(())
    })
}

/// Builds an `n_rows × n_cols` matrix from `len` zero-based triplets.
///
/// # Safety
/// `rows`, `cols` and `values` must each point to `len` elements; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uc_matrix_from_triplets(
    n_rows: usize,
    n_cols: usize,
    len: usize,
    rows: *const usize,
    cols: *const usize,
    values: *const f64,
    out: *mut *mut UcMatrix,
) -> UcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rows = in_slice(rows, len, "rows")?;
        let cols = in_slice(cols, len, "cols")?;
        let values = in_slice(values, len, "values")?;
        let triplets = rows.iter().zip(cols).zip(values).map(|((&i, &j), &v)| (i, j, v));
        let m = RatingMatrix::from_triplets(n_rows, n_cols, triplets)?;
        *out = Box::into_raw(Box::new(UcMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uc_matrix_free(m: *mut UcMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn uc_matrix_dims(m: *const UcMatrix, n_rows: *mut usize, n_cols: *mut usize, nnz: *mut usize) -> UcStatus {
    guard(|| {
        let m = &as_ref(m, "matrix")?.0;
        for (p, v) in [(n_rows, m.n_rows()), (n_cols, m.n_cols()), (nnz, m.nnz())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Balances `m` to unit products and builds a completion model. A null
/// `cfg` uses the defaults.
///
/// # Safety
/// `m` must be a live handle, `cfg` null or valid, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uc_model_build(
    m: *const UcMatrix,
    cfg: *const UcBalanceConfig,
    policy: UcPolicy,
    out: *mut *mut UcModel,
) -> UcStatus {
    guard(|| {
        let m = &as_ref(m, "matrix")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let scaling = rz_scale(m, &config(cfg))?;
        let model = CompletionModel::build(Arc::new(m.clone()), &scaling, policy.into())?;
        *out = Box::into_raw(Box::new(UcModel {
            model,
            iterations: scaling.iterations(),
            residual: scaling.residual(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uc_model_free(model: *mut UcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sweeps used and final residual of the scaling behind `model`.
///
/// # Safety
/// `model` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn uc_model_stats(
    model: *const UcModel,
    iterations: *mut usize,
    residual: *mut f64,
    n_components: *mut usize,
) -> UcStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        if !iterations.is_null() {
            *iterations = model.iterations;
        }
        if !residual.is_null() {
            *residual = model.residual;
        }
        if !n_components.is_null() {
            *n_components = model.model.components().n_components();
        }
        Ok(())
    })
}

/// Copies the row factors into `out` (`len ≥ n_rows`).
///
/// # Safety
/// `model` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn uc_model_row_factors(model: *const UcModel, out: *mut f64, len: usize) -> UcStatus {
    guard(|| {
        let f = as_ref(model, "model")?.model.row_factors();
        fill(out_slice(out, len, f.len(), "out")?, f);
        Ok(())
    })
}

/// Copies the column factors into `out` (`len ≥ n_cols`).
///
/// # Safety
/// `model` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn uc_model_col_factors(model: *const UcModel, out: *mut f64, len: usize) -> UcStatus {
    guard(|| {
        let f = as_ref(model, "model")?.model.col_factors();
        fill(out_slice(out, len, f.len(), "out")?, f);
        Ok(())
    })
}

/// Predicted value of cell `(row, col)`; NaN when the status carries no value.
///
/// # Safety
/// `model` must be a live handle; `value` and `status` must be valid.
#[no_mangle]
pub unsafe extern "C" fn uc_model_predict(
    model: *const UcModel,
    row: usize,
    col: usize,
    value: *mut f64,
    status: *mut UcPredictionStatus,
) -> UcStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        if value.is_null() {
            return Err(null("value"));
        }
        if status.is_null() {
            return Err(null("status"));
        }
        let p = model.model.predict(row, col)?;
        *value = p.value.unwrap_or(f64::NAN);
        *status = p.status.into();
        Ok(())
    })
}

/// Unit-sum (Sinkhorn) factors of `m`, written to `row_out` and `col_out`.
///
/// # Safety
/// `m` must be a live handle, `cfg` null or valid, and the output buffers
/// must hold `row_len` and `col_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn uc_sinkhorn_factors(
    m: *const UcMatrix,
    cfg: *const UcBalanceConfig,
    row_out: *mut f64,
    row_len: usize,
    col_out: *mut f64,
    col_len: usize,
) -> UcStatus {
    guard(|| {
        let m = &as_ref(m, "matrix")?.0;
        let rows = out_slice(row_out, row_len, m.n_rows(), "row_out")?;
        let cols = out_slice(col_out, col_len, m.n_cols(), "col_out")?;
        let s = sinkhorn_scale(m, &config(cfg))?;
        fill(rows, s.row_factors());
        fill(cols, s.col_factors());
        Ok(())
    })
}

/// Holds out a seeded random `fraction` of the positive cells, rebalances
/// and reports RMSE and MAE over the estimable held-out cells (NaN when
/// none is estimable).
///
/// # Safety
/// `m` must be a live handle, `cfg` null or valid; `rmse` and `mae` may be null.
#[no_mangle]
pub unsafe extern "C" fn uc_evaluate(
    m: *const UcMatrix,
    cfg: *const UcBalanceConfig,
    policy: UcPolicy,
    fraction: f64,
    seed: u64,
    rmse: *mut f64,
    mae: *mut f64,
) -> UcStatus {
    guard(|| {
        let m = &as_ref(m, "matrix")?.0;
        let mask = make_mask(m, fraction, seed)?;
        let report = evaluate(m, &mask, &config(cfg), policy.into())?;
        if !rmse.is_null() {
            *rmse = report.rmse.unwrap_or(f64::NAN);
        }
        if !mae.is_null() {
            *mae = report.mae.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}
