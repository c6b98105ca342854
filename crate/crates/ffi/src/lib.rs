//! C ABI over the dashlab core.
//!
//! Objects cross the boundary as opaque pointers created by `*_new`/`*_fit`
//! style constructors and released with the matching `*_free`. Every fallible
//! call returns a [`DlStatus`]; on failure [`dl_last_error`] holds a message
//! for the calling thread. Panics are caught and reported as
//! [`DlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dashlab::attribution::{attribution_matrix, AttributionConfig, AttributionMatrix, Method};
use dashlab::boost::{fit, Ensemble, TrainConfig};
use dashlab::dash::{aggregate, Aggregator};
use dashlab::stability::{screen, z_test, Verdict};
use dashlab::synthdata::{load_csv, sample_dataset, Dataset, DgpConfig, GroupSpec, TargetColumn};
use dashlab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Synthetic or loaded data set.
pub struct DlDataset(Dataset);

/// Fitted boosted ensemble.
pub struct DlEnsemble(Ensemble);

/// Models × features attribution matrix.
pub struct DlAttribution(AttributionMatrix);

/// Training hyperparameters. Obtain defaults from [`dl_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DlTrainConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl From<DlTrainConfig> for TrainConfig {
    fn from(c: DlTrainConfig) -> Self {
        TrainConfig {
            rounds: c.rounds,
            max_depth: c.max_depth,
            learning_rate: c.learning_rate,
            subsample: c.subsample,
            colsample: c.colsample,
            min_leaf: c.min_leaf,
            seed: c.seed,
        }
    }
}

/// Attribution method selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlMethod {
    Shap = 0,
    Permutation = 1,
    SplitCount = 2,
}

/// Consensus aggregator selector; `trim` is only read for `Trimmed`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlAggregator {
    Mean = 0,
    Trimmed = 1,
    Median = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlVerdict {
    Stable = 0,
    Unstable = 1,
    Degenerate = 2,
}

/// Multi-model Z-test for one feature pair. `z` and `snr` are `INFINITY`
/// when the differences are constant and nonzero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DlPairDiagnostic {
    pub mean_gap: f64,
    pub noise_sd: f64,
    pub z: f64,
    pub snr: f64,
    pub flip_empirical: f64,
    pub flip_predicted: f64,
    pub verdict: DlVerdict,
}

/// Single-model split-frequency screen for one feature pair.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DlScreenResult {
    pub p_hat_j: f64,
    pub p_hat_k: f64,
    pub t_eff: f64,
    pub z_split: f64,
    pub flagged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> DlStatus {
    match err {
        Error::Parameter(_) => DlStatus::InvalidArgument,
        Error::Io { .. } => DlStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => DlStatus::Parse,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DlStatus, String)>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DlStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (DlStatus, String)>;
}

impl<T> OrStatus<T> for dashlab::Result<T> {
    fn or_status(self) -> Result<T, (DlStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (DlStatus, String) {
    (DlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DlStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DlStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), (DlStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dl_train_config_default() -> DlTrainConfig {
    let c = TrainConfig::default();
    DlTrainConfig {
        rounds: c.rounds,
        max_depth: c.max_depth,
        learning_rate: c.learning_rate,
        subsample: c.subsample,
        colsample: c.colsample,
        min_leaf: c.min_leaf,
        seed: c.seed,
    }
}

/// Samples `group_count` groups of `group_size` equicorrelated features plus
/// `extras` independent ones, with unit coefficients on group features.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_generate(
    group_count: usize,
    group_size: usize,
    rho: f64,
    extras: usize,
    n_samples: usize,
    seed: u64,
    out: *mut *mut DlDataset,
) -> DlStatus {
    guard(|| {
        let groups = GroupSpec::new(group_count, group_size, rho).with_extras(extras);
        let d = sample_dataset(&DgpConfig::symmetric(groups, n_samples, seed)).or_status()?;
        write_out(out, DlDataset(d))
    })
}

/// Loads a CSV with a header row; `target` names the response column.
///
/// # Safety
/// `path` and `target` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    out: *mut *mut DlDataset,
) -> DlStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let target = TargetColumn::Name(c_str(target, "target")?.to_string());
        let d = load_csv(path, &target).or_status()?;
        write_out(out, DlDataset(d))
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_n_samples(ds: *const DlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_samples())
}

/// Number of feature columns, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_n_features(ds: *const DlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_features())
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_free(ds: *mut DlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits one ensemble.
///
/// # Safety
/// `ds` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_fit(
    ds: *const DlDataset,
    config: *const DlTrainConfig,
    out: *mut *mut DlEnsemble,
) -> DlStatus {
    guard(|| {
        let d = borrow(ds, "dataset")?;
        let c = borrow(config, "config")?;
        let e = fit(&d.0, &TrainConfig::from(*c)).or_status()?;
        write_out(out, DlEnsemble(e))
    })
}

/// Predicts one row of `len` features into `*out`.
///
/// # Safety
/// `x` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_predict(
    e: *const DlEnsemble,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> DlStatus {
    guard(|| {
        let e = borrow(e, "ensemble")?;
        if x.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let row = ndarray::ArrayView1::from(std::slice::from_raw_parts(x, len));
        *out = e.0.predict(row).or_status()?;
        Ok(())
    })
}

/// Serialises the ensemble as JSON into a new string released with
/// [`dl_string_free`].
///
/// # Safety
/// `e` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_to_json(e: *const DlEnsemble, out: *mut *mut c_char) -> DlStatus {
    guard(|| {
        let e = borrow(e, "ensemble")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let json = e.0.to_json().or_status()?;
        *out = CString::new(json)
            .map_err(|_| (DlStatus::Parse, "JSON contained NUL".to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Split-frequency screen of features `j` and `k`.
///
/// # Safety
/// `e` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_screen(
    e: *const DlEnsemble,
    j: usize,
    k: usize,
    out: *mut DlScreenResult,
) -> DlStatus {
    guard(|| {
        let e = borrow(e, "ensemble")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let s = screen(&e.0, (j, k), e.0.learning_rate).or_status()?;
        *out = DlScreenResult {
            p_hat_j: s.p_hat_j,
            p_hat_k: s.p_hat_k,
            t_eff: s.t_eff,
            z_split: s.z_split,
            flagged: s.flagged,
        };
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_free(e: *mut DlEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Trains `models` ensembles with seeds `seed_base..seed_base+models` and
/// stacks their global attributions.
///
/// # Safety
/// `ds` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_attribution_matrix(
    ds: *const DlDataset,
    config: *const DlTrainConfig,
    method: DlMethod,
    models: usize,
    seed_base: u64,
    out: *mut *mut DlAttribution,
) -> DlStatus {
    guard(|| {
        let d = borrow(ds, "dataset")?;
        let c = borrow(config, "config")?;
        let cfg = AttributionConfig {
            method: match method {
                DlMethod::Shap => Method::Shap,
                DlMethod::Permutation => Method::Permutation,
                DlMethod::SplitCount => Method::SplitCount,
            },
            ..AttributionConfig::default()
        };
        let m = attribution_matrix(&d.0, &TrainConfig::from(*c), models, seed_base, &cfg).or_status()?;
        write_out(out, DlAttribution(m))
    })
}

/// Builds a matrix from `rows × cols` row-major values.
///
/// # Safety
/// `values` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_attribution_from_values(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut DlAttribution,
) -> DlStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| (DlStatus::InvalidArgument, "matrix too large".to_string()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let arr = ndarray::Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| (DlStatus::InvalidArgument, e.to_string()))?;
        write_out(out, DlAttribution(AttributionMatrix::from_values(arr).or_status()?))
    })
}

/// Writes the number of models and features.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dl_attribution_shape(a: *const DlAttribution, rows: *mut usize, cols: *mut usize) -> DlStatus {
    guard(|| {
        let a = borrow(a, "attribution")?;
        if rows.is_null() || cols.is_null() {
            return Err(null("output pointer"));
        }
        *rows = a.0.n_models();
        *cols = a.0.n_features();
        Ok(())
    })
}

/// Copies the matrix row-major into `buf`, which must hold `rows * cols`
/// doubles (`BufferTooSmall` otherwise).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_attribution_values(a: *const DlAttribution, buf: *mut f64, len: usize) -> DlStatus {
    guard(|| {
        let a = borrow(a, "attribution")?;
        let need = a.0.values.len();
        if len < need {
            return Err((DlStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (dst, src) in out.iter_mut().zip(a.0.values.iter()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Z-test for the pair `(j, k)`; needs at least two models.
///
/// # Safety
/// `a` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_z_test(a: *const DlAttribution, j: usize, k: usize, out: *mut DlPairDiagnostic) -> DlStatus {
    guard(|| {
        let a = borrow(a, "attribution")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let d = z_test(&a.0, j, k).or_status()?;
        *out = DlPairDiagnostic {
            mean_gap: d.mean_gap,
            noise_sd: d.noise_sd,
            z: d.z,
            snr: d.snr,
            flip_empirical: d.flip_empirical,
            flip_predicted: d.flip_predicted,
            verdict: match d.verdict {
                Verdict::Stable => DlVerdict::Stable,
                Verdict::Unstable => DlVerdict::Unstable,
                Verdict::Degenerate => DlVerdict::Degenerate,
            },
        };
        Ok(())
    })
}

/// Per-feature consensus into `buf` (length ≥ number of features).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_consensus(
    a: *const DlAttribution,
    method: DlAggregator,
    trim: f64,
    buf: *mut f64,
    len: usize,
) -> DlStatus {
    guard(|| {
        let a = borrow(a, "attribution")?;
        let p = a.0.n_features();
        if len < p {
            return Err((DlStatus::BufferTooSmall, format!("buffer holds {len} values, need {p}")));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let agg = match method {
            DlAggregator::Mean => Aggregator::Mean,
            DlAggregator::Trimmed => Aggregator::Trimmed(trim),
            DlAggregator::Median => Aggregator::Median,
        };
        let values = aggregate(&a.0, agg).or_status()?;
        std::slice::from_raw_parts_mut(buf, p).copy_from_slice(&values);
        Ok(())
    })
}

/// # Safety
/// `a` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_attribution_free(a: *mut DlAttribution) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}
