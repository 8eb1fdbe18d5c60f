//! C ABI over the fluflow toolkit.
//!
//! Every fallible call returns an [`FfStatus`]; on failure the message is
//! available from [`fluflow_last_error`] until the next failing call on the
//! same thread. Objects are opaque handles created by `*_load`/`*_new`
//! functions and released with the matching `*_free`. Matrices cross the
//! boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fluflow::completion::{soft_impute, CompletionConfig, CompletionResult};
use fluflow::data::{load_indicator_panel, standardize_columns, FlowPair, IndicatorPanel, MortalityVector};
use fluflow::pipeline::{emit_report, run_pipeline, Manifest, PipelineConfig};
use fluflow::regress::build_flow_design;
use fluflow::spectral::{dft_values, dominant_period};
use fluflow::Error;
use nalgebra::{DMatrix, DVector};

/// Status codes. Values 1 to 3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    Validation = 1,
    Numeric = 2,
    Io = 3,
    NullArgument = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

pub struct FfPanel(IndicatorPanel);
pub struct FfCompletion(CompletionResult);
pub struct FfConfig(PipelineConfig);
pub struct FfManifest(Manifest);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FfStatus {
    match e.exit_code() {
        2 => FfStatus::Numeric,
        3 => FfStatus::Io,
        _ => FfStatus::Validation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FfError>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FfStatus::Ok,
        Ok(Err(FfError::Null(what))) => {
            set_error(format!("null argument: {what}"));
            FfStatus::NullArgument
        }
        Ok(Err(FfError::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            FfStatus::Internal
        }
    }
}

enum FfError {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for FfError {
    fn from(e: Error) -> Self {
        FfError::Core(e)
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, FfError> {
    if p.is_null() {
        return Err(FfError::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Validation(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, FfError> {
    p.as_ref().ok_or(FfError::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, FfError> {
    p.as_mut().ok_or(FfError::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], FfError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(FfError::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fluflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fluflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fluflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a `region,<indicator>...` CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_panel_load(path: *const c_char, out: *mut *mut FfPanel) -> FfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let panel = load_indicator_panel(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FfPanel(panel)));
        Ok(())
    })
}

/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_panel_free(panel: *mut FfPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// # Safety
/// `panel` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_panel_shape(panel: *const FfPanel, rows: *mut usize, cols: *mut usize) -> FfStatus {
    guard(|| {
        let p = &obj(panel, "panel")?.0;
        *out_ptr(rows, "rows")? = p.n_regions();
        *out_ptr(cols, "cols")? = p.n_indicators();
        Ok(())
    })
}

/// Standardizes the panel and completes it by soft-impute. `max_rank` 0
/// means unbounded.
///
/// # Safety
/// `panel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_complete(
    panel: *const FfPanel,
    max_rank: usize,
    seed: u64,
    out: *mut *mut FfCompletion,
) -> FfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let (standardized, _) = standardize_columns(&obj(panel, "panel")?.0)?;
        let mut cfg = CompletionConfig {
            seed,
            ..Default::default()
        };
        if max_rank > 0 {
            cfg.max_rank = max_rank;
        }
        let result = soft_impute(&standardized, &cfg)?;
        *out = Box::into_raw(Box::new(FfCompletion(result)));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_completion_free(c: *mut FfCompletion) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_completion_summary(
    c: *const FfCompletion,
    rank: *mut usize,
    train_rmse: *mut f64,
    iterations: *mut usize,
) -> FfStatus {
    guard(|| {
        let r = &obj(c, "completion")?.0;
        *out_ptr(rank, "rank")? = r.rank;
        *out_ptr(train_rmse, "train_rmse")? = r.train_rmse;
        *out_ptr(iterations, "iterations")? = r.iterations;
        Ok(())
    })
}

/// Copies the completed matrix into `buf` (row-major). `len` must equal
/// rows × cols of the panel.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fluflow_completion_copy(c: *const FfCompletion, buf: *mut f64, len: usize) -> FfStatus {
    guard(|| {
        let m = &obj(c, "completion")?.0.completed;
        if len != m.len() {
            return Err(Error::Shape(format!("buffer holds {len} values, matrix has {}", m.len())).into());
        }
        if buf.is_null() {
            return Err(FfError::Null("buf"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        let cols = m.ncols();
        for (idx, v) in dst.iter_mut().enumerate() {
            *v = m[(idx / cols, idx % cols)];
        }
        Ok(())
    })
}

/// Dominant period of a series after mean removal, searching bins
/// `min_k..=len/2`.
///
/// # Safety
/// `values` must hold `len` doubles; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_dominant_period(
    values: *const f64,
    len: usize,
    min_k: usize,
    period: *mut f64,
    peak_k: *mut usize,
    peak_ratio: *mut f64,
) -> FfStatus {
    guard(|| {
        let x = slice(values, len, "values")?;
        let mean = x.iter().sum::<f64>() / len.max(1) as f64;
        let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let est = dominant_period(&dft_values(&centered)?, min_k)?;
        *out_ptr(period, "period")? = est.period_weeks;
        *out_ptr(peak_k, "peak_k")? = est.peak_k;
        *out_ptr(peak_ratio, "peak_ratio")? = est.peak_ratio;
        Ok(())
    })
}

/// Flow design matrix (n × 8, row-major) for scores `z` and normalized
/// flow matrices `m`, `t` (row-major n × n, entry (i, j) is the flow from j
/// into i).
///
/// # Safety
/// `z` must hold `n` doubles, `m` and `t` n² doubles and `out` 8n writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fluflow_flow_design(
    n: usize,
    z: *const f64,
    m: *const f64,
    t: *const f64,
    out: *mut f64,
) -> FfStatus {
    guard(|| {
        let z = slice(z, n, "z")?;
        let m = slice(m, n * n, "m")?;
        let t = slice(t, n * n, "t")?;
        if out.is_null() {
            return Err(FfError::Null("out"));
        }
        let regions: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let zv = MortalityVector::from_scores(regions.clone(), DVector::from_column_slice(z))?;
        let flows = FlowPair::new(
            regions,
            DMatrix::from_row_slice(n, n, m),
            DMatrix::from_row_slice(n, n, t),
        )?;
        let phi = build_flow_design(&zv, &flows)?.phi;
        let dst = std::slice::from_raw_parts_mut(out, 8 * n);
        for i in 0..n {
            for c in 0..8 {
                dst[i * 8 + c] = phi[(i, c)];
            }
        }
        Ok(())
    })
}

/// Parses a pipeline configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_config_load(path: *const c_char, out: *mut *mut FfConfig) -> FfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = PipelineConfig::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FfConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_config_set_seed(cfg: *mut FfConfig, seed: u64) -> FfStatus {
    guard(|| {
        let c = out_ptr(cfg, "config")?;
        c.0 = c.0.clone().with_seed(seed);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fluflow_config_set_out_dir(cfg: *mut FfConfig, dir: *const c_char) -> FfStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        out_ptr(cfg, "config")?.0.out_dir = dir;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_config_free(cfg: *mut FfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every pipeline stage and returns the manifest.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_run_pipeline(cfg: *const FfConfig, out: *mut *mut FfManifest) -> FfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let manifest = run_pipeline(&obj(cfg, "config")?.0)?;
        *out = Box::into_raw(Box::new(FfManifest(manifest)));
        Ok(())
    })
}

/// Reads `manifest.txt` from an output directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluflow_manifest_load(dir: *const c_char, out: *mut *mut FfManifest) -> FfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let manifest = Manifest::load(path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(FfManifest(manifest)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_manifest_free(m: *mut FfManifest) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of manifest entries; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_manifest_len(m: *const FfManifest) -> usize {
    m.as_ref().map_or(0, |m| m.0.entries.len())
}

/// Entry `index` as a `stage file sha256 status` line; free with
/// [`fluflow_string_free`]. Null when out of range.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_manifest_entry(m: *const FfManifest, index: usize) -> *mut c_char {
    match m.as_ref().and_then(|m| m.0.entries.get(index)) {
        Some(e) => into_c_string(e.to_string()),
        None => ptr::null_mut(),
    }
}

/// Human-readable report; free with [`fluflow_string_free`]. Null for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluflow_report(m: *const FfManifest) -> *mut c_char {
    match m.as_ref() {
        Some(m) => match catch_unwind(AssertUnwindSafe(|| emit_report(&m.0))) {
            Ok(text) => into_c_string(text),
            Err(_) => {
                set_error("internal panic".into());
                ptr::null_mut()
            }
        },
        None => ptr::null_mut(),
    }
}
