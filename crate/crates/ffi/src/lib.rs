//! C ABI over the st-simdiff selection pipeline.
//!
//! Every entry point returns an [`StsStatus`]; on failure the message is
//! available from [`sts_last_error_message`] on the calling thread.
//! Selections are opaque handles released with [`sts_selection_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use st_simdiff::budget::ImportanceSource;
use st_simdiff::dets::DiffThresholdMode;
use st_simdiff::pipeline::{self, CommunityCap, SelectionConfig, SelectionResult};
use st_simdiff::{Error, ErrorClass, GridShape, TokenGrid};

/// Status codes; the nonzero values equal the CLI exit codes.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsStatus {
    Ok = 0,
    Usage = 2,
    Format = 3,
    Validation = 4,
    Io = 5,
    Internal = 6,
}

impl From<ErrorClass> for StsStatus {
    fn from(class: ErrorClass) -> Self {
        match class {
            ErrorClass::Usage => StsStatus::Usage,
            ErrorClass::Format => StsStatus::Format,
            ErrorClass::Validation => StsStatus::Validation,
            ErrorClass::Io => StsStatus::Io,
            ErrorClass::Internal => StsStatus::Internal,
        }
    }
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsDiffMode {
    Fixed = 0,
    Percentile = 1,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsImportance {
    Proxy = 0,
    Uniform = 1,
    External = 2,
}

/// Provenance codes returned by [`sts_selection_provenance`].
#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsProvenance {
    Representative = 0,
    Event = 1,
    Both = 2,
    Fill = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StsConfig {
    pub ratio: f64,
    pub tau_sim: f64,
    /// An `StsDiffMode` value.
    pub diff_mode: u32,
    /// Used when `diff_mode` is fixed.
    pub tau_diff: f64,
    /// Used when `diff_mode` is percentile.
    pub percentile: f64,
    /// 0 selects ceil(sqrt(N)).
    pub community_cap: usize,
    /// An `StsImportance` value.
    pub importance: u32,
    /// NUL-terminated UTF-8 path; required for external importance.
    pub importance_path: *const c_char,
    pub fill: bool,
    /// 0 uses all available cores.
    pub threads: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct StsStats {
    pub n: usize,
    pub n_target: usize,
    pub communities: usize,
    pub components: usize,
    pub rep_count: usize,
    pub event_count: usize,
    pub overlap_count: usize,
    pub candidate_count: usize,
    pub dropped_count: usize,
    pub fill_count: usize,
    pub tau_diff_resolved: f64,
    pub total_ms: f64,
}

/// Opaque selection handle.
pub struct StsSelection {
    result: SelectionResult,
    indices: Vec<u64>,
    provenance: Vec<u8>,
    json: CString,
    json_without_timing: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: StsStatus, message: impl Into<String>) -> StsStatus {
    set_error(message.into());
    status
}

fn guarded(f: impl FnOnce() -> StsStatus) -> StsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(StsStatus::Internal, "internal panic in st-simdiff"),
    }
}

/// Reference defaults: ratio 0.3, tau_sim 0.8, fixed tau_diff 0.2,
/// automatic cap, proxy importance, fill on, all cores.
#[no_mangle]
pub extern "C" fn sts_config_default() -> StsConfig {
    let base = SelectionConfig::default();
    let tau_diff = match base.diff_mode {
        DiffThresholdMode::Fixed { tau_diff } => tau_diff,
        DiffThresholdMode::Percentile { .. } => 0.2,
    };
    StsConfig {
        ratio: base.ratio,
        tau_sim: base.tau_sim,
        diff_mode: StsDiffMode::Fixed as u32,
        tau_diff,
        percentile: 95.0,
        community_cap: 0,
        importance: StsImportance::Proxy as u32,
        importance_path: ptr::null(),
        fill: base.fill,
        threads: 0,
    }
}

/// # Safety
/// `importance_path`, when set, must point to a NUL-terminated string.
unsafe fn to_config(c: &StsConfig) -> Result<SelectionConfig, Error> {
    let importance = match c.importance {
        x if x == StsImportance::Proxy as u32 => ImportanceSource::MeanCosineProxy,
        x if x == StsImportance::Uniform as u32 => ImportanceSource::Uniform,
        x if x == StsImportance::External as u32 => {
            if c.importance_path.is_null() {
                return Err(Error::Config("external importance requires importance_path".into()));
            }
            let path = CStr::from_ptr(c.importance_path)
                .to_str()
                .map_err(|_| Error::Config("importance_path is not valid UTF-8".into()))?;
            ImportanceSource::External(PathBuf::from(path))
        }
        other => return Err(Error::Config(format!("unknown importance code {other}"))),
    };
    let diff_mode = match c.diff_mode {
        x if x == StsDiffMode::Fixed as u32 => DiffThresholdMode::Fixed { tau_diff: c.tau_diff },
        x if x == StsDiffMode::Percentile as u32 => DiffThresholdMode::Percentile { p: c.percentile },
        other => return Err(Error::Config(format!("unknown diff mode code {other}"))),
    };
    let config = SelectionConfig {
        ratio: c.ratio,
        tau_sim: c.tau_sim,
        diff_mode,
        community_cap: match c.community_cap {
            0 => CommunityCap::Auto,
            k => CommunityCap::Limit(k),
        },
        importance,
        fill: c.fill,
        threads: (c.threads > 0).then_some(c.threads),
    };
    config.validate()?;
    Ok(config)
}

/// # Safety
/// Caller guarantees the pointer contracts documented on the public entry points.
unsafe fn select_with<T>(
    features: *const T,
    len: usize,
    dims: [usize; 4],
    config: *const StsConfig,
    out: *mut *mut StsSelection,
    build: impl FnOnce(GridShape, &[T]) -> Result<TokenGrid, Error>,
) -> StsStatus {
    if out.is_null() {
        return fail(StsStatus::Usage, "out handle pointer is null");
    }
    *out = ptr::null_mut();
    if features.is_null() {
        return fail(StsStatus::Usage, "features pointer is null");
    }
    let config = if config.is_null() { sts_config_default() } else { *config };
    let config = match to_config(&config) {
        Ok(c) => c,
        Err(e) => return fail(e.class().into(), format!("config stage failed: {e}")),
    };
    let [frames, height, width, dim] = dims;
    let shape = match GridShape::new(frames, height, width, dim) {
        Ok(s) => s,
        Err(e) => return fail(e.class().into(), format!("load stage failed: {e}")),
    };
    if shape.value_count() != len {
        return fail(
            StsStatus::Validation,
            format!(
                "load stage failed: feature buffer holds {len} values but T*H*W*d = {}; pass a C-contiguous array",
                shape.value_count()
            ),
        );
    }
    let data = std::slice::from_raw_parts(features, len);
    let grid = match build(shape, data) {
        Ok(g) => g,
        Err(e) => return fail(e.class().into(), format!("load stage failed: {e}")),
    };
    match pipeline::run(&grid, &config) {
        Ok(result) => {
            let handle = StsSelection {
                indices: result.indices.iter().map(|&k| k as u64).collect(),
                provenance: result.provenance.iter().map(|&p| p as u8).collect(),
                json: CString::new(result.to_json()).expect("json has no NUL"),
                json_without_timing: CString::new(result.to_json_without_timing()).expect("json has no NUL"),
                result,
            };
            *out = Box::into_raw(Box::new(handle));
            clear_error();
            StsStatus::Ok
        }
        Err(e) => fail(e.class().into(), e.to_string()),
    }
}

/// Selects tokens from a C-contiguous `frames x height x width x dim` f32
/// array of `len` values. `config` may be null for defaults. On success
/// `*out` receives a handle; otherwise it is set to null.
///
/// # Safety
/// `features` must point to `len` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sts_select_f32(
    features: *const f32,
    len: usize,
    frames: usize,
    height: usize,
    width: usize,
    dim: usize,
    config: *const StsConfig,
    out: *mut *mut StsSelection,
) -> StsStatus {
    guarded(|| {
        select_with(features, len, [frames, height, width, dim], config, out, |shape, data| {
            TokenGrid::new(shape, data.to_vec())
        })
    })
}

/// As [`sts_select_f32`] for f64 input; values are narrowed to f32.
///
/// # Safety
/// `features` must point to `len` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sts_select_f64(
    features: *const f64,
    len: usize,
    frames: usize,
    height: usize,
    width: usize,
    dim: usize,
    config: *const StsConfig,
    out: *mut *mut StsSelection,
) -> StsStatus {
    guarded(|| {
        select_with(features, len, [frames, height, width, dim], config, out, TokenGrid::from_f64)
    })
}

/// Number of retained tokens; 0 for a null handle.
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_len(sel: *const StsSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.indices.len())
}

/// Ascending flat token indices, `sts_selection_len` entries, owned by the handle.
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_indices(sel: *const StsSelection) -> *const u64 {
    sel.as_ref().map_or(ptr::null(), |s| s.indices.as_ptr())
}

/// Provenance codes parallel to the indices (see `StsProvenance`).
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_provenance(sel: *const StsSelection) -> *const u8 {
    sel.as_ref().map_or(ptr::null(), |s| s.provenance.as_ptr())
}

/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_n_target(sel: *const StsSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.result.n_target)
}

/// # Safety
/// `sel` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_stats(sel: *const StsSelection, out: *mut StsStats) -> StsStatus {
    let (Some(s), false) = (sel.as_ref(), out.is_null()) else {
        return fail(StsStatus::Usage, "null selection or stats pointer");
    };
    let r = &s.result;
    *out = StsStats {
        n: r.n,
        n_target: r.n_target,
        communities: r.stats.communities,
        components: r.stats.components,
        rep_count: r.stats.rep_count,
        event_count: r.stats.event_count,
        overlap_count: r.stats.overlap_count,
        candidate_count: r.stats.candidate_count,
        dropped_count: r.stats.dropped_count,
        fill_count: r.stats.fill_count,
        tau_diff_resolved: r.config.tau_diff_resolved,
        total_ms: r.timing.total_ms,
    };
    StsStatus::Ok
}

/// The result document written by `st-simdiff compress`, optionally without
/// the `timing` section. Owned by the handle.
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_json(sel: *const StsSelection, include_timing: bool) -> *const c_char {
    sel.as_ref().map_or(ptr::null(), |s| {
        if include_timing {
            s.json.as_ptr()
        } else {
            s.json_without_timing.as_ptr()
        }
    })
}

/// # Safety
/// `sel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sts_selection_free(sel: *mut StsSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}

/// Message for the most recent failure on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Version and output schema, e.g. `0.1.0 (schema 1)`.
#[no_mangle]
pub extern "C" fn sts_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(
        concat!(env!("CARGO_PKG_VERSION"), " (schema 1)", "\0").as_bytes(),
    ) {
        Ok(v) => v,
        Err(_) => panic!("version literal"),
    };
    VERSION.as_ptr()
}
