//! C interface to `multigauss`.
//!
//! Every fallible function returns a status code: `MG_OK` on success, one of
//! the library codes (`MG_ERR_*`, positive) or a negative interface code. The
//! message of the last failure on the calling thread is available from
//! [`mg_last_error`]. Objects are opaque handles released by their `_free`
//! function; strings returned by the library are released with
//! [`mg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use multigauss::dgmc::{exact_enumerate, DgModel, SpinConfiguration};
use multigauss::experiments::{run, Artifact, Experiment, ExperimentConfig, JSpec};
use multigauss::{Error, LatticeField};

pub const MG_OK: i32 = 0;
/// A required pointer argument was null.
pub const MG_ERR_NULL: i32 = -1;
/// A string argument was not valid UTF-8.
pub const MG_ERR_UTF8: i32 = -2;
/// The library panicked; the handle arguments should be considered poisoned.
pub const MG_ERR_PANIC: i32 = -3;

pub const MG_ERR_INVALID_LATTICE: i32 = 10;
pub const MG_ERR_INVALID_STEP_DISTRIBUTION: i32 = 11;
pub const MG_ERR_TORUS_TOO_SMALL: i32 = 12;
pub const MG_ERR_SIZE_MISMATCH: i32 = 13;
pub const MG_ERR_NOT_POSITIVE: i32 = 20;
pub const MG_ERR_NONZERO_MEAN: i32 = 21;
pub const MG_ERR_NEGATIVE_PIECE: i32 = 22;
pub const MG_ERR_SCALE_OUT_OF_RANGE: i32 = 23;
pub const MG_ERR_NOT_A_POWER: i32 = 24;
pub const MG_ERR_QUADRATURE: i32 = 25;
pub const MG_ERR_SUPPORT_TOO_LARGE: i32 = 30;
pub const MG_ERR_PRECONDITION: i32 = 31;
pub const MG_ERR_NOT_PERIODIC: i32 = 40;
pub const MG_ERR_BUDGET: i32 = 41;
pub const MG_ERR_EXPECTATION: i32 = 42;
pub const MG_ERR_DIAGNOSTIC: i32 = 50;
pub const MG_ERR_CONFIG: i32 = 60;
pub const MG_ERR_IO: i32 = 70;

/// Resolved experiment configuration.
pub struct MgConfig(ExperimentConfig);

/// Results of one experiment run.
pub struct MgArtifact(Artifact);

/// Discrete Gaussian model on a torus.
pub struct MgDgModel(DgModel);

/// Exact moments of `(f, σ)` from height enumeration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MgExactMoments {
    pub partition: f64,
    pub second: f64,
    pub mgf: f64,
    pub characteristic: f64,
    /// Largest relative change against the next smaller height box.
    pub truncation: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Lib(Error),
    Code(i32, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MG_OK,
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            e.code()
        }
        Ok(Err(Fail::Code(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside multigauss");
            MG_ERR_PANIC
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::Code(MG_ERR_NULL, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Code(MG_ERR_UTF8, format!("`{name}` is not UTF-8")))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no NUL").into_raw()
}

fn json_error(e: serde_json::Error) -> Fail {
    Fail::Lib(Error::Config(e.to_string()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; valid until the next failing call.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Resolves the configuration of `experiment` from its defaults and the JSON
/// object `json` (may be null).
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_config_new(
    experiment: *const c_char,
    json: *const c_char,
    out: *mut *mut MgConfig,
) -> i32 {
    guard(|| {
        non_null(out, "out")?;
        let e: Experiment = text(experiment, "experiment")?.parse()?;
        let file = if json.is_null() {
            None
        } else {
            Some(serde_json::from_str(text(json, "json")?).map_err(json_error)?)
        };
        let cfg = ExperimentConfig::resolve(e, file, &[])?;
        *out = Box::into_raw(Box::new(MgConfig(cfg)));
        Ok(())
    })
}

/// Resolved configuration as JSON; release with [`mg_string_free`].
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_config_to_json(config: *const MgConfig, out: *mut *mut c_char) -> i32 {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        *out = into_c_string(serde_json::to_string(&(*config).0).map_err(json_error)?);
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_config_free(config: *mut MgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the configured experiment.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_run(config: *const MgConfig, out: *mut *mut MgArtifact) -> i32 {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(MgArtifact(run(&(*config).0)?)));
        Ok(())
    })
}

/// Whether the run met its own acceptance check.
///
/// # Safety
/// `artifact` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_artifact_passed(artifact: *const MgArtifact, out: *mut bool) -> i32 {
    guard(|| {
        non_null(artifact, "artifact")?;
        non_null(out, "out")?;
        *out = (*artifact).0.passed;
        Ok(())
    })
}

/// Experiment results as JSON; release with [`mg_string_free`].
///
/// # Safety
/// `artifact` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_artifact_summary_json(
    artifact: *const MgArtifact,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        non_null(artifact, "artifact")?;
        non_null(out, "out")?;
        *out = into_c_string(serde_json::to_string(&(*artifact).0.summary).map_err(json_error)?);
        Ok(())
    })
}

/// Writes CSV, SVG and `summary.json` into `dir`.
///
/// # Safety
/// `artifact` must be a live handle; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mg_artifact_write(artifact: *const MgArtifact, dir: *const c_char) -> i32 {
    guard(|| {
        non_null(artifact, "artifact")?;
        (*artifact).0.write(Path::new(text(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `artifact` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_artifact_free(artifact: *mut MgArtifact) {
    if !artifact.is_null() {
        drop(Box::from_raw(artifact));
    }
}

/// Model with spins in `2πZ` on a torus of side `side`. `j` is `"nn"`,
/// `"linf<R>"` or a JSON list of steps. With `pinned` the gauge `σ_0 = 0` is imposed.
///
/// # Safety
/// `j` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_dg_model_new(
    j: *const c_char,
    beta: f64,
    side: usize,
    m2: f64,
    pinned: bool,
    out: *mut *mut MgDgModel,
) -> i32 {
    guard(|| {
        non_null(out, "out")?;
        let raw = text(j, "j")?;
        let spec: JSpec =
            serde_json::from_str(raw).unwrap_or_else(|_| JSpec::Name(raw.to_string()));
        let model = DgModel::new(spec.resolve()?, beta, side, m2, pinned)?;
        *out = Box::into_raw(Box::new(MgDgModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_dg_model_free(model: *mut MgDgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Energy of the configuration `σ = 2π·heights` (row-major, `len = side²`).
///
/// # Safety
/// `model` must be a live handle; `heights` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_dg_energy(
    model: *const MgDgModel,
    heights: *const i64,
    len: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let m = &(*model).0;
        let sigma =
            SpinConfiguration::from_heights(m.side(), slice(heights, len, "heights")?.to_vec())?;
        m.check(&sigma)?;
        *out = m.energy(&sigma);
        Ok(())
    })
}

/// Moments of `(f, σ)` by enumerating heights in `[-k, k]`.
///
/// # Safety
/// `model` must be a live handle; `f` must hold `len = side²` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_dg_exact(
    model: *const MgDgModel,
    k: u32,
    f: *const f64,
    len: usize,
    out: *mut MgExactMoments,
) -> i32 {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let m = &(*model).0;
        let field = LatticeField::from_values(m.side(), slice(f, len, "f")?.to_vec())?;
        let r = exact_enumerate(m, k, &field, f64::INFINITY)?;
        *out = MgExactMoments {
            partition: r.partition,
            second: r.second,
            mgf: r.mgf,
            characteristic: r.characteristic,
            truncation: r.truncation,
        };
        Ok(())
    })
}
