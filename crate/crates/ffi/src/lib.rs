//! C ABI over `sac-core`.
//!
//! Conventions:
//! - every fallible function returns a [`SacStatus`]; `SAC_STATUS_OK` is 0;
//! - on failure the message is available from [`sac_last_error`] on the same
//!   thread until the next call into the library;
//! - configurations are opaque [`SacConfig`] handles owned by the caller and
//!   released with [`sac_config_free`];
//! - strings passed in are NUL-terminated UTF-8; panics never cross the ABI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use sac_core::config::RunConfig;
use sac_core::potential::{self, YosidaLevel};
use sac_core::run::{self, Command, RunOptions};
use sac_core::stepper::{self, Problem, Reaction, SimulateOptions};
use sac_core::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Domain = 4,
    Numerical = 5,
    Io = 6,
    /// A study ran but at least one of its checks failed.
    CheckFailed = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque run configuration.
pub struct SacConfig {
    inner: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NUL bytes removed"));
}

fn status_of(e: &Error) -> SacStatus {
    match e {
        Error::InvalidParameter { .. } | Error::ConfigParse(_) => SacStatus::InvalidConfig,
        Error::Domain(_) | Error::SizeMismatch { .. } | Error::Snapshot(_) => SacStatus::Domain,
        Error::ResolventDiverged { .. } | Error::NewtonDiverged { .. } | Error::LinearStagnation { .. } => {
            SacStatus::Numerical
        }
        Error::Io { .. } | Error::Csv(_) => SacStatus::Io,
        Error::Context { source, .. } => status_of(source),
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SacStatus, String)>) -> SacStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SacStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SacStatus::Panic
        }
    }
}

fn core<T>(r: sac_core::Result<T>) -> Result<T, (SacStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SacStatus, String) {
    (SacStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SacStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SacStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn config_ref<'a>(cfg: *const SacConfig) -> Result<&'a SacConfig, (SacStatus, String)> {
    cfg.as_ref().ok_or_else(|| null("config"))
}

/// Message of the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn sac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON configuration. Omitted fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sac_config_from_json(json: *const c_char, out: *mut *mut SacConfig) -> SacStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let inner = core(RunConfig::from_json_str(text))?;
        *out = Box::into_raw(Box::new(SacConfig { inner }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `cfg` must come from [`sac_config_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sac_config_free(cfg: *mut SacConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sac_config_set_seed(cfg: *mut SacConfig, seed: u64) -> SacStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("config"))?;
        c.inner.ensemble.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sac_config_set_output_dir(cfg: *mut SacConfig, dir: *const c_char) -> SacStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("config"))?;
        c.inner.output_dir = PathBuf::from(read_str(dir, "dir")?);
        Ok(())
    })
}

/// Number of grid cells, i.e. the length of a field.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sac_config_field_len(cfg: *const SacConfig, out: *mut usize) -> SacStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = core(c.inner.grid())?.len();
        Ok(())
    })
}

/// Writes the 64-character hex configuration hash plus NUL into `buf`.
///
/// # Safety
/// `cfg` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sac_config_hash(cfg: *const SacConfig, buf: *mut c_char, len: usize) -> SacStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let h = core(c.inner.config_hash())?;
        if len < h.len() + 1 {
            return Err((SacStatus::BufferTooSmall, format!("need {} bytes", h.len() + 1)));
        }
        std::ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// Resolvent `J_lambda(x)`, the unique `r` in `(-1, 1)` with `r + lambda beta(r) = x`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sac_resolvent(lambda: f64, x: f64, out: *mut f64) -> SacStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let level = core(YosidaLevel::new(lambda))?;
        *out = core(potential::resolvent(&level, x))?;
        Ok(())
    })
}

/// Yosida approximation `beta_lambda(x)`, its derivative and the Moreau
/// envelope `hat beta_lambda(x)`.
///
/// # Safety
/// The three output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sac_yosida(
    lambda: f64,
    x: f64,
    beta: *mut f64,
    dbeta: *mut f64,
    envelope: *mut f64,
) -> SacStatus {
    guard(|| {
        if beta.is_null() || dbeta.is_null() || envelope.is_null() {
            return Err(null("output"));
        }
        let level = core(YosidaLevel::new(lambda))?;
        let (b, db, e) = core(potential::yosida_eval(&level, x))?;
        *beta = b;
        *dbeta = db;
        *envelope = e;
        Ok(())
    })
}

/// Runs a study (`simulate`, `uniform`, `cauchy`, `dependence`, `strong`,
/// `derivative`, `oracles`) and writes its reports to the output directory.
/// Returns `SAC_STATUS_CHECK_FAILED` when the study ran but a check failed.
/// `threads = 0` uses the default pool size.
///
/// # Safety
/// `cfg` must be a live handle and `command` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sac_run(cfg: *const SacConfig, command: *const c_char, threads: u32) -> SacStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let cmd: Command = core(read_str(command, "command")?.parse())?;
        let opts = RunOptions {
            threads: (threads > 0).then_some(threads as usize),
            replicate: 0,
        };
        let outcome = core(run::execute(cmd, &c.inner, &opts))?;
        if outcome.passed() {
            Ok(())
        } else {
            Err((SacStatus::CheckFailed, outcome.manifest.failed_checks.join("; ")))
        }
    })
}

/// Simulates one replicate at regularization level `lambda` and copies the
/// final field into `out`. `written` receives the field length; when `len` is
/// too small nothing is copied and `SAC_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `cfg` must be a live handle, `out` valid for `len` doubles, `written` valid.
#[no_mangle]
pub unsafe extern "C" fn sac_simulate_final(
    cfg: *const SacConfig,
    replicate: u64,
    lambda: f64,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> SacStatus {
    guard(|| {
        let c = &config_ref(cfg)?.inner;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        let g = core(c.grid())?;
        *written = g.len();
        if len < g.len() {
            return Err((SacStatus::BufferTooSmall, format!("need {} values", g.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let level = core(YosidaLevel::new(lambda))?;
        let params = core(c.potential.params())?;
        let problem = core(Problem::new(
            g.clone(),
            core(Reaction::new(&params, Some(level)))?,
            c.noise.clone(),
            core(c.forcing())?,
            c.stepper.clone(),
            c.ensemble.seed,
        ))?;
        let u0 = core(c.initial.generate(&g, c.ensemble.seed, replicate))?;
        let (state, _) = core(stepper::simulate(u0, &problem, replicate, SimulateOptions::default()))?;
        std::slice::from_raw_parts_mut(out, g.len()).copy_from_slice(state.u.values());
        Ok(())
    })
}
