//! C ABI for spikelab.
//!
//! Measures and subordination pairs are opaque handles created from JSON
//! and released with their `_free` function. Every fallible call returns
//! an `SpkStatus`; on failure `spk_last_error_message` describes the error
//! until the next call on the same thread. Strings returned through `out`
//! parameters must be released with `spk_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spikelab::cli::{Experiment, RunOptions};
use spikelab::config::ExperimentConfig;
use spikelab::freeconv::{ConvType, SubordinationPair};
use spikelab::measures::Measure;
use spikelab::rmt::{run_trial, ModelSpec};
use spikelab::{Error, C64};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad JSON, configuration or precondition.
    Config = 3,
    /// The subordination solver or root finder failed.
    Solver = 4,
    Numerical = 5,
    Panic = 6,
}

/// Values accepted for `conv_type` in `spk_pair_new`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpkConvType {
    AdditiveReal = 0,
    MultiplicativePositive = 1,
    MultiplicativeUnitary = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpkComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for SpkComplex {
    fn from(z: C64) -> Self {
        SpkComplex { re: z.re, im: z.im }
    }
}

impl From<SpkComplex> for C64 {
    fn from(z: SpkComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// Opaque probability measure.
pub struct SpkMeasure(Measure);

/// Opaque pair of measures with its subordination solver.
pub struct SpkPair(SubordinationPair);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SpkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_solver_failure() {
            SpkStatus::Solver
        } else if matches!(e, Error::Numerical(_)) {
            SpkStatus::Numerical
        } else {
            SpkStatus::Config
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SpkStatus::Config, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SpkStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SpkStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SpkStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SpkStatus::NullPointer, format!("{name} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SpkStatus::NullPointer, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no nul bytes").into_raw()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn spk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a measure from JSON, e.g.
/// `{"kind":"semicircle","center":0,"radius":2}`.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_measure_from_json(json: *const c_char, out: *mut *mut SpkMeasure) -> SpkStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let m: Measure = serde_json::from_str(text)?;
        write_out(out, Box::into_raw(Box::new(SpkMeasure(m))), "out")
    })
}

/// # Safety
/// `m` must be null or a handle from `spk_measure_from_json`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spk_measure_free(m: *mut SpkMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Cauchy transform `G_μ(z)`.
///
/// # Safety
/// `m` must be a live measure handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_measure_cauchy(m: *const SpkMeasure, z: SpkComplex, out: *mut SpkComplex) -> SpkStatus {
    guard(|| {
        let m = ref_arg(m, "measure")?;
        let g = m.0.cauchy_transform(z.into())?;
        write_out(out, g.into(), "out")
    })
}

/// Builds a pair from two measures (copied; the inputs stay owned by the caller).
///
/// # Safety
/// `mu` and `nu` must be live measure handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_pair_new(
    conv_type: u32,
    mu: *const SpkMeasure,
    nu: *const SpkMeasure,
    out: *mut *mut SpkPair,
) -> SpkStatus {
    guard(|| {
        let ct = match conv_type {
            x if x == SpkConvType::AdditiveReal as u32 => ConvType::AdditiveReal,
            x if x == SpkConvType::MultiplicativePositive as u32 => ConvType::MultiplicativePositive,
            x if x == SpkConvType::MultiplicativeUnitary as u32 => ConvType::MultiplicativeUnitary,
            x => return Err(Failure(SpkStatus::Config, format!("unknown convolution type {x}"))),
        };
        let (mu, nu) = (ref_arg(mu, "mu")?, ref_arg(nu, "nu")?);
        let pair = SubordinationPair::new(ct, mu.0.clone(), nu.0.clone())?;
        write_out(out, Box::into_raw(Box::new(SpkPair(pair))), "out")
    })
}

/// # Safety
/// `p` must be null or a handle from `spk_pair_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spk_pair_free(p: *mut SpkPair) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Subordination functions `ω₁(z)`, `ω₂(z)`.
///
/// # Safety
/// `p` must be a live pair handle; `omega1` and `omega2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_pair_omega(
    p: *const SpkPair,
    z: SpkComplex,
    omega1: *mut SpkComplex,
    omega2: *mut SpkComplex,
) -> SpkStatus {
    guard(|| {
        let p = ref_arg(p, "pair")?;
        let s = p.0.subordination(z.into())?;
        write_out(omega1, s.omega1.into(), "omega1")?;
        write_out(omega2, s.omega2.into(), "omega2")
    })
}

/// Cauchy transform of the convolution.
///
/// # Safety
/// `p` must be a live pair handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_pair_cauchy(p: *const SpkPair, z: SpkComplex, out: *mut SpkComplex) -> SpkStatus {
    guard(|| {
        let p = ref_arg(p, "pair")?;
        write_out(out, p.0.convolution_cauchy(z.into())?.into(), "out")
    })
}

/// Support of the convolution as a JSON list of `[lo, hi]` intervals.
///
/// # Safety
/// `p` must be a live pair handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_pair_support_json(p: *const SpkPair, out: *mut *mut c_char) -> SpkStatus {
    guard(|| {
        let p = ref_arg(p, "pair")?;
        let json = serde_json::to_string(p.0.support()?)?;
        write_out(out, to_c_string(json), "out")
    })
}

/// Predicted outliers for an experiment configuration, at its largest size.
///
/// # Safety
/// `config_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_predict_json(config_json: *const c_char, out: *mut *mut c_char) -> SpkStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json_str(str_arg(config_json, "config_json")?)?;
        let n = cfg.sizes.last().copied();
        let set = Experiment::new(cfg, &RunOptions { quiet: true, ..Default::default() })?.predictions(n)?;
        write_out(out, to_c_string(serde_json::to_string(&set)?), "out")
    })
}

/// One trial of a model; returns the simulation run as JSON.
///
/// # Safety
/// `spec_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_run_trial_json(spec_json: *const c_char, trial: u64, out: *mut *mut c_char) -> SpkStatus {
    guard(|| {
        let spec: ModelSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?)?;
        let run = run_trial(&spec, trial)?;
        write_out(out, to_c_string(run.to_json()?), "out")
    })
}
