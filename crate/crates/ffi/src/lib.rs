//! C ABI over the cfcomm simulator.
//!
//! Devices are opaque handles created by `cfc_device_*` and released with
//! `cfc_device_free`. Every fallible call returns a `CfcStatus`; on failure
//! `cfc_last_error_message` describes the error for the calling thread.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with `cfc_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfcomm::circuit::{balance_attenuator, build_unfolded, Preset, Tuning};
use cfcomm::config::DeviceConfig;
use cfcomm::Error;

/// Opaque device handle.
pub struct CfcDevice {
    cfg: DeviceConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Topology = 4,
    UndefinedPostselection = 5,
    UnknownDetector = 6,
    Parse = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfcPreset {
    Calibration = 0,
    Bit0 = 1,
    Bit1 = 2,
}

impl From<CfcPreset> for Preset {
    fn from(p: CfcPreset) -> Self {
        match p {
            CfcPreset::Calibration => Preset::Calibration,
            CfcPreset::Bit0 => Preset::Bit0,
            CfcPreset::Bit1 => Preset::Bit1,
        }
    }
}

/// Terminal probabilities of one photon.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CfcProbs {
    pub d0: f64,
    pub d1: f64,
    pub lost: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CfcStatus {
    match e {
        Error::Config(_) => CfcStatus::Config,
        Error::Topology(_) => CfcStatus::Topology,
        Error::UndefinedPostselection { .. } => CfcStatus::UndefinedPostselection,
        Error::UnknownDetector(_) => CfcStatus::UnknownDetector,
        Error::Parse(_) | Error::Json(_) => CfcStatus::Parse,
        Error::Io(_) => CfcStatus::Io,
    }
}

/// Runs `f`, recording any error or panic for `cfc_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), CfcStatus>) -> CfcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            CfcStatus::Panic
        }
    }
}

fn fail(e: Error) -> CfcStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null() -> CfcStatus {
    set_error("null pointer argument".into());
    CfcStatus::NullPointer
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, CfcStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        CfcStatus::InvalidUtf8
    })
}

unsafe fn device<'a>(dev: *const CfcDevice) -> Result<&'a CfcDevice, CfcStatus> {
    dev.as_ref().ok_or_else(null)
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), CfcStatus> {
    if out.is_null() {
        return Err(null());
    }
    *out = CString::new(s).map_err(|_| fail(Error::Parse("string contains NUL".into())))?.into_raw();
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cfc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The built-in reference device. Never NULL.
#[no_mangle]
pub extern "C" fn cfc_device_reference() -> *mut CfcDevice {
    Box::into_raw(Box::new(CfcDevice { cfg: DeviceConfig::reference() }))
}

/// Parses a device from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfc_device_from_json(json: *const c_char, out: *mut *mut CfcDevice) -> CfcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let text = read_str(json)?;
        let cfg = DeviceConfig::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(CfcDevice { cfg }));
        Ok(())
    })
}

/// # Safety
/// `dev` must be NULL or a handle from `cfc_device_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfc_device_free(dev: *mut CfcDevice) {
    if !dev.is_null() {
        drop(Box::from_raw(dev));
    }
}

/// Terminal probabilities for a tuning, sidebands included.
///
/// # Safety
/// `dev` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfc_detection_probs(dev: *const CfcDevice, preset: CfcPreset, out: *mut CfcProbs) -> CfcStatus {
    guard(|| {
        let d = device(dev)?;
        if out.is_null() {
            return Err(null());
        }
        let c = build_unfolded(&d.cfg, Tuning::preset(preset.into())).map_err(fail)?;
        let p = c.detection_probs().map_err(fail)?;
        *out = CfcProbs { d0: p.d0, d1: p.d1, lost: p.lost };
        Ok(())
    })
}

/// Attenuator transmission that nulls D0 with the shutters inserted.
///
/// # Safety
/// `dev` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfc_balance_attenuator(dev: *const CfcDevice, out: *mut f64) -> CfcStatus {
    guard(|| {
        let d = device(dev)?;
        if out.is_null() {
            return Err(null());
        }
        *out = balance_attenuator(&d.cfg, Tuning::preset(Preset::Bit1)).map_err(fail)?;
        Ok(())
    })
}

/// Weak trace per arm as a JSON object `{arm: trace}`.
///
/// # Safety
/// `dev` must be a live handle, `detector` a NUL-terminated string and
/// `out` a valid pointer. Free the result with `cfc_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cfc_weak_trace_json(
    dev: *const CfcDevice,
    preset: CfcPreset,
    detector: *const c_char,
    out: *mut *mut c_char,
) -> CfcStatus {
    guard(|| {
        let d = device(dev)?;
        let det = read_str(detector)?;
        let v = cfcomm::cli::trace_json(&d.cfg, preset.into(), det).map_err(fail)?;
        put_string(out, v.to_string())
    })
}

/// Source cascade report as JSON.
///
/// # Safety
/// `dev` must be a live handle and `out` a valid pointer. Free the result
/// with `cfc_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cfc_source_filter_json(dev: *const CfcDevice, out: *mut *mut c_char) -> CfcStatus {
    guard(|| {
        let d = device(dev)?;
        let e = &d.cfg.etalons;
        let r = cfcomm::spectral::source_filter_cascade(&e.source, e.raw_linewidth_ghz, e.cascade_window_ghz)
            .map_err(fail)?;
        put_string(out, serde_json::to_string(&r).map_err(|e| fail(e.into()))?)
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
