//! C ABI over `rsf_core`.
//!
//! Networks are opaque heap handles. Every fallible call returns an
//! [`RsfStatus`]; on failure the message is kept per thread and read back
//! with [`rsf_last_error_message`]. Strings handed out by this library are
//! released with [`rsf_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rsf_core::analysis::decision_height;
use rsf_core::config::{parse_config, Format};
use rsf_core::network::{ModifiedNetwork, ReluNetwork};
use rsf_core::{weights, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsfStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad config, parameter or dimension.
    InvalidArgument = 2,
    /// Weight file could not be parsed.
    Malformed = 3,
    /// Singular or ill-conditioned cone during conversion.
    IllConditioned = 4,
    /// The decision function does not have slope -1 in y.
    SlopeCheck = 5,
    /// Input text was not valid UTF-8.
    InvalidUtf8 = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Projection-layer form of a network.
pub struct RsfModifiedNetwork(ModifiedNetwork);

/// Standard ReLU form of a network.
pub struct RsfReluNetwork(ReluNetwork);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RsfStatus {
    match err {
        Error::Malformed(_) | Error::Version { .. } | Error::Json(_) => RsfStatus::Malformed,
        Error::SingularMatrix | Error::IllConditioned { .. } | Error::DegenerateDirection => {
            RsfStatus::IllConditioned
        }
        Error::SlopeCheck { .. } => RsfStatus::SlopeCheck,
        _ => RsfStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), RsfStatus>) -> RsfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsfStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RsfStatus::Panic
        }
    }
}

fn fail(err: Error) -> RsfStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> RsfStatus {
    set_error(format!("{what} is null"));
    RsfStatus::NullPointer
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, RsfStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|e| {
        set_error(format!("{what}: {e}"));
        RsfStatus::InvalidUtf8
    })
}

unsafe fn read_point<'a>(x: *const f64, len: usize, d: usize) -> Result<&'a [f64], RsfStatus> {
    if x.is_null() {
        return Err(null("x"));
    }
    if len != d {
        return Err(fail(Error::DimensionMismatch { expected: d, found: len }));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), RsfStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), RsfStatus> {
    let c = CString::new(s).expect("JSON has no nul bytes");
    write_out(out, c.into_raw())
}

unsafe fn modified<'a>(net: *const RsfModifiedNetwork) -> Result<&'a ModifiedNetwork, RsfStatus> {
    net.as_ref().map(|n| &n.0).ok_or_else(|| null("network"))
}

unsafe fn relu<'a>(net: *const RsfReluNetwork) -> Result<&'a ReluNetwork, RsfStatus> {
    net.as_ref().map(|n| &n.0).ok_or_else(|| null("network"))
}

/// Message for the most recent failure on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rsf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rsf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a network from a JSON build config.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_build(
    config_json: *const c_char,
    out: *mut *mut RsfModifiedNetwork,
) -> RsfStatus {
    guard(|| {
        let text = read_str(config_json, "config")?;
        let config = parse_config(text, Format::Json).map_err(fail)?;
        let (net, _) = ModifiedNetwork::build(&config).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(RsfModifiedNetwork(net))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rsf_modified_from_json(
    json: *const c_char,
    out: *mut *mut RsfModifiedNetwork,
) -> RsfStatus {
    guard(|| {
        let net = weights::modified_from_json(read_str(json, "json")?).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(RsfModifiedNetwork(net))))
    })
}

/// Serializes to a weight file; free the result with [`rsf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_to_json(
    net: *const RsfModifiedNetwork,
    out: *mut *mut c_char,
) -> RsfStatus {
    guard(|| write_string(out, weights::modified_to_json(modified(net)?)))
}

/// Input dimension d, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_dim(net: *const RsfModifiedNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.dim())
}

/// Number of projection layers, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_layer_count(net: *const RsfModifiedNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.layers().len())
}

/// F(x, y) for `x` of length `len`.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_eval(
    net: *const RsfModifiedNetwork,
    x: *const f64,
    len: usize,
    y: f64,
    out: *mut f64,
) -> RsfStatus {
    guard(|| {
        let net = modified(net)?;
        let x = read_point(x, len, net.dim())?;
        write_out(out, net.eval(x, y))
    })
}

/// Height of the zero contour above `x`.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_decision_height(
    net: *const RsfModifiedNetwork,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> RsfStatus {
    guard(|| {
        let net = modified(net)?;
        let x = read_point(x, len, net.dim())?;
        write_out(out, decision_height(net, x).map_err(fail)?)
    })
}

/// Converts to the standard form.
///
/// A `rho` of zero or less selects the network's own evaluation radius.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_convert(
    net: *const RsfModifiedNetwork,
    rho: f64,
    margin: f64,
    out: *mut *mut RsfReluNetwork,
) -> RsfStatus {
    guard(|| {
        let net = modified(net)?;
        let rho = if rho > 0.0 { rho } else { net.evaluation_radius() };
        let relu = net.convert(rho, margin).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(RsfReluNetwork(relu))))
    })
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rsf_modified_free(net: *mut RsfModifiedNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rsf_relu_from_json(json: *const c_char, out: *mut *mut RsfReluNetwork) -> RsfStatus {
    guard(|| {
        let net = weights::relu_from_json(read_str(json, "json")?).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(RsfReluNetwork(net))))
    })
}

/// Serializes to a weight file; free the result with [`rsf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rsf_relu_to_json(net: *const RsfReluNetwork, out: *mut *mut c_char) -> RsfStatus {
    guard(|| write_string(out, weights::relu_to_json(relu(net)?)))
}

/// Input dimension d, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rsf_relu_dim(net: *const RsfReluNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.d)
}

/// Number of ReLU layers, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rsf_relu_layer_count(net: *const RsfReluNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.layers.len())
}

#[no_mangle]
pub unsafe extern "C" fn rsf_relu_eval(
    net: *const RsfReluNetwork,
    x: *const f64,
    len: usize,
    y: f64,
    out: *mut f64,
) -> RsfStatus {
    guard(|| {
        let net = relu(net)?;
        let x = read_point(x, len, net.d)?;
        write_out(out, net.eval(x, y))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rsf_relu_decision_height(
    net: *const RsfReluNetwork,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> RsfStatus {
    guard(|| {
        let net = relu(net)?;
        let x = read_point(x, len, net.d)?;
        write_out(out, decision_height(net, x).map_err(fail)?)
    })
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rsf_relu_free(net: *mut RsfReluNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}
