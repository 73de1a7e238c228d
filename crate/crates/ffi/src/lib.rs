//! C ABI over the `fuseconv` crate.
//!
//! Networks are opaque [`FcNetwork`] handles created by
//! [`fc_network_builtin`], [`fc_network_load`] or [`fc_network_transform`]
//! and released with [`fc_network_free`]. Every fallible call returns an
//! [`FcStatus`]; on failure [`fc_last_error`] describes what went wrong.
//! Results are written through out-pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fuseconv::netmodel::{self, Fraction, NetworkSpec};
use fuseconv::ops::FuseVariant;
use fuseconv::ria;
use fuseconv::sim::{self, ArrayConfig, EstimateMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Parse = 5,
    Transform = 6,
    Estimate = 7,
    Panic = 8,
}

pub const FC_VARIANT_FULL: u32 = 0;
pub const FC_VARIANT_HALF: u32 = 1;
pub const FC_VARIANT_FULL50: u32 = 2;
pub const FC_VARIANT_HALF50: u32 = 3;

pub const FC_MODE_ANALYTICAL: u32 = 0;
pub const FC_MODE_SIMULATE: u32 = 1;

/// Opaque network handle.
pub struct FcNetwork {
    net: NetworkSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

type Failure = (FcStatus, String);

/// Runs `f`, recording its error message and turning panics into
/// [`FcStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FcStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((FcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn network<'a>(p: *const FcNetwork) -> Result<&'a NetworkSpec, Failure> {
    p.as_ref()
        .map(|h| &h.net)
        .ok_or_else(|| (FcStatus::NullPointer, "network handle is null".to_string()))
}

fn check_out<T>(p: *mut T) -> Result<(), Failure> {
    if p.is_null() {
        Err((FcStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn put_network(out: *mut *mut FcNetwork, net: NetworkSpec) {
    *out = Box::into_raw(Box::new(FcNetwork { net }));
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a handle for a builtin network such as `mobilenet-v2`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_network_builtin(name: *const c_char, out: *mut *mut FcNetwork) -> FcStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        check_out(out)?;
        let net = netmodel::builtin(name).map_err(|e| (FcStatus::NotFound, e.to_string()))?;
        put_network(out, net);
        Ok(())
    })
}

/// Loads a network description file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_network_load(path: *const c_char, out: *mut *mut FcNetwork) -> FcStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        check_out(out)?;
        let net = netmodel::load_network(Path::new(path)).map_err(|e| (FcStatus::Parse, e.to_string()))?;
        put_network(out, net);
        Ok(())
    })
}

/// Creates a transformed copy of `net`; `variant` is one of the
/// `FC_VARIANT_*` constants. Partial variants rank layers on a 64x64 array.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_network_transform(net: *const FcNetwork, variant: u32, out: *mut *mut FcNetwork) -> FcStatus {
    guard(|| {
        let net = network(net)?;
        check_out(out)?;
        let (v, fraction) = match variant {
            FC_VARIANT_FULL => (FuseVariant::Full, Fraction::All),
            FC_VARIANT_HALF => (FuseVariant::Half, Fraction::All),
            FC_VARIANT_FULL50 => (FuseVariant::Full, Fraction::Half),
            FC_VARIANT_HALF50 => (FuseVariant::Half, Fraction::Half),
            other => return Err((FcStatus::InvalidArgument, format!("unknown variant {other}"))),
        };
        let t = netmodel::transform_fuse(net, v, fraction).map_err(|e| (FcStatus::Transform, e.to_string()))?;
        put_network(out, t.net);
        Ok(())
    })
}

/// Number of layers in `net`.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_network_layer_count(net: *const FcNetwork, out: *mut usize) -> FcStatus {
    guard(|| {
        let net = network(net)?;
        check_out(out)?;
        *out = net.layers.len();
        Ok(())
    })
}

/// Multiply-accumulate count of the whole network.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_network_macs(net: *const FcNetwork, out: *mut u64) -> FcStatus {
    guard(|| {
        let net = network(net)?;
        check_out(out)?;
        *out = net.total_macs().map_err(|e| (FcStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Stored weights of the whole network.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_network_params(net: *const FcNetwork, out: *mut u64) -> FcStatus {
    guard(|| {
        let net = network(net)?;
        check_out(out)?;
        *out = net.total_params().map_err(|e| (FcStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Total latency in cycles on a `rows x cols` array with broadcast links
/// and serialized folds. `mode` is one of the `FC_MODE_*` constants; `seed`
/// only affects operand values in simulate mode.
///
/// # Safety
/// `net` must be a live handle and `out_cycles` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_estimate_cycles(
    net: *const FcNetwork,
    rows: u32,
    cols: u32,
    mode: u32,
    seed: u64,
    out_cycles: *mut u64,
) -> FcStatus {
    guard(|| {
        let net = network(net)?;
        check_out(out_cycles)?;
        let mode = match mode {
            FC_MODE_ANALYTICAL => EstimateMode::Analytical,
            FC_MODE_SIMULATE => EstimateMode::Simulate,
            other => return Err((FcStatus::InvalidArgument, format!("unknown mode {other}"))),
        };
        let cfg = ArrayConfig::new(rows as usize, cols as usize);
        let report = sim::estimate_network_seeded(net, &cfg, mode, seed).map_err(|e| {
            let status = match e {
                sim::SimError::InvalidArray { .. } => FcStatus::InvalidArgument,
                _ => FcStatus::Estimate,
            };
            (status, e.to_string())
        })?;
        *out_cycles = report.total_cycles;
        Ok(())
    })
}

fn ria_verdict(sys: &ria::RecurrenceSystem) -> Result<i32, Failure> {
    let c = ria::classify(sys).map_err(|e| (FcStatus::InvalidArgument, e.to_string()))?;
    Ok(i32::from(c.is_ria()))
}

/// Classifies a recurrence system given as text; writes 1 for RIA, 0 otherwise.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_is_ria` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_ria_check(text: *const c_char, out_is_ria: *mut i32) -> FcStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        check_out(out_is_ria)?;
        let sys = ria::parse_system(text).map_err(|e| (FcStatus::Parse, e.to_string()))?;
        *out_is_ria = ria_verdict(&sys)?;
        Ok(())
    })
}

/// Classifies a builtin system (`matmul`, `conv1d`, `conv2d_direct`,
/// `conv2d_im2col`); writes 1 for RIA, 0 otherwise.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out_is_ria` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_ria_check_builtin(name: *const c_char, out_is_ria: *mut i32) -> FcStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        check_out(out_is_ria)?;
        let sys = ria::builtin(name).ok_or_else(|| (FcStatus::NotFound, format!("unknown builtin system `{name}`")))?;
        *out_is_ria = ria_verdict(&sys)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_network_free(net: *mut FcNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}
