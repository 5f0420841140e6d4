//! C ABI for the skgen workbench.
//!
//! Sources and auxiliary schemes are parsed from the same JSON documents the
//! CLI consumes and handed back as opaque pointers; evaluators fill
//! caller-provided buffers. Every function returns an [`SkStatus`]; on any
//! failure a thread-local message is available through [`sk_last_error`].
//! All rate quantities cross the boundary in nats.

use skgen::cli::{parse_aux, parse_source};
use skgen::hyperc::{self, HcPoint};
use skgen::oneshot::{self, OneShotParams};
use skgen::regions::{self, AuxScheme, SourceSpec};
use skgen::search::SearchConfig;
use skgen::{Error, ErrorClass};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkStatus {
    SkOk = 0,
    /// Structurally invalid arguments (shapes, indices, bad UTF-8).
    SkUsage = 1,
    /// Input data failed validation.
    SkValidation = 2,
    /// A memory or enumeration budget was exceeded.
    SkResource = 3,
    /// A required pointer argument was null.
    SkNullArgument = 4,
    /// Internal panic; the handle state is unchanged.
    SkPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(err: &Error) -> SkStatus {
    match err.class() {
        ErrorClass::Usage => SkStatus::SkUsage,
        ErrorClass::Validation => SkStatus::SkValidation,
        ErrorClass::Resource => SkStatus::SkResource,
    }
}

/// Message for the most recent failure on this thread, or null after a
/// success. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque source handle (joint pmf over Z and the receiver sources).
pub struct SkSource {
    inner: SourceSpec,
}

/// Opaque auxiliary-scheme handle (U-channel plus per-receiver S-channels).
pub struct SkAux {
    inner: AuxScheme,
}

unsafe fn cstr_to_str<'a>(ptr: *const c_char) -> Result<&'a str, SkStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(SkStatus::SkNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("argument is not valid UTF-8: {e}"));
        SkStatus::SkUsage
    })
}

fn guarded(f: impl FnOnce() -> SkStatus) -> SkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            SkStatus::SkPanic
        }
    }
}

/// Parses a source JSON document into a new handle. The caller owns the
/// result and must release it with [`sk_source_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_source_parse_json(
    json: *const c_char,
    out: *mut *mut SkSource,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if out.is_null() {
            set_error("null output pointer".into());
            return SkStatus::SkNullArgument;
        }
        let text = match cstr_to_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_source(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SkSource { inner }));
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                SkStatus::SkValidation
            }
        }
    })
}

/// Releases a source handle; null is ignored.
///
/// # Safety
/// `source` must come from [`sk_source_parse_json`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn sk_source_free(source: *mut SkSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// Number of receivers m, or -1 for a null handle.
///
/// # Safety
/// `source` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sk_source_receivers(source: *const SkSource) -> i32 {
    if source.is_null() {
        return -1;
    }
    (*source).inner.receivers() as i32
}

/// Parses an auxiliary-scheme JSON document against a source's shapes.
///
/// # Safety
/// `json` must be NUL-terminated; `source` a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sk_aux_parse_json(
    json: *const c_char,
    source: *const SkSource,
    out: *mut *mut SkAux,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if source.is_null() || out.is_null() {
            set_error("null handle or output pointer".into());
            return SkStatus::SkNullArgument;
        }
        let text = match cstr_to_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_aux(text, &(*source).inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SkAux { inner }));
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                SkStatus::SkValidation
            }
        }
    })
}

/// Releases an auxiliary-scheme handle; null is ignored.
///
/// # Safety
/// `aux` must come from [`sk_aux_parse_json`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn sk_aux_free(aux: *mut SkAux) {
    if !aux.is_null() {
        drop(Box::from_raw(aux));
    }
}

/// Key rate with unconstrained communication (nats).
///
/// # Safety
/// `source` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_unconstrained_capacity(
    source: *const SkSource,
    out: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if source.is_null() || out.is_null() {
            set_error("null handle or output pointer".into());
            return SkStatus::SkNullArgument;
        }
        *out = regions::unconstrained_capacity(&(*source).inner);
        SkStatus::SkOk
    })
}

/// Extreme point of the general achievable region for a scheme. Writes the
/// key rate and m communication rates (nats).
///
/// # Safety
/// Handles must be live; `comm_rates` must have room for m doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_region_point(
    source: *const SkSource,
    aux: *const SkAux,
    key_rate: *mut f64,
    comm_rates: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if source.is_null() || aux.is_null() || key_rate.is_null() || comm_rates.is_null() {
            set_error("null handle or output pointer".into());
            return SkStatus::SkNullArgument;
        }
        let src = &(*source).inner;
        match regions::achievable_point(src, &(*aux).inner) {
            Ok(point) => {
                *key_rate = point.key_rate;
                let out = std::slice::from_raw_parts_mut(comm_rates, src.receivers());
                out.copy_from_slice(&point.comm_rates);
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Seeded search for the best key rate under per-receiver budgets (nats).
/// Writes the achieved key rate and communication rates.
///
/// # Safety
/// `budgets` must hold `budget_count` doubles; outputs as in
/// [`sk_region_point`].
#[no_mangle]
pub unsafe extern "C" fn sk_maximize_key_rate(
    source: *const SkSource,
    budgets: *const f64,
    budget_count: usize,
    restarts: u64,
    iterations: u64,
    seed: u64,
    key_rate: *mut f64,
    comm_rates: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if source.is_null() || budgets.is_null() || key_rate.is_null() || comm_rates.is_null() {
            set_error("null handle or output pointer".into());
            return SkStatus::SkNullArgument;
        }
        let src = &(*source).inner;
        let budgets = std::slice::from_raw_parts(budgets, budget_count);
        let cfg = SearchConfig {
            restarts,
            iterations,
            seed,
            ..SearchConfig::default()
        };
        match regions::maximize_key_rate(src, budgets, &cfg) {
            Ok((point, _)) => {
                *key_rate = point.key_rate;
                let out = std::slice::from_raw_parts_mut(comm_rates, src.receivers());
                out.copy_from_slice(&point.comm_rates);
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// One-shot achievability bounds at blocklength n: writes m error bounds
/// (clamped to [0,1]) and m secrecy bounds (nats, unclamped).
///
/// # Safety
/// Size arrays must hold the stated counts; each output must have room for
/// m doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_one_shot_bounds(
    source: *const SkSource,
    aux: *const SkAux,
    i_sizes: *const u64,
    i_count: usize,
    j_sizes: *const u64,
    j_count: usize,
    n: usize,
    error_bounds: *mut f64,
    secrecy_bounds: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if source.is_null()
            || aux.is_null()
            || i_sizes.is_null()
            || j_sizes.is_null()
            || error_bounds.is_null()
            || secrecy_bounds.is_null()
        {
            set_error("null handle or output pointer".into());
            return SkStatus::SkNullArgument;
        }
        let src = &(*source).inner;
        let i_sizes = std::slice::from_raw_parts(i_sizes, i_count).to_vec();
        let j_sizes = std::slice::from_raw_parts(j_sizes, j_count).to_vec();
        let params = match OneShotParams::new(i_sizes, j_sizes) {
            Ok(p) => p,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        match oneshot::bounds_for_blocklength(src, &(*aux).inner, &params, n) {
            Ok(b) => {
                let m = src.receivers();
                std::slice::from_raw_parts_mut(error_bounds, m).copy_from_slice(&b.error_effective);
                std::slice::from_raw_parts_mut(secrecy_bounds, m).copy_from_slice(&b.secrecy_raw);
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Zero-rate converse: lower bound on half the total variation between the
/// receivers' key law and the equal-uniform ideal. May be negative.
///
/// # Safety
/// `w_sizes` and `p` must hold `count` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_zero_rate_tv_bound(
    key_size: u64,
    w_sizes: *const u64,
    p: *const f64,
    count: usize,
    out: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if w_sizes.is_null() || p.is_null() || out.is_null() {
            set_error("null argument".into());
            return SkStatus::SkNullArgument;
        }
        let w = std::slice::from_raw_parts(w_sizes, count);
        let p = std::slice::from_raw_parts(p, count).to_vec();
        let point = match HcPoint::new(p) {
            Ok(p) => p,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        match hyperc::zero_rate_tv_bound(key_size, w, &point) {
            Ok(v) => {
                *out = v;
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Degradation margin ln k - sum (1/p_l)(ln k - ln w_l), nats.
///
/// # Safety
/// `w_sizes` and `p` must hold `count` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_zero_rate_margin(
    key_size: f64,
    w_sizes: *const f64,
    p: *const f64,
    count: usize,
    out: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if w_sizes.is_null() || p.is_null() || out.is_null() {
            set_error("null argument".into());
            return SkStatus::SkNullArgument;
        }
        let w = std::slice::from_raw_parts(w_sizes, count);
        let p = std::slice::from_raw_parts(p, count).to_vec();
        let point = match HcPoint::new(p) {
            Ok(p) => p,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        match hyperc::zero_rate_margin(key_size, w, &point) {
            Ok(v) => {
                *out = v;
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Strong data-processing coefficient of the (X_1, X_2) pair of a two
/// receiver source, via the seeded search.
///
/// # Safety
/// `source` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_sdpi_coefficient(
    source: *const SkSource,
    restarts: u64,
    iterations: u64,
    seed: u64,
    out: *mut f64,
) -> SkStatus {
    guarded(|| {
        clear_error();
        if source.is_null() || out.is_null() {
            set_error("null handle or output pointer".into());
            return SkStatus::SkNullArgument;
        }
        let src = &(*source).inner;
        if src.receivers() != 2 {
            set_error(format!(
                "sdpi needs a source with m = 2 receivers, got {}",
                src.receivers()
            ));
            return SkStatus::SkUsage;
        }
        let cfg = SearchConfig {
            restarts,
            iterations,
            seed,
            ..SearchConfig::default()
        };
        match hyperc::sdpi_coefficient(&src.x_marginal(), &cfg) {
            Ok(v) => {
                *out = v;
                SkStatus::SkOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}
