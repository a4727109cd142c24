//! C interface to ergoflow. Handles are opaque and must be released with the
//! matching `_free`. Every fallible call returns an `EF_*` code; on failure
//! `ergoflow_last_error_message` describes the error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ergoflow::entropy::{fit_growth, section_count, CountEntry, EntropyError, Lattice, Mode};
use ergoflow::sections::{build_pair, SectionError, SectionFamilyPair};
use ergoflow::systems::{
    suspension_distance, FlowHandle, SuspensionPoint, SystemError, SystemKind,
};
use ergoflow::TorusPoint;

pub const EF_OK: i32 = 0;
pub const EF_NULL_POINTER: i32 = 1;
pub const EF_INVALID_ARGUMENT: i32 = 2;
pub const EF_UNSUPPORTED: i32 = 3;
pub const EF_VALIDATION: i32 = 4;
pub const EF_INTERNAL: i32 = 5;

pub const EF_MODE_SPAN: i32 = 0;
pub const EF_MODE_SEP: i32 = 1;

/// Opaque flow handle.
pub struct EfFlow {
    inner: FlowHandle,
}

/// Opaque section pair handle.
pub struct EfPair {
    inner: SectionFamilyPair,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EfConstants {
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub rho: f64,
    pub eps0: f64,
    pub patches: u64,
}

/// Point of the unit-roof suspension over the torus.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EfSuspensionPoint {
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EfGrowthFit {
    pub slope: f64,
    pub endpoint_rate: f64,
    /// 1 when slope and endpoint rate agree within tolerance.
    pub stable: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(i32, String);

impl From<SystemError> for Failure {
    fn from(e: SystemError) -> Self {
        let code = match e {
            SystemError::Unsupported(_) | SystemError::KindMismatch { .. } => EF_UNSUPPORTED,
            _ => EF_INVALID_ARGUMENT,
        };
        Failure(code, e.to_string())
    }
}

impl From<SectionError> for Failure {
    fn from(e: SectionError) -> Self {
        let code = match e {
            SectionError::Unsupported(_) => EF_UNSUPPORTED,
            SectionError::Validation(_) => EF_VALIDATION,
            _ => EF_INVALID_ARGUMENT,
        };
        Failure(code, e.to_string())
    }
}

impl From<EntropyError> for Failure {
    fn from(e: EntropyError) -> Self {
        match e {
            EntropyError::Section(s) => s.into(),
            EntropyError::System(s) => s.into(),
            other => Failure(EF_INVALID_ARGUMENT, other.to_string()),
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EF_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            EF_INTERNAL
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(EF_NULL_POINTER, format!("{what} is null"))
}

/// Creates a flow from a system name such as "cat-suspension".
///
/// # Safety
/// `system` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_flow_new(system: *const c_char, out: *mut *mut EfFlow) -> i32 {
    guard(|| {
        if system.is_null() {
            return Err(null("system"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(system)
            .to_str()
            .map_err(|_| Failure(EF_INVALID_ARGUMENT, "system name is not UTF-8".into()))?;
        let kind: SystemKind = name.parse()?;
        *out = Box::into_raw(Box::new(EfFlow {
            inner: FlowHandle::new(kind),
        }));
        Ok(())
    })
}

/// # Safety
/// `flow` must come from `ergoflow_flow_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_flow_free(flow: *mut EfFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Builds a validated section pair with patch diameter bound `delta`.
///
/// # Safety
/// `flow` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_pair_build(
    flow: *const EfFlow,
    delta: f64,
    out: *mut *mut EfPair,
) -> i32 {
    guard(|| {
        let flow = flow.as_ref().ok_or_else(|| null("flow"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pair = build_pair(&flow.inner, delta)?;
        *out = Box::into_raw(Box::new(EfPair { inner: pair }));
        Ok(())
    })
}

/// # Safety
/// `pair` must come from `ergoflow_pair_build` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_pair_free(pair: *mut EfPair) {
    if !pair.is_null() {
        drop(Box::from_raw(pair));
    }
}

/// # Safety
/// `pair` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_pair_constants(
    pair: *const EfPair,
    out: *mut EfConstants,
) -> i32 {
    guard(|| {
        let p = &pair.as_ref().ok_or_else(|| null("pair"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = EfConstants {
            eps: p.eps,
            delta: p.delta,
            theta: p.theta,
            rho: p.rho,
            eps0: p.eps0,
            patches: p.layout.patch_count() as u64,
        };
        Ok(())
    })
}

/// Chain-metric distance on a torus suspension.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_suspension_distance(
    flow: *const EfFlow,
    x: *const EfSuspensionPoint,
    y: *const EfSuspensionPoint,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let flow = flow.as_ref().ok_or_else(|| null("flow"))?;
        let (x, y) = (
            x.as_ref().ok_or_else(|| null("x"))?,
            y.as_ref().ok_or_else(|| null("y"))?,
        );
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let map = flow
            .inner
            .base_map()
            .filter(|m| m.acts_on_torus())
            .ok_or_else(|| {
                Failure(
                    EF_UNSUPPORTED,
                    format!("{} is not a torus suspension", flow.inner.kind),
                )
            })?;
        let conv = |p: &EfSuspensionPoint| {
            if [p.x, p.y, p.height].iter().all(|c| c.is_finite()) && (0.0..1.0).contains(&p.height)
            {
                Ok(SuspensionPoint {
                    base: TorusPoint::new(p.x, p.y),
                    height: p.height,
                })
            } else {
                Err(Failure(
                    EF_INVALID_ARGUMENT,
                    "height must lie in [0,1) and coordinates be finite".into(),
                ))
            }
        };
        *out = suspension_distance(&map, &conv(x)?, &conv(y)?)?;
        Ok(())
    })
}

/// Greedy count relative to the pair on a lattice of `grid` points per side
/// in each patch (free symbols for the shift).
///
/// # Safety
/// `pair` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_section_count(
    pair: *const EfPair,
    grid: u32,
    n: u32,
    gamma: f64,
    mode: i32,
    out: *mut u64,
) -> i32 {
    guard(|| {
        let p = &pair.as_ref().ok_or_else(|| null("pair"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mode = match mode {
            EF_MODE_SPAN => Mode::Span,
            EF_MODE_SEP => Mode::Sep,
            m => return Err(Failure(EF_INVALID_ARGUMENT, format!("unknown mode {m}"))),
        };
        let lattice = Lattice::for_layout(&p.layout, grid as usize)?;
        *out = section_count(p, &lattice, n as usize, gamma, mode)? as u64;
        Ok(())
    })
}

/// Least-squares growth rate of ln(count) against n.
///
/// # Safety
/// `ns` and `counts` must point to `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ergoflow_fit_growth(
    ns: *const f64,
    counts: *const u64,
    len: usize,
    out: *mut EfGrowthFit,
) -> i32 {
    guard(|| {
        if ns.is_null() || counts.is_null() {
            return Err(null("input array"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let ns = std::slice::from_raw_parts(ns, len);
        let counts = std::slice::from_raw_parts(counts, len);
        let entries: Vec<CountEntry> = ns
            .iter()
            .zip(counts)
            .map(|(&n, &count)| CountEntry { n, count })
            .collect();
        let fit = fit_growth(&entries)?;
        *out = EfGrowthFit {
            slope: fit.slope,
            endpoint_rate: fit.endpoint_rate,
            stable: fit.stable as i32,
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ergoflow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
