//! C ABI over the tradeoff-forge solver.
//!
//! Models and curves are opaque heap handles released with their `_free`
//! function. Every fallible call returns a status code; on failure the
//! message is available from [`tf_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tradeoff_forge::chain::evaluate;
use tradeoff_forge::curve::{build_curve, min_delay, TradeoffCurve};
use tradeoff_forge::error::Error;
use tradeoff_forge::lp::lp_min_delay;
use tradeoff_forge::model::{preset, ModelParams, ThresholdPolicy};
use tradeoff_forge::sim::{simulate, SimConfig};

pub const TF_OK: i32 = 0;
pub const TF_NULL_POINTER: i32 = 1;
pub const TF_VALIDATION: i32 = 2;
pub const TF_INFEASIBLE: i32 = 3;
pub const TF_NUMERICAL: i32 = 4;
pub const TF_MULTICHAIN: i32 = 5;
pub const TF_OUT_OF_RANGE: i32 = 6;
pub const TF_PANIC: i32 = 7;

/// Opaque model parameters.
pub struct TfModel {
    params: ModelParams,
}

/// Opaque tradeoff curve together with the model it was built for.
pub struct TfCurve {
    params: ModelParams,
    curve: TradeoffCurve,
}

/// Answer to a power-budget query.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TfQuery {
    pub delay: f64,
    /// Power spent by the returned policy.
    pub power: f64,
    /// Mixing threshold index, or -1 for a deterministic vertex policy.
    pub s_star: i64,
    /// Probability of sending `s_star` at state `t(s_star)`.
    pub mix_prob: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TfSimResult {
    pub power_mean: f64,
    pub delay_mean: f64,
    pub power_se: f64,
    pub delay_se: f64,
    pub slots_used: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::InfeasibleBudget { .. } => TF_INFEASIBLE,
        Error::MultiChain { .. } => TF_MULTICHAIN,
        Error::NumericalFailure(_)
        | Error::NoConvergence(_)
        | Error::OverflowViolated { .. }
        | Error::UnderflowViolated { .. } => TF_NUMERICAL,
        _ => TF_VALIDATION,
    }
}

/// Runs `f`, recording its error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TF_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            TF_PANIC
        }
    }
}

fn lib(e: Error) -> (i32, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (TF_NULL_POINTER, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (i32, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_ref<'a>(m: *const TfModel) -> Result<&'a TfModel, (i32, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn curve_ref<'a>(c: *const TfCurve) -> Result<&'a TfCurve, (i32, String)> {
    c.as_ref().ok_or_else(|| null("curve"))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), (i32, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a model from explicit parameters; `power` has `max_tx + 1` entries.
///
/// # Safety
/// `power` must point to `power_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_model_new(
    alpha: f64,
    batch: usize,
    max_tx: usize,
    buffer: usize,
    power: *const f64,
    power_len: usize,
    out: *mut *mut TfModel,
) -> i32 {
    guard(|| {
        let power = slice(power, power_len, "power")?.to_vec();
        let params = ModelParams::new(alpha, batch, max_tx, buffer, power).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(TfModel { params })), "out")
    })
}

/// Creates a built-in model ("fig4" or "fig5"); a NaN `alpha` keeps the preset's value.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_model_preset(name: *const c_char, alpha: f64, out: *mut *mut TfModel) -> i32 {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (TF_VALIDATION, "preset name is not UTF-8".to_string()))?;
        let alpha = if alpha.is_nan() { None } else { Some(alpha) };
        let params = preset(name, alpha).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(TfModel { params })), "out")
    })
}

/// # Safety
/// `model` must come from a `tf_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tf_model_free(model: *mut TfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Average power and delay of a deterministic threshold policy (`max_tx + 1` thresholds).
///
/// # Safety
/// Pointers must be valid for the given lengths; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_evaluate_thresholds(
    model: *const TfModel,
    thresholds: *const usize,
    len: usize,
    power_out: *mut f64,
    delay_out: *mut f64,
) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        let t = ThresholdPolicy::deterministic(slice(thresholds, len, "thresholds")?.to_vec());
        let z = evaluate(&m.params, &t.to_policy(&m.params).map_err(lib)?).map_err(lib)?;
        write_out(power_out, z.power, "power_out")?;
        write_out(delay_out, z.delay, "delay_out")
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_curve_build(model: *const TfModel, out: *mut *mut TfCurve) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        let curve = build_curve(&m.params).map_err(lib)?;
        let handle = Box::new(TfCurve {
            params: m.params.clone(),
            curve,
        });
        write_out(out, Box::into_raw(handle), "out")
    })
}

/// # Safety
/// `curve` must come from `tf_curve_build` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tf_curve_free(curve: *mut TfCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tf_curve_len(curve: *const TfCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.curve.vertices.len())
}

/// Vertex `index`, ordered from the highest power (lowest delay).
///
/// # Safety
/// `curve` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_curve_vertex(curve: *const TfCurve, index: usize, power_out: *mut f64, delay_out: *mut f64) -> i32 {
    guard(|| {
        let c = curve_ref(curve)?;
        let v = c
            .curve
            .vertices
            .get(index)
            .ok_or_else(|| (TF_OUT_OF_RANGE, format!("vertex {index} of {}", c.curve.vertices.len())))?;
        write_out(power_out, v.point.power, "power_out")?;
        write_out(delay_out, v.point.delay, "delay_out")
    })
}

/// Minimum delay under `budget`.
///
/// # Safety
/// `curve` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_curve_min_delay(curve: *const TfCurve, budget: f64, out: *mut TfQuery) -> i32 {
    guard(|| {
        let c = curve_ref(curve)?;
        let ans = min_delay(&c.curve, &c.params, budget).map_err(lib)?;
        let (s_star, mix_prob) = ans.policy.mixing.map_or((-1, 1.0), |m| (m.s_star as i64, m.p));
        write_out(
            out,
            TfQuery {
                delay: ans.delay,
                power: ans.power,
                s_star,
                mix_prob,
            },
            "out",
        )
    })
}

/// Serializes the curve as JSON; release the string with `tf_string_free`.
///
/// # Safety
/// `curve` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_curve_to_json(curve: *const TfCurve, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let c = curve_ref(curve)?;
        let text = serde_json::to_string(&c.curve).map_err(|e| (TF_NUMERICAL, e.to_string()))?;
        let s = CString::new(text).map_err(|e| (TF_NUMERICAL, e.to_string()))?;
        write_out(out, s.into_raw(), "out")
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Minimum delay under `budget` from the linear program.
///
/// # Safety
/// `model` must be a live handle; `delay_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_lp_min_delay(model: *const TfModel, budget: f64, delay_out: *mut f64) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        let sol = lp_min_delay(&m.params, budget).map_err(lib)?;
        write_out(delay_out, sol.objective.unwrap_or(f64::NAN), "delay_out")
    })
}

/// Simulates a threshold policy; `mix_s_star < 0` means deterministic.
///
/// # Safety
/// `thresholds` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_simulate_thresholds(
    model: *const TfModel,
    thresholds: *const usize,
    len: usize,
    mix_s_star: i64,
    mix_prob: f64,
    seed: u64,
    slots: u64,
    warmup: u64,
    out: *mut TfSimResult,
) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        let t = slice(thresholds, len, "thresholds")?.to_vec();
        let tp = if mix_s_star < 0 {
            ThresholdPolicy::deterministic(t)
        } else {
            ThresholdPolicy::mixed(t, mix_s_star as usize, mix_prob)
        };
        let policy = tp.to_policy(&m.params).map_err(lib)?;
        let cfg = SimConfig {
            seed,
            slots,
            warmup,
            q0: 0,
        };
        let r = simulate(&m.params, &policy, &cfg).map_err(lib)?;
        write_out(
            out,
            TfSimResult {
                power_mean: r.power_mean,
                delay_mean: r.delay_mean,
                power_se: r.power_se,
                delay_se: r.delay_se,
                slots_used: r.slots_used,
            },
            "out",
        )
    })
}
