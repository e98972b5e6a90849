//! C ABI for the `wavemix` estimator.
//!
//! Every function returns a [`WmStatus`]; on failure a message is stored in
//! thread-local storage and can be read with [`wm_last_error`]. Panels and
//! estimates are opaque handles released with their `_free` function.
//! Enumerations are passed as `int32_t` and validated on entry.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wavemix::estimator::{self, Strategy};
use wavemix::{
    dwt, CoefficientTree, CurvePanel, Error, EstimateResult, NoiseScale, Selector, ShrinkageKind,
    ShrinkageRule, TestFunction, ThresholdPolicy, VarianceMode, WaveletFilter,
};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidLength = 2,
    NonFinite = 3,
    Structure = 4,
    Domain = 5,
    InvalidConfig = 6,
    InsufficientReplicates = 7,
    Calibration = 8,
    Input = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmFilter {
    D1 = 1,
    D2 = 2,
    D5 = 5,
    D7 = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmRule {
    Hard = 0,
    Soft = 1,
    Scad = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmSelector {
    Universal = 0,
    Sure = 1,
    Hybrid = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmVariance {
    Het = 0,
    Mad = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmStrategy {
    AverageThenShrink = 0,
    ShrinkThenAverage = 1,
    PointwiseAverage = 2,
}

/// Estimator settings. Fill with [`wm_policy_default`] and adjust.
///
/// `filter`, `rule`, `selector`, `variance` and `strategy` hold values of
/// the matching `Wm*` enumerations.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WmPolicy {
    pub filter: i32,
    pub rule: i32,
    pub scad_a: f64,
    pub selector: i32,
    pub j0: usize,
    pub scale: f64,
    /// Nonzero: thresholds use the per-sample standard deviation instead of
    /// the standard error of the mean.
    pub per_sample_noise: i32,
    pub variance: i32,
    pub strategy: i32,
}

/// Replicate curves, one row per curve.
pub struct WmPanel(CurvePanel);

/// Output of [`wm_estimate`].
pub struct WmEstimate(EstimateResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> WmStatus {
    match err {
        Error::InvalidLength { .. } => WmStatus::InvalidLength,
        Error::NonFinite { .. } => WmStatus::NonFinite,
        Error::Structure(_) => WmStatus::Structure,
        Error::Domain(_) => WmStatus::Domain,
        Error::Config(_) => WmStatus::InvalidConfig,
        Error::InsufficientReplicates { .. } => WmStatus::InsufficientReplicates,
        Error::Calibration(_) => WmStatus::Calibration,
        Error::Input { .. } => WmStatus::Input,
        Error::Cell { source, .. } => status_of(source),
        Error::Io(_) => WmStatus::Io,
    }
}

struct Fail(WmStatus, String);

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        Fail(status_of(&err), err.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> WmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            WmStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            WmStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(WmStatus::NullPointer, format!("`{name}` is null"))
}

fn config(message: String) -> Fail {
    Fail(WmStatus::InvalidConfig, message)
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_out(src: &[f64], out: &mut [f64]) -> FfiResult {
    if out.len() < src.len() {
        return Err(Fail(
            WmStatus::BufferTooSmall,
            format!("buffer holds {} values, need {}", out.len(), src.len()),
        ));
    }
    out[..src.len()].copy_from_slice(src);
    Ok(())
}

fn filter_of(code: i32) -> Result<WaveletFilter, Fail> {
    match code {
        1 | 2 | 5 | 7 => Ok(WaveletFilter::daubechies(code as usize)?),
        _ => Err(config(format!("unknown filter code {code}"))),
    }
}

fn rule_of(code: i32, scad_a: f64) -> Result<ShrinkageRule, Fail> {
    let kind = match code {
        0 => ShrinkageKind::Hard,
        1 => ShrinkageKind::Soft,
        2 => ShrinkageKind::Scad,
        _ => return Err(config(format!("unknown rule code {code}"))),
    };
    Ok(ShrinkageRule::new(kind, scad_a)?)
}

struct Settings {
    filter: WaveletFilter,
    policy: ThresholdPolicy,
    variance: VarianceMode,
    strategy: Strategy,
}

fn settings_of(p: &WmPolicy) -> Result<Settings, Fail> {
    let selector = match p.selector {
        0 => Selector::Universal,
        1 => Selector::Sure,
        2 => Selector::Hybrid,
        c => return Err(config(format!("unknown selector code {c}"))),
    };
    let variance = match p.variance {
        0 => VarianceMode::Heteroscedastic,
        1 => VarianceMode::HomoscedasticMad,
        c => return Err(config(format!("unknown variance code {c}"))),
    };
    let strategy = match p.strategy {
        0 => Strategy::AverageThenShrink,
        1 => Strategy::ShrinkThenAverage,
        2 => Strategy::PointwiseAverage,
        c => return Err(config(format!("unknown strategy code {c}"))),
    };
    let noise_scale = if p.per_sample_noise != 0 { NoiseScale::PerSample } else { NoiseScale::Averaged };
    Ok(Settings {
        filter: filter_of(p.filter)?,
        policy: ThresholdPolicy {
            rule: rule_of(p.rule, p.scad_a)?,
            selector,
            j0: p.j0,
            scale: p.scale,
            noise_scale,
        },
        variance,
        strategy,
    })
}

/// Message of the most recent failed call on this thread, or an empty
/// string. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn wm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a NUL-terminated string with static lifetime.
#[no_mangle]
pub extern "C" fn wm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the default settings: D2 filter, SCAD with a = 3.7, universal
/// thresholds from level 3, heteroscedastic variances, average then shrink.
#[no_mangle]
pub unsafe extern "C" fn wm_policy_default(out: *mut WmPolicy) -> WmStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = ThresholdPolicy::default();
        *out = WmPolicy {
            filter: WmFilter::D2 as i32,
            rule: WmRule::Scad as i32,
            scad_a: d.rule.scad_a(),
            selector: WmSelector::Universal as i32,
            j0: d.j0,
            scale: d.scale,
            per_sample_noise: 0,
            variance: WmVariance::Het as i32,
            strategy: WmStrategy::AverageThenShrink as i32,
        };
        Ok(())
    })
}

/// Copies `n_curves * n_points` row-major values into a new panel.
/// `n_points` must be a power of two >= 2.
#[no_mangle]
pub unsafe extern "C" fn wm_panel_new(
    data: *const f64,
    n_curves: usize,
    n_points: usize,
    out: *mut *mut WmPanel,
) -> WmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = n_curves
            .checked_mul(n_points)
            .ok_or_else(|| Fail(WmStatus::InvalidLength, "panel size overflows".into()))?;
        let values = slice(data, len, "data")?;
        let panel = CurvePanel::from_flat(values.to_vec(), n_curves, n_points)?;
        *out = Box::into_raw(Box::new(WmPanel(panel)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wm_panel_free(panel: *mut WmPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wm_panel_curves(panel: *const WmPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.n())
}

#[no_mangle]
pub unsafe extern "C" fn wm_panel_points(panel: *const WmPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.m())
}

/// Estimates the mean curve. `policy` may be null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn wm_estimate(
    panel: *const WmPanel,
    policy: *const WmPolicy,
    out: *mut *mut WmEstimate,
) -> WmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let panel = panel.as_ref().ok_or_else(|| null("panel"))?;
        let policy = match policy.as_ref() {
            Some(p) => *p,
            None => {
                let mut p = std::mem::zeroed::<WmPolicy>();
                wm_policy_default(&mut p);
                p
            }
        };
        let s = settings_of(&policy)?;
        let result = estimator::estimate(&panel.0, s.filter, s.strategy, &s.policy, s.variance)?;
        *out = Box::into_raw(Box::new(WmEstimate(result)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wm_estimate_free(estimate: *mut WmEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}

/// Number of points in the estimated curve.
#[no_mangle]
pub unsafe extern "C" fn wm_estimate_len(estimate: *const WmEstimate) -> usize {
    estimate.as_ref().map_or(0, |e| e.0.mu_hat.len())
}

/// Copies the estimated curve into `out`, which holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn wm_estimate_curve(estimate: *const WmEstimate, out: *mut f64, len: usize) -> WmStatus {
    guard(|| {
        let e = estimate.as_ref().ok_or_else(|| null("estimate"))?;
        copy_out(&e.0.mu_hat, slice_mut(out, len, "out")?)
    })
}

/// Copies the shrunk coefficients in flat tree layout.
#[no_mangle]
pub unsafe extern "C" fn wm_estimate_coefficients(
    estimate: *const WmEstimate,
    out: *mut f64,
    len: usize,
) -> WmStatus {
    guard(|| {
        let e = estimate.as_ref().ok_or_else(|| null("estimate"))?;
        copy_out(e.0.tree_hat.as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Copies the per-sample coefficient variances in flat tree layout. Fails
/// with `WM_STATUS_INVALID_CONFIG` when the strategy produced none.
#[no_mangle]
pub unsafe extern "C" fn wm_estimate_variances(estimate: *const WmEstimate, out: *mut f64, len: usize) -> WmStatus {
    guard(|| {
        let e = estimate.as_ref().ok_or_else(|| null("estimate"))?;
        let field = e.0.variances.as_ref().ok_or_else(|| config("no variances for this strategy".into()))?;
        copy_out(field.as_tree().as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Orthonormal periodized forward transform of `len` values into `out`
/// (flat tree layout, same length).
#[no_mangle]
pub unsafe extern "C" fn wm_dwt_forward(signal: *const f64, len: usize, filter: i32, out: *mut f64) -> WmStatus {
    guard(|| {
        let filter = filter_of(filter)?;
        let tree = dwt::forward(slice(signal, len, "signal")?, filter)?;
        copy_out(tree.as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Inverse of [`wm_dwt_forward`].
#[no_mangle]
pub unsafe extern "C" fn wm_dwt_inverse(coeffs: *const f64, len: usize, filter: i32, out: *mut f64) -> WmStatus {
    guard(|| {
        let filter = filter_of(filter)?;
        let tree = CoefficientTree::from_flat(slice(coeffs, len, "coeffs")?.to_vec())?;
        let signal = dwt::inverse(&tree, filter)?;
        copy_out(&signal, slice_mut(out, len, "out")?)
    })
}

/// Applies a scalar shrinkage rule. `scad_a` is ignored unless `rule` is SCAD.
#[no_mangle]
pub unsafe extern "C" fn wm_shrink(rule: i32, scad_a: f64, d: f64, lambda: f64, out: *mut f64) -> WmStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = if rule == WmRule::Scad as i32 { scad_a } else { wavemix::shrinkage::DEFAULT_SCAD_A };
        *out = rule_of(rule, a)?.apply(d, lambda)?;
        Ok(())
    })
}

/// Samples a test function (0 blocks, 1 bumps, 2 heavisine, 3 doppler) at
/// `(i + 0.5) / m`.
#[no_mangle]
pub unsafe extern "C" fn wm_test_function(function: i32, m: usize, out: *mut f64) -> WmStatus {
    guard(|| {
        let f = match function {
            0 => TestFunction::Blocks,
            1 => TestFunction::Bumps,
            2 => TestFunction::Heavisine,
            3 => TestFunction::Doppler,
            c => return Err(config(format!("unknown test function code {c}"))),
        };
        copy_out(&f.sample(m)?, slice_mut(out, m, "out")?)
    })
}
