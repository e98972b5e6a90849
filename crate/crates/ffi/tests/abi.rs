use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use wavemix::estimator::{self, Strategy};
use wavemix::{dwt, CurvePanel, ShrinkageRule, ThresholdPolicy, VarianceMode, WaveletFilter};
use wavemix_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(wm_last_error()) }.to_str().unwrap().to_owned()
}

fn noisy_panel(n: usize, m: usize) -> Vec<f64> {
    let truth = wavemix::TestFunction::Heavisine.sample(m).unwrap();
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n {
        for &t in &truth {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            data.push(t + (u - 0.5));
        }
    }
    data
}

#[test]
fn transform_round_trip() {
    let m = 256;
    let signal: Vec<f64> = (0..m).map(|i| ((i * i) % 17) as f64 - 8.0).collect();
    for filter in [WmFilter::D1, WmFilter::D2, WmFilter::D5, WmFilter::D7] {
        let mut coeffs = vec![0.0; m];
        let mut back = vec![0.0; m];
        unsafe {
            assert_eq!(wm_dwt_forward(signal.as_ptr(), m, filter as i32, coeffs.as_mut_ptr()), WmStatus::Ok);
            assert_eq!(wm_dwt_inverse(coeffs.as_ptr(), m, filter as i32, back.as_mut_ptr()), WmStatus::Ok);
        }
        let core = dwt::forward(&signal, WaveletFilter::daubechies(filter as usize).unwrap()).unwrap();
        assert_eq!(coeffs.as_slice(), core.as_slice());
        for (a, b) in signal.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn estimate_matches_the_library() {
    let (n, m) = (12, 128);
    let data = noisy_panel(n, m);
    let mut policy = unsafe { std::mem::zeroed::<WmPolicy>() };
    let mut panel = ptr::null_mut();
    let mut est = ptr::null_mut();
    unsafe {
        assert_eq!(wm_policy_default(&mut policy), WmStatus::Ok);
        policy.selector = WmSelector::Hybrid as i32;
        assert_eq!(wm_panel_new(data.as_ptr(), n, m, &mut panel), WmStatus::Ok);
        assert_eq!(wm_panel_curves(panel), n);
        assert_eq!(wm_panel_points(panel), m);
        assert_eq!(wm_estimate(panel, &policy, &mut est), WmStatus::Ok);
        assert_eq!(wm_estimate_len(est), m);
    }
    let mut curve = vec![0.0; m];
    let mut coeffs = vec![0.0; m];
    let mut variances = vec![0.0; m];
    unsafe {
        assert_eq!(wm_estimate_curve(est, curve.as_mut_ptr(), m), WmStatus::Ok);
        assert_eq!(wm_estimate_coefficients(est, coeffs.as_mut_ptr(), m), WmStatus::Ok);
        assert_eq!(wm_estimate_variances(est, variances.as_mut_ptr(), m), WmStatus::Ok);
        wm_estimate_free(est);
        wm_panel_free(panel);
    }

    let core_panel = CurvePanel::from_flat(data, n, m).unwrap();
    let core_policy = ThresholdPolicy { selector: wavemix::Selector::Hybrid, ..ThresholdPolicy::default() };
    let core = estimator::estimate(
        &core_panel,
        WaveletFilter::daubechies(2).unwrap(),
        Strategy::AverageThenShrink,
        &core_policy,
        VarianceMode::Heteroscedastic,
    )
    .unwrap();
    assert_eq!(curve, core.mu_hat);
    assert_eq!(coeffs.as_slice(), core.tree_hat.as_slice());
    assert_eq!(variances.as_slice(), core.variances.unwrap().as_tree().as_slice());
}

#[test]
fn null_policy_means_defaults() {
    let (n, m) = (5, 64);
    let data = noisy_panel(n, m);
    let mut policy = unsafe { std::mem::zeroed::<WmPolicy>() };
    let mut panel = ptr::null_mut();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    let (mut x, mut y) = (vec![0.0; m], vec![0.0; m]);
    unsafe {
        wm_policy_default(&mut policy);
        wm_panel_new(data.as_ptr(), n, m, &mut panel);
        assert_eq!(wm_estimate(panel, ptr::null(), &mut a), WmStatus::Ok);
        assert_eq!(wm_estimate(panel, &policy, &mut b), WmStatus::Ok);
        wm_estimate_curve(a, x.as_mut_ptr(), m);
        wm_estimate_curve(b, y.as_mut_ptr(), m);
        wm_estimate_free(a);
        wm_estimate_free(b);
        wm_panel_free(panel);
    }
    assert_eq!(x, y);
}

#[test]
fn error_codes() {
    let data = noisy_panel(1, 64);
    let mut out = [0.0; 64];
    let mut panel = ptr::null_mut();
    let mut est = ptr::null_mut();
    unsafe {
        assert_eq!(wm_dwt_forward(ptr::null(), 64, 2, out.as_mut_ptr()), WmStatus::NullPointer);
        assert!(last_error().contains("signal"));
        assert_eq!(wm_dwt_forward(data.as_ptr(), 64, 3, out.as_mut_ptr()), WmStatus::InvalidConfig);
        assert!(last_error().contains('3'));
        assert_eq!(wm_dwt_forward(data.as_ptr(), 48, 2, out.as_mut_ptr()), WmStatus::InvalidLength);
        assert_eq!(wm_shrink(9, 3.7, 1.0, 0.5, out.as_mut_ptr()), WmStatus::InvalidConfig);
        assert_eq!(wm_shrink(WmRule::Soft as i32, 0.0, 1.0, -1.0, out.as_mut_ptr()), WmStatus::Domain);
        assert_eq!(wm_shrink(WmRule::Scad as i32, 1.5, 1.0, 0.5, out.as_mut_ptr()), WmStatus::InvalidConfig);
        assert_eq!(wm_test_function(7, 64, out.as_mut_ptr()), WmStatus::InvalidConfig);
        assert_eq!(wm_panel_new(data.as_ptr(), 1, 64, ptr::null_mut()), WmStatus::NullPointer);

        // a single curve cannot give heteroscedastic variances
        assert_eq!(wm_panel_new(data.as_ptr(), 1, 64, &mut panel), WmStatus::Ok);
        assert_eq!(wm_estimate(panel, ptr::null(), &mut est), WmStatus::InsufficientReplicates);
        assert!(est.is_null());
        assert!(!last_error().is_empty());

        let mut policy = std::mem::zeroed::<WmPolicy>();
        wm_policy_default(&mut policy);
        policy.variance = WmVariance::Mad as i32;
        assert_eq!(wm_estimate(panel, &policy, &mut est), WmStatus::Ok);
        assert_eq!(wm_estimate_curve(est, out.as_mut_ptr(), 10), WmStatus::BufferTooSmall);
        assert_eq!(wm_estimate_curve(est, ptr::null_mut(), 64), WmStatus::NullPointer);
        assert_eq!(wm_estimate_curve(ptr::null(), out.as_mut_ptr(), 64), WmStatus::NullPointer);
        wm_estimate_free(est);

        policy.strategy = 5;
        assert_eq!(wm_estimate(panel, &policy, &mut est), WmStatus::InvalidConfig);
        policy.strategy = WmStrategy::PointwiseAverage as i32;
        assert_eq!(wm_estimate(panel, &policy, &mut est), WmStatus::Ok);
        assert_eq!(wm_estimate_variances(est, out.as_mut_ptr(), 64), WmStatus::InvalidConfig);
        wm_estimate_free(est);
        wm_panel_free(panel);

        let bad = [f64::NAN; 4];
        assert_eq!(wm_panel_new(bad.as_ptr(), 2, 2, &mut panel), WmStatus::NonFinite);
        assert!(panel.is_null());
        assert_eq!(wm_panel_curves(ptr::null()), 0);
        wm_panel_free(ptr::null_mut());
        wm_estimate_free(ptr::null_mut());
    }
}

#[test]
fn shrink_matches_the_library() {
    let mut out = 0.0;
    for (code, rule) in [(0, ShrinkageRule::hard()), (1, ShrinkageRule::soft()), (2, ShrinkageRule::scad())] {
        for d in [-5.0, -1.2, 0.3, 2.0, 7.5] {
            unsafe { assert_eq!(wm_shrink(code, 3.7, d, 1.0, &mut out), WmStatus::Ok) };
            assert_eq!(out, rule.apply(d, 1.0).unwrap());
        }
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(wm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/wavemix.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["wm_estimate", "wm_panel_new", "wm_last_error", "WM_STATUS_BUFFER_TOO_SMALL", "WmPolicy"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(status.success());
}
