use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use genbound_ffi::*;

fn last_error() -> String {
    let p = gb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn pmf(probs: &[f64]) -> *mut GbPmf {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { gb_pmf_new(probs.as_ptr(), probs.len(), &mut p) }, GbStatus::Ok);
    p
}

#[test]
fn divergences_through_handles() {
    let p = pmf(&[0.5, 0.5]);
    let q = pmf(&[0.9, 0.1]);
    let mut v = 0.0;
    unsafe {
        assert_eq!(gb_pmf_len(p), 2);
        assert_eq!(gb_kl_divergence(p, q, &mut v), GbStatus::Ok);
        let expect = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((v - expect).abs() < 1e-12);
        assert_eq!(gb_renyi_divergence(p, q, 1.001, &mut v), GbStatus::Ok);
        assert!((v - expect).abs() < 1e-3 * (1.0 + expect));
        assert_eq!(gb_entropy(p, &mut v), GbStatus::Ok);
        assert!((v - 2f64.ln()).abs() < 1e-12);
        gb_pmf_free(p);
        gb_pmf_free(q);
        gb_pmf_free(ptr::null_mut());
    }
}

#[test]
fn errors_set_codes_and_messages() {
    let mut p = ptr::null_mut();
    let bad = [0.7, 0.7];
    assert_eq!(
        unsafe { gb_pmf_new(bad.as_ptr(), 2, &mut p) },
        GbStatus::InvalidDistribution
    );
    assert!(p.is_null());
    assert!(last_error().contains("invalid distribution"));
    assert_eq!(unsafe { gb_pmf_new(bad.as_ptr(), 2, ptr::null_mut()) }, GbStatus::NullPointer);
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { gb_variable_size_bound(1.0, 0.5, 10, 0.0, 0.0, &mut r) },
        GbStatus::InvalidArgument
    );
    assert!(last_error().contains("delta"));
    let mut v = 0.0;
    assert_eq!(unsafe { gb_binary_kl_inverse(0.2, 0.1, &mut v) }, GbStatus::Ok);
    assert!(gb_last_error().is_null());
    assert_eq!(unsafe { gb_binary_kl_inverse(1.5, 0.1, &mut v) }, GbStatus::InvalidArgument);
}

#[test]
fn rate_distortion_matches_closed_form() {
    let p = pmf(&[0.5, 0.5]);
    let d = [0.0, 1.0, 1.0, 0.0];
    let mut rate = 0.0;
    for eps in [0.05, 0.1, 0.25] {
        assert_eq!(unsafe { gb_rate_distortion(p, d.as_ptr(), 2, 2, eps, &mut rate) }, GbStatus::Ok);
        let h = -(eps * eps.ln() + (1.0 - eps) * (1.0 - eps).ln());
        assert!((rate - (2f64.ln() - h)).abs() < 1e-5);
    }
    assert_eq!(
        unsafe { gb_rate_distortion(p, d.as_ptr(), 3, 2, 0.1, &mut rate) },
        GbStatus::ShapeMismatch
    );
    unsafe { gb_pmf_free(p) };
}

#[test]
fn bound_report_round_trip() {
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gb_fixed_size_bound(1.0, 0.5, 50, 0.05, 0.01, &mut r) }, GbStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { gb_bound_report_value(r, &mut v) }, GbStatus::Ok);
    let direct = genbound::bounds::fixed_size_bound(1.0, 0.5, 50, 0.05, 0.01).unwrap();
    assert_eq!(v, direct.bound_value);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gb_bound_report_json(r, &mut json) }, GbStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let parsed: genbound::bounds::BoundReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, direct);
    unsafe {
        gb_string_free(json);
        gb_bound_report_free(r);
    }
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gb_fast_rate_bound(0.1, 0.5, 0.5, 100, 0.1, &mut r) }, GbStatus::Ok);
    unsafe { gb_bound_report_free(r) };
}

#[test]
fn run_config_returns_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"command": "bound", "out": {:?}, "params": {{"kind": "fixed_size", "rate": 1.0, "sigma": 0.5, "n": 10, "delta": 0.1}}}}"#,
        dir.path().to_str().unwrap()
    );
    let cfg = CString::new(cfg).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gb_run_config(cfg.as_ptr(), &mut out) }, GbStatus::Ok);
    let manifest = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    assert!(manifest.contains("report.json"));
    unsafe { gb_string_free(out) };
    assert!(dir.path().join("report.json").exists());

    let bad = CString::new(r#"{"command": "bound", "bogus": 1}"#).unwrap();
    assert_eq!(unsafe { gb_run_config(bad.as_ptr(), &mut out) }, GbStatus::Config);
    assert!(last_error().contains("bogus"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("genbound.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "gb_last_error",
        "gb_version",
        "gb_string_free",
        "gb_pmf_new",
        "gb_pmf_free",
        "gb_kl_divergence",
        "gb_rate_distortion",
        "gb_variable_size_bound",
        "gb_bound_report_json",
        "gb_bound_report_free",
        "gb_run_config",
        "GB_STATUS_OK = 0",
        "GB_STATUS_VALIDATION_FAILED = 11",
        "typedef struct GbPmf GbPmf",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

/// Compiles and runs a small C program against the static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; skipping link test");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libgenbound_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
