use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use spikelab_ffi::*;

const SEMICIRCLE: &str = r#"{"kind":"semicircle","center":0,"radius":2}"#;
const TWO_POINT: &str =
    r#"{"kind":"atomic","carrier":"real","atoms":[{"location":-3,"weight":0.5},{"location":3,"weight":0.5}]}"#;

fn measure(json: &str) -> *mut SpkMeasure {
    let j = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { spk_measure_from_json(j.as_ptr(), &mut m) }, SpkStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = spk_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { spk_string_free(p) };
    s
}

#[test]
fn measure_cauchy_matches_closed_form() {
    let m = measure(TWO_POINT);
    let mut g = SpkComplex::default();
    let st = unsafe { spk_measure_cauchy(m, SpkComplex { re: 5.0, im: 0.0 }, &mut g) };
    assert_eq!(st, SpkStatus::Ok);
    // z/(z² − 9) at z = 5
    assert!((g.re - 5.0 / 16.0).abs() < 1e-15 && g.im == 0.0);
    unsafe { spk_measure_free(m) };
}

#[test]
fn pair_omega_and_support() {
    let (mu, nu) = (measure(TWO_POINT), measure(SEMICIRCLE));
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { spk_pair_new(SpkConvType::AdditiveReal as u32, mu, nu, &mut p) }, SpkStatus::Ok);
    unsafe {
        spk_measure_free(mu);
        spk_measure_free(nu);
    }
    let z = SpkComplex { re: 0.5, im: 1.0 };
    let (mut w1, mut w2, mut g) = (SpkComplex::default(), SpkComplex::default(), SpkComplex::default());
    assert_eq!(unsafe { spk_pair_omega(p, z, &mut w1, &mut w2) }, SpkStatus::Ok);
    assert_eq!(unsafe { spk_pair_cauchy(p, z, &mut g) }, SpkStatus::Ok);
    // ω₁ + ω₂ − z = 1/G
    let (a, b) = (w1.re + w2.re - z.re, w1.im + w2.im - z.im);
    let inv = 1.0 / (g.re * g.re + g.im * g.im);
    assert!((a - g.re * inv).abs() < 1e-10 && (b + g.im * inv).abs() < 1e-10);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { spk_pair_support_json(p, &mut s) }, SpkStatus::Ok);
    let support: Vec<(f64, f64)> = serde_json::from_str(&take_string(s)).unwrap();
    assert_eq!(support.len(), 2);
    assert!((support[1].1 - 4.488).abs() < 2e-3);
    unsafe { spk_pair_free(p) };
}

#[test]
fn errors_are_reported() {
    let bad = CString::new("{\"kind\": \"semicircle\", \"radius\": -1}").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { spk_measure_from_json(bad.as_ptr(), &mut m) }, SpkStatus::Config);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { spk_measure_from_json(ptr::null(), &mut m) }, SpkStatus::NullPointer);
    assert!(last_error().contains("null"));

    let bytes = [0xffu8, 0xfe, 0];
    let st = unsafe { spk_measure_from_json(bytes.as_ptr().cast(), &mut m) };
    assert_eq!(st, SpkStatus::InvalidUtf8);

    let mu = measure(TWO_POINT);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { spk_pair_new(7, mu, mu, &mut p) }, SpkStatus::Config);
    // a real-line measure cannot enter the unitary convolution
    let st = unsafe { spk_pair_new(SpkConvType::MultiplicativeUnitary as u32, mu, mu, &mut p) };
    assert_eq!(st, SpkStatus::Config);
    // the point masses at ±3 are poles of the Cauchy transform
    let mut g = SpkComplex::default();
    let st = unsafe { spk_measure_cauchy(mu, SpkComplex { re: 3.0, im: 0.0 }, &mut g) };
    assert_ne!(st, SpkStatus::Ok);
    unsafe { spk_measure_free(mu) };

    // a successful call clears the message
    let m = measure(SEMICIRCLE);
    assert!(spk_last_error_message().is_null());
    unsafe {
        spk_measure_free(m);
        spk_measure_free(ptr::null_mut());
        spk_string_free(ptr::null_mut());
    }
}

#[test]
fn predict_and_run_json() {
    let cfg = format!(
        r#"{{"model":"additive","measures":{{"mu":{TWO_POINT},"s":{SEMICIRCLE}}},
            "a_side":{{"measure":"mu","spikes":[-5,6]}},
            "b_side":{{"measure":"s","spikes":[7,-10]}},
            "sizes":[100]}}"#
    );
    let c = CString::new(cfg).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { spk_predict_json(c.as_ptr(), &mut out) }, SpkStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    let rhos: Vec<f64> = v["predictions"].as_array().unwrap().iter().map(|p| p["rho"].as_f64().unwrap()).collect();
    assert_eq!(rhos.len(), 6);
    assert!((rhos[1] + 5.3125).abs() < 1e-9);

    let spec = format!(
        r#"{{"model":"additive","n":50,"seed":3,
            "a_side":{{"spikes":[-5],"base_measure":{TWO_POINT}}},
            "b_side":{{"spikes":[],"base_measure":{SEMICIRCLE}}}}}"#
    );
    let c = CString::new(spec).unwrap();
    assert_eq!(unsafe { spk_run_trial_json(c.as_ptr(), 0, &mut out) }, SpkStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(v["eigenvalues"]["real"].as_array().unwrap().len(), 50);
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("spikelab.h").exists());
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    if !lib_dir.join("libspikelab_ffi.a").exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "spikelab.h"
int main(void) {
    SpkMeasure *m = NULL;
    if (spk_measure_from_json("{\"kind\":\"semicircle\",\"center\":0,\"radius\":2}", &m) != SPK_STATUS_OK) return 1;
    SpkComplex z = {3.0, 0.0}, g;
    if (spk_measure_cauchy(m, z, &g) != SPK_STATUS_OK) return 2;
    /* G(3) = (3 - sqrt(5))/2 */
    if (g.re < 0.3819 || g.re > 0.3820) return 3;
    if (spk_measure_from_json("not json", &m) != SPK_STATUS_CONFIG) return 4;
    if (spk_last_error_message() == NULL) return 5;
    spk_measure_free(m);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let bin = tmp.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(lib_dir.join("libspikelab_ffi.a"))
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}
