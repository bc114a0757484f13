use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ndarray::Array2;
use tiara_core::attention::{tiara_slice, AttentionLogits, TiaraParams, VideoLatentSlice};
use tiara_core::spectral::{make_window, WindowKind};
use tiara_ffi::*;

fn window(kind: TiaraWindowKind, len: usize) -> *mut TiaraWindow {
    let mut w = ptr::null_mut();
    assert_eq!(
        unsafe { tiara_window_new(kind, len, &mut w) },
        TiaraStatus::Ok
    );
    w
}

fn last_error() -> String {
    let p = tiara_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn direct_dstft(x: &[f64], w: &[f64], m: i64, k: usize) -> (f64, f64) {
    let n = x.len() as i64;
    let half = (w.len() / 2) as i64;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &c) in w.iter().enumerate() {
        let s = m + j as i64 - half;
        let idx = s.rem_euclid(n);
        let phase = -2.0 * std::f64::consts::PI * (k as i64 * s) as f64 / n as f64;
        re += x[idx as usize] * c * phase.cos();
        im += x[idx as usize] * c * phase.sin();
    }
    (re, im)
}

#[test]
fn window_handle_round_trip() {
    let w = window(TiaraWindowKind::Blackman, 9);
    assert_eq!(unsafe { tiara_window_len(w) }, 9);
    let mut coeffs = [0.0; 9];
    assert_eq!(
        unsafe { tiara_window_coefficients(w, coeffs.as_mut_ptr(), 9) },
        TiaraStatus::Ok
    );
    assert!((coeffs[4] - 1.0).abs() < 1e-15);
    let mut short = [0.0; 4];
    assert_eq!(
        unsafe { tiara_window_coefficients(w, short.as_mut_ptr(), 4) },
        TiaraStatus::Shape
    );
    assert!(last_error().contains("capacity 4"));
    unsafe { tiara_window_free(w) };
    unsafe { tiara_window_free(ptr::null_mut()) };
    assert_eq!(unsafe { tiara_window_len(ptr::null()) }, 0);
}

#[test]
fn zero_length_window_is_a_domain_error() {
    let mut w = ptr::null_mut();
    assert_eq!(
        unsafe { tiara_window_new(TiaraWindowKind::Hann, 0, &mut w) },
        TiaraStatus::Domain
    );
    assert!(w.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    let status = unsafe { tiara_window_new(TiaraWindowKind::Hann, 3, ptr::null_mut()) };
    assert_eq!(status, TiaraStatus::NullPointer);
    assert!(last_error().contains("out"));
    let (mut re, mut im) = (0.0, 0.0);
    let x = [1.0, 2.0];
    let status = unsafe { tiara_dstft(x.as_ptr(), 2, ptr::null(), 0, 0, &mut re, &mut im) };
    assert_eq!(status, TiaraStatus::NullPointer);
    assert!(last_error().contains("window"));
}

#[test]
fn dstft_matches_direct_sum() {
    let w = window(TiaraWindowKind::Hann, 5);
    let mut coeffs = [0.0; 5];
    unsafe { tiara_window_coefficients(w, coeffs.as_mut_ptr(), 5) };
    let x: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    for m in -3..15 {
        for k in 0..12 {
            let (mut re, mut im) = (0.0, 0.0);
            let s = unsafe { tiara_dstft(x.as_ptr(), x.len(), w, m, k, &mut re, &mut im) };
            assert_eq!(s, TiaraStatus::Ok);
            let (er, ei) = direct_dstft(&x, &coeffs, m, k);
            assert!((re - er).abs() < 1e-12 && (im - ei).abs() < 1e-12);
        }
    }
    unsafe { tiara_window_free(w) };
}

#[test]
fn motion_intensity_of_alternation() {
    let w = window(TiaraWindowKind::Blackman, 9);
    let row: Vec<f64> = (0..32)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mut rho = 0.0;
    let s = unsafe { tiara_motion_intensity(row.as_ptr(), 32, w, 10, 0, 0, &mut rho) };
    assert_eq!(s, TiaraStatus::Ok);
    assert!(rho > 0.99, "{rho}");
    let s = unsafe { tiara_motion_intensity(row.as_ptr(), 32, w, 10, 9, 3, &mut rho) };
    assert_eq!(s, TiaraStatus::Domain);
    unsafe { tiara_window_free(w) };
}

#[test]
fn reweight_matches_core() {
    let n = 8;
    let logits: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 11) as f64 / 4.0).collect();
    let values: Vec<f64> = (0..n * 2).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
    let w = window(TiaraWindowKind::Blackman, 5);
    let mut out = vec![0.0; n * 2];
    let mut att = vec![0.0; n * n];
    let s = unsafe {
        tiara_reweight(
            logits.as_ptr(),
            values.as_ptr(),
            n,
            2,
            w,
            6.0,
            -1,
            f64::NAN,
            out.as_mut_ptr(),
            att.as_mut_ptr(),
        )
    };
    assert_eq!(s, TiaraStatus::Ok);
    let expected = tiara_slice(
        &AttentionLogits::new(Array2::from_shape_vec((n, n), logits.clone()).unwrap()).unwrap(),
        &VideoLatentSlice::new(Array2::from_shape_vec((n, 2), values.clone()).unwrap()).unwrap(),
        &TiaraParams::new(make_window(WindowKind::Blackman, 5).unwrap(), 6.0),
    )
    .unwrap();
    assert_eq!(out.as_slice(), expected.output.values().as_slice().unwrap());
    assert_eq!(
        att.as_slice(),
        expected.attention.rows().as_slice().unwrap()
    );
    for row in att.chunks(n) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let s = unsafe {
        tiara_reweight(
            logits.as_ptr(),
            values.as_ptr(),
            n,
            2,
            w,
            6.0,
            2,
            1.0,
            out.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, TiaraStatus::Ok);
    unsafe { tiara_window_free(w) };
}

#[test]
fn inconsistency_of_circulant_output_is_small_and_alpha_closed_form() {
    let w = window(TiaraWindowKind::Rectangular, 16);
    let x = [0.25; 16];
    let mut e = -1.0;
    assert_eq!(
        unsafe { tiara_inconsistency_error(x.as_ptr(), 16, w, 3, 2, &mut e) },
        TiaraStatus::Ok
    );
    assert!(e.abs() < 1e-12);
    assert_eq!(
        unsafe { tiara_inconsistency_error(x.as_ptr(), 16, w, 3, 0, &mut e) },
        TiaraStatus::Domain
    );
    unsafe { tiara_window_free(w) };

    let mut alpha = 0.0;
    assert_eq!(
        unsafe { tiara_alpha_from_closed_form(0.3, 0.9, 0.3, &mut alpha) },
        TiaraStatus::Ok
    );
    let expected = ((1.0 - 0.3 - 0.3 * 0.9) / (0.9 * (1.0 - 0.3) - 0.3_f64)).ln();
    assert!((alpha - expected).abs() < 1e-12);
    assert_ne!(
        unsafe { tiara_alpha_from_closed_form(0.95, 0.9, 0.3, &mut alpha) },
        TiaraStatus::Ok
    );
}

#[test]
fn schedule_blends_between_prompts() {
    let spans = [0usize, 50, 150, 199];
    let mut sched = ptr::null_mut();
    let s = unsafe { tiara_schedule_new(spans.as_ptr(), 2, 0.0, 400.0, 7, &mut sched) };
    assert_eq!(s, TiaraStatus::Ok);
    assert_eq!(unsafe { tiara_schedule_total_frames(sched) }, 200);
    let embedded = [0.0, 0.0, 0.0, 2.0, 4.0, 6.0];
    let mut out = [0.0; 3];
    let s = unsafe {
        tiara_conditioning(
            sched,
            embedded.as_ptr(),
            2,
            1,
            3,
            100,
            10.0,
            0,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(s, TiaraStatus::Ok);
    assert_eq!(out, [1.0, 2.0, 3.0]);
    let s = unsafe {
        tiara_conditioning(
            sched,
            embedded.as_ptr(),
            1,
            1,
            3,
            100,
            10.0,
            0,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(s, TiaraStatus::Shape);
    unsafe { tiara_schedule_free(sched) };

    let bad = [10usize, 5];
    let mut sched = ptr::null_mut();
    let s = unsafe { tiara_schedule_new(bad.as_ptr(), 1, 0.0, 400.0, 7, &mut sched) };
    assert_ne!(s, TiaraStatus::Ok);
    assert!(sched.is_null());
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header_and_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libtiara_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "tiara.h"
int main(void) {
    TiaraWindow *w = NULL;
    if (tiara_window_new(TIARA_WINDOW_KIND_BLACKMAN, 9, &w) != TIARA_STATUS_OK) return 1;
    double x[8] = {1, 0, 0, 0, 0, 0, 0, 0};
    double re = 0, im = 0;
    if (tiara_dstft(x, 8, w, 0, 3, &re, &im) != TIARA_STATUS_OK) return 2;
    tiara_window_free(w);
    if (tiara_window_new(TIARA_WINDOW_KIND_HANN, 0, &w) != TIARA_STATUS_DOMAIN) return 3;
    printf("%.3f %.3f %s\n", re, im, tiara_last_error_message() ? "err" : "none");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "1.000 0.000 err"
    );
}
