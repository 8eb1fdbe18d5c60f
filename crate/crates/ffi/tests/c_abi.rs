use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fluflow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fluflow_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn panel_completion_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ind.csv");
    std::fs::write(
        &path,
        "region,a,b,c\nR1,1,2,\nR2,2,4,6\nR3,3,,9\nR4,4,8,12\nR5,,10,15\n",
    )
    .unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut panel = ptr::null_mut();
    assert_eq!(unsafe { fluflow_panel_load(cpath.as_ptr(), &mut panel) }, FfStatus::Ok);
    let (mut rows, mut cols) = (0, 0);
    assert_eq!(unsafe { fluflow_panel_shape(panel, &mut rows, &mut cols) }, FfStatus::Ok);
    assert_eq!((rows, cols), (5, 3));

    let mut done = ptr::null_mut();
    assert_eq!(unsafe { fluflow_complete(panel, 0, 1, &mut done) }, FfStatus::Ok);
    let (mut rank, mut rmse, mut iters) = (0, 0.0, 0);
    assert_eq!(
        unsafe { fluflow_completion_summary(done, &mut rank, &mut rmse, &mut iters) },
        FfStatus::Ok
    );
    assert!(rank >= 1 && iters >= 1 && rmse.is_finite());
    let mut buf = vec![f64::NAN; 15];
    assert_eq!(unsafe { fluflow_completion_copy(done, buf.as_mut_ptr(), 15) }, FfStatus::Ok);
    assert!(buf.iter().all(|v| v.is_finite()));
    assert_eq!(
        unsafe { fluflow_completion_copy(done, buf.as_mut_ptr(), 14) },
        FfStatus::Validation
    );
    assert!(last_error().contains("buffer"));
    unsafe {
        fluflow_completion_free(done);
        fluflow_panel_free(panel);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut panel = ptr::null_mut();
    let missing = CString::new("/nonexistent/ind.csv").unwrap();
    assert_eq!(unsafe { fluflow_panel_load(missing.as_ptr(), &mut panel) }, FfStatus::Io);
    assert!(panel.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { fluflow_panel_load(ptr::null(), &mut panel) }, FfStatus::NullArgument);
    assert_eq!(unsafe { fluflow_panel_shape(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, FfStatus::NullArgument);
    unsafe { fluflow_panel_free(ptr::null_mut()) };
    assert_eq!(unsafe { fluflow_manifest_len(ptr::null()) }, 0);
    assert!(unsafe { fluflow_report(ptr::null()) }.is_null());
}

#[test]
fn period_of_a_sinusoid() {
    let x: Vec<f64> = (0..260)
        .map(|t| 5.0 + (2.0 * std::f64::consts::PI * t as f64 / 52.0).sin())
        .collect();
    let (mut period, mut k, mut ratio) = (0.0, 0, 0.0);
    let s = unsafe { fluflow_dominant_period(x.as_ptr(), x.len(), 1, &mut period, &mut k, &mut ratio) };
    assert_eq!(s, FfStatus::Ok);
    assert_eq!(k, 5);
    assert!((period - 52.0).abs() < 1e-12 && ratio > 3.0);
    let flat = [1.0; 16];
    let s = unsafe { fluflow_dominant_period(flat.as_ptr(), 16, 1, &mut period, &mut k, &mut ratio) };
    assert_eq!(s, FfStatus::Numeric);
}

#[test]
fn flow_design_against_loops() {
    let n = 3;
    let z = [0.5, -1.0, 2.0];
    let m = [0.0, 0.2, 0.1, 0.3, 0.0, 0.4, 0.5, 0.6, 0.0];
    let t = [0.0, 0.1, 0.0, 0.0, 0.0, 0.2, 0.3, 0.0, 0.0];
    let mut out = [0.0; 24];
    let s = unsafe { fluflow_flow_design(n, z.as_ptr(), m.as_ptr(), t.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(s, FfStatus::Ok);
    for i in 0..n {
        for (block, f) in [m, t].iter().enumerate() {
            let mz: f64 = (0..n).map(|j| f[i * n + j] * z[j]).sum();
            let mz2: f64 = (0..n).map(|j| f[i * n + j] * z[j] * z[j]).sum();
            let want = [mz, z[i] * mz, mz2, z[i] * mz2];
            for c in 0..4 {
                assert!((out[i * 8 + block * 4 + c] - want[c]).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(fluflow_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(header_dir.join("fluflow.h")).unwrap();
    for f in ["fluflow_panel_load", "fluflow_run_pipeline", "fluflow_last_error", "FF_STATUS_IO"] {
        assert!(header.contains(f), "header lacks {f}");
    }
    let lib = target_dir().join("libfluflow_ffi.a");
    if !lib.is_file() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C link check: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "fluflow.h"
int main(void) {
    FfPanel *p = NULL;
    if (fluflow_panel_load("/nonexistent.csv", &p) != FF_STATUS_IO) return 1;
    if (p != NULL || strlen(fluflow_last_error()) == 0) return 2;
    double x[64];
    for (int i = 0; i < 64; i++) x[i] = (i % 8 < 4) ? 1.0 : -1.0;
    double period = 0, ratio = 0; size_t k = 0;
    if (fluflow_dominant_period(x, 64, 1, &period, &k, &ratio) != FF_STATUS_OK) return 3;
    printf("%zu %.1f\n", k, period);
    return k == 8 ? 0 : 4;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "8 8.0");
}
