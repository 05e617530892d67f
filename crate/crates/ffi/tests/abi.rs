use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dxq_ffi::*;

fn last_error() -> String {
    let p = dxq_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn topology(k: usize, v: usize, bn: f64) -> *mut DxqTopology {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { dxq_topology_new(k, v, 450.0, bn, 1.0, &mut t) }, DxqStatus::Ok);
    t
}

#[test]
fn model_through_the_abi() {
    let t = topology(8, 2, 50.0);
    let (mut b, mut s) = (0.0, 0.0);
    unsafe {
        assert_eq!(dxq_broadcast_throughput(t, &mut b), DxqStatus::Ok);
        assert_eq!(dxq_shuffle_throughput(t, &mut s), DxqStatus::Ok);
    }
    assert!((b - 2.0 * 180_000.0 / 3950.0).abs() < 1e-9);
    assert!((s - 200.0).abs() < 1e-9);

    let mut choice = DxqExchangeChoice {
        kind: DxqExchangeKind::Shuffle,
        predicted_time_broadcast: 0.0,
        predicted_time_shuffle: 0.0,
        swapped: false,
    };
    unsafe {
        assert_eq!(dxq_choose_exchange(t, 1e9, 2e9, &mut choice), DxqStatus::Ok);
    }
    assert_eq!(choice.kind, DxqExchangeKind::Broadcast);
    let mut tb = 0.0;
    unsafe {
        assert_eq!(dxq_broadcast_time(t, 1e9, &mut tb), DxqStatus::Ok);
        assert_eq!(dxq_shuffle_time(t, -1.0, &mut tb), DxqStatus::InvalidArgument);
    }
    assert!(!last_error().is_empty());
    unsafe { dxq_topology_free(t) };
}

#[test]
fn errors_come_back_as_status_and_message() {
    let mut t = ptr::null_mut();
    let st = unsafe { dxq_topology_new(0, 2, 450.0, 50.0, 1.0, &mut t) };
    assert_eq!(st, DxqStatus::InvalidTopology);
    assert!(t.is_null());
    assert!(!last_error().is_empty());
    let name = unsafe { CStr::from_ptr(dxq_status_name(st)) };
    assert_eq!(name.to_str().unwrap(), "invalid_topology");

    let mut b = 0.0;
    assert_eq!(
        unsafe { dxq_broadcast_throughput(ptr::null(), &mut b) },
        DxqStatus::NullPointer
    );
    // a later success clears the message
    let t = topology(2, 2, 10.0);
    assert_eq!(unsafe { dxq_broadcast_throughput(t, &mut b) }, DxqStatus::Ok);
    assert!(dxq_last_error_message().is_null());
    unsafe { dxq_topology_free(t) };
}

#[test]
fn run_query_and_read_the_report() {
    let t = topology(2, 2, 12.5);
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { dxq_dataset_generate(0.002, 0.0, 1, &mut ds) }, DxqStatus::Ok);
    let mut rows = 0;
    let lineitem = CString::new("lineitem").unwrap();
    assert_eq!(
        unsafe { dxq_dataset_num_rows(ds, lineitem.as_ptr(), &mut rows) },
        DxqStatus::Ok
    );
    assert!(rows > 0);

    let (q, v) = (CString::new("Q14").unwrap(), CString::new("default").unwrap());
    let mut rep = ptr::null_mut();
    let st = unsafe { dxq_run_query(t, ds, q.as_ptr(), v.as_ptr(), DxqMode::Simulated, &mut rep) };
    assert_eq!(st, DxqStatus::Ok);
    let (mut c, mut s, mut b) = (0.0, 0.0, 0.0);
    let (mut ns, mut nb) = (0, 0);
    unsafe {
        assert_eq!(dxq_report_times(rep, &mut c, &mut s, &mut b), DxqStatus::Ok);
        assert_eq!(dxq_report_exchange_counts(rep, &mut ns, &mut nb), DxqStatus::Ok);
    }
    assert!(c > 0.0 && s > 0.0 && b == 0.0);
    assert_eq!((ns, nb), (1, 0));
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { dxq_report_json(rep, &mut json) }, DxqStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["exchange_counts"], serde_json::json!([1, 0]));
    unsafe {
        dxq_string_free(json);
        dxq_report_free(rep);
    }

    let bad = CString::new("Q2").unwrap();
    let mut rep = ptr::null_mut();
    let st = unsafe { dxq_run_query(t, ds, bad.as_ptr(), v.as_ptr(), DxqMode::InProcess, &mut rep) };
    assert_eq!(st, DxqStatus::Unsupported);
    assert!(rep.is_null());
    unsafe {
        dxq_dataset_free(ds);
        dxq_topology_free(t);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dxq.h")
}

fn cc() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let text = std::fs::read_to_string(header()).unwrap();
    for f in [
        "dxq_topology_new",
        "dxq_run_query",
        "dxq_last_error_message",
        "DXQ_STATUS_MEMORY_CAP",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    for lang in ["c", "c++"] {
        let out = Command::new(&cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(header())
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping link test");
        return;
    };
    // target/<profile>/deps/<test exe> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().parent().unwrap().join("libdxq_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping link test", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "dxq.h"
int main(void) {
    DxqTopology *t = NULL;
    double s = 0;
    if (dxq_topology_new(8, 4, 450.0, 50.0, 1.0, &t) != DXQ_STATUS_OK) return 1;
    if (dxq_shuffle_throughput(t, &s) != DXQ_STATUS_OK) return 2;
    dxq_topology_free(t);
    if (dxq_topology_new(8, 0, 450.0, 50.0, 1.0, &t) == DXQ_STATUS_OK) return 3;
    printf("%.6f %s\n", s, dxq_last_error_message() ? "err" : "none");
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let out = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status);
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "266.666667 err");
}
