use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use multigauss_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mg_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn config_run_and_summary() {
    let name = CString::new("decompose").unwrap();
    let json = CString::new(r#"{"L": 2, "N": 3, "m2": 0.5}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { mg_config_new(name.as_ptr(), json.as_ptr(), &mut cfg) },
        MG_OK
    );

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mg_config_to_json(cfg, &mut s) }, MG_OK);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { mg_string_free(s) };
    assert!(text.contains(r#""m2":0.5"#), "{text}");

    let mut art = ptr::null_mut();
    assert_eq!(unsafe { mg_run(cfg, &mut art) }, MG_OK);
    let mut passed = false;
    assert_eq!(unsafe { mg_artifact_passed(art, &mut passed) }, MG_OK);
    assert!(passed);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mg_artifact_summary_json(art, &mut s) }, MG_OK);
    let summary: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    unsafe { mg_string_free(s) };
    assert!(summary["reconstruction_error"].as_f64().unwrap() < 1e-10);

    let dir = std::env::temp_dir().join(format!("mg-ffi-{}", std::process::id()));
    let cdir = CString::new(dir.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { mg_artifact_write(art, cdir.as_ptr()) }, MG_OK);
    assert!(dir.join("summary.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();
    unsafe {
        mg_artifact_free(art);
        mg_config_free(cfg);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { mg_config_new(bad.as_ptr(), ptr::null(), &mut cfg) },
        MG_ERR_CONFIG
    );
    assert!(last_error().contains("nope"));
    assert!(cfg.is_null());

    let name = CString::new("ginibre").unwrap();
    let json = CString::new(r#"{"J": [[1, 0], [-1, 0]]}"#).unwrap();
    assert_eq!(
        unsafe { mg_config_new(name.as_ptr(), json.as_ptr(), &mut cfg) },
        MG_ERR_INVALID_STEP_DISTRIBUTION
    );
    let unknown = CString::new(r#"{"betta": 1}"#).unwrap();
    assert_eq!(
        unsafe { mg_config_new(name.as_ptr(), unknown.as_ptr(), &mut cfg) },
        MG_ERR_CONFIG
    );
    assert_eq!(
        unsafe { mg_config_new(ptr::null(), ptr::null(), &mut cfg) },
        MG_ERR_NULL
    );
    assert_eq!(
        unsafe { mg_config_new(name.as_ptr(), ptr::null(), ptr::null_mut()) },
        MG_ERR_NULL
    );
    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { mg_config_new(invalid.as_ptr().cast(), ptr::null(), &mut cfg) },
        MG_ERR_UTF8
    );
}

#[test]
fn model_energy_and_exact_moments() {
    let j = CString::new("nn").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { mg_dg_model_new(j.as_ptr(), 2.0, 2, 0.0, true, &mut model) },
        MG_OK
    );
    let h = [0i64, 1, 0, 0];
    let mut e = 0.0;
    assert_eq!(unsafe { mg_dg_energy(model, h.as_ptr(), 4, &mut e) }, MG_OK);
    assert!((e - std::f64::consts::PI.powi(2)).abs() < 1e-12);
    let gauge = [1i64, 0, 0, 0];
    assert_eq!(
        unsafe { mg_dg_energy(model, gauge.as_ptr(), 4, &mut e) },
        MG_ERR_PRECONDITION
    );
    assert_eq!(
        unsafe { mg_dg_energy(model, h.as_ptr(), 3, &mut e) },
        MG_ERR_SIZE_MISMATCH
    );

    let f = [0.0, 0.3, -0.3, 0.0];
    let mut m = MgExactMoments::default();
    assert_eq!(
        unsafe { mg_dg_exact(model, 3, f.as_ptr(), 4, &mut m) },
        MG_OK
    );
    assert!(m.partition > 1.0 && m.second > 0.0 && m.mgf > 1.0 && m.characteristic < 1.0);
    assert!(m.truncation < 1e-6, "{}", m.truncation);
    unsafe { mg_dg_model_free(model) };

    let steps = CString::new("[[1,0],[-1,0],[0,1],[0,-1]]").unwrap();
    assert_eq!(
        unsafe { mg_dg_model_new(steps.as_ptr(), 1.0, 3, 0.0, true, &mut model) },
        MG_OK
    );
    unsafe { mg_dg_model_free(model) };
    assert_eq!(
        unsafe { mg_dg_model_new(j.as_ptr(), -1.0, 3, 0.0, true, &mut model) },
        MG_ERR_PRECONDITION
    );
}

#[test]
fn header_declares_the_interface() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/multigauss.h"))
            .unwrap();
    for name in [
        "mg_config_new",
        "mg_run",
        "mg_artifact_write",
        "mg_dg_exact",
        "typedef struct MgConfig MgConfig",
        "MG_ERR_CONFIG 60",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles and runs a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let target = PathBuf::from(
        std::env::current_exe()
            .unwrap()
            .parent()
            .unwrap()
            .parent()
            .unwrap(),
    );
    let lib = target.join("libmultigauss_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = env!("CARGO_MANIFEST_DIR");
    let exe = std::env::temp_dir().join(format!("mg-c-smoke-{}", std::process::id()));
    let status = Command::new("cc")
        .args([
            &format!("{dir}/tests/c_smoke.c"),
            "-I",
            &format!("{dir}/include"),
            "-o",
        ])
        .arg(&exe)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    std::fs::remove_file(&exe).ok();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0"));
}
