use std::ffi::{c_char, CStr, CString};
use std::ptr;

use lfbl_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        lfbl_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn care_matches_double_integrator() {
    let a = [0.0, 1.0, 0.0, 0.0];
    let b = [0.0, 1.0];
    let q = [1.0, 0.0, 0.0, 1.0];
    let r = [1.0];
    let mut p = [0.0; 4];
    let mut f = [0.0; 2];
    unsafe {
        assert_eq!(lfbl_solve_care(a.as_ptr(), b.as_ptr(), q.as_ptr(), r.as_ptr(), 2, 1, p.as_mut_ptr()), LfblStatus::Ok);
        assert_eq!(lfbl_lqr_gain(a.as_ptr(), b.as_ptr(), q.as_ptr(), r.as_ptr(), 2, 1, f.as_mut_ptr()), LfblStatus::Ok);
    }
    let s3 = 3f64.sqrt();
    for (got, want) in p.iter().zip([s3, 1.0, 1.0, s3]) {
        assert!((got - want).abs() < 1e-9, "{p:?}");
    }
    assert!((f[0] - 1.0).abs() < 1e-9 && (f[1] - s3).abs() < 1e-9);
}

#[test]
fn null_pointers_are_reported() {
    let status = unsafe { lfbl_solve_care(ptr::null(), ptr::null(), ptr::null(), ptr::null(), 2, 1, ptr::null_mut()) };
    assert_eq!(status, LfblStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { lfbl_plan_len(ptr::null()) }, 0);
}

#[test]
fn last_error_truncates_and_reports_length() {
    unsafe { lfbl_config_set_seed(ptr::null_mut(), 1) };
    let full = unsafe { lfbl_last_error(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 4];
    let n = unsafe { lfbl_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert!(n > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn bad_toml_is_invalid_argument() {
    let text = CString::new("seed = \"nope\"").unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { lfbl_config_from_toml(text.as_ptr(), &mut cfg) };
    assert_ne!(status, LfblStatus::Ok);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn vehicle_step_and_nominal_control() {
    let state = [0.0, 0.0, 0.0, 1.0, 0.0];
    let mut next = [0.0; 5];
    let status = unsafe { lfbl_vehicle_step(state.as_ptr(), [0.0, 0.0].as_ptr(), 0.5, 0.5, 0.1, next.as_mut_ptr()) };
    assert_eq!(status, LfblStatus::Ok);
    assert!((next[0] - 0.1).abs() < 1e-12 && next[1].abs() < 1e-12);

    let mut u = [0.0; 2];
    let status = unsafe {
        lfbl_nominal_control(state.as_ptr(), [1.0, 0.0].as_ptr(), 0.5, 0.5, LfblDrift::Exact, 1e-3, u.as_mut_ptr())
    };
    assert_eq!(status, LfblStatus::Ok);
    assert!((u[0] - 1.0).abs() < 1e-12 && u[1].abs() < 1e-12, "{u:?}");

    let stopped = [0.0, 0.0, 0.0, 0.0, 0.0];
    let status = unsafe {
        lfbl_nominal_control(stopped.as_ptr(), [1.0, 0.0].as_ptr(), 0.5, 0.5, LfblDrift::Exact, 1e-3, u.as_mut_ptr())
    };
    assert_eq!(status, LfblStatus::SpeedTooLow);
}

#[test]
fn plan_and_baseline_through_handles() {
    let mut cfg = ptr::null_mut();
    let mut plan = ptr::null_mut();
    unsafe {
        assert_eq!(lfbl_config_default(&mut cfg), LfblStatus::Ok);
        assert_eq!(lfbl_config_set_seed(cfg, 3), LfblStatus::Ok);
        assert_eq!(lfbl_plan_create(cfg, &mut plan), LfblStatus::Ok);
        assert_eq!(lfbl_plan_len(plan), 249);
        let mut s = [0.0; 4];
        assert_eq!(lfbl_plan_state(plan, 248, s.as_mut_ptr()), LfblStatus::Ok);
        assert_eq!(s, [5.0, 0.0, 5.0, 0.0]);
        let mut v = [0.0; 2];
        assert_eq!(lfbl_plan_input(plan, 0, v.as_mut_ptr()), LfblStatus::Ok);
        assert_eq!(lfbl_plan_input(plan, 248, v.as_mut_ptr()), LfblStatus::Dimension);
        let mut obj = 0.0;
        assert_eq!(lfbl_plan_objective(plan, &mut obj), LfblStatus::Ok);
        assert!(obj > 0.0);

        let mut ret = 0.0;
        assert_eq!(lfbl_episode_return(cfg, ptr::null(), &mut ret), LfblStatus::Ok);
        assert!(ret < -1.0 && ret.is_finite(), "{ret}");

        lfbl_plan_free(plan);
        lfbl_config_free(cfg);
    }
}

#[test]
fn policy_round_trip_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    lfbl::learn::CorrectionPolicy::zero(0.1).save(&path).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut pol = ptr::null_mut();
    unsafe {
        assert_eq!(lfbl_policy_load(c_path.as_ptr(), &mut pol), LfblStatus::Ok);
        let mut out = [1.0; 6];
        let state = [0.0, 0.0, 0.3, 2.0, 0.1];
        assert_eq!(lfbl_policy_corrections(pol, state.as_ptr(), out.as_mut_ptr()), LfblStatus::Ok);
        assert_eq!(out, [0.0; 6]);
        lfbl_policy_free(pol);
    }
    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    let status = unsafe { lfbl_policy_load(missing.as_ptr(), &mut pol) };
    assert_eq!(status, LfblStatus::ModelFile);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lfbl.h")).unwrap();
    for name in [
        "lfbl_status_name",
        "lfbl_last_error",
        "lfbl_config_default",
        "lfbl_config_from_toml",
        "lfbl_config_set_seed",
        "lfbl_config_free",
        "lfbl_plan_create",
        "lfbl_plan_len",
        "lfbl_plan_state",
        "lfbl_plan_input",
        "lfbl_plan_objective",
        "lfbl_plan_free",
        "lfbl_solve_care",
        "lfbl_lqr_gain",
        "lfbl_vehicle_step",
        "lfbl_nominal_control",
        "lfbl_policy_load",
        "lfbl_policy_corrections",
        "lfbl_policy_free",
        "lfbl_episode_return",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct LfblPlan LfblPlan;"));
    let ok = unsafe { CStr::from_ptr(lfbl_status_name(LfblStatus::Ok)) };
    assert_eq!(ok.to_str().unwrap(), "ok");
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/lfbl.h");
    let Ok(out) = std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header]).output()
    else {
        eprintln!("no C compiler on PATH; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
