use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use entropic_agents_ffi::*;

const SCENARIO: &str = r#"{
    "seed": 4,
    "space": {"nodes": 6},
    "kernel": {"type": "replicator_full", "amplitude": 0.05, "width": 1.0},
    "dim": 2,
    "velocity": [{"type": "attraction", "strength": 1.0}],
    "eps": 0.5,
    "agents": 5,
    "horizon": 0.2,
    "record_every": 50,
    "initial": {"sampler": "uniform_ball", "radius": 1.0, "concentration": 1.0}
}"#;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe {
        ea_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn scenario_round_trip() {
    let json = CString::new(SCENARIO).unwrap();
    let mut scenario = ptr::null_mut();
    unsafe {
        assert_eq!(ea_scenario_from_json(json.as_ptr(), &mut scenario), EaStatus::Ok);
        let (mut r, mut upper, mut theta) = (0.0, 0.0, 0.0);
        assert_eq!(ea_box_bounds(scenario, &mut r, &mut upper, &mut theta), EaStatus::Ok);
        assert_eq!((r, upper), (0.5, 2.0));
        assert!(theta > 0.0);

        let mut traj = ptr::null_mut();
        assert_eq!(ea_simulate(scenario, &mut traj), EaStatus::Ok, "{}", last_error());
        let mut len = 0;
        assert_eq!(ea_trajectory_len(traj, &mut len), EaStatus::Ok);
        // 1000 steps recorded every 50, plus the initial state
        assert_eq!(len, 21);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(ea_trajectory_write_csv(traj, cpath.as_ptr()), EaStatus::Ok);
        let csv = std::fs::read_to_string(&path).unwrap();
        assert!(csv.contains("# r_eps=0.5"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 21 * 5);

        ea_trajectory_free(traj);
        ea_scenario_free(scenario);
    }
}

#[test]
fn errors_are_reported() {
    let bad = CString::new(SCENARIO.replace("\"eps\": 0.5", "\"eps\": 0.0")).unwrap();
    let mut scenario = ptr::null_mut();
    unsafe {
        assert_eq!(ea_scenario_from_json(bad.as_ptr(), &mut scenario), EaStatus::Config);
        assert!(scenario.is_null());
        assert!(last_error().contains("entropic box"));
        assert_eq!(ea_scenario_from_json(ptr::null(), &mut scenario), EaStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(
            ea_box_bounds(ptr::null(), &mut v, &mut v, &mut v),
            EaStatus::NullPointer
        );
        ea_scenario_free(ptr::null_mut());
        ea_trajectory_free(ptr::null_mut());
        assert_eq!(ea_last_error_message(ptr::null_mut(), 0), "null pointer argument".len());
    }
}

#[test]
fn numeric_helpers() {
    unsafe {
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0];
        let mut d = 0.0;
        assert_eq!(ea_w1_spatial(a.as_ptr(), 2, b.as_ptr(), 1, 2, &mut d), EaStatus::Ok);
        assert!((d - 0.5 * (1.0 + 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(ea_w1_spatial(a.as_ptr(), 0, b.as_ptr(), 1, 2, &mut d), EaStatus::Config);

        let ell = [1.5, 0.5];
        let mut i = 0.0;
        assert_eq!(ea_negative_entropy(ell.as_ptr(), 2, &mut i), EaStatus::Ok);
        let expected = 0.5 * (1.5 * 1.5f64.ln() + 0.5 * 0.5f64.ln());
        assert!((i - expected).abs() < 1e-15);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/entropic_agents.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "ea_scenario_from_json",
        "ea_simulate",
        "ea_w1_spatial",
        "ea_last_error_message",
        "EA_STATUS_OK",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler found, syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
