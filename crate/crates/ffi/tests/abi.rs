use std::ffi::{CStr, CString};
use std::ptr;

use gpslam_ffi::*;

fn last_error() -> String {
    let p = gpslam_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { gpslam_string_free(p) };
    s
}

fn config_json(name: &str) -> CString {
    let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_noiseless_round_trip() {
    let cfg = config_json("noiseless.json");
    let mut run = ptr::null_mut();
    let st = unsafe { gpslam_run_from_json(cfg.as_ptr(), GpslamMode::Gp, &mut run) };
    assert_eq!(st, GpslamStatus::Ok);
    assert!(gpslam_last_error_message().is_null());

    let mut ate = f64::NAN;
    assert_eq!(unsafe { gpslam_run_ate(run, &mut ate) }, GpslamStatus::Ok);
    assert!(ate < 1e-9);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gpslam_run_metrics_json(run, &mut json) }, GpslamStatus::Ok);
    let metrics: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(metrics["mode"], "gp");

    let n = unsafe { gpslam_run_pose_count(run) };
    assert!(n > 1);
    let mut c = [0.0; 3];
    assert_eq!(unsafe { gpslam_run_camera_center(run, 0, c.as_mut_ptr()) }, GpslamStatus::Ok);
    assert!(c.iter().all(|x| x.is_finite()));
    assert_eq!(unsafe { gpslam_run_camera_center(run, n, c.as_mut_ptr()) }, GpslamStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let mut tum = ptr::null_mut();
    assert_eq!(unsafe { gpslam_run_trajectory_tum(run, &mut tum) }, GpslamStatus::Ok);
    let tum = CString::new(take_string(tum)).unwrap();
    let mut self_ate = f64::NAN;
    let st = unsafe { gpslam_ate_rmse_tum(tum.as_ptr(), tum.as_ptr(), GpslamAlignment::Similarity, &mut self_ate) };
    assert_eq!(st, GpslamStatus::Ok);
    assert!(self_ate < 1e-12);

    unsafe { gpslam_run_free(run) };
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { gpslam_run_from_json(ptr::null(), GpslamMode::Lp, &mut run) }, GpslamStatus::NullPointer);
    let garbage = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { gpslam_run_from_json(garbage.as_ptr(), GpslamMode::Lp, &mut run) },
        GpslamStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { gpslam_run_from_json(invalid.as_ptr().cast(), GpslamMode::Lp, &mut run) },
        GpslamStatus::InvalidUtf8
    );
    assert!(run.is_null());

    let tum = CString::new("0 0 0 0 0 0 0 1\n").unwrap();
    let mut out = 0.0;
    let st = unsafe { gpslam_ate_rmse_tum(tum.as_ptr(), tum.as_ptr(), GpslamAlignment::Similarity, &mut out) };
    assert_ne!(st, GpslamStatus::Ok);

    // null handles are tolerated where documented
    unsafe {
        gpslam_run_free(ptr::null_mut());
        gpslam_registry_free(ptr::null_mut());
        gpslam_string_free(ptr::null_mut());
        assert_eq!(gpslam_run_pose_count(ptr::null()), 0);
        assert_eq!(gpslam_registry_len(ptr::null()), 0);
    }
}

#[test]
fn fusion_and_registry() {
    let a = [1.0, 0.0, 0.0];
    let b = [-(1.0f64 - 1e-6), 1e-3, 0.0];
    let mut f = [0.0; 3];
    let st = unsafe { gpslam_fuse_directions(a.as_ptr(), 3.0, b.as_ptr(), 1.0, 10.0, 5.0, f.as_mut_ptr()) };
    assert_eq!(st, GpslamStatus::Ok);
    assert!(((f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt() - 1.0).abs() < 1e-12);
    assert!(f[0] > 0.99);

    let orth = [0.0, 1.0, 0.0];
    let st = unsafe { gpslam_fuse_directions(a.as_ptr(), 1.0, orth.as_ptr(), 1.0, 10.0, 5.0, f.as_mut_ptr()) };
    assert_eq!(st, GpslamStatus::InvalidArgument);

    let reg = gpslam_registry_new();
    let dirs = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let support = [5u64, 3];
    let mut ids = [u64::MAX; 2];
    let st =
        unsafe { gpslam_registry_associate(reg, 0, dirs.as_ptr(), support.as_ptr(), 2, 10, 5.0, ids.as_mut_ptr()) };
    assert_eq!(st, GpslamStatus::Ok);
    assert_ne!(ids[0], ids[1]);
    assert_eq!(unsafe { gpslam_registry_len(reg) }, 2);

    // same directions again, flipped sign: no new primitives
    let again = [-1.0, 0.0, 0.0, 0.0, 1.0, 1e-4];
    let mut ids2 = [u64::MAX; 2];
    let st =
        unsafe { gpslam_registry_associate(reg, 1, again.as_ptr(), support.as_ptr(), 2, 10, 5.0, ids2.as_mut_ptr()) };
    assert_eq!(st, GpslamStatus::Ok);
    assert_eq!(ids, ids2);
    assert_eq!(unsafe { gpslam_registry_len(reg) }, 2);

    let mut d = [0.0; 3];
    let mut w = 0.0;
    assert_eq!(unsafe { gpslam_registry_get(reg, 0, d.as_mut_ptr(), &mut w) }, GpslamStatus::Ok);
    assert!(w > 0.0);
    assert_eq!(unsafe { gpslam_registry_get(reg, 2, d.as_mut_ptr(), &mut w) }, GpslamStatus::InvalidArgument);
    unsafe { gpslam_registry_free(reg) };
}

#[test]
fn vanishing_points_from_segments() {
    let vp = (320.0, -900.0);
    let mut segs = Vec::new();
    for i in 0..15 {
        let x = 40.0 * i as f64;
        let (dx, dy) = (vp.0 - x, vp.1 - 400.0);
        let n = (dx * dx + dy * dy).sqrt();
        segs.push(GpslamSegment { id: i, x1: x, y1: 400.0, x2: x + 80.0 * dx / n, y2: 400.0 + 80.0 * dy / n });
    }
    for i in 0..15 {
        let y = 30.0 * i as f64;
        segs.push(GpslamSegment { id: 100 + i, x1: 10.0, y1: y, x2: 90.0, y2: y });
    }
    let mut out = ptr::null_mut();
    let st = unsafe { gpslam_detect_vanishing_points(segs.as_ptr(), segs.len(), 300, 2.0, 3, 1, &mut out) };
    assert_eq!(st, GpslamStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);

    let st = unsafe { gpslam_detect_vanishing_points(ptr::null(), 0, 300, 2.0, 3, 1, &mut out) };
    assert_ne!(st, GpslamStatus::Ok);
}

#[test]
fn mapline_gates() {
    let t = GpslamGateThresholds { tau_s: 0.5, theta_thre: 5.0, d_thre: 10.0, alpha_thre: 5.0, r_thre: 0.3 };
    let obs = GpslamSegment { id: 0, x1: 100.0, y1: 100.0, x2: 300.0, y2: 100.0 };
    let (mut passed, mut mask) = (false, u32::MAX);
    let st = unsafe { gpslam_verify_mapline(&obs, &obs, t, &mut passed, &mut mask) };
    assert_eq!(st, GpslamStatus::Ok);
    assert!(passed);
    assert_eq!(mask, 0);

    let far = GpslamSegment { id: 0, x1: 600.0, y1: 100.0, x2: 800.0, y2: 100.0 };
    let st = unsafe { gpslam_verify_mapline(&obs, &far, t, &mut passed, &mut mask) };
    assert_eq!(st, GpslamStatus::Ok);
    assert!(!passed);
    assert_ne!(mask & GPSLAM_GATE_OVERLAP, 0);

    let point = GpslamSegment { id: 0, x1: 1.0, y1: 1.0, x2: 1.0, y2: 1.0 };
    let st = unsafe { gpslam_verify_mapline(&point, &obs, t, &mut passed, &mut mask) };
    assert_eq!(st, GpslamStatus::InvalidArgument);
}

#[test]
fn header_declares_the_abi() {
    let header = std::fs::read_to_string(format!("{}/include/gpslam.h", env!("CARGO_MANIFEST_DIR"))).unwrap();
    for sym in [
        "gpslam_run_from_json",
        "gpslam_string_free",
        "gpslam_registry_associate",
        "gpslam_verify_mapline",
        "GPSLAM_STATUS_NULL_POINTER",
        "typedef struct GpslamRun GpslamRun",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}
