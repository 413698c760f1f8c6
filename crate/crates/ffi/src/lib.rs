//! C ABI for the gpslam back-end.
//!
//! Every function returns a [`GpslamStatus`]; on failure the message is kept
//! per thread and can be read with [`gpslam_last_error_message`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `*_free` function. Strings returned through `out` parameters are owned by
//! the caller and released with [`gpslam_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gpslam::eval::{ate_rmse_with, parse_tum, Alignment};
use gpslam::lines::{verify_mapline, GateFailure, GateThresholds};
use gpslam::pipeline::{run_config, Mode, PipelineOutput, RunConfig};
use gpslam::primitives::{fuse_directions, GpRegistry, LiftedDirection};
use gpslam::vp::{detect_vanishing_points, Segment2D, VpParams};
use gpslam::Error;
use nalgebra::{Vector2, Vector3};

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpslamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Geometry = 5,
    Optimization = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpslamMode {
    Lp = 0,
    Gp = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpslamAlignment {
    None = 0,
    Rigid = 1,
    Similarity = 2,
}

/// An image segment from `(x1, y1)` to `(x2, y2)`, pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GpslamSegment {
    pub id: u64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GpslamGateThresholds {
    pub tau_s: f64,
    pub theta_thre: f64,
    pub d_thre: f64,
    pub alpha_thre: f64,
    pub r_thre: f64,
}

/// Bits of the failure mask written by [`gpslam_verify_mapline`].
pub const GPSLAM_GATE_MIDPOINT: u32 = 1;
pub const GPSLAM_GATE_PERPENDICULAR: u32 = 2;
pub const GPSLAM_GATE_SENSITIVITY: u32 = 4;
pub const GPSLAM_GATE_OVERLAP: u32 = 8;

/// Result of one pipeline run.
pub struct GpslamRun {
    output: PipelineOutput,
}

/// A registry of fused vanishing directions.
pub struct GpslamRegistry {
    registry: GpRegistry,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GpslamStatus {
    match err {
        Error::Stage { source, .. } => status_of(source),
        Error::Config(_) | Error::UnknownVariable(_) | Error::NotParallel { .. } => GpslamStatus::InvalidArgument,
        Error::Parse { .. } | Error::NonMonotonicTimestamps { .. } | Error::Json(_) => GpslamStatus::Parse,
        Error::GaugeUnfixed => GpslamStatus::Optimization,
        Error::Io(_) => GpslamStatus::Io,
        _ => GpslamStatus::Geometry,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GpslamStatus, String)>) -> GpslamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GpslamStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GpslamStatus::Panic
        }
    }
}

fn fail(err: Error) -> (GpslamStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (GpslamStatus, String) {
    (GpslamStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (GpslamStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|e| (GpslamStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), (GpslamStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|e| (GpslamStatus::Io, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn segment(s: &GpslamSegment) -> Segment2D {
    Segment2D::new(s.id, Vector2::new(s.x1, s.y1), Vector2::new(s.x2, s.y2))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn gpslam_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gpslam_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates and optimizes the scenario described by a JSON run configuration.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_from_json(
    config_json: *const c_char,
    mode: GpslamMode,
    out: *mut *mut GpslamRun,
) -> GpslamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = RunConfig::from_json(read_str(config_json, "config_json")?).map_err(fail)?;
        let mode = match mode {
            GpslamMode::Lp => Mode::Lp,
            GpslamMode::Gp => Mode::Gp,
        };
        let output = run_config(&config, mode).map_err(fail)?;
        *out = Box::into_raw(Box::new(GpslamRun { output }));
        Ok(())
    })
}

/// Metrics of a run as a JSON object.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_metrics_json(run: *const GpslamRun, out: *mut *mut c_char) -> GpslamStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let json = serde_json::to_string(&run.output.metrics).map_err(|e| fail(e.into()))?;
        write_string(out, json)
    })
}

/// Aligned ATE RMSE of the run in meters.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_ate(run: *const GpslamRun, out: *mut f64) -> GpslamStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = run.output.metrics.ate_rmse_m;
        Ok(())
    })
}

/// Number of poses in the estimated trajectory; 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_pose_count(run: *const GpslamRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.estimated.len())
}

/// Estimated camera center of pose `index`, written to `xyz[0..3]`.
///
/// # Safety
/// `run` must be a live handle and `xyz` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_camera_center(run: *const GpslamRun, index: usize, xyz: *mut f64) -> GpslamStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let (_, pose) = run
            .output
            .estimated
            .entries()
            .get(index)
            .ok_or_else(|| (GpslamStatus::InvalidArgument, format!("pose index {index} out of range")))?;
        let c = pose.center();
        std::slice::from_raw_parts_mut(xyz, 3).copy_from_slice(c.as_slice());
        Ok(())
    })
}

/// Trajectory in TUM text format.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_trajectory_tum(run: *const GpslamRun, out: *mut *mut c_char) -> GpslamStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        write_string(out, gpslam::eval::format_tum(&run.output.estimated))
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from [`gpslam_run_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gpslam_run_free(run: *mut GpslamRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Detects vanishing points; the result is a JSON array of
/// `{vp, member_segment_ids, residual_rms}` objects.
///
/// # Safety
/// `segments` must point to `n` segments and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpslam_detect_vanishing_points(
    segments: *const GpslamSegment,
    n: usize,
    hypotheses: usize,
    consensus_deg: f64,
    min_cluster_size: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> GpslamStatus {
    guard(|| {
        if segments.is_null() && n > 0 {
            return Err(null("segments"));
        }
        let segs: Vec<Segment2D> =
            if n == 0 { Vec::new() } else { std::slice::from_raw_parts(segments, n).iter().map(segment).collect() };
        let params = VpParams { hypotheses, consensus_deg, min_cluster_size };
        let vps = detect_vanishing_points(&segs, &params, seed).map_err(fail)?;
        write_string(out, serde_json::to_string(&vps).map_err(|e| fail(e.into()))?)
    })
}

/// Runs the three mapline gates. `failures` receives a `GPSLAM_GATE_*` bitmask.
///
/// # Safety
/// `observed` and `projected` must be valid; `passed` and `failures` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn gpslam_verify_mapline(
    observed: *const GpslamSegment,
    projected: *const GpslamSegment,
    thresholds: GpslamGateThresholds,
    passed: *mut bool,
    failures: *mut u32,
) -> GpslamStatus {
    guard(|| {
        let observed = observed.as_ref().ok_or_else(|| null("observed"))?;
        let projected = projected.as_ref().ok_or_else(|| null("projected"))?;
        let t = GateThresholds {
            tau_s: thresholds.tau_s,
            theta_thre: thresholds.theta_thre,
            d_thre: thresholds.d_thre,
            alpha_thre: thresholds.alpha_thre,
            r_thre: thresholds.r_thre,
        };
        t.validate().map_err(fail)?;
        if (observed.x2 - observed.x1).hypot(observed.y2 - observed.y1) == 0.0 {
            return Err((GpslamStatus::InvalidArgument, "observed segment has zero length".into()));
        }
        let verdict = verify_mapline(0, 0, &segment(observed), &segment(projected), &t);
        if let Some(p) = passed.as_mut() {
            *p = verdict.passed;
        }
        if let Some(f) = failures.as_mut() {
            *f = verdict
                .failures
                .iter()
                .map(|g| match g {
                    GateFailure::Midpoint => GPSLAM_GATE_MIDPOINT,
                    GateFailure::Perpendicular => GPSLAM_GATE_PERPENDICULAR,
                    GateFailure::Sensitivity => GPSLAM_GATE_SENSITIVITY,
                    GateFailure::Overlap => GPSLAM_GATE_OVERLAP,
                })
                .fold(0, |a, b| a | b);
        }
        Ok(())
    })
}

/// Support-weighted fusion of two parallel directions into `out[0..3]`.
///
/// # Safety
/// `d_i` and `d_j` must point to three doubles and `out` to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gpslam_fuse_directions(
    d_i: *const f64,
    n_i: f64,
    d_j: *const f64,
    n_j: f64,
    n_l: f64,
    tol_deg: f64,
    out: *mut f64,
) -> GpslamStatus {
    guard(|| {
        if d_i.is_null() || d_j.is_null() || out.is_null() {
            return Err(null("direction"));
        }
        let a = Vector3::from_column_slice(std::slice::from_raw_parts(d_i, 3));
        let b = Vector3::from_column_slice(std::slice::from_raw_parts(d_j, 3));
        let f = fuse_directions(&a, n_i, &b, n_j, n_l, tol_deg).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(f.as_slice());
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn gpslam_registry_new() -> *mut GpslamRegistry {
    Box::into_raw(Box::new(GpslamRegistry { registry: GpRegistry::new() }))
}

/// Associates the `n` lifted directions of one frame (`directions` holds `3n`
/// doubles, `support` the segment count of each) and writes the primitive id
/// of each direction to `out_ids[0..n]`.
///
/// # Safety
/// `registry` must be live; the arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gpslam_registry_associate(
    registry: *mut GpslamRegistry,
    frame_id: u64,
    directions: *const f64,
    support: *const u64,
    n: usize,
    n_l: usize,
    tol_deg: f64,
    out_ids: *mut u64,
) -> GpslamStatus {
    guard(|| {
        let registry = registry.as_mut().ok_or_else(|| null("registry"))?;
        if n == 0 {
            return Ok(());
        }
        if directions.is_null() || support.is_null() || out_ids.is_null() {
            return Err(null("array"));
        }
        let dirs = std::slice::from_raw_parts(directions, 3 * n);
        let counts = std::slice::from_raw_parts(support, n);
        let mut next_segment = 0u64;
        let lifted: Vec<LiftedDirection> = (0..n)
            .map(|i| {
                let d = Vector3::from_column_slice(&dirs[3 * i..3 * i + 3]);
                let ids = (next_segment..next_segment + counts[i]).collect();
                next_segment += counts[i];
                LiftedDirection { direction: d, segment_ids: ids }
            })
            .collect();
        if lifted.iter().any(|l| !(l.direction.norm() > 0.0 && l.direction.iter().all(|x| x.is_finite()))) {
            return Err((GpslamStatus::InvalidArgument, "directions must be finite and non-zero".into()));
        }
        let ids = registry.registry.associate_frame(frame_id, &lifted, n_l, tol_deg);
        let out = std::slice::from_raw_parts_mut(out_ids, n);
        for (slot, (id, _)) in out.iter_mut().zip(ids) {
            *slot = id;
        }
        Ok(())
    })
}

/// Number of primitives; 0 for a null handle.
///
/// # Safety
/// `registry` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn gpslam_registry_len(registry: *const GpslamRegistry) -> usize {
    registry.as_ref().map_or(0, |r| r.registry.len())
}

/// Direction and support weight of the primitive at `index`.
///
/// # Safety
/// `registry` must be live, `xyz` must point to three writable doubles and
/// `support` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn gpslam_registry_get(
    registry: *const GpslamRegistry,
    index: usize,
    xyz: *mut f64,
    support: *mut f64,
) -> GpslamStatus {
    guard(|| {
        let registry = registry.as_ref().ok_or_else(|| null("registry"))?;
        let gp = registry
            .registry
            .primitives()
            .get(index)
            .ok_or_else(|| (GpslamStatus::InvalidArgument, format!("primitive index {index} out of range")))?;
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        std::slice::from_raw_parts_mut(xyz, 3).copy_from_slice(gp.direction.as_slice());
        if let Some(s) = support.as_mut() {
            *s = gp.support_weight;
        }
        Ok(())
    })
}

/// Releases a registry. Null is ignored.
///
/// # Safety
/// `registry` must come from [`gpslam_registry_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gpslam_registry_free(registry: *mut GpslamRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// ATE RMSE between two trajectories given as TUM text.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gpslam_ate_rmse_tum(
    est_tum: *const c_char,
    ref_tum: *const c_char,
    alignment: GpslamAlignment,
    out: *mut f64,
) -> GpslamStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let est = parse_tum(read_str(est_tum, "est_tum")?).map_err(fail)?;
        let reference = parse_tum(read_str(ref_tum, "ref_tum")?).map_err(fail)?;
        let alignment = match alignment {
            GpslamAlignment::None => Alignment::None,
            GpslamAlignment::Rigid => Alignment::Rigid,
            GpslamAlignment::Similarity => Alignment::Similarity,
        };
        *out = ate_rmse_with(&est, &reference, alignment).map_err(fail)?;
        Ok(())
    })
}
