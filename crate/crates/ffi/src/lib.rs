//! C ABI over the experiment pipeline, the tracker and the track assignment.
//!
//! Every fallible call returns a [`VpStatus`]; on failure the message is
//! available from [`vp_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings
//! returned to the caller are released with [`vp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vanet_privacy::experiment::{run_experiment_full, write_experiment, ExperimentConfig, ExperimentResult, RunOutput};
use vanet_privacy::metrics::{assign_tracks, SegmentMatrix};
use vanet_privacy::mtt::{Beacon, Pseudonym, Tracker, TrackerConfig};
use vanet_privacy::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    RuntimeError = 4,
    /// The requested value does not exist for this result.
    NotAvailable = 5,
    Panic = 6,
}

/// Parsed experiment configuration.
pub struct VpConfig {
    cfg: ExperimentConfig,
}

/// Completed experiment with its logs.
pub struct VpRun {
    cfg: ExperimentConfig,
    result: ExperimentResult,
    outputs: Vec<RunOutput>,
}

/// Incremental multi-target tracker.
pub struct VpTracker {
    tracker: Tracker,
}

/// Beacon as seen by the tracker. Heading in radians, counter-clockwise from
/// the x axis.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VpBeacon {
    pub pseudonym: u64,
    pub step: i64,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: VpStatus, msg: impl Into<String>) -> VpStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> VpStatus {
    let status = if e.is_config_error() { VpStatus::ConfigError } else { VpStatus::RuntimeError };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> VpStatus) -> VpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(VpStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, VpStatus> {
    if p.is_null() {
        return Err(fail(VpStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(VpStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(VpStatus::NullArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn into_c_string(s: String, out: *mut *mut c_char) -> VpStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            VpStatus::Ok
        }
        Err(_) => fail(VpStatus::RuntimeError, "string contains a nul byte"),
    }
}

/// Library version, a static nul-terminated string.
#[no_mangle]
pub extern "C" fn vp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn vp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a JSON experiment configuration.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_config_from_json(json: *const c_char, out: *mut *mut VpConfig) -> VpStatus {
    guard(|| {
        non_null!(out);
        let text = tri!(str_arg(json, "json"));
        let cfg = match ExperimentConfig::from_json(text).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(VpConfig { cfg }));
        VpStatus::Ok
    })
}

/// Loads a JSON or TOML configuration file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_config_from_file(path: *const c_char, out: *mut *mut VpConfig) -> VpStatus {
    guard(|| {
        non_null!(out);
        let path = tri!(str_arg(path, "path"));
        let cfg = match ExperimentConfig::load(path).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(VpConfig { cfg }));
        VpStatus::Ok
    })
}

/// Canonical JSON of a configuration.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_config_to_json(cfg: *const VpConfig, out: *mut *mut c_char) -> VpStatus {
    guard(|| {
        non_null!(cfg, out);
        into_c_string((*cfg).cfg.canonical_json(), out)
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vp_config_free(cfg: *mut VpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every repetition of the experiment.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_run(cfg: *const VpConfig, out: *mut *mut VpRun) -> VpStatus {
    guard(|| {
        non_null!(cfg, out);
        let cfg = (*cfg).cfg.clone();
        match run_experiment_full(&cfg) {
            Ok((result, outputs)) => {
                *out = Box::into_raw(Box::new(VpRun { cfg, result, outputs }));
                VpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Seed-mean traceability in percent.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_run_traceability(run: *const VpRun, out: *mut f64) -> VpStatus {
    guard(|| {
        non_null!(run, out);
        *out = (*run).result.summary.pi;
        VpStatus::Ok
    })
}

/// Seed-mean normalized traceability in percent.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_run_normalized_traceability(run: *const VpRun, out: *mut f64) -> VpStatus {
    guard(|| {
        non_null!(run, out);
        *out = (*run).result.summary.pi_norm;
        VpStatus::Ok
    })
}

/// Seed-mean FCW QoS in percent; `NotAvailable` when no repetition produced
/// one.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_run_qos(run: *const VpRun, out: *mut f64) -> VpStatus {
    guard(|| {
        non_null!(run, out);
        match (*run).result.summary.qos {
            Some(q) => {
                *out = q;
                VpStatus::Ok
            }
            None => fail(VpStatus::NotAvailable, "no QoS value was computed"),
        }
    })
}

/// Full result as JSON, to be released with [`vp_string_free`].
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_run_result_json(run: *const VpRun, out: *mut *mut c_char) -> VpStatus {
    guard(|| {
        non_null!(run, out);
        match serde_json::to_string_pretty(&(*run).result) {
            Ok(s) => into_c_string(s, out),
            Err(e) => fail(VpStatus::RuntimeError, e.to_string()),
        }
    })
}

/// Writes the run directory below `dir`.
///
/// # Safety
/// `run` must be a live handle; `dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vp_run_write(run: *const VpRun, dir: *const c_char) -> VpStatus {
    guard(|| {
        non_null!(run);
        let dir = tri!(str_arg(dir, "dir"));
        let r = &*run;
        match write_experiment(&r.cfg, &r.result, &r.outputs, Path::new(dir)) {
            Ok(_) => VpStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vp_run_free(run: *mut VpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Creates a tracker from a JSON tracker configuration, or the defaults when
/// `json` is null.
///
/// # Safety
/// `json` must be null or a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_tracker_new(json: *const c_char, out: *mut *mut VpTracker) -> VpStatus {
    guard(|| {
        non_null!(out);
        let cfg = if json.is_null() {
            TrackerConfig::default()
        } else {
            match serde_json::from_str::<TrackerConfig>(tri!(str_arg(json, "json"))) {
                Ok(c) => c,
                Err(e) => return fail(VpStatus::ConfigError, e.to_string()),
            }
        };
        if let Err(e) = cfg.validate() {
            return from_error(e);
        }
        *out = Box::into_raw(Box::new(VpTracker { tracker: Tracker::new(cfg) }));
        VpStatus::Ok
    })
}

/// Feeds the beacons of step `step`. When `out_track_ids` is not null it
/// receives, per beacon, the id of the track it was assigned to.
///
/// # Safety
/// `beacons` must point to `n` readable beacons (or be null with `n == 0`);
/// `out_track_ids`, if not null, to `n` writable slots.
#[no_mangle]
pub unsafe extern "C" fn vp_tracker_step(
    tracker: *mut VpTracker,
    step: i64,
    beacons: *const VpBeacon,
    n: usize,
    out_track_ids: *mut u64,
) -> VpStatus {
    guard(|| {
        non_null!(tracker);
        if n > 0 && beacons.is_null() {
            return fail(VpStatus::NullArgument, "beacons is null");
        }
        let input: Vec<Beacon> = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(beacons, n)
                .iter()
                .map(|b| Beacon {
                    pseudonym: Pseudonym(b.pseudonym),
                    step: b.step,
                    x: b.x,
                    y: b.y,
                    speed: b.speed,
                    heading: b.heading,
                })
                .collect()
        };
        match (*tracker).tracker.step(step, &input) {
            Ok(outcome) => {
                if !out_track_ids.is_null() {
                    let ids = std::slice::from_raw_parts_mut(out_track_ids, n);
                    for u in &outcome.updates {
                        ids[u.beacon_index] = u.track_id;
                    }
                }
                VpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of tracks currently held, active or inactive.
///
/// # Safety
/// `tracker` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn vp_tracker_track_count(tracker: *const VpTracker) -> usize {
    if tracker.is_null() {
        return 0;
    }
    (*tracker).tracker.tracks().len()
}

/// # Safety
/// `tracker` must come from this library and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn vp_tracker_free(tracker: *mut VpTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Optimal track-to-vehicle assignment on a row-major `vehicles × tracks`
/// matrix of segment lengths in steps. `out_track` receives the assigned
/// column per vehicle or -1; `out_total` the summed assigned length.
///
/// # Safety
/// `lengths` must point to `vehicles * tracks` values; `out_track` to
/// `vehicles` writable slots; `out_total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_assign_tracks(
    lengths: *const i64,
    vehicles: usize,
    tracks: usize,
    out_track: *mut i64,
    out_total: *mut i64,
) -> VpStatus {
    guard(|| {
        non_null!(out_total);
        let Some(cells) = vehicles.checked_mul(tracks) else {
            return fail(VpStatus::ConfigError, "matrix size overflows");
        };
        if cells > 0 && lengths.is_null() {
            return fail(VpStatus::NullArgument, "lengths is null");
        }
        if vehicles > 0 && out_track.is_null() {
            return fail(VpStatus::NullArgument, "out_track is null");
        }
        let flat = if cells == 0 { &[][..] } else { std::slice::from_raw_parts(lengths, cells) };
        if flat.iter().any(|&l| l < 0) {
            return fail(VpStatus::ConfigError, "segment lengths must be non-negative");
        }
        let dense: Vec<Vec<i64>> = (0..vehicles).map(|v| flat[v * tracks..(v + 1) * tracks].to_vec()).collect();
        let mut m = SegmentMatrix::from_dense(&dense, 1.0);
        m.tracks = (0..tracks as u64).collect();
        let a = assign_tracks(&m);
        if vehicles > 0 {
            let out = std::slice::from_raw_parts_mut(out_track, vehicles);
            for (o, t) in out.iter_mut().zip(&a.vehicle_track) {
                *o = t.map_or(-1, |t| t as i64);
            }
        }
        *out_total = a.total_steps;
        VpStatus::Ok
    })
}
