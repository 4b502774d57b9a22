//! C ABI over `slipt-core`.
//!
//! Every fallible function returns a [`SliptStatus`]; on failure the
//! message is available from [`slipt_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.
//! Strings returned through `char **` out-parameters are owned by the
//! caller and released with [`slipt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use slipt::channel::{attenuate, geometric_capture, BeamGeometry};
use slipt::engine::{self, resolve_seed, RunOutput};
use slipt::node::{decode_command, encode_command, Command, FRAME_LEN};
use slipt::scenario::{Scenario, ValidationReport};
use slipt::trace::{trace_to_string, TraceFormat};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Validation = 4,
    Domain = 5,
    Frame = 6,
    Runtime = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliptTraceFormat {
    Csv = 0,
    Jsonl = 1,
}

/// A validated scenario.
pub struct SliptScenario {
    inner: Scenario,
}

/// The result of one simulation run.
pub struct SliptRun {
    inner: RunOutput,
}

/// Per-node totals from a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SliptNodeMetrics {
    pub harvested_j: f64,
    pub consumed_j: f64,
    pub initial_stored_j: f64,
    pub final_stored_j: f64,
    pub decoded_bits: f64,
    pub uplink_bits: f64,
    pub outage_s: f64,
    /// Time of the first full charge, or -1 if the store never filled.
    pub first_full_s: f64,
    pub brown_outs: u64,
    pub frames_received: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SliptStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `body`, records any failure and converts panics into `Panic`.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> SliptStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            SliptStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SliptStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SliptStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| Failure(SliptStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    let c = CString::new(s).map_err(|e| Failure(SliptStatus::Runtime, e.to_string()))?;
    unsafe { write_out(out, c.into_raw(), "output string pointer") }
}

fn invalid(report: ValidationReport) -> Failure {
    Failure(SliptStatus::Validation, report.to_string())
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure(SliptStatus::Domain, e.to_string())
}

/// Message for the most recent failure on this thread; empty after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn slipt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slipt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn slipt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

fn store_scenario(text: &str, out: *mut *mut SliptScenario) -> FfiResult<()> {
    let inner = Scenario::from_text(text).map_err(invalid)?;
    let handle = Box::into_raw(Box::new(SliptScenario { inner }));
    unsafe { write_out(out, handle, "scenario output pointer") }.inspect_err(|_| {
        drop(unsafe { Box::from_raw(handle) });
    })
}

/// Parses and validates scenario text (JSON5).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_scenario_from_str(text: *const c_char, out: *mut *mut SliptScenario) -> SliptStatus {
    guard(|| store_scenario(unsafe { read_str(text, "scenario text") }?, out))
}

/// Reads, parses and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_scenario_load(path: *const c_char, out: *mut *mut SliptScenario) -> SliptStatus {
    guard(|| {
        let path = unsafe { read_str(path, "path") }?;
        let text = std::fs::read_to_string(Path::new(path))
            .map_err(|e| Failure(SliptStatus::Io, format!("cannot read scenario `{path}`: {e}")))?;
        store_scenario(&text, out)
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn slipt_scenario_free(scenario: *mut SliptScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Checks scenario text without keeping it. Every problem found is listed
/// in the error message, one per line.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slipt_validate(text: *const c_char) -> SliptStatus {
    guard(|| {
        let text = unsafe { read_str(text, "scenario text") }?;
        let s = Scenario::from_text(text).map_err(invalid)?;
        resolve_seed(&s, None).map_err(invalid)?;
        Ok(())
    })
}

/// SHA-256 of the scenario's canonical JSON, as lowercase hex.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_scenario_hash(scenario: *const SliptScenario, out: *mut *mut c_char) -> SliptStatus {
    guard(|| {
        let s = unsafe { scenario.as_ref() }.ok_or_else(|| null("scenario"))?;
        unsafe { write_string(out, s.inner.hash.clone()) }
    })
}

/// Runs a scenario. `seed` overrides the scenario's own seed; pass null to
/// use the one in the file.
///
/// # Safety
/// `scenario` must be a live handle; `seed` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_run(
    scenario: *const SliptScenario,
    seed: *const u64,
    out: *mut *mut SliptRun,
) -> SliptStatus {
    guard(|| {
        let s = unsafe { scenario.as_ref() }.ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("run output pointer"));
        }
        let seed = resolve_seed(&s.inner, unsafe { seed.as_ref() }.copied()).map_err(invalid)?;
        let inner = engine::run(&s.inner, seed).map_err(|e| Failure(SliptStatus::Runtime, e.to_string()))?;
        unsafe { write_out(out, Box::into_raw(Box::new(SliptRun { inner })), "run output pointer") }
    })
}

/// # Safety
/// `run` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn slipt_run_free(run: *mut SliptRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Run summary as pretty-printed JSON.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_run_summary_json(run: *const SliptRun, out: *mut *mut c_char) -> SliptStatus {
    guard(|| {
        let r = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        unsafe { write_string(out, r.inner.metrics.to_json()) }
    })
}

/// Full event trace, CSV with header or one JSON object per line.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_run_trace(
    run: *const SliptRun,
    format: SliptTraceFormat,
    out: *mut *mut c_char,
) -> SliptStatus {
    guard(|| {
        let r = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        let format = match format {
            SliptTraceFormat::Csv => TraceFormat::Csv,
            SliptTraceFormat::Jsonl => TraceFormat::Jsonl,
        };
        unsafe { write_string(out, trace_to_string(&r.inner.trace, format)) }
    })
}

/// Totals for one node, looked up by id.
///
/// # Safety
/// `run` must be a live handle, `node_id` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_run_node_metrics(
    run: *const SliptRun,
    node_id: *const c_char,
    out: *mut SliptNodeMetrics,
) -> SliptStatus {
    guard(|| {
        let r = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        let id = unsafe { read_str(node_id, "node id") }?;
        let m = r
            .inner
            .metrics
            .nodes
            .get(id)
            .ok_or_else(|| Failure(SliptStatus::Domain, format!("no node `{id}` in this run")))?;
        let metrics = SliptNodeMetrics {
            harvested_j: m.harvested_j,
            consumed_j: m.consumed_j,
            initial_stored_j: m.initial_stored_j,
            final_stored_j: m.final_stored_j,
            decoded_bits: m.decoded_bits,
            uplink_bits: m.uplink_bits,
            outage_s: m.outage_s,
            first_full_s: m.charge_completions_s.first().copied().unwrap_or(-1.0),
            brown_outs: m.brown_outs,
            frames_received: m.frames_received,
        };
        unsafe { write_out(out, metrics, "metrics output pointer") }
    })
}

/// Intensity after `distance` metres of water with total attenuation
/// `alpha` per metre.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_attenuate(intensity: f64, alpha: f64, distance: f64, out: *mut f64) -> SliptStatus {
    guard(|| {
        let v = attenuate(intensity, alpha, distance).map_err(domain)?;
        unsafe { write_out(out, v, "output pointer") }
    })
}

/// Fraction of a top-hat beam caught by a centred circular aperture.
/// Lengths in metres, divergence half-angle in radians.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_geometric_capture(
    beam_radius: f64,
    divergence: f64,
    aperture_radius: f64,
    distance: f64,
    out: *mut f64,
) -> SliptStatus {
    guard(|| {
        let geometry = BeamGeometry {
            initial_radius: beam_radius,
            half_angle_divergence: divergence,
            receiver_aperture_radius: aperture_radius,
            distance,
        };
        let v = geometric_capture(&geometry).map_err(domain)?;
        unsafe { write_out(out, v, "output pointer") }
    })
}

/// Encodes a command such as `SensorOn(3)` or `SendData` into a 4-byte
/// frame.
///
/// # Safety
/// `command` must be a NUL-terminated string; `out` must have room for 4
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn slipt_command_encode(command: *const c_char, out: *mut u8) -> SliptStatus {
    guard(|| {
        let text = unsafe { read_str(command, "command") }?;
        let cmd = Command::parse(text).ok_or_else(|| Failure(SliptStatus::Frame, format!("unknown command `{text}`")))?;
        if out.is_null() {
            return Err(null("frame buffer"));
        }
        let frame = encode_command(cmd);
        unsafe { ptr::copy_nonoverlapping(frame.as_ptr(), out, FRAME_LEN) };
        Ok(())
    })
}

/// Decodes a frame back to its command text.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slipt_command_decode(bytes: *const u8, len: usize, out: *mut *mut c_char) -> SliptStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(null("frame"));
        }
        let frame = unsafe { std::slice::from_raw_parts(bytes, len) };
        let cmd = decode_command(frame).map_err(|e| Failure(SliptStatus::Frame, e.to_string()))?;
        unsafe { write_string(out, cmd.to_string()) }
    })
}
