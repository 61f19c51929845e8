//! C ABI for the collision-recovery physical layer.
//!
//! Conventions:
//! - `GmrxConfig` and `GmrxResults` are opaque; create, use, free.
//! - Fallible calls return a `GmrxStatus`; constructors return null on
//!   failure. Either way `gmrx_last_error` holds a message for the
//!   current thread until the next failing call.
//! - Strings returned as `char*` are owned by the caller and must be
//!   released with `gmrx_string_free`; `const char*` returns are
//!   borrowed and live as long as their parent object.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use gmrx_core::channel::ReceivedFrame;
use gmrx_core::detect::{cross_correlate, detect_second_start};
use gmrx_core::framing::gen_preamble;
use gmrx_core::harness::report::rows_to_csv;
use gmrx_core::gauss::C64;
use gmrx_core::harness::{find_sinr_threshold, run_sweep, ExperimentConfig, Row, Scenario, ThresholdOutcome};

/// Outcome of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmrxStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArg = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// The configuration failed to parse or validate.
    Config = 3,
    /// The simulation itself failed.
    Runtime = 4,
    /// An index or buffer length was out of range.
    Range = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(status: GmrxStatus, msg: impl std::fmt::Display) -> GmrxStatus {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap());
    status
}

/// Simulation configuration handle.
pub struct GmrxConfig {
    inner: ExperimentConfig,
}

/// A finished sweep: one row per (grid point, receiver, metric).
pub struct GmrxResults {
    rows: Vec<Row>,
    // NUL-terminated copies backing GmrxRow's borrowed string fields.
    strings: Vec<[CString; 3]>,
}

impl GmrxResults {
    fn from_rows(rows: Vec<Row>) -> GmrxResults {
        let strings = rows
            .iter()
            .map(|r| {
                [
                    CString::new(r.scenario.clone()).unwrap(),
                    CString::new(r.receiver.clone()).unwrap(),
                    CString::new(r.metric.clone()).unwrap(),
                ]
            })
            .collect();
        GmrxResults { rows, strings }
    }
}

/// One result row. The string pointers borrow from the parent
/// `GmrxResults` and stay valid until it is freed.
#[repr(C)]
pub struct GmrxRow {
    pub scenario: *const c_char,
    pub receiver: *const c_char,
    pub metric: *const c_char,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub value: f64,
    /// Samples the value averages over (symbols, positions, or trials).
    pub count: u64,
    pub trials: u64,
    pub seed: u64,
}

/// Outcome of a threshold search.
#[repr(C)]
pub struct GmrxThreshold {
    /// Nonzero when the ratio crossed the target inside the deficit grid.
    pub found: bool,
    /// Interferer power deficit in dB at the crossing; NaN when not found.
    pub deficit_db: f64,
    /// Largest observed ratio when not found; NaN when found.
    pub max_ratio: f64,
}

/// Message for the most recent failure on this thread. Borrowed; valid
/// until the next failing gmrx call on the same thread.
#[no_mangle]
pub extern "C" fn gmrx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn gmrx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, GmrxStatus> {
    if ptr.is_null() {
        return Err(set_error(GmrxStatus::NullArg, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| set_error(GmrxStatus::Utf8, e))
}

/// A configuration with every field at its default.
#[no_mangle]
pub extern "C" fn gmrx_config_default() -> *mut GmrxConfig {
    Box::into_raw(Box::new(GmrxConfig { inner: ExperimentConfig::default() }))
}

/// Parse a configuration from TOML text. Null on failure.
///
/// # Safety
/// `toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_parse(toml: *const c_char) -> *mut GmrxConfig {
    let Ok(text) = utf8_arg(toml) else { return std::ptr::null_mut() };
    match ExperimentConfig::from_toml(text) {
        Ok(inner) => Box::into_raw(Box::new(GmrxConfig { inner })),
        Err(e) => {
            set_error(GmrxStatus::Config, e);
            std::ptr::null_mut()
        }
    }
}

/// Load a configuration from a TOML file. Null on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_load(path: *const c_char) -> *mut GmrxConfig {
    let Ok(text) = utf8_arg(path) else { return std::ptr::null_mut() };
    match ExperimentConfig::load(Path::new(text)) {
        Ok(inner) => Box::into_raw(Box::new(GmrxConfig { inner })),
        Err(e) => {
            set_error(GmrxStatus::Config, e);
            std::ptr::null_mut()
        }
    }
}

unsafe fn config_mut<'a>(cfg: *mut GmrxConfig) -> Result<&'a mut ExperimentConfig, GmrxStatus> {
    if cfg.is_null() {
        return Err(set_error(GmrxStatus::NullArg, "null config handle"));
    }
    Ok(&mut (*cfg).inner)
}

/// Select the scenario by name: "uncoded", "coded", "detect-prob",
/// "mse", or "threshold".
///
/// # Safety
/// `cfg` must come from a gmrx constructor; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_set_scenario(
    cfg: *mut GmrxConfig,
    name: *const c_char,
) -> GmrxStatus {
    let inner = match config_mut(cfg) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let name = match utf8_arg(name) {
        Ok(n) => n,
        Err(s) => return s,
    };
    let all =
        [Scenario::Uncoded, Scenario::Coded, Scenario::DetectProb, Scenario::Mse, Scenario::Threshold];
    match all.iter().find(|s| s.name() == name) {
        Some(&s) => {
            inner.experiment.scenario = s;
            GmrxStatus::Ok
        }
        None => set_error(GmrxStatus::Config, format!("unknown scenario {name:?}")),
    }
}

/// Set the master seed of the sweep.
///
/// # Safety
/// `cfg` must come from a gmrx constructor.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_set_seed(cfg: *mut GmrxConfig, seed: u64) -> GmrxStatus {
    match config_mut(cfg) {
        Ok(c) => {
            c.experiment.seed = seed;
            GmrxStatus::Ok
        }
        Err(s) => s,
    }
}

/// Set the initial trial count and the auto-extension cap per grid point.
///
/// # Safety
/// `cfg` must come from a gmrx constructor.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_set_trials(
    cfg: *mut GmrxConfig,
    trials: u64,
    max_trials: u64,
) -> GmrxStatus {
    match config_mut(cfg) {
        Ok(c) => {
            c.experiment.trials = trials;
            c.experiment.max_trials = max_trials;
            GmrxStatus::Ok
        }
        Err(s) => s,
    }
}

/// Replace the SNR and interferer-to-desired power ratio grids (dB).
///
/// # Safety
/// `cfg` must come from a gmrx constructor; `snr_db` and `ratio_db`
/// must point to `n_snr` and `n_ratio` doubles.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_set_grid(
    cfg: *mut GmrxConfig,
    snr_db: *const f64,
    n_snr: usize,
    ratio_db: *const f64,
    n_ratio: usize,
) -> GmrxStatus {
    let inner = match config_mut(cfg) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if (snr_db.is_null() && n_snr > 0) || (ratio_db.is_null() && n_ratio > 0) {
        return set_error(GmrxStatus::NullArg, "null grid buffer");
    }
    inner.grid.snr_db = slice::from_raw_parts(snr_db, n_snr).to_vec();
    inner.grid.power_ratio_db = slice::from_raw_parts(ratio_db, n_ratio).to_vec();
    GmrxStatus::Ok
}

/// Set the mixture size cap and the preamble detection threshold.
///
/// # Safety
/// `cfg` must come from a gmrx constructor.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_set_detector(
    cfg: *mut GmrxConfig,
    k_max: usize,
    tau: f64,
) -> GmrxStatus {
    match config_mut(cfg) {
        Ok(c) => {
            c.detector.k_max = k_max;
            c.detector.tau = tau;
            GmrxStatus::Ok
        }
        Err(s) => s,
    }
}

/// Set the frame geometry (symbol counts; pilot period in symbols).
///
/// # Safety
/// `cfg` must come from a gmrx constructor.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_set_frame(
    cfg: *mut GmrxConfig,
    preamble_len: usize,
    payload_len: usize,
    pilot_period: usize,
) -> GmrxStatus {
    match config_mut(cfg) {
        Ok(c) => {
            c.frame.preamble_len = preamble_len;
            c.frame.payload_len = payload_len;
            c.frame.pilot_period = pilot_period;
            GmrxStatus::Ok
        }
        Err(s) => s,
    }
}

/// Check the configuration without running it.
///
/// # Safety
/// `cfg` must come from a gmrx constructor.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_validate(cfg: *const GmrxConfig) -> GmrxStatus {
    if cfg.is_null() {
        return set_error(GmrxStatus::NullArg, "null config handle");
    }
    match (*cfg).inner.validate() {
        Ok(()) => GmrxStatus::Ok,
        Err(e) => set_error(GmrxStatus::Config, e),
    }
}

/// Release a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from a gmrx constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmrx_config_free(cfg: *mut GmrxConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the configured scenario over its grid. Null on failure.
///
/// # Safety
/// `cfg` must come from a gmrx constructor.
#[no_mangle]
pub unsafe extern "C" fn gmrx_run_sweep(cfg: *const GmrxConfig) -> *mut GmrxResults {
    if cfg.is_null() {
        set_error(GmrxStatus::NullArg, "null config handle");
        return std::ptr::null_mut();
    }
    let inner = &(*cfg).inner;
    match catch_unwind(AssertUnwindSafe(|| run_sweep(inner))) {
        Ok(Ok(out)) => Box::into_raw(Box::new(GmrxResults::from_rows(out.rows))),
        Ok(Err(e)) => {
            set_error(GmrxStatus::Runtime, e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error(GmrxStatus::Runtime, "sweep panicked");
            std::ptr::null_mut()
        }
    }
}

/// Search the threshold scenario's deficit grid for the point where the
/// linear receiver's BER reaches the configured multiple of the mixture
/// detector's. The scenario must be "threshold".
///
/// # Safety
/// `cfg` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gmrx_find_sinr_threshold(
    cfg: *const GmrxConfig,
    out: *mut GmrxThreshold,
) -> GmrxStatus {
    if cfg.is_null() || out.is_null() {
        return set_error(GmrxStatus::NullArg, "null argument");
    }
    let inner = &(*cfg).inner;
    match catch_unwind(AssertUnwindSafe(|| find_sinr_threshold(inner))) {
        Ok(Ok((outcome, _rows))) => {
            *out = match outcome {
                ThresholdOutcome::Found { deficit_db } => {
                    GmrxThreshold { found: true, deficit_db, max_ratio: f64::NAN }
                }
                ThresholdOutcome::OutOfRange { max_ratio } => {
                    GmrxThreshold { found: false, deficit_db: f64::NAN, max_ratio }
                }
            };
            GmrxStatus::Ok
        }
        Ok(Err(e)) => set_error(GmrxStatus::Runtime, e),
        Err(_) => set_error(GmrxStatus::Runtime, "threshold search panicked"),
    }
}

/// Number of rows in a result set.
///
/// # Safety
/// `res` must come from `gmrx_run_sweep`.
#[no_mangle]
pub unsafe extern "C" fn gmrx_results_len(res: *const GmrxResults) -> usize {
    if res.is_null() {
        return 0;
    }
    (*res).rows.len()
}

/// Copy row `idx` into `out`.
///
/// # Safety
/// `res` must come from `gmrx_run_sweep`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmrx_results_row(
    res: *const GmrxResults,
    idx: usize,
    out: *mut GmrxRow,
) -> GmrxStatus {
    if res.is_null() || out.is_null() {
        return set_error(GmrxStatus::NullArg, "null argument");
    }
    let r = &*res;
    if idx >= r.rows.len() {
        return set_error(GmrxStatus::Range, format!("row {idx} of {}", r.rows.len()));
    }
    let row = &r.rows[idx];
    let s = &r.strings[idx];
    *out = GmrxRow {
        scenario: s[0].as_ptr(),
        receiver: s[1].as_ptr(),
        metric: s[2].as_ptr(),
        snr_db: row.snr_db,
        sinr_db: row.sinr_db,
        value: row.value,
        count: row.count,
        trials: row.trials,
        seed: row.seed,
    };
    GmrxStatus::Ok
}

/// Render a result set as CSV. Free with `gmrx_string_free`.
///
/// # Safety
/// `res` must come from `gmrx_run_sweep`.
#[no_mangle]
pub unsafe extern "C" fn gmrx_results_csv(res: *const GmrxResults) -> *mut c_char {
    if res.is_null() {
        set_error(GmrxStatus::NullArg, "null results handle");
        return std::ptr::null_mut();
    }
    CString::new(rows_to_csv(&(*res).rows)).unwrap().into_raw()
}

/// Release a result set. Null is ignored.
///
/// # Safety
/// `res` must come from `gmrx_run_sweep` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmrx_results_free(res: *mut GmrxResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a gmrx call that transfers ownership.
#[no_mangle]
pub unsafe extern "C" fn gmrx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Write the library's pseudorandom +/-1 preamble into `out`.
///
/// # Safety
/// `out` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gmrx_gen_preamble(len: usize, seed: u64, out: *mut i8) -> GmrxStatus {
    if out.is_null() {
        return set_error(GmrxStatus::NullArg, "null output buffer");
    }
    let symbols = gen_preamble(len, seed);
    slice::from_raw_parts_mut(out, len).copy_from_slice(&symbols);
    GmrxStatus::Ok
}

/// Locate the start of a second packet in raw samples by preamble
/// correlation. `iq` holds `n_samples * n_r` complex values as
/// interleaved re,im doubles, antenna-major within each symbol time.
/// On success `*out_offset` is the earliest symbol offset at or above
/// the threshold `tau`, or -1 when nothing is detected.
///
/// # Safety
/// `iq` must point to `2 * n_samples * n_r` doubles; `preamble` to
/// `preamble_len` bytes; `out_offset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmrx_detect_offset(
    iq: *const f64,
    n_samples: usize,
    n_r: usize,
    preamble: *const i8,
    preamble_len: usize,
    tau: f64,
    out_offset: *mut i64,
) -> GmrxStatus {
    if iq.is_null() || preamble.is_null() || out_offset.is_null() {
        return set_error(GmrxStatus::NullArg, "null argument");
    }
    let raw = slice::from_raw_parts(iq, 2 * n_samples * n_r);
    let symbols = slice::from_raw_parts(preamble, preamble_len);
    let run = || -> gmrx_core::Result<Option<usize>> {
        let samples: Vec<C64> =
            raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
        let frame = ReceivedFrame::from_samples(samples, n_r)?;
        let profile = cross_correlate(&frame, symbols)?;
        detect_second_start(&profile, tau)
    };
    match catch_unwind(AssertUnwindSafe(run)) {
        Ok(Ok(found)) => {
            *out_offset = found.map_or(-1, |d| d as i64);
            GmrxStatus::Ok
        }
        Ok(Err(e)) => set_error(GmrxStatus::Runtime, e),
        Err(_) => set_error(GmrxStatus::Runtime, "detection panicked"),
    }
}
