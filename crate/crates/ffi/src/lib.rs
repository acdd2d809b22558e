//! C ABI over `daflow`.
//!
//! Every function returns a [`DafStatus`] (or a plain value for infallible
//! getters). On failure the message is kept per thread and can be read with
//! [`daf_last_error_message`]. Handles are opaque, created by `*_new`/`*_load`
//! style functions and released with the matching `*_free`. Matrices are
//! row-major. Panics never cross the boundary; they surface as
//! `DAF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use daflow::daruff::{apply_process_noise, baseline_pff_step, daruff_step, FilterState};
use daflow::da::DAVector;
use daflow::flow::{build_flow_map, FlowSettings, GaussianBelief, MeasurementModel};
use daflow::harness::{run_attitude_mc, run_toy, write_attitude_csv, write_toy_csv, AttitudeSetup, ScenarioConfig};
use daflow::models::attitude::{normalize_quaternion, STATE_DIM};
use daflow::models::range::RangeMeasurement;
use daflow::Error;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DafStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Which measurement update a filter step uses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DafMethod {
    /// Combined prediction and flow polynomial map.
    Da = 0,
    /// Per-particle integration of dynamics and flow.
    Ode = 1,
}

/// Parsed and validated experiment configuration.
pub struct DafConfig(ScenarioConfig);

/// Polynomial map from deviations to states.
pub struct DafMap(DAVector);

/// Attitude particle filter with its ensemble.
pub struct DafFilter {
    setup: AttitudeSetup,
    noise_std: Vec<f64>,
    state: FilterState,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(DafStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => DafStatus::Config,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => DafStatus::Io,
            Error::Dimension { .. } | Error::Invalid(_) => DafStatus::InvalidArgument,
            _ => DafStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DafStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(DafStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> DafStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DafStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DafStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// NUL-terminated version string with static lifetime.
#[no_mangle]
pub extern "C" fn daf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Byte length of the calling thread's last error message, without the NUL.
#[no_mangle]
pub extern "C" fn daf_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL-terminated). Fails with
/// `DAF_STATUS_BUFFER_TOO_SMALL` when `buf_len <= daf_last_error_length()`.
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn daf_last_error_message(buf: *mut c_char, buf_len: usize) -> DafStatus {
    if buf.is_null() {
        return DafStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if buf_len <= msg.len() {
            return DafStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
        *buf.add(msg.len()) = 0;
        DafStatus::Ok
    })
}

/// Reads and validates a JSON configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn daf_config_load(path: *const c_char, out: *mut *mut DafConfig) -> DafStatus {
    guard(|| {
        let cfg = ScenarioConfig::load(Path::new(text(path, "path")?))?;
        out_ptr(out, DafConfig(cfg))
    })
}

/// Parses and validates a JSON configuration held in memory.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn daf_config_from_json(json: *const c_char, out: *mut *mut DafConfig) -> DafStatus {
    guard(|| {
        let cfg = ScenarioConfig::from_json(text(json, "json")?)?;
        out_ptr(out, DafConfig(cfg))
    })
}

/// Total particle count implied by the configuration (0 for a null handle).
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn daf_config_n_particles(cfg: *const DafConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.0.n_particles())
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn daf_config_free(cfg: *mut DafConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the range-measurement example and writes its CSV files into `out_dir`.
///
/// # Safety
/// `cfg` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn daf_run_toy(cfg: *const DafConfig, out_dir: *const c_char) -> DafStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let dir = Path::new(text(out_dir, "out_dir")?);
        let res = run_toy(&cfg.0)?;
        write_toy_csv(&res, dir)?;
        Ok(())
    })
}

/// Runs the attitude Monte Carlo campaign and writes its CSV files into `out_dir`.
///
/// # Safety
/// `cfg` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn daf_run_attitude(cfg: *const DafConfig, out_dir: *const c_char) -> DafStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let dir = Path::new(text(out_dir, "out_dir")?);
        let summary = run_attitude_mc(&cfg.0)?;
        write_attitude_csv(&summary, dir)?;
        Ok(())
    })
}

/// Builds the order-`order` flow map of a 2-D Gaussian prior under a scalar
/// range measurement `y = ‖x‖ + v`, `v ~ N(0, noise_var)`.
///
/// # Safety
/// `mean` must point to 2 values, `cov` to 4 (row-major); `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn daf_range_flow_map(
    mean: *const f64,
    cov: *const f64,
    noise_var: f64,
    y: f64,
    order: usize,
    out: *mut *mut DafMap,
) -> DafStatus {
    guard(|| {
        let prior = GaussianBelief::new(
            DVector::from_column_slice(slice(mean, 2, "mean")?),
            DMatrix::from_row_slice(2, 2, slice(cov, 4, "cov")?),
        )?;
        if !(noise_var > 0.0) {
            return Err(invalid("noise_var must be positive"));
        }
        let model = MeasurementModel::new(RangeMeasurement, DMatrix::from_element(1, 1, noise_var))?;
        let fm = build_flow_map(&prior, &model, &[y], order, &FlowSettings::paper_default())?;
        out_ptr(out, DafMap(fm.map))
    })
}

/// Number of deviation variables (0 for a null handle).
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn daf_map_n_vars(map: *const DafMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.context().n_vars())
}

/// Number of output components (0 for a null handle).
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn daf_map_len(map: *const DafMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.len())
}

/// Writes the expansion point (`daf_map_n_vars` values) into `out`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn daf_map_center(map: *const DafMap, out: *mut f64, len: usize) -> DafStatus {
    guard(|| {
        let m = handle(map, "map")?;
        let c = m.0.center();
        if len != c.len() {
            return Err(invalid(format!("center has {} entries, buffer {len}", c.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(c);
        Ok(())
    })
}

/// Evaluates the map at `count` deviations stored back to back.
///
/// # Safety
/// `deviations` must hold `count * n_vars` doubles and `out` `count * daf_map_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn daf_map_evaluate(
    map: *const DafMap,
    deviations: *const f64,
    n_vars: usize,
    count: usize,
    out: *mut f64,
    out_len: usize,
) -> DafStatus {
    guard(|| {
        let m = handle(map, "map")?;
        let (nv, len) = (m.0.context().n_vars(), m.0.len());
        if n_vars != nv {
            return Err(invalid(format!("map has {nv} variables, got {n_vars}")));
        }
        if out_len != count * len {
            return Err(invalid(format!("output needs {} doubles, got {out_len}", count * len)));
        }
        let dev = slice(deviations, count * nv, "deviations")?;
        let out = slice_mut(out, out_len, "out")?;
        let eval = m.0.evaluator();
        let mut scratch = Vec::new();
        for (d, o) in dev.chunks_exact(nv.max(1)).zip(out.chunks_exact_mut(len.max(1))) {
            eval.evaluate_into(d, &mut scratch, o).map_err(Error::from)?;
        }
        Ok(())
    })
}

/// Writes the text dump (one `component, coefficient, exponents` line per
/// monomial, NUL-terminated) into `buf`. `needed` receives the buffer size
/// required including the NUL, also when the buffer is too small.
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes (or be null with `buf_len` 0).
#[no_mangle]
pub unsafe extern "C" fn daf_map_dump(map: *const DafMap, buf: *mut c_char, buf_len: usize, needed: *mut usize) -> DafStatus {
    guard(|| {
        let m = handle(map, "map")?;
        let dump = m.0.dump();
        if !needed.is_null() {
            *needed = dump.len() + 1;
        }
        if buf_len <= dump.len() {
            return Err(Failure(DafStatus::BufferTooSmall, format!("dump needs {} bytes", dump.len() + 1)));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(dump.as_ptr(), buf.cast::<u8>(), dump.len());
        *buf.add(dump.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn daf_map_free(map: *mut DafMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Creates an attitude filter from an attitude configuration. The ensemble
/// (`daf_config_n_particles` particles) is drawn from `N(mean, cov)` with
/// the given seed; `mean` has 10 entries `[q (scalar last), ω, b]` and `cov` 100.
///
/// # Safety
/// `cfg` must be a live handle, `mean`/`cov` readable arrays, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn daf_filter_new_attitude(
    cfg: *const DafConfig,
    mean: *const f64,
    cov: *const f64,
    seed: u64,
    out: *mut *mut DafFilter,
) -> DafStatus {
    guard(|| {
        let cfg = &handle(cfg, "config")?.0;
        let setup = AttitudeSetup::from_config(cfg)?;
        let mean = DVector::from_column_slice(slice(mean, STATE_DIM, "mean")?);
        let cov = DMatrix::from_row_slice(STATE_DIM, STATE_DIM, slice(cov, STATE_DIM * STATE_DIM, "cov")?);
        let belief = GaussianBelief::new(mean, cov)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ensemble = belief.sample(cfg.n_particles(), &mut rng)?;
        ensemble.iter_mut().for_each(normalize_quaternion);
        let state = FilterState::new(0.0, ensemble)?;
        rng.set_stream(2);
        out_ptr(out, DafFilter { setup, noise_std: cfg.process_noise_std.clone(), state, rng })
    })
}

/// Advances the filter to `t_meas` and assimilates the 9 measurements
/// `[star 1 (3), star 2 (3), gyro (3)]`. `seconds`, when not null, receives
/// the wall-clock time of the step.
///
/// # Safety
/// `filter` must be a live handle, `y` must hold `y_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn daf_filter_step(
    filter: *mut DafFilter,
    y: *const f64,
    y_len: usize,
    t_meas: f64,
    method: DafMethod,
    seconds: *mut f64,
) -> DafStatus {
    guard(|| {
        let f = filter.as_mut().ok_or_else(|| null("filter"))?;
        let y = slice(y, y_len, "y")?;
        if y_len != f.setup.model.meas_dim() {
            return Err(invalid(format!("expected {} measurements, got {y_len}", f.setup.model.meas_dim())));
        }
        let mut prior = f.state.clone();
        if !f.noise_std.is_empty() {
            apply_process_noise(&mut prior.ensemble, &f.noise_std, &mut f.rng)?;
        }
        let s = &f.setup;
        let (next, timing) = match method {
            DafMethod::Da => daruff_step(&prior, &s.dynamics, &s.model, y, t_meas, &s.filter)?,
            DafMethod::Ode => baseline_pff_step(&prior, &s.dynamics, &s.model, y, t_meas, &s.filter)?,
        };
        f.state = next;
        if !seconds.is_null() {
            *seconds = timing.total();
        }
        Ok(())
    })
}

/// Time of the last assimilated measurement (NaN for a null handle).
///
/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn daf_filter_time(filter: *const DafFilter) -> f64 {
    filter.as_ref().map_or(f64::NAN, |f| f.state.time)
}

/// Copies the ensemble mean (10 values) into `out`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn daf_filter_mean(filter: *const DafFilter, out: *mut f64, len: usize) -> DafStatus {
    guard(|| {
        let f = handle(filter, "filter")?;
        let m = &f.state.belief.mean;
        if len != m.len() {
            return Err(invalid(format!("mean has {} entries, buffer {len}", m.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(m.as_slice());
        Ok(())
    })
}

/// Copies the ensemble covariance (100 values, row-major) into `out`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn daf_filter_covariance(filter: *const DafFilter, out: *mut f64, len: usize) -> DafStatus {
    guard(|| {
        let f = handle(filter, "filter")?;
        let p = &f.state.belief.cov;
        if len != p.len() {
            return Err(invalid(format!("covariance has {} entries, buffer {len}", p.len())));
        }
        let out = slice_mut(out, len, "out")?;
        let n = p.ncols();
        for (k, v) in out.iter_mut().enumerate() {
            *v = p[(k / n, k % n)];
        }
        Ok(())
    })
}

/// # Safety
/// `filter` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn daf_filter_free(filter: *mut DafFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}
