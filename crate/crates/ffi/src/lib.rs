//! C ABI over the simulator.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every call returns an [`EaStatus`]; on failure the
//! message is available from [`ea_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use entropic_agents::cli::{exit_code, ScenarioConfig};
use entropic_agents::dynamics::EntropicSystem;
use entropic_agents::measures::{w1_spatial, SpatialMeasure};
use entropic_agents::particle_system::{audit, default_dt, integrate, Ensemble, Trajectory};
use entropic_agents::strategy_space::{negative_entropy, StrategySpace};
use entropic_agents::Error;
use libc::size_t;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Rejected scenario or arguments.
    Config = 3,
    /// An invariant or a-priori bound failed during a run.
    Invariant = 4,
    Io = 5,
    Panic = 6,
}

/// A parsed scenario together with its resolved system.
pub struct EaScenario {
    config: ScenarioConfig,
    system: EntropicSystem,
}

/// A finished particle-system run.
pub struct EaTrajectory {
    trajectory: Trajectory,
    comments: Vec<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(error: &Error) -> EaStatus {
    match error {
        Error::Io(_) => EaStatus::Io,
        e if exit_code(e) == 1 => EaStatus::Config,
        _ => EaStatus::Invariant,
    }
}

fn guard(body: impl FnOnce() -> Result<(), (EaStatus, String)>) -> EaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            EaStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EaStatus::Panic
        }
    }
}

fn lift<T>(r: entropic_agents::Result<T>) -> Result<T, (EaStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (EaStatus, String) {
    (EaStatus::NullPointer, "null pointer argument".into())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (EaStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (EaStatus::InvalidUtf8, e.to_string()))
}

/// Parses a scenario JSON document and resolves its box bounds.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ea_scenario_from_json(json: *const c_char, out: *mut *mut EaScenario) -> EaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let text = read_str(json)?;
        let config = lift(ScenarioConfig::from_json(text))?;
        let system = lift(config.system())?;
        *out = Box::into_raw(Box::new(EaScenario { config, system }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from [`ea_scenario_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ea_scenario_free(scenario: *mut EaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Writes `r_ε`, `R_ε` and the step bound `θ_ε`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ea_box_bounds(
    scenario: *const EaScenario,
    r_eps: *mut f64,
    upper_eps: *mut f64,
    theta_eps: *mut f64,
) -> EaStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(null)?;
        if r_eps.is_null() || upper_eps.is_null() || theta_eps.is_null() {
            return Err(null());
        }
        *r_eps = s.system.bounds.r_eps;
        *upper_eps = s.system.bounds.upper_eps;
        *theta_eps = s.system.theta;
        Ok(())
    })
}

/// Integrates the scenario's particle system and audits the run.
///
/// # Safety
/// `scenario` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ea_simulate(scenario: *const EaScenario, out: *mut *mut EaTrajectory) -> EaStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let c = &s.config;
        let agents = lift(c.initial_agents(&s.system, c.agents))?;
        let dt = c.dt.unwrap_or_else(|| default_dt(&s.system, c.horizon));
        let ensemble = lift(Ensemble::new(agents))?;
        let trajectory = lift(integrate(&s.system, &ensemble, c.horizon, dt, c.method, c.record_every))?;
        let checks = lift(audit(&s.system, &trajectory))?;
        if !checks.passed() {
            return Err((EaStatus::Invariant, format!("invariant audit failed: {checks:?}")));
        }
        let comments = vec![
            format!("config_sha256={}", c.hash()),
            format!("r_eps={}", s.system.bounds.r_eps),
            format!("upper_eps={}", s.system.bounds.upper_eps),
            format!("theta_eps={}", s.system.theta),
        ];
        *out = Box::into_raw(Box::new(EaTrajectory { trajectory, comments }));
        Ok(())
    })
}

/// Number of recorded snapshots.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ea_trajectory_len(trajectory: *const EaTrajectory, snapshots: *mut size_t) -> EaStatus {
    guard(|| {
        let t = trajectory.as_ref().ok_or_else(null)?;
        if snapshots.is_null() {
            return Err(null());
        }
        *snapshots = t.trajectory.snapshots.len();
        Ok(())
    })
}

/// Writes the trajectory in long CSV format.
///
/// # Safety
/// `trajectory` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ea_trajectory_write_csv(trajectory: *const EaTrajectory, path: *const c_char) -> EaStatus {
    guard(|| {
        let t = trajectory.as_ref().ok_or_else(null)?;
        let path = read_str(path)?;
        std::fs::write(path, t.trajectory.to_csv(&t.comments)).map_err(|e| (EaStatus::Io, e.to_string()))
    })
}

/// # Safety
/// `trajectory` must come from [`ea_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ea_trajectory_free(trajectory: *mut EaTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

unsafe fn points(data: *const f64, n: size_t, dim: size_t) -> Result<Vec<Vec<f64>>, (EaStatus, String)> {
    if data.is_null() {
        return Err(null());
    }
    if n == 0 || dim == 0 {
        return Err((EaStatus::Config, "empty point set".into()));
    }
    let flat = std::slice::from_raw_parts(data, n * dim);
    Ok(flat.chunks(dim).map(|c| c.to_vec()).collect())
}

/// `W₁` between two uniform point clouds in `R^dim`, row-major.
///
/// # Safety
/// `a` holds `n1 * dim` values, `b` holds `n2 * dim`, `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn ea_w1_spatial(
    a: *const f64,
    n1: size_t,
    b: *const f64,
    n2: size_t,
    dim: size_t,
    out: *mut f64,
) -> EaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let mu = lift(SpatialMeasure::new(points(a, n1, dim)?))?;
        let nu = lift(SpatialMeasure::new(points(b, n2, dim)?))?;
        *out = lift(w1_spatial(&mu, &nu))?.0;
        Ok(())
    })
}

/// `I(ℓ) = ∫ ℓ log ℓ` for `ℓ` sampled on the uniform midpoint grid with `m` nodes.
///
/// # Safety
/// `values` holds `m` entries and `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn ea_negative_entropy(values: *const f64, m: size_t, out: *mut f64) -> EaStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return Err(null());
        }
        let space = lift(StrategySpace::uniform_grid(m, 2.0))?;
        let v = std::slice::from_raw_parts(values, m);
        *out = lift(negative_entropy(&space, v))?;
        Ok(())
    })
}

/// Copies the last error message of this thread into `buffer` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buffer` must hold `len` bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn ea_last_error_message(buffer: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        let bytes = message.as_bytes();
        if !buffer.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buffer as *mut u8, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}
