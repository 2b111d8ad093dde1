//! C ABI over the elliptical tracker and the gridworld environments.
//!
//! Every function returns an [`E3bStatus`]; on failure the message is kept
//! per thread and can be fetched with [`e3b_last_error`]. Handles are opaque
//! and must be released with their `_free` function. Null handles and null
//! output pointers are reported as `E3B_STATUS_NULL_POINTER`; no function
//! unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use e3b_core::env::{Action, Context, EnvConfig, GridEnv, Observation};
use e3b_core::{EllipticalTracker, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum E3bStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Contract = 4,
    Generation = 5,
    Config = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> E3bStatus {
    match e {
        Error::InvalidArgument(_) => E3bStatus::InvalidArgument,
        Error::Numeric(_) => E3bStatus::Numeric,
        Error::Contract(_) => E3bStatus::Contract,
        Error::Generation(_) => E3bStatus::Generation,
        Error::Config { .. } => E3bStatus::Config,
        Error::Io(_) | Error::Json(_) => E3bStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (E3bStatus, String)>) -> E3bStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => E3bStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            E3bStatus::Panic
        }
    }
}

fn core(e: Error) -> (E3bStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (E3bStatus, String) {
    (E3bStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], (E3bStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null("input buffer"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T) -> Result<&'a mut T, (E3bStatus, String)> {
    ptr.as_mut().ok_or_else(|| null("output pointer"))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn e3b_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Opaque inverse-covariance tracker.
pub struct E3bTracker(EllipticalTracker);

/// Creates a tracker with `C⁻¹ = I/ridge`.
///
/// # Safety
/// `out_tracker` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_new(dim: usize, ridge: f64, out_tracker: *mut *mut E3bTracker) -> E3bStatus {
    guard(|| {
        let slot = out(out_tracker)?;
        let t = EllipticalTracker::new(dim, ridge).map_err(core)?;
        *slot = Box::into_raw(Box::new(E3bTracker(t)));
        Ok(())
    })
}

/// Releases a tracker. Null is a no-op.
///
/// # Safety
/// `tracker` must come from [`e3b_tracker_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_free(tracker: *mut E3bTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Restores `C⁻¹ = I/ridge`.
///
/// # Safety
/// `tracker` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_reset(tracker: *mut E3bTracker) -> E3bStatus {
    guard(|| {
        tracker.as_mut().ok_or_else(|| null("tracker"))?.0.reset();
        Ok(())
    })
}

/// Bonus `φᵀC⁻¹φ` without changing the tracker.
///
/// # Safety
/// `phi` must be valid for `len` reads, `out_bonus` for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_bonus(
    tracker: *const E3bTracker,
    phi: *const f64,
    len: usize,
    out_bonus: *mut f64,
) -> E3bStatus {
    guard(|| {
        let t = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        let o = out(out_bonus)?;
        *o = t.0.bonus(slice(phi, len)?).map_err(core)?;
        Ok(())
    })
}

/// Absorbs `φ`; writes the bonus it had before the update.
///
/// # Safety
/// `phi` must be valid for `len` reads, `out_bonus` for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_update(
    tracker: *mut E3bTracker,
    phi: *const f64,
    len: usize,
    out_bonus: *mut f64,
) -> E3bStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        let o = out(out_bonus)?;
        *o = t.0.update(slice(phi, len)?).map_err(core)?;
        Ok(())
    })
}

/// Number of updates since creation or the last reset.
///
/// # Safety
/// `tracker` must be a live handle or null; `out_count` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_count(tracker: *const E3bTracker, out_count: *mut u64) -> E3bStatus {
    guard(|| {
        let t = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        *out(out_count)? = t.0.count();
        Ok(())
    })
}

/// Copies the row-major `dim×dim` inverse covariance into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn e3b_tracker_inv_cov(tracker: *const E3bTracker, buf: *mut f64, len: usize) -> E3bStatus {
    guard(|| {
        let t = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        let src = t.0.inv_cov();
        if len < src.len() {
            return Err((
                E3bStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", src.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("output buffer"));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// Opaque gridworld plus its latest observation.
pub struct E3bEnv {
    env: GridEnv,
    obs: Option<Observation>,
}

/// Observation summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct E3bObservation {
    pub x: u32,
    pub y: u32,
    pub t: u32,
    pub message: u8,
    pub carrying: bool,
}

fn summarize(o: &Observation) -> E3bObservation {
    E3bObservation {
        x: o.x as u32,
        y: o.y as u32,
        t: o.t,
        message: o.message,
        carrying: o.carrying,
    }
}

/// Creates an environment from a spec string such as `multiroom-r3-s13-timer`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out_env` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_env_new(spec: *const c_char, noise_seed: u64, out_env: *mut *mut E3bEnv) -> E3bStatus {
    guard(|| {
        let slot = out(out_env)?;
        if spec.is_null() {
            return Err(null("spec"));
        }
        let spec = CStr::from_ptr(spec)
            .to_str()
            .map_err(|_| (E3bStatus::InvalidArgument, "spec is not UTF-8".to_string()))?;
        let cfg = EnvConfig::parse(spec).map_err(core)?;
        let env = GridEnv::new(cfg, noise_seed).map_err(core)?;
        *slot = Box::into_raw(Box::new(E3bEnv { env, obs: None }));
        Ok(())
    })
}

/// Releases an environment. Null is a no-op.
///
/// # Safety
/// `env` must come from [`e3b_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn e3b_env_free(env: *mut E3bEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Length of the dense network input written by [`e3b_env_input`].
///
/// # Safety
/// `env` must be a live handle or null; `out_dim` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_env_input_dim(env: *const E3bEnv, out_dim: *mut usize) -> E3bStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_dim)? = e.env.config().input_dim();
        Ok(())
    })
}

/// Starts an episode in the context with the given seed.
///
/// # Safety
/// `env` must be a live handle; `out_obs` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_env_reset(env: *mut E3bEnv, context_seed: u64, out_obs: *mut E3bObservation) -> E3bStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let task = e.env.config().task;
        let obs = e
            .env
            .reset(Context {
                seed: context_seed,
                task,
            })
            .map_err(core)?;
        if let Some(o) = out_obs.as_mut() {
            *o = summarize(&obs);
        }
        e.obs = Some(obs);
        Ok(())
    })
}

/// Takes action `0..5` (up, down, left, right, interact).
///
/// # Safety
/// `env` must be a live handle; output pointers null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn e3b_env_step(
    env: *mut E3bEnv,
    action: u32,
    out_obs: *mut E3bObservation,
    out_reward: *mut f64,
    out_done: *mut bool,
) -> E3bStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let a = Action::from_index(action as usize).map_err(core)?;
        let step = e.env.step(a).map_err(core)?;
        if let Some(o) = out_obs.as_mut() {
            *o = summarize(&step.obs);
        }
        if let Some(r) = out_reward.as_mut() {
            *r = step.reward;
        }
        if let Some(d) = out_done.as_mut() {
            *d = step.done;
        }
        e.obs = Some(step.obs);
        Ok(())
    })
}

/// Writes the dense network input of the latest observation into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn e3b_env_input(env: *const E3bEnv, buf: *mut f64, len: usize) -> E3bStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let obs = e
            .obs
            .as_ref()
            .ok_or_else(|| (E3bStatus::Contract, "environment has not been reset".to_string()))?;
        let x = obs.input(e.env.config().max_steps);
        if len < x.len() {
            return Err((
                E3bStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", x.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("output buffer"));
        }
        std::ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        Ok(())
    })
}
