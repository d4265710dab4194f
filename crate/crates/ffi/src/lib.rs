//! C ABI over `pasm-core`: the V2X environment behind an opaque handle, the
//! PASM server behind another, and the PASM update equations on raw buffers.
//!
//! Every fallible function returns a [`PasmStatus`]; on failure the message
//! is available from [`pasm_last_error`] on the same thread. Panics never
//! cross the boundary. Buffers are caller-owned `double` arrays; matrices of
//! per-agent vectors are row-major `k x len`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pasm_core::env::{MultiAgentEnv, Scenario, V2xEnv};
use pasm_core::federate::{self, AgentUpload, PasmConfig};
use pasm_core::harness::SimConfig;
use pasm_core::{Error, ParamVector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PasmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidConfig = 4,
    EpisodeFinished = 5,
    SecondMomentBound = 6,
    Io = 7,
    Panic = 8,
}

/// A V2X environment. Create with `pasm_env_new*`, release with `pasm_env_free`.
pub struct PasmEnv {
    inner: V2xEnv,
}

/// PASM server state (consensus parameters and second moment).
pub struct PasmServer {
    inner: federate::PasmServer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PasmStatus {
    match e {
        Error::Config(_) | Error::Toml(_) | Error::TomlSer(_) => PasmStatus::InvalidConfig,
        Error::InvalidArgument(_) | Error::EnumerationBudget { .. } => PasmStatus::InvalidArgument,
        Error::Dimension(_) => PasmStatus::DimensionMismatch,
        Error::EpisodeFinished { .. } => PasmStatus::EpisodeFinished,
        Error::SecondMomentBound { .. } => PasmStatus::SecondMomentBound,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Checkpoint(_) => PasmStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PasmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PasmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PasmStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            PasmStatus::Panic
        }
    }
}

unsafe fn read<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn vector(p: *const f64, len: usize, what: &'static str) -> Result<ParamVector, Fail> {
    Ok(ParamVector::from(read(p, len, what)?.to_vec()))
}

unsafe fn rows(p: *const f64, k: usize, len: usize, what: &'static str) -> Result<Vec<ParamVector>, Fail> {
    let n = k.checked_mul(len).ok_or(Fail::Core(Error::InvalidArgument("k * len overflows".into())))?;
    let flat = read(p, n, what)?;
    Ok(flat.chunks(len.max(1)).take(k).map(|c| ParamVector::from(c.to_vec())).collect())
}

unsafe fn write(out: *mut f64, v: &[f64], what: &'static str) -> Result<(), Fail> {
    if v.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pasm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pasm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Environment with the default configuration for `scenario` (1 or 2).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_new(scenario: u8, seed: u64, drop_index: u64, out: *mut *mut PasmEnv) -> PasmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let scenario = Scenario::try_from(scenario).map_err(Error::Config)?;
        let cfg = SimConfig::default();
        let inner = V2xEnv::new(scenario, &cfg.env, &cfg.channel, seed, drop_index)?;
        *out = Box::into_raw(Box::new(PasmEnv { inner }));
        Ok(())
    })
}

/// Environment from a TOML configuration (same schema as the CLI). The
/// seed and scenario come from the config.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` as in `pasm_env_new`.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_new_from_toml(
    config: *const c_char,
    drop_index: u64,
    out: *mut *mut PasmEnv,
) -> PasmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if config.is_null() {
            return Err(Fail::Null("config"));
        }
        let text = CStr::from_ptr(config).to_str().map_err(|_| Error::InvalidArgument("config is not UTF-8".into()))?;
        let cfg = SimConfig::from_toml(text)?;
        let inner = V2xEnv::new(cfg.scenario, &cfg.env, &cfg.channel, cfg.seed, drop_index)?;
        *out = Box::into_raw(Box::new(PasmEnv { inner }));
        Ok(())
    })
}

/// Release an environment; NULL is ignored.
///
/// # Safety
/// `env` must come from `pasm_env_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_free(env: *mut PasmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Agents, actions per agent, observation length and slots per episode.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_dims(
    env: *const PasmEnv,
    agents: *mut usize,
    actions: *mut usize,
    observation_len: *mut usize,
    horizon: *mut usize,
) -> PasmStatus {
    guard(|| {
        let e = &env.as_ref().ok_or(Fail::Null("env"))?.inner;
        *out_ptr(agents, "agents")? = e.num_agents();
        *out_ptr(actions, "actions")? = e.num_actions();
        *out_ptr(observation_len, "observation_len")? = e.observation_len();
        *out_ptr(horizon, "horizon")? = e.horizon();
        Ok(())
    })
}

/// Start a new episode. Required before the first step.
///
/// # Safety
/// `env` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_reset(env: *mut PasmEnv) -> PasmStatus {
    guard(|| {
        env.as_mut().ok_or(Fail::Null("env"))?.inner.reset_episode()?;
        Ok(())
    })
}

/// Copy agent `agent`'s observation into `out` (`len` must equal the
/// observation length).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_observe(env: *const PasmEnv, agent: usize, out: *mut f64, len: usize) -> PasmStatus {
    guard(|| {
        let e = &env.as_ref().ok_or(Fail::Null("env"))?.inner;
        if agent >= e.num_agents() {
            return Err(Error::InvalidArgument(format!("agent {agent} out of range")).into());
        }
        if len != e.observation_len() {
            return Err(
                Error::Dimension(format!("observation has {} entries, buffer {len}", e.observation_len())).into()
            );
        }
        write(out, &e.observation(agent), "out")
    })
}

/// Apply one joint action (`n` must equal the number of agents).
///
/// # Safety
/// `actions` must hold `n` entries; `reward` and `done` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_step(
    env: *mut PasmEnv,
    actions: *const usize,
    n: usize,
    reward: *mut f64,
    done: *mut bool,
) -> PasmStatus {
    guard(|| {
        let e = &mut env.as_mut().ok_or(Fail::Null("env"))?.inner;
        if actions.is_null() && n > 0 {
            return Err(Fail::Null("actions"));
        }
        let acts = if n == 0 { &[][..] } else { slice::from_raw_parts(actions, n) };
        let reward = out_ptr(reward, "reward")?;
        let done = out_ptr(done, "done")?;
        let (r, d) = e.step(acts)?;
        *reward = r;
        *done = d;
        Ok(())
    })
}

/// Delivery rate (scenario 1) or mean weighted rate in Mbit/s (scenario 2)
/// of the current episode.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pasm_env_episode_metric(env: *const PasmEnv, out: *mut f64) -> PasmStatus {
    guard(|| {
        let e = &env.as_ref().ok_or(Fail::Null("env"))?.inner;
        *out_ptr(out, "out")? = e.episode_metric();
        Ok(())
    })
}

/// `out = theta_c - (lambda + g) / (rho + r_k)`.
///
/// # Safety
/// Every buffer must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasm_local_update(
    theta_c: *const f64,
    lambda: *const f64,
    g: *const f64,
    len: usize,
    rho: f64,
    r_k: f64,
    out: *mut f64,
) -> PasmStatus {
    guard(|| {
        let t = federate::pasm_local_update(
            &vector(theta_c, len, "theta_c")?,
            &vector(lambda, len, "lambda")?,
            &vector(g, len, "g")?,
            rho,
            r_k,
        )?;
        write(out, &t, "out")
    })
}

/// `out = lambda + rho (theta_k - theta_c)`.
///
/// # Safety
/// Every buffer must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasm_dual_update(
    lambda: *const f64,
    theta_k: *const f64,
    theta_c: *const f64,
    len: usize,
    rho: f64,
    out: *mut f64,
) -> PasmStatus {
    guard(|| {
        let l = federate::pasm_dual_update(
            &vector(lambda, len, "lambda")?,
            &vector(theta_k, len, "theta_k")?,
            &vector(theta_c, len, "theta_c")?,
            rho,
        )?;
        write(out, &l, "out")
    })
}

/// `out = beta v + (1/k) sum (1 - beta) lambda_i^2`; `lambdas` is `k x len`.
///
/// # Safety
/// `v` and `out` hold `len` doubles, `lambdas` holds `k * len`.
#[no_mangle]
pub unsafe extern "C" fn pasm_second_moment(
    v: *const f64,
    lambdas: *const f64,
    k: usize,
    len: usize,
    beta: f64,
    out: *mut f64,
) -> PasmStatus {
    guard(|| {
        let v2 = federate::pasm_second_moment(&vector(v, len, "v")?, &rows(lambdas, k, len, "lambdas")?, beta)?;
        write(out, &v2, "out")
    })
}

/// `out = theta_k + lambda / (rho (sqrt(v) + epsilon))`.
///
/// # Safety
/// Every buffer must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasm_upload(
    theta_k: *const f64,
    lambda: *const f64,
    v: *const f64,
    len: usize,
    rho: f64,
    epsilon: f64,
    out: *mut f64,
) -> PasmStatus {
    guard(|| {
        let u = federate::pasm_upload(
            &vector(theta_k, len, "theta_k")?,
            &vector(lambda, len, "lambda")?,
            &vector(v, len, "v")?,
            rho,
            epsilon,
        )?;
        write(out, &u, "out")
    })
}

/// Elementwise mean of the `k x len` matrix `uploads`.
///
/// # Safety
/// `uploads` holds `k * len` doubles, `out` holds `len`.
#[no_mangle]
pub unsafe extern "C" fn pasm_aggregate(uploads: *const f64, k: usize, len: usize, out: *mut f64) -> PasmStatus {
    guard(|| {
        let m = federate::aggregate(&rows(uploads, k, len, "uploads")?)?;
        write(out, &m, "out")
    })
}

/// Server with consensus parameters `theta0` and a zero second moment.
///
/// # Safety
/// `theta0` holds `len` doubles; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn pasm_server_new(
    theta0: *const f64,
    len: usize,
    rho: f64,
    epsilon: f64,
    beta: f64,
    out: *mut *mut PasmServer,
) -> PasmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let config = PasmConfig { rho: Some(rho), epsilon, beta, ..PasmConfig::default() };
        config.validate()?;
        let inner = federate::PasmServer::new(vector(theta0, len, "theta0")?, rho, config);
        *out = Box::into_raw(Box::new(PasmServer { inner }));
        Ok(())
    })
}

/// Release a server; NULL is ignored.
///
/// # Safety
/// `server` must come from `pasm_server_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pasm_server_free(server: *mut PasmServer) {
    if !server.is_null() {
        drop(Box::from_raw(server));
    }
}

/// Length of the parameter vectors the server handles.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pasm_server_len(server: *const PasmServer, len: *mut usize) -> PasmStatus {
    guard(|| {
        let s = &server.as_ref().ok_or(Fail::Null("server"))?.inner;
        *out_ptr(len, "len")? = s.theta_c.len();
        Ok(())
    })
}

/// Copy the current consensus parameters into `out`.
///
/// # Safety
/// `out` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasm_server_theta_c(server: *const PasmServer, out: *mut f64, len: usize) -> PasmStatus {
    guard(|| {
        let s = &server.as_ref().ok_or(Fail::Null("server"))?.inner;
        if len != s.theta_c.len() {
            return Err(Error::Dimension(format!("server holds {} parameters, buffer {len}", s.theta_c.len())).into());
        }
        write(out, &s.theta_c, "out")
    })
}

/// Aggregate one round of uploads: `thetas` and `lambdas` are `k x len`
/// matrices of the agents' updated primal and dual variables.
///
/// # Safety
/// `thetas` and `lambdas` hold `k * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasm_server_aggregate(
    server: *mut PasmServer,
    thetas: *const f64,
    lambdas: *const f64,
    k: usize,
    len: usize,
) -> PasmStatus {
    guard(|| {
        let s = &mut server.as_mut().ok_or(Fail::Null("server"))?.inner;
        let uploads: Vec<AgentUpload> = rows(thetas, k, len, "thetas")?
            .into_iter()
            .zip(rows(lambdas, k, len, "lambdas")?)
            .enumerate()
            .map(|(agent, (theta, lambda))| AgentUpload { agent, theta, lambda })
            .collect();
        s.aggregate(&uploads)?;
        Ok(())
    })
}
