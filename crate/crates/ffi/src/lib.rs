//! C ABI over `thrifty-core`.
//!
//! Every function returns a [`ThriftyStatus`]; outputs go through caller-provided
//! pointers. Handles are opaque and must be released with their `*_free`
//! function. On failure, `thrifty_last_error` describes the most recent error on
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use thrifty_core::critic::RiskCritic;
use thrifty_core::ensemble::{discrepancy, EnsemblePolicy};
use thrifty_core::env::{Action, BottleneckEnv, EnvConfig, State};
use thrifty_core::gate::{
    cede_scores, intervene_scores, nearest_rank_quantile, probe, GateClauses, GateThresholds,
    SwitchCause,
};
use thrifty_core::persist::{load_critic, load_policy};
use thrifty_core::{metrics, Error, SimRng};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThriftyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    VersionMismatch = 5,
    WrongKind = 6,
    DimensionMismatch = 7,
    Panic = 8,
}

/// Cause reported by `thrifty_gate_intervene`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThriftySwitchCause {
    None = 0,
    Novelty = 1,
    Risk = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThriftyThresholds {
    pub risk_intervene: f64,
    pub risk_cede: f64,
    pub novelty_intervene: f64,
    pub discrepancy_cede: f64,
    pub budget: f64,
}

impl From<GateThresholds> for ThriftyThresholds {
    fn from(t: GateThresholds) -> Self {
        Self {
            risk_intervene: t.risk_intervene,
            risk_cede: t.risk_cede,
            novelty_intervene: t.novelty_intervene,
            discrepancy_cede: t.discrepancy_cede,
            budget: t.budget,
        }
    }
}

impl From<ThriftyThresholds> for GateThresholds {
    fn from(t: ThriftyThresholds) -> Self {
        Self {
            risk_intervene: t.risk_intervene,
            risk_cede: t.risk_cede,
            novelty_intervene: t.novelty_intervene,
            discrepancy_cede: t.discrepancy_cede,
            budget: t.budget,
        }
    }
}

/// Bottleneck environment plus its own seeded random stream.
pub struct ThriftyEnv {
    env: BottleneckEnv,
    rng: SimRng,
}

pub struct ThriftyPolicy {
    policy: EnsemblePolicy,
}

pub struct ThriftyCritic {
    critic: RiskCritic,
    thresholds: Option<GateThresholds>,
}

/// Owns copies of the policy and critic it was built from.
pub struct ThriftyGate {
    policy: EnsemblePolicy,
    critic: RiskCritic,
    thresholds: GateThresholds,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(message: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(message.bytes().filter(|b| *b != 0));
    });
}

fn status_of(err: &Error) -> ThriftyStatus {
    match err {
        Error::Io(_) => ThriftyStatus::Io,
        Error::Json(_) | Error::MalformedLine { .. } | Error::InvalidArchitecture(_) => {
            ThriftyStatus::Format
        }
        Error::VersionMismatch { .. } => ThriftyStatus::VersionMismatch,
        Error::WrongModelKind { .. } => ThriftyStatus::WrongKind,
        Error::DimensionMismatch { .. } => ThriftyStatus::DimensionMismatch,
        _ => ThriftyStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (ThriftyStatus, String)>) -> ThriftyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ThriftyStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            ThriftyStatus::Panic
        }
    }
}

fn core<T>(r: thrifty_core::Result<T>) -> Result<T, (ThriftyStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ThriftyStatus, String) {
    (ThriftyStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (ThriftyStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (ThriftyStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_pair(p: *const f64, what: &str) -> Result<[f64; 2], (ThriftyStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok([*p, *p.add(1)])
}

unsafe fn write_pair(p: *mut f64, v: [f64; 2], what: &str) -> Result<(), (ThriftyStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = v[0];
    *p.add(1) = v[1];
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<String, (ThriftyStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (ThriftyStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn thrifty_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn thrifty_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment. `config_json` may be null for the default arena.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_env_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut ThriftyEnv,
) -> ThriftyStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let config: EnvConfig = if config_json.is_null() {
            EnvConfig::default()
        } else {
            let text = CStr::from_ptr(config_json).to_str().map_err(|_| {
                (
                    ThriftyStatus::InvalidArgument,
                    "config is not UTF-8".to_string(),
                )
            })?;
            serde_json::from_str(text).map_err(|e| (ThriftyStatus::Format, e.to_string()))?
        };
        let env = core(BottleneckEnv::new(config))?;
        *out = Box::into_raw(Box::new(ThriftyEnv {
            env,
            rng: SimRng::seed_from_u64(seed),
        }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from `thrifty_env_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn thrifty_env_free(env: *mut ThriftyEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Samples a start state into `out_state[2]`.
///
/// # Safety
/// Pointers must be valid; `out_state` must hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_env_reset(
    env: *mut ThriftyEnv,
    out_state: *mut f64,
) -> ThriftyStatus {
    guard(|| {
        let h = deref_mut(env, "env")?;
        let s = h.env.reset(&mut h.rng);
        write_pair(out_state, s.0, "out_state")
    })
}

/// Advances one step from `state[2]` with `action[2]`.
///
/// # Safety
/// Pointers must be valid; arrays hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_env_step(
    env: *mut ThriftyEnv,
    state: *const f64,
    action: *const f64,
    out_next_state: *mut f64,
    out_reached_goal: *mut bool,
) -> ThriftyStatus {
    guard(|| {
        let h = deref_mut(env, "env")?;
        let s = State(read_pair(state, "state")?);
        let a = Action(read_pair(action, "action")?);
        let reached = deref_mut(out_reached_goal, "out_reached_goal")?;
        let outcome = core(h.env.step(&s, a, &mut h.rng))?;
        write_pair(out_next_state, outcome.next_state.0, "out_next_state")?;
        *reached = outcome.reached_goal;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `state` holds two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_env_in_goal(
    env: *const ThriftyEnv,
    state: *const f64,
    out: *mut bool,
) -> ThriftyStatus {
    guard(|| {
        let h = deref(env, "env")?;
        let s = State(read_pair(state, "state")?);
        *deref_mut(out, "out")? = h.env.goal_indicator(&s);
        Ok(())
    })
}

/// Loads a policy-ensemble checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_policy_load(
    path: *const c_char,
    out: *mut *mut ThriftyPolicy,
) -> ThriftyStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let policy = core(load_policy(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(ThriftyPolicy { policy }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn thrifty_policy_free(policy: *mut ThriftyPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Ensemble-mean action and its novelty at `state[2]`. `out_novelty` may be null.
///
/// # Safety
/// Pointers must be valid; arrays hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_policy_act(
    policy: *const ThriftyPolicy,
    state: *const f64,
    out_action: *mut f64,
    out_novelty: *mut f64,
) -> ThriftyStatus {
    guard(|| {
        let p = deref(policy, "policy")?;
        let s = State(read_pair(state, "state")?);
        let (a, nov) = p.policy.action_and_novelty(&s);
        write_pair(out_action, a.0, "out_action")?;
        if let Some(n) = out_novelty.as_mut() {
            *n = nov;
        }
        Ok(())
    })
}

/// Loads a critic checkpoint, including any gate thresholds stored with it.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_critic_load(
    path: *const c_char,
    out: *mut *mut ThriftyCritic,
) -> ThriftyStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let (critic, thresholds) = core(load_critic(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(ThriftyCritic { critic, thresholds }));
        Ok(())
    })
}

/// # Safety
/// `critic` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn thrifty_critic_free(critic: *mut ThriftyCritic) {
    if !critic.is_null() {
        drop(Box::from_raw(critic));
    }
}

/// Risk `1 - Q(s, a)`.
///
/// # Safety
/// Pointers must be valid; arrays hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_critic_risk(
    critic: *const ThriftyCritic,
    state: *const f64,
    action: *const f64,
    out_risk: *mut f64,
) -> ThriftyStatus {
    guard(|| {
        let c = deref(critic, "critic")?;
        let s = State(read_pair(state, "state")?);
        let a = Action(read_pair(action, "action")?);
        *deref_mut(out_risk, "out_risk")? = c.critic.risk(&s, &a);
        Ok(())
    })
}

/// Builds a gate from a policy and a critic. With `thresholds` null, the
/// thresholds saved in the critic checkpoint are used.
///
/// # Safety
/// Handles must be live; `thresholds` may be null; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_gate_new(
    policy: *const ThriftyPolicy,
    critic: *const ThriftyCritic,
    thresholds: *const ThriftyThresholds,
    out: *mut *mut ThriftyGate,
) -> ThriftyStatus {
    guard(|| {
        let p = deref(policy, "policy")?;
        let c = deref(critic, "critic")?;
        let out = deref_mut(out, "out")?;
        let thresholds = match thresholds.as_ref() {
            Some(t) => GateThresholds::from(*t),
            None => c.thresholds.ok_or((
                ThriftyStatus::InvalidArgument,
                "critic checkpoint carries no thresholds; pass them explicitly".to_string(),
            ))?,
        };
        *out = Box::into_raw(Box::new(ThriftyGate {
            policy: p.policy.clone(),
            critic: c.critic.clone(),
            thresholds,
        }));
        Ok(())
    })
}

/// # Safety
/// `gate` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn thrifty_gate_free(gate: *mut ThriftyGate) {
    if !gate.is_null() {
        drop(Box::from_raw(gate));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_gate_thresholds(
    gate: *const ThriftyGate,
    out: *mut ThriftyThresholds,
) -> ThriftyStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(gate, "gate")?.thresholds.into();
        Ok(())
    })
}

/// Whether the robot should hand control to the supervisor at `state[2]`.
///
/// # Safety
/// Pointers must be valid; `state` holds two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_gate_intervene(
    gate: *const ThriftyGate,
    state: *const f64,
    out_cause: *mut ThriftySwitchCause,
) -> ThriftyStatus {
    guard(|| {
        let g = deref(gate, "gate")?;
        let s = State(read_pair(state, "state")?);
        let out = deref_mut(out_cause, "out_cause")?;
        let p = probe(&s, &g.policy, &g.critic);
        *out = match intervene_scores(p.novelty, p.risk, &g.thresholds, GateClauses::default()) {
            None => ThriftySwitchCause::None,
            Some(SwitchCause::Novelty) => ThriftySwitchCause::Novelty,
            Some(_) => ThriftySwitchCause::Risk,
        };
        Ok(())
    })
}

/// Whether control returns to the robot after the supervisor chose
/// `human_action[2]` at `state[2]`.
///
/// # Safety
/// Pointers must be valid; arrays hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn thrifty_gate_cede(
    gate: *const ThriftyGate,
    state: *const f64,
    human_action: *const f64,
    out_cede: *mut bool,
) -> ThriftyStatus {
    guard(|| {
        let g = deref(gate, "gate")?;
        let s = State(read_pair(state, "state")?);
        let h = read_pair(human_action, "human_action")?;
        let out = deref_mut(out_cede, "out_cede")?;
        let robot = g.policy.policy_action(&s);
        let d = core(discrepancy(robot.as_slice(), &h))?;
        *out = cede_scores(
            d,
            g.critic.risk(&s, &robot),
            &g.thresholds,
            GateClauses::default(),
        );
        Ok(())
    })
}

/// Nearest-rank quantile of `values[0..len]`.
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_nearest_rank_quantile(
    values: *const f64,
    len: usize,
    q: f64,
    out: *mut f64,
) -> ThriftyStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let slice = std::slice::from_raw_parts(values, len);
        *deref_mut(out, "out")? = core(nearest_rank_quantile(slice, q))?;
        Ok(())
    })
}

/// Supervisor burden `switches * (latency + intervention_length)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thrifty_burden(
    switches: f64,
    intervention_length: f64,
    latency: f64,
    out: *mut f64,
) -> ThriftyStatus {
    guard(|| {
        *deref_mut(out, "out")? = core(metrics::burden(switches, intervention_length, latency))?;
        Ok(())
    })
}
