//! Supervisor policies: a scripted oracle, its noisy variant, a synthetic stand-in
//! for the human gating decision, and a mailbox-backed adapter for a remote human.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Action, BottleneckEnv, State};
use crate::error::{Error, Result};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub waypoint: [f64; 2],
    pub gap_exit: [f64; 2],
    pub gain: f64,
    pub noise_std: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            waypoint: [0.45, 0.5],
            gap_exit: [0.55, 0.5],
            gain: 1.0,
            noise_std: 0.0,
        }
    }
}

/// Proportional controller through the gap: waypoint, then gap exit, then goal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedOracle {
    pub config: OracleConfig,
}

impl ScriptedOracle {
    pub fn new(config: OracleConfig) -> Result<Self> {
        if !(config.noise_std >= 0.0) {
            return Err(Error::Config("oracle noise_std must be >= 0".into()));
        }
        Ok(Self { config })
    }

    /// Current subgoal. A waypoint counts as passed once `x` reaches it; with a
    /// closed upper bound the oracle would target its own position at the gap exit
    /// and stall there forever in a noiseless arena.
    pub fn target(&self, env: &BottleneckEnv, state: &State) -> [f64; 2] {
        const REACHED: f64 = 1e-9;
        let x = state.x();
        if x < self.config.waypoint[0] - REACHED {
            self.config.waypoint
        } else if x < self.config.gap_exit[0] - REACHED {
            self.config.gap_exit
        } else {
            env.config().goal_center
        }
    }

    pub fn action(&self, env: &BottleneckEnv, state: &State) -> Action {
        let t = self.target(env, state);
        let k = self.config.gain;
        env.clip_action(Action::new(k * (t[0] - state.x()), k * (t[1] - state.y())))
    }

    /// Clean action plus per-component Gaussian noise of std `noise_std`, re-clipped.
    pub fn noisy_action<R: Rng + ?Sized>(
        &self,
        env: &BottleneckEnv,
        state: &State,
        rng: &mut R,
    ) -> Action {
        let clean = self.action(env, state);
        if self.config.noise_std == 0.0 {
            return clean;
        }
        let normal = Normal::new(0.0, self.config.noise_std).expect("validated std");
        let noisy = clean.0.map(|v| v + normal.sample(rng));
        env.clip_action(Action(noisy))
    }
}

/// Anything that can provide a corrective action for a robot in supervisor mode.
pub trait Supervisor {
    fn act(
        &mut self,
        env: &BottleneckEnv,
        robot_id: usize,
        state: &State,
        rng: &mut SimRng,
    ) -> Result<Action>;

    /// The supervisor's noise-free reference action, when one exists without
    /// consuming input. Used for discrepancy bookkeeping in scripted runs.
    fn reference(&self, env: &BottleneckEnv, state: &State) -> Option<Action> {
        let _ = (env, state);
        None
    }

    /// Whether asking for help can currently succeed. Gates stay closed while false.
    fn available(&self) -> bool {
        true
    }
}

impl Supervisor for ScriptedOracle {
    fn act(
        &mut self,
        env: &BottleneckEnv,
        _: usize,
        state: &State,
        rng: &mut SimRng,
    ) -> Result<Action> {
        Ok(self.noisy_action(env, state, rng))
    }

    fn reference(&self, env: &BottleneckEnv, state: &State) -> Option<Action> {
        Some(self.action(env, state))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticGaterConfig {
    /// Squared L2 discrepancy above which the gater takes over.
    pub engage_discrepancy: f64,
    pub disengage_factor: f64,
    pub patience: usize,
}

impl Default for SyntheticGaterConfig {
    fn default() -> Self {
        Self {
            engage_discrepancy: 0.01,
            disengage_factor: 0.25,
            patience: 3,
        }
    }
}

impl SyntheticGaterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("gater patience must be >= 1".into()));
        }
        if !(self.disengage_factor < 1.0 && self.disengage_factor >= 0.0) {
            return Err(Error::Config(
                "gater disengage_factor must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaterDecision {
    Engage,
    Stay,
    Disengage,
}

/// Scripted stand-in for a human deciding when to take over.
#[derive(Debug, Clone)]
pub struct SyntheticGater {
    config: SyntheticGaterConfig,
    engaged: bool,
    calm_steps: usize,
}

impl SyntheticGater {
    pub fn new(config: SyntheticGaterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            engaged: false,
            calm_steps: 0,
        })
    }

    pub fn engaged(&self) -> bool {
        self.engaged
    }

    pub fn reset(&mut self) {
        self.engaged = false;
        self.calm_steps = 0;
    }

    pub fn decide(&mut self, discrepancy: f64) -> GaterDecision {
        if !self.engaged {
            if discrepancy > self.config.engage_discrepancy {
                self.engaged = true;
                self.calm_steps = 0;
                return GaterDecision::Engage;
            }
            return GaterDecision::Stay;
        }
        if discrepancy < self.config.disengage_factor * self.config.engage_discrepancy {
            self.calm_steps += 1;
        } else {
            self.calm_steps = 0;
        }
        if self.calm_steps >= self.config.patience {
            self.engaged = false;
            self.calm_steps = 0;
            GaterDecision::Disengage
        } else {
            GaterDecision::Stay
        }
    }

    pub fn decide_actions(&mut self, robot: &[f64], oracle: &[f64]) -> Result<GaterDecision> {
        Ok(self.decide(crate::ensemble::discrepancy(robot, oracle)?))
    }
}

#[derive(Debug)]
struct MailboxState {
    pending: Vec<Option<Action>>,
    open: bool,
    closed_reason: String,
}

/// At-most-one pending human action per robot; the newest post wins.
#[derive(Debug)]
pub struct ActionMailbox {
    state: Mutex<MailboxState>,
    ready: Condvar,
}

impl ActionMailbox {
    pub fn new(num_robots: usize) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(MailboxState {
                pending: vec![None; num_robots],
                open: false,
                closed_reason: "no supervisor connected".into(),
            }),
            ready: Condvar::new(),
        })
    }

    pub fn open(&self) {
        let mut st = self.state.lock().unwrap();
        st.open = true;
        st.pending.iter_mut().for_each(|p| *p = None);
    }

    pub fn close(&self, reason: impl Into<String>) {
        let mut st = self.state.lock().unwrap();
        st.open = false;
        st.closed_reason = reason.into();
        st.pending.iter_mut().for_each(|p| *p = None);
        self.ready.notify_all();
    }

    pub fn is_open(&self) -> bool {
        self.state.lock().unwrap().open
    }

    pub fn post(&self, robot_id: usize, action: Action) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        if !st.open {
            return Err(Error::SupervisorUnavailable {
                robot_id,
                reason: st.closed_reason.clone(),
            });
        }
        let slot = st
            .pending
            .get_mut(robot_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown robot {robot_id}")))?;
        *slot = Some(action);
        self.ready.notify_all();
        Ok(())
    }

    pub fn clear(&self, robot_id: usize) {
        if let Some(slot) = self.state.lock().unwrap().pending.get_mut(robot_id) {
            *slot = None;
        }
    }

    /// Blocks until an action for `robot_id` is available, the mailbox closes, or
    /// `timeout` elapses.
    pub fn take(&self, robot_id: usize, timeout: Option<Duration>) -> Result<Action> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut st = self.state.lock().unwrap();
        loop {
            if !st.open {
                return Err(Error::SupervisorUnavailable {
                    robot_id,
                    reason: st.closed_reason.clone(),
                });
            }
            match st.pending.get_mut(robot_id) {
                None => return Err(Error::InvalidArgument(format!("unknown robot {robot_id}"))),
                Some(slot) => {
                    if let Some(a) = slot.take() {
                        return Ok(a);
                    }
                }
            }
            st = match deadline {
                None => self.ready.wait(st).unwrap(),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(Error::SupervisorUnavailable {
                            robot_id,
                            reason: "timed out waiting for a human action".into(),
                        });
                    }
                    self.ready.wait_timeout(st, d - now).unwrap().0
                }
            };
        }
    }
}

/// Called with `(robot_id, state)` each time the remote human must act.
pub type RequestHook = Box<dyn FnMut(usize, &State) + Send>;

/// Supervisor backed by a human on the other end of the gateway.
pub struct RemoteSupervisor {
    mailbox: Arc<ActionMailbox>,
    on_request: Option<RequestHook>,
    timeout: Option<Duration>,
}

impl RemoteSupervisor {
    pub fn new(mailbox: Arc<ActionMailbox>) -> Self {
        Self {
            mailbox,
            on_request: None,
            timeout: None,
        }
    }

    pub fn with_request_hook(mut self, hook: RequestHook) -> Self {
        self.on_request = Some(hook);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn mailbox(&self) -> &Arc<ActionMailbox> {
        &self.mailbox
    }

    pub fn remote_action(
        &mut self,
        env: &BottleneckEnv,
        robot_id: usize,
        state: &State,
    ) -> Result<Action> {
        if let Some(hook) = self.on_request.as_mut() {
            hook(robot_id, state);
        }
        let action = self.mailbox.take(robot_id, self.timeout)?;
        if !action.is_finite() {
            return Err(Error::NonFinite("human action"));
        }
        Ok(env.clip_action(action))
    }
}

impl Supervisor for RemoteSupervisor {
    fn act(
        &mut self,
        env: &BottleneckEnv,
        robot_id: usize,
        state: &State,
        _: &mut SimRng,
    ) -> Result<Action> {
        self.remote_action(env, robot_id, state)
    }

    fn available(&self) -> bool {
        self.mailbox.is_open()
    }
}
