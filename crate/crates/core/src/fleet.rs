//! Several robots stepping in lockstep under one supervisor.
//!
//! Robots that ask for help join a FIFO queue; the supervisor serves the queue
//! head one action per tick until that robot's gate cedes or its episode ends.
//! Same-tick requests enqueue in ascending robot id. Queued robots that are not
//! being served accrue one idle tick per tick and, by default, stand still.

use std::collections::{BTreeSet, VecDeque};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::engine::Gating;
use crate::ensemble::Policy;
use crate::env::{Action, BottleneckEnv, State};
use crate::error::{Error, Result};
use crate::gate::{Mode, SwitchCause};
use crate::supervisor::Supervisor;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub robots: usize,
    pub steps: usize,
    /// Queued robots stand still until served. When false they keep executing
    /// their own policy while they wait.
    pub freeze_queued: bool,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            robots: 3,
            steps: 350,
            freeze_queued: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSlot {
    pub state: State,
    pub mode: Mode,
    pub episode_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FleetEvent {
    InterventionRequest {
        robot_id: usize,
        cause: SwitchCause,
    },
    ServiceStart {
        robot_id: usize,
    },
    Cede {
        robot_id: usize,
    },
    EpisodeEnd {
        robot_id: usize,
        success: bool,
        steps: usize,
    },
    SupervisorLost {
        robot_id: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: usize,
    pub state: State,
    pub mode: Mode,
    pub episode_step: usize,
    pub idle: usize,
    pub novelty: Option<f64>,
    pub risk: Option<f64>,
}

/// One line of the fleet trace: the situation after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTick {
    pub tick: usize,
    /// Robot that consumed the supervisor action during this tick.
    pub served: Option<usize>,
    /// Robot the supervisor will serve next.
    pub serving: Option<usize>,
    pub queue: Vec<usize>,
    pub robots: Vec<RobotView>,
    pub events: Vec<FleetEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FleetMetrics {
    pub ticks: usize,
    /// Successful episodes across all robots.
    pub throughput: usize,
    pub failures: usize,
    pub total_ints: usize,
    pub total_acts_h: usize,
    pub total_acts_r: usize,
    pub idle: Vec<usize>,
    pub mean_idle: f64,
}

#[derive(Debug, Clone)]
pub struct Fleet {
    pub robots: Vec<RobotSlot>,
    pub queue: VecDeque<usize>,
    pub serving: Option<usize>,
    pub tick: usize,
    pub idle: Vec<usize>,
    freeze_queued: bool,
    metrics: FleetMetrics,
}

impl Fleet {
    pub fn new(env: &BottleneckEnv, config: &FleetConfig, rng: &mut SimRng) -> Result<Self> {
        if config.robots == 0 {
            return Err(Error::Config("a fleet needs at least one robot".into()));
        }
        let robots = (0..config.robots)
            .map(|_| RobotSlot {
                state: env.reset(rng),
                mode: Mode::Autonomous,
                episode_step: 0,
            })
            .collect();
        Ok(Self {
            robots,
            queue: VecDeque::new(),
            serving: None,
            tick: 0,
            idle: vec![0; config.robots],
            freeze_queued: config.freeze_queued,
            metrics: FleetMetrics {
                idle: vec![0; config.robots],
                ..FleetMetrics::default()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn metrics(&self) -> FleetMetrics {
        let mut m = self.metrics.clone();
        m.ticks = self.tick;
        m.idle = self.idle.clone();
        m.mean_idle = if self.idle.is_empty() {
            0.0
        } else {
            self.idle.iter().sum::<usize>() as f64 / self.idle.len() as f64
        };
        m
    }

    fn promote(&mut self, events: &mut Vec<FleetEvent>) {
        if self.serving.is_none() {
            if let Some(id) = self.queue.pop_front() {
                self.serving = Some(id);
                events.push(FleetEvent::ServiceStart { robot_id: id });
            }
        }
    }

    fn drop_supervisor(&mut self, robot_id: usize, reason: String, events: &mut Vec<FleetEvent>) {
        warn!("supervisor lost while serving robot {robot_id}: {reason}");
        events.push(FleetEvent::SupervisorLost { robot_id, reason });
        for id in self.serving.take().into_iter().chain(self.queue.drain(..)) {
            self.robots[id].mode = Mode::Autonomous;
        }
    }

    /// Advances every robot by one tick. Effects are applied in robot-id order.
    pub fn step(
        &mut self,
        env: &BottleneckEnv,
        policy: &dyn Policy,
        gates: &mut [Box<dyn Gating + '_>],
        supervisor: &mut dyn Supervisor,
        rng: &mut SimRng,
    ) -> Result<FleetTick> {
        if gates.len() != self.robots.len() {
            return Err(Error::DimensionMismatch {
                expected: self.robots.len(),
                actual: gates.len(),
            });
        }
        let tick = self.tick;
        let mut events = Vec::new();
        for g in gates.iter_mut() {
            g.on_tick(tick);
        }

        if supervisor.available() {
            for (id, gate) in gates.iter_mut().enumerate() {
                let robot = &mut self.robots[id];
                if robot.mode != Mode::Autonomous {
                    continue;
                }
                let robot_action = env.clip_action(policy.act(&robot.state));
                let reference = supervisor.reference(env, &robot.state);
                if let Some(cause) =
                    gate.intervene(&robot.state, &robot_action, reference.as_ref())?
                {
                    robot.mode = Mode::Supervisor;
                    self.queue.push_back(id);
                    self.metrics.total_ints += 1;
                    events.push(FleetEvent::InterventionRequest {
                        robot_id: id,
                        cause,
                    });
                }
            }
        }
        self.promote(&mut events);

        let mut served = None;
        for id in 0..self.robots.len() {
            let state = self.robots[id].state;
            let robot_action = env.clip_action(policy.act(&state));
            // (executed action, supervisor label when a supervisor acted)
            let executed: Option<(Action, Option<Action>)> = if self.serving == Some(id) {
                match supervisor.act(env, id, &state, rng) {
                    Ok(a) => {
                        served = Some(id);
                        self.metrics.total_acts_h += 1;
                        Some((a, Some(supervisor.reference(env, &state).unwrap_or(a))))
                    }
                    Err(Error::SupervisorUnavailable { reason, .. }) => {
                        self.drop_supervisor(id, reason, &mut events);
                        self.metrics.total_acts_r += 1;
                        Some((robot_action, None))
                    }
                    Err(e) => return Err(e),
                }
            } else if self.robots[id].mode == Mode::Supervisor {
                self.idle[id] += 1;
                if self.freeze_queued {
                    None
                } else {
                    self.metrics.total_acts_r += 1;
                    Some((robot_action, None))
                }
            } else {
                self.metrics.total_acts_r += 1;
                Some((robot_action, None))
            };
            let Some((action, label)) = executed else {
                continue;
            };
            let outcome = env.step(&state, action, rng)?;
            let ceded = match label {
                Some(label) => {
                    gates[id].cede(&state, &robot_action, &label, &outcome.next_state)?
                }
                None => false,
            };
            let robot = &mut self.robots[id];
            robot.state = outcome.next_state;
            robot.episode_step += 1;
            if outcome.reached_goal || robot.episode_step >= env.horizon() {
                events.push(FleetEvent::EpisodeEnd {
                    robot_id: id,
                    success: outcome.reached_goal,
                    steps: robot.episode_step,
                });
                if outcome.reached_goal {
                    self.metrics.throughput += 1;
                } else {
                    self.metrics.failures += 1;
                }
                robot.state = env.reset(rng);
                robot.episode_step = 0;
                robot.mode = Mode::Autonomous;
                gates[id].begin_episode();
                if self.serving == Some(id) {
                    self.serving = None;
                }
                self.queue.retain(|q| *q != id);
            } else if ceded {
                robot.mode = Mode::Autonomous;
                self.serving = None;
                events.push(FleetEvent::Cede { robot_id: id });
            }
        }
        self.promote(&mut events);
        self.tick += 1;

        Ok(FleetTick {
            tick,
            served,
            serving: self.serving,
            queue: self.queue.iter().copied().collect(),
            robots: self
                .robots
                .iter()
                .enumerate()
                .map(|(id, r)| {
                    let scores = gates[id].last_scores();
                    RobotView {
                        id,
                        state: r.state,
                        mode: r.mode,
                        episode_step: r.episode_step,
                        idle: self.idle[id],
                        novelty: scores.map(|s| s.0),
                        risk: scores.map(|s| s.1),
                    }
                })
                .collect(),
            events,
        })
    }
}

/// Runs `config.steps` ticks, handing every tick to `on_tick` (e.g. a trace writer
/// or the gateway broadcaster).
#[allow(clippy::too_many_arguments)]
pub fn run_fleet(
    env: &BottleneckEnv,
    config: &FleetConfig,
    policy: &dyn Policy,
    gates: &mut [Box<dyn Gating + '_>],
    supervisor: &mut dyn Supervisor,
    rng: &mut SimRng,
    on_tick: &mut dyn FnMut(&FleetTick) -> Result<()>,
) -> Result<FleetMetrics> {
    let mut fleet = Fleet::new(env, config, rng)?;
    for _ in 0..config.steps {
        let tick = fleet.step(env, policy, gates, supervisor, rng)?;
        on_tick(&tick)?;
    }
    Ok(fleet.metrics())
}

/// Gate driven by a fixed schedule of ticks, for reproducing hand-written traces.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGate {
    requests: BTreeSet<usize>,
    cedes: BTreeSet<usize>,
    tick: usize,
}

impl ScriptedGate {
    pub fn new(
        requests: impl IntoIterator<Item = usize>,
        cedes: impl IntoIterator<Item = usize>,
    ) -> Self {
        Self {
            requests: requests.into_iter().collect(),
            cedes: cedes.into_iter().collect(),
            tick: 0,
        }
    }
}

impl Gating for ScriptedGate {
    fn on_tick(&mut self, tick: usize) {
        self.tick = tick;
    }

    fn intervene(
        &mut self,
        _: &State,
        _: &Action,
        _: Option<&Action>,
    ) -> Result<Option<SwitchCause>> {
        Ok(self
            .requests
            .contains(&self.tick)
            .then_some(SwitchCause::External))
    }

    fn cede(&mut self, _: &State, _: &Action, _: &Action, _: &State) -> Result<bool> {
        Ok(self.cedes.contains(&self.tick))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::supervisor::{OracleConfig, ScriptedOracle};
    use rand::SeedableRng;

    struct Hold;
    impl Policy for Hold {
        fn act(&self, _: &State) -> Action {
            Action::default()
        }
    }

    fn env() -> BottleneckEnv {
        BottleneckEnv::new(EnvConfig {
            process_noise_std: 0.0,
            ..EnvConfig::default()
        })
        .unwrap()
    }

    fn gates(scripts: Vec<ScriptedGate>) -> Vec<Box<dyn Gating>> {
        scripts
            .into_iter()
            .map(|g| Box::new(g) as Box<dyn Gating>)
            .collect()
    }

    #[test]
    fn quiet_fleet_moves_every_robot() {
        let env = env();
        let mut rng = SimRng::seed_from_u64(0);
        let mut fleet = Fleet::new(&env, &FleetConfig::default(), &mut rng).unwrap();
        let mut g = gates(vec![ScriptedGate::default(); 3]);
        let mut oracle = ScriptedOracle::new(OracleConfig::default()).unwrap();
        let t = fleet
            .step(&env, &Hold, &mut g, &mut oracle, &mut rng)
            .unwrap();
        assert!(t
            .robots
            .iter()
            .all(|r| r.episode_step == 1 && r.mode == Mode::Autonomous));
        assert_eq!(fleet.metrics().total_acts_r, 3);
        assert_eq!(t.served, None);
    }

    #[test]
    fn same_tick_requests_enqueue_by_id() {
        let env = env();
        let mut rng = SimRng::seed_from_u64(0);
        let mut fleet = Fleet::new(&env, &FleetConfig::default(), &mut rng).unwrap();
        let mut g = gates(vec![
            ScriptedGate::new([0], [1]),
            ScriptedGate::default(),
            ScriptedGate::new([0], [2]),
        ]);
        let mut oracle = ScriptedOracle::new(OracleConfig::default()).unwrap();
        let served: Vec<_> = (0..3)
            .map(|_| {
                fleet
                    .step(&env, &Hold, &mut g, &mut oracle, &mut rng)
                    .unwrap()
                    .served
            })
            .collect();
        assert_eq!(served, vec![Some(0), Some(0), Some(2)]);
        assert_eq!(fleet.idle, vec![0, 0, 2]);
    }

    #[test]
    fn zero_steps_gives_zero_metrics() {
        let env = env();
        let mut rng = SimRng::seed_from_u64(0);
        let mut g = gates(vec![ScriptedGate::default(); 3]);
        let mut oracle = ScriptedOracle::new(OracleConfig::default()).unwrap();
        let cfg = FleetConfig {
            steps: 0,
            ..FleetConfig::default()
        };
        let m = run_fleet(
            &env,
            &cfg,
            &Hold,
            &mut g,
            &mut oracle,
            &mut rng,
            &mut |_| Ok(()),
        )
        .unwrap();
        assert_eq!(
            (m.throughput, m.total_ints, m.total_acts_h, m.total_acts_r),
            (0, 0, 0, 0)
        );
        assert_eq!(m.mean_idle, 0.0);
    }
}
