#![allow(dead_code)]

use rand::SeedableRng;

use thrifty_core::engine::Gating;
use thrifty_core::ensemble::Policy;
use thrifty_core::env::{Action, BottleneckEnv, EnvConfig, State};
use thrifty_core::fleet::{run_fleet, FleetConfig, FleetMetrics, FleetTick, ScriptedGate};
use thrifty_core::supervisor::{OracleConfig, ScriptedOracle};
use thrifty_core::SimRng;

/// Stands still; keeps scripted fleets far from the goal.
pub struct Hold;

impl Policy for Hold {
    fn act(&self, _: &State) -> Action {
        Action::default()
    }
}

pub fn quiet_env() -> BottleneckEnv {
    BottleneckEnv::new(EnvConfig {
        process_noise_std: 0.0,
        ..EnvConfig::default()
    })
    .unwrap()
}

/// Gates for the three-robot scenario: robot 1 asks at tick 3 and cedes at tick 5,
/// robot 2 asks at tick 4 and cedes at tick 8.
pub fn scenario_gates() -> Vec<Box<dyn Gating>> {
    vec![
        Box::new(ScriptedGate::default()),
        Box::new(ScriptedGate::new([3], [5])),
        Box::new(ScriptedGate::new([4], [8])),
    ]
}

pub fn run_scenario(ticks: usize) -> (Vec<FleetTick>, FleetMetrics) {
    let env = quiet_env();
    let config = FleetConfig {
        robots: 3,
        steps: ticks,
        freeze_queued: true,
    };
    let mut gates = scenario_gates();
    let mut oracle = ScriptedOracle::new(OracleConfig::default()).unwrap();
    let mut rng = SimRng::seed_from_u64(0);
    let mut trace = Vec::new();
    let metrics = run_fleet(
        &env,
        &config,
        &Hold,
        &mut gates,
        &mut oracle,
        &mut rng,
        &mut |t| {
            trace.push(t.clone());
            Ok(())
        },
    )
    .unwrap();
    (trace, metrics)
}
