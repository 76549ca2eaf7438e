//! Desk-scale bottleneck navigation task.
//!
//! A point robot lives in the unit square. A vertical wall band splits the arena and
//! can only be crossed through a narrow gap; the goal disc sits on the far side.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State(pub [f64; 2]);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action(pub [f64; 2]);

impl State {
    pub fn new(x: f64, y: f64) -> Self {
        Self([x, y])
    }
    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Action {
    pub fn new(dx: f64, dy: f64) -> Self {
        Self([dx, dy])
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub wall_x_band: [f64; 2],
    pub gap_y: [f64; 2],
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub action_max: f64,
    pub process_noise_std: f64,
    pub horizon: usize,
    pub start_x: [f64; 2],
    pub start_y: [f64; 2],
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            wall_x_band: [0.49, 0.51],
            gap_y: [0.45, 0.55],
            goal_center: [0.9, 0.5],
            goal_radius: 0.05,
            action_max: 0.05,
            process_noise_std: 0.005,
            horizon: 100,
            start_x: [0.05, 0.2],
            start_y: [0.1, 0.9],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let [wl, wh] = self.wall_x_band;
        let [gl, gh] = self.gap_y;
        let [gx, _] = self.goal_center;
        let bad = |m: &str| Err(Error::Config(format!("env: {m}")));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(0.0 < wl && wl <= wh && wh < 1.0) {
            return bad("wall band must lie inside the arena");
        }
        if !(0.0 < gl && gl < gh && gh < 1.0) {
            return bad("gap must lie strictly inside the arena");
        }
        if gx + self.goal_radius >= wl && gx - self.goal_radius <= wh {
            return bad("goal disc intersects the wall band");
        }
        if !(self.action_max > 0.0) || !(self.process_noise_std >= 0.0) || !(self.goal_radius > 0.0)
        {
            return bad("action_max and goal_radius must be positive, noise non-negative");
        }
        if self.start_x[0] > self.start_x[1] || self.start_y[0] > self.start_y[1] {
            return bad("start region bounds are inverted");
        }
        Ok(())
    }

    fn in_gap(&self, y: f64) -> bool {
        self.gap_y[0] <= y && y <= self.gap_y[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub reached_goal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckEnv {
    config: EnvConfig,
}

impl BottleneckEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let sample = |rng: &mut R, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        let x = sample(rng, self.config.start_x);
        let y = sample(rng, self.config.start_y);
        State::new(x, y)
    }

    pub fn goal_indicator(&self, state: &State) -> bool {
        let [gx, gy] = self.config.goal_center;
        let (dx, dy) = (state.x() - gx, state.y() - gy);
        // Slack so that points written on the boundary in decimal count as inside.
        (dx * dx + dy * dy).sqrt() <= self.config.goal_radius + 1e-12
    }

    pub fn clip_action(&self, action: Action) -> Action {
        let m = self.config.action_max;
        Action(action.0.map(|v| v.clamp(-m, m)))
    }

    /// Rescales a unit-box action (e.g. a tanh head) to the action bounds.
    pub fn scale_unit_action(&self, unit: [f64; 2]) -> Action {
        Action(unit.map(|v| v * self.config.action_max))
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &State,
        action: Action,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if !action.is_finite() {
            return Err(Error::NonFinite("action"));
        }
        let a = self.clip_action(action);
        // Always draw both samples so the stream does not depend on the noise level.
        let noise = Normal::new(0.0, self.config.process_noise_std)
            .map_err(|e| Error::Config(format!("process noise: {e}")))?;
        let (nx_noise, ny_noise) = (noise.sample(rng), noise.sample(rng));
        let mut nx = (state.x() + a.0[0] + nx_noise).clamp(0.0, 1.0);
        let ny = (state.y() + a.0[1] + ny_noise).clamp(0.0, 1.0);

        let [wl, wh] = self.config.wall_x_band;
        if !self.config.in_gap(ny) {
            let from_left = state.x() <= wl;
            let from_right = state.x() >= wh;
            if from_left && nx > wl {
                nx = wl;
            } else if from_right && nx < wh {
                nx = wh;
            } else if !from_left && !from_right && nx > wl && nx < wh {
                // Leaving the gap vertically from inside the band: project to the nearer face.
                nx = if nx - wl <= wh - nx { wl } else { wh };
            }
        }
        let next_state = State::new(nx, ny);
        Ok(StepOutcome {
            next_state,
            reached_goal: self.goal_indicator(&next_state),
        })
    }

    /// True when `x` lies strictly inside the wall band outside the gap.
    pub fn inside_wall(&self, state: &State) -> bool {
        let [wl, wh] = self.config.wall_x_band;
        state.x() > wl && state.x() < wh && !self.config.in_gap(state.y())
    }
}
