//! Newline-delimited JSON messages exchanged between the gateway and a
//! supervision client.
//!
//! The server greets with `hello` (protocol version and arena geometry); the
//! client must answer with a `hello` carrying the same version before anything
//! else. Unknown fields are ignored on receive.

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::fleet::{FleetEvent, FleetTick};
use crate::gate::Mode;

pub const PROTOCOL_VERSION: u32 = 1;

/// Environment variable holding the default gateway bind address.
pub const BIND_ADDR_ENV: &str = "THRIFTY_GATEWAY_ADDR";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8765";

pub fn default_bind_addr() -> String {
    std::env::var(BIND_ADDR_ENV).unwrap_or_else(|_| DEFAULT_BIND_ADDR.to_string())
}

/// Arena geometry, so clients need no environment constants of their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaInfo {
    pub wall_x_band: [f64; 2],
    pub gap_y: [f64; 2],
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub action_max: f64,
}

impl From<&EnvConfig> for ArenaInfo {
    fn from(c: &EnvConfig) -> Self {
        Self {
            wall_x_band: c.wall_x_band,
            gap_y: c.gap_y,
            goal_center: c.goal_center,
            goal_radius: c.goal_radius,
            action_max: c.action_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub state: [f64; 2],
    pub mode: Mode,
    pub episode_step: usize,
    pub idle: usize,
    pub novelty: Option<f64>,
    pub risk: Option<f64>,
    pub queue: Vec<usize>,
    pub serving: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestPayload {
    pub state: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPayload {
    pub action: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePayload {
    pub queue: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEndPayload {
    pub success: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Hello {
        tick: usize,
        protocol_version: u32,
        #[serde(default)]
        robots: Option<usize>,
        #[serde(default)]
        arena: Option<ArenaInfo>,
    },
    StateUpdate {
        tick: usize,
        robot_id: usize,
        payload: StatePayload,
    },
    /// The tick loop is blocked until a `human_action` for `robot_id` arrives.
    InterventionRequest {
        tick: usize,
        robot_id: usize,
        payload: RequestPayload,
    },
    HumanAction {
        tick: usize,
        robot_id: usize,
        payload: ActionPayload,
    },
    CedeNotice {
        tick: usize,
        robot_id: usize,
        payload: QueuePayload,
    },
    EpisodeEnd {
        tick: usize,
        robot_id: usize,
        payload: EpisodeEndPayload,
    },
    Heartbeat {
        tick: usize,
    },
    Error {
        tick: usize,
        payload: ErrorPayload,
    },
}

impl WireMessage {
    pub fn tick(&self) -> usize {
        match self {
            WireMessage::Hello { tick, .. }
            | WireMessage::StateUpdate { tick, .. }
            | WireMessage::InterventionRequest { tick, .. }
            | WireMessage::HumanAction { tick, .. }
            | WireMessage::CedeNotice { tick, .. }
            | WireMessage::EpisodeEnd { tick, .. }
            | WireMessage::Heartbeat { tick }
            | WireMessage::Error { tick, .. } => *tick,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "hello",
            WireMessage::StateUpdate { .. } => "state_update",
            WireMessage::InterventionRequest { .. } => "intervention_request",
            WireMessage::HumanAction { .. } => "human_action",
            WireMessage::CedeNotice { .. } => "cede_notice",
            WireMessage::EpisodeEnd { .. } => "episode_end",
            WireMessage::Heartbeat { .. } => "heartbeat",
            WireMessage::Error { .. } => "error",
        }
    }

    pub fn error(tick: usize, message: impl Into<String>) -> Self {
        WireMessage::Error {
            tick,
            payload: ErrorPayload {
                message: message.into(),
            },
        }
    }

    /// One JSON document terminated by `\n`.
    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("wire messages always serialize");
        line.push('\n');
        line
    }

    pub fn decode(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Protocol(format!("bad message: {e}")))
    }
}

/// Messages describing a completed fleet tick: one `state_update` per robot, then
/// one message per cede and per finished episode.
pub fn tick_messages(tick: &FleetTick) -> Vec<WireMessage> {
    let mut out: Vec<WireMessage> = tick
        .robots
        .iter()
        .map(|r| WireMessage::StateUpdate {
            tick: tick.tick,
            robot_id: r.id,
            payload: StatePayload {
                state: r.state.0,
                mode: r.mode,
                episode_step: r.episode_step,
                idle: r.idle,
                novelty: r.novelty,
                risk: r.risk,
                queue: tick.queue.clone(),
                serving: tick.serving,
            },
        })
        .collect();
    for e in &tick.events {
        match e {
            FleetEvent::Cede { robot_id } => out.push(WireMessage::CedeNotice {
                tick: tick.tick,
                robot_id: *robot_id,
                payload: QueuePayload {
                    queue: tick.queue.clone(),
                },
            }),
            FleetEvent::EpisodeEnd {
                robot_id,
                success,
                steps,
            } => out.push(WireMessage::EpisodeEnd {
                tick: tick.tick,
                robot_id: *robot_id,
                payload: EpisodeEndPayload {
                    success: *success,
                    steps: *steps,
                },
            }),
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_tag() {
        let m = WireMessage::HumanAction {
            tick: 4,
            robot_id: 2,
            payload: ActionPayload {
                action: [0.05, 0.0],
            },
        };
        let line = m.encode();
        assert!(line.ends_with('\n'));
        assert!(line.contains(r#""type":"human_action""#));
        assert_eq!(WireMessage::decode(&line).unwrap(), m);
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let m = WireMessage::decode(r#"{"type":"heartbeat","tick":9,"extra":{"a":1}}"#).unwrap();
        assert_eq!(m, WireMessage::Heartbeat { tick: 9 });
    }

    #[test]
    fn malformed_and_unknown_types_fail() {
        assert!(WireMessage::decode("{not json").is_err());
        assert!(WireMessage::decode(r#"{"type":"teleport","tick":1}"#).is_err());
        assert!(WireMessage::decode(r#"{"type":"human_action","tick":1}"#).is_err());
    }

    #[test]
    fn hello_without_optional_fields() {
        let m = WireMessage::decode(r#"{"type":"hello","tick":0,"protocol_version":1}"#).unwrap();
        assert_eq!(
            m,
            WireMessage::Hello {
                tick: 0,
                protocol_version: 1,
                robots: None,
                arena: None
            }
        );
    }
}
