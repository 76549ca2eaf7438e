//! Robot-gated interactive imitation learning on a bottleneck navigation task.
//!
//! The robot policy is a bootstrapped MLP ensemble whose disagreement measures
//! state novelty; a learned success-probability critic measures risk. A hysteretic
//! gate hands control to a supervisor when either score is high and returns it only
//! once the robot agrees with the supervisor in a low-risk state. Thresholds are set
//! from quantiles of observed scores so that the supervisor is asked for help at a
//! configurable rate.

pub mod critic;
pub mod dataset;
pub mod engine;
pub mod ensemble;
pub mod env;
pub mod error;
pub mod fleet;
pub mod gate;
pub mod gateway;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod protocol;
pub mod supervisor;

pub use error::{Error, Result};

/// Random number generator used throughout; seedable and platform independent.
pub type SimRng = rand_chacha::ChaCha8Rng;
