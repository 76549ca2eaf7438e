use serde::{Deserialize, Serialize};

use crate::env::{Action, BottleneckEnv, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    Supervisor,
    Autonomous,
}

/// One `(s, a, s', 1_G(s))` record.
///
/// For supervisor transitions `action` is the supervisor's label for `state`;
/// for autonomous transitions it is the action the robot executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub next_state: State,
    pub goal_flag: bool,
    pub source_mode: SourceMode,
}

impl Transition {
    pub fn new(
        env: &BottleneckEnv,
        state: State,
        action: Action,
        next_state: State,
        source_mode: SourceMode,
    ) -> Self {
        Self {
            state,
            action,
            next_state,
            goal_flag: env.goal_indicator(&state),
            source_mode,
        }
    }

    /// Absorbing record for a goal state reached at the end of an episode, so the
    /// goal indicator appears on the `s_t` side of some transition.
    pub fn terminal(
        env: &BottleneckEnv,
        goal_state: State,
        action: Action,
        source_mode: SourceMode,
    ) -> Self {
        Self::new(env, goal_state, action, goal_state, source_mode)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Transition>) {
        self.transitions.extend(other);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Transition> {
        self.transitions.iter()
    }

    pub fn supervisor_only(&self) -> impl Iterator<Item = &Transition> {
        self.transitions
            .iter()
            .filter(|t| t.source_mode == SourceMode::Supervisor)
    }

    pub fn goal_count(&self) -> usize {
        self.transitions.iter().filter(|t| t.goal_flag).count()
    }
}

impl FromIterator<Transition> for Dataset {
    fn from_iter<I: IntoIterator<Item = Transition>>(iter: I) -> Self {
        Self {
            transitions: iter.into_iter().collect(),
        }
    }
}
