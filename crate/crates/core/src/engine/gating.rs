//! Per-algorithm switching rules behind a common interface.

use crate::critic::RiskCritic;
use crate::engine::classifier::{normalized_discrepancy, DiscrepancyClassifier};
use crate::ensemble::{discrepancy, EnsemblePolicy};
use crate::env::{Action, State};
use crate::error::{Error, Result};
use crate::gate::{cede_scores, intervene_scores, probe, GateClauses, GateThresholds, SwitchCause};
use crate::supervisor::{GaterDecision, SyntheticGater};

pub trait Gating {
    fn begin_episode(&mut self) {}

    /// Called once per fleet tick before any predicate is evaluated.
    fn on_tick(&mut self, _tick: usize) {}

    /// Novelty and risk seen by the most recent predicate evaluation, if the gate
    /// computes them.
    fn last_scores(&self) -> Option<(f64, f64)> {
        None
    }

    /// Asked in autonomous mode before acting at `state`. `reference` is the
    /// supervisor's action at `state` when it can be observed without cost.
    fn intervene(
        &mut self,
        state: &State,
        robot_action: &Action,
        reference: Option<&Action>,
    ) -> Result<Option<SwitchCause>>;

    /// Asked in supervisor mode after the supervisor acted at `state`.
    fn cede(
        &mut self,
        state: &State,
        robot_action: &Action,
        label: &Action,
        next_state: &State,
    ) -> Result<bool>;
}

/// Never hands over control: plain autonomous execution.
pub struct NeverIntervene;

impl Gating for NeverIntervene {
    fn intervene(
        &mut self,
        _: &State,
        _: &Action,
        _: Option<&Action>,
    ) -> Result<Option<SwitchCause>> {
        Ok(None)
    }
    fn cede(&mut self, _: &State, _: &Action, _: &Action, _: &State) -> Result<bool> {
        Ok(true)
    }
}

/// Novelty/risk entry, discrepancy/risk exit.
pub struct ThriftyGate<'a> {
    pub ensemble: &'a EnsemblePolicy,
    pub critic: &'a RiskCritic,
    pub thresholds: GateThresholds,
    pub clauses: GateClauses,
    last: Option<(f64, f64)>,
}

impl<'a> ThriftyGate<'a> {
    pub fn new(
        ensemble: &'a EnsemblePolicy,
        critic: &'a RiskCritic,
        thresholds: GateThresholds,
        clauses: GateClauses,
    ) -> Self {
        Self {
            ensemble,
            critic,
            thresholds,
            clauses,
            last: None,
        }
    }
}

impl Gating for ThriftyGate<'_> {
    fn last_scores(&self) -> Option<(f64, f64)> {
        self.last
    }

    fn intervene(
        &mut self,
        state: &State,
        _: &Action,
        _: Option<&Action>,
    ) -> Result<Option<SwitchCause>> {
        let p = probe(state, self.ensemble, self.critic);
        self.last = Some((p.novelty, p.risk));
        Ok(intervene_scores(
            p.novelty,
            p.risk,
            &self.thresholds,
            self.clauses,
        ))
    }

    fn cede(
        &mut self,
        state: &State,
        robot_action: &Action,
        label: &Action,
        _: &State,
    ) -> Result<bool> {
        let d = discrepancy(robot_action.as_slice(), label.as_slice())?;
        let risk = self.critic.risk(state, robot_action);
        self.last = Some((self.ensemble.novelty(state), risk));
        Ok(cede_scores(d, risk, &self.thresholds, self.clauses))
    }
}

/// Supervisor in control exactly while the classifier flags the current state.
pub struct SafeGate<'a> {
    pub classifier: &'a DiscrepancyClassifier,
}

impl Gating for SafeGate<'_> {
    fn intervene(
        &mut self,
        state: &State,
        _: &Action,
        _: Option<&Action>,
    ) -> Result<Option<SwitchCause>> {
        Ok(self
            .classifier
            .predicts_unsafe(state)
            .then_some(SwitchCause::Novelty))
    }

    fn cede(&mut self, _: &State, _: &Action, _: &Action, next_state: &State) -> Result<bool> {
        Ok(!self.classifier.predicts_unsafe(next_state))
    }
}

/// Predicted-discrepancy entry, measured-discrepancy exit.
pub struct LazyGate<'a> {
    pub classifier: &'a DiscrepancyClassifier,
    pub exit_threshold: f64,
    pub action_max: f64,
    classifier_queries_in_supervisor: usize,
    measured_exits: usize,
}

impl<'a> LazyGate<'a> {
    pub fn new(
        classifier: &'a DiscrepancyClassifier,
        exit_threshold: f64,
        action_max: f64,
    ) -> Self {
        Self {
            classifier,
            exit_threshold,
            action_max,
            classifier_queries_in_supervisor: 0,
            measured_exits: 0,
        }
    }

    /// Should stay zero: exit decisions never consult the classifier.
    pub fn classifier_queries_in_supervisor(&self) -> usize {
        self.classifier_queries_in_supervisor
    }

    pub fn measured_exit_checks(&self) -> usize {
        self.measured_exits
    }
}

impl Gating for LazyGate<'_> {
    fn intervene(
        &mut self,
        state: &State,
        _: &Action,
        _: Option<&Action>,
    ) -> Result<Option<SwitchCause>> {
        Ok(self
            .classifier
            .predicts_unsafe(state)
            .then_some(SwitchCause::Novelty))
    }

    fn cede(
        &mut self,
        _: &State,
        robot_action: &Action,
        label: &Action,
        _: &State,
    ) -> Result<bool> {
        self.measured_exits += 1;
        let d = normalized_discrepancy(robot_action.as_slice(), label.as_slice(), self.action_max);
        Ok(d < self.exit_threshold)
    }
}

/// Human-gated: the (synthetic) human watches the robot and decides.
pub struct HumanGate {
    pub gater: SyntheticGater,
    pub action_max: f64,
}

impl Gating for HumanGate {
    fn begin_episode(&mut self) {
        self.gater.reset();
    }

    fn intervene(
        &mut self,
        _: &State,
        robot_action: &Action,
        reference: Option<&Action>,
    ) -> Result<Option<SwitchCause>> {
        let reference = reference.ok_or_else(|| {
            Error::InvalidArgument("human gating needs an observable supervisor reference".into())
        })?;
        let d = normalized_discrepancy(
            robot_action.as_slice(),
            reference.as_slice(),
            self.action_max,
        );
        Ok((self.gater.decide(d) == GaterDecision::Engage).then_some(SwitchCause::External))
    }

    fn cede(
        &mut self,
        _: &State,
        robot_action: &Action,
        label: &Action,
        _: &State,
    ) -> Result<bool> {
        let d = normalized_discrepancy(robot_action.as_slice(), label.as_slice(), self.action_max);
        Ok(self.gater.decide(d) == GaterDecision::Disengage)
    }
}
