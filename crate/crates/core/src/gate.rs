//! Switching policy between autonomous and supervisor control.
//!
//! Entry into supervisor mode fires on high novelty or high risk; exit requires both
//! a small measured action discrepancy and low risk. Thresholds come from quantiles
//! of scores on states the robot has visited, given an intervention budget.

use serde::{Deserialize, Serialize};

use crate::critic::RiskCritic;
use crate::ensemble::{discrepancy, EnsemblePolicy};
use crate::env::{Action, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Autonomous,
    Supervisor,
}

/// Why a robot handed control to the supervisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchCause {
    Novelty,
    Risk,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub risk_intervene: f64,
    pub risk_cede: f64,
    pub novelty_intervene: f64,
    pub discrepancy_cede: f64,
    pub budget: f64,
}

/// Which clauses of the predicates are active; the defaults enable both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateClauses {
    pub novelty: bool,
    pub risk: bool,
}

impl Default for GateClauses {
    fn default() -> Self {
        Self {
            novelty: true,
            risk: true,
        }
    }
}

/// Nearest-rank quantile: the `ceil(q * n)`-th smallest value (1-based), with
/// `q = 0` mapping to the minimum.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "quantile level {q} outside [0, 1]"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("quantile input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), q) - 1])
}

/// 1-based nearest rank; the tiny slack keeps `0.99 * 100` from rounding up to 100.
pub(crate) fn nearest_rank(n: usize, q: f64) -> usize {
    let raw = (q * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Budget-driven thresholds: entry thresholds at the `(1 - budget)` quantile of
/// robot-visited scores, risk exit at their median, discrepancy exit at the mean
/// supervisor discrepancy.
pub fn tune_thresholds(
    risk_scores: &[f64],
    novelty_scores: &[f64],
    supervisor_discrepancies: &[f64],
    budget: f64,
) -> Result<GateThresholds> {
    if !(0.0..=1.0).contains(&budget) {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} outside [0, 1]"
        )));
    }
    if supervisor_discrepancies.is_empty() {
        return Err(Error::Empty("supervisor discrepancies"));
    }
    let discrepancy_cede =
        supervisor_discrepancies.iter().sum::<f64>() / supervisor_discrepancies.len() as f64;
    let mut t = retune_entry_thresholds(risk_scores, novelty_scores, budget, discrepancy_cede)?;
    t.discrepancy_cede = discrepancy_cede;
    Ok(t)
}

/// Recomputes the three score-driven thresholds, carrying `discrepancy_cede` over.
pub fn retune_entry_thresholds(
    risk_scores: &[f64],
    novelty_scores: &[f64],
    budget: f64,
    discrepancy_cede: f64,
) -> Result<GateThresholds> {
    if risk_scores.is_empty() {
        return Err(Error::Empty("risk scores"));
    }
    if novelty_scores.is_empty() {
        return Err(Error::Empty("novelty scores"));
    }
    Ok(GateThresholds {
        risk_intervene: nearest_rank_quantile(risk_scores, 1.0 - budget)?,
        risk_cede: nearest_rank_quantile(risk_scores, 0.5)?,
        novelty_intervene: nearest_rank_quantile(novelty_scores, 1.0 - budget)?,
        discrepancy_cede,
        budget,
    })
}

/// Score-level intervene predicate. Returns the triggering clause, novelty first.
pub fn intervene_scores(
    novelty: f64,
    risk: f64,
    thresholds: &GateThresholds,
    clauses: GateClauses,
) -> Option<SwitchCause> {
    if clauses.novelty && novelty > thresholds.novelty_intervene {
        Some(SwitchCause::Novelty)
    } else if clauses.risk && risk > thresholds.risk_intervene {
        Some(SwitchCause::Risk)
    } else {
        None
    }
}

/// Score-level cede predicate; a disabled clause counts as satisfied.
pub fn cede_scores(
    discrepancy: f64,
    risk: f64,
    thresholds: &GateThresholds,
    clauses: GateClauses,
) -> bool {
    let familiar = !clauses.novelty || discrepancy < thresholds.discrepancy_cede;
    let safe = !clauses.risk || risk < thresholds.risk_cede;
    familiar && safe
}

/// Scores the robot's own action at `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateProbe {
    pub robot_action: Action,
    pub novelty: f64,
    pub risk: f64,
}

pub fn probe(state: &State, ensemble: &EnsemblePolicy, critic: &RiskCritic) -> GateProbe {
    let (robot_action, novelty) = ensemble.action_and_novelty(state);
    GateProbe {
        robot_action,
        novelty,
        risk: critic.risk(state, &robot_action),
    }
}

pub fn intervene(
    state: &State,
    ensemble: &EnsemblePolicy,
    critic: &RiskCritic,
    thresholds: &GateThresholds,
) -> bool {
    let p = probe(state, ensemble, critic);
    intervene_scores(p.novelty, p.risk, thresholds, GateClauses::default()).is_some()
}

pub fn cede(
    state: &State,
    human_action: &Action,
    ensemble: &EnsemblePolicy,
    critic: &RiskCritic,
    thresholds: &GateThresholds,
) -> bool {
    let robot_action = ensemble.policy_action(state);
    let d = discrepancy(robot_action.as_slice(), human_action.as_slice()).expect("2-d actions");
    cede_scores(
        d,
        critic.risk(state, &robot_action),
        thresholds,
        GateClauses::default(),
    )
}

pub fn advance_mode(mode: Mode, intervene: bool, cede: bool) -> Mode {
    match mode {
        Mode::Autonomous if intervene => Mode::Supervisor,
        Mode::Supervisor if cede => Mode::Autonomous,
        m => m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..100).map(|i| i as f64 / 100.0).collect()
    }

    fn thresholds() -> GateThresholds {
        GateThresholds {
            risk_intervene: 0.8,
            risk_cede: 0.5,
            novelty_intervene: 0.1,
            discrepancy_cede: 0.01,
            budget: 0.01,
        }
    }

    #[test]
    fn quantile_on_percent_grid() {
        assert_eq!(nearest_rank_quantile(&grid(), 0.99).unwrap(), 0.98);
        assert_eq!(nearest_rank_quantile(&grid(), 1.0).unwrap(), 0.99);
        assert_eq!(nearest_rank_quantile(&grid(), 0.0).unwrap(), 0.0);
        assert_eq!(nearest_rank_quantile(&[4.2], 0.37).unwrap(), 4.2);
    }

    #[test]
    fn quantile_rejects_bad_input() {
        assert!(nearest_rank_quantile(&[], 0.5).is_err());
        assert!(nearest_rank_quantile(&[1.0], 1.5).is_err());
        assert!(nearest_rank_quantile(&[1.0, f64::NAN], 0.5).is_err());
    }

    #[test]
    fn quantile_ignores_input_order() {
        let mut shuffled = grid();
        shuffled.reverse();
        shuffled.swap(3, 70);
        assert_eq!(nearest_rank_quantile(&shuffled, 0.99).unwrap(), 0.98);
    }

    #[test]
    fn tuning_on_grid() {
        let t = tune_thresholds(&grid(), &grid(), &[0.001, 0.003], 0.01).unwrap();
        assert_eq!(t.risk_intervene, 0.98);
        assert_eq!(t.risk_cede, 0.49);
        assert_eq!(t.novelty_intervene, 0.98);
        assert!((t.discrepancy_cede - 0.002).abs() < 1e-15);
    }

    #[test]
    fn tuning_constant_list() {
        let c = vec![0.37; 17];
        let t = tune_thresholds(&c, &c, &[0.1], 0.2).unwrap();
        assert_eq!(t.risk_intervene, 0.37);
        assert_eq!(t.risk_cede, 0.37);
    }

    #[test]
    fn tuning_rejects_empty_lists() {
        assert!(tune_thresholds(&[], &[0.1], &[0.1], 0.01).is_err());
        assert!(tune_thresholds(&[0.1], &[], &[0.1], 0.01).is_err());
        assert!(tune_thresholds(&[0.1], &[0.1], &[], 0.01).is_err());
    }

    #[test]
    fn intervene_clauses() {
        let t = thresholds();
        let all = GateClauses::default();
        assert_eq!(
            intervene_scores(0.5, 0.0, &t, all),
            Some(SwitchCause::Novelty)
        );
        assert_eq!(
            intervene_scores(0.5, 0.95, &t, all),
            Some(SwitchCause::Novelty)
        );
        assert_eq!(
            intervene_scores(0.05, 0.9, &t, all),
            Some(SwitchCause::Risk)
        );
        assert_eq!(intervene_scores(0.05, 0.3, &t, all), None);
    }

    #[test]
    fn ablated_clauses_never_fire() {
        let t = thresholds();
        let no_novelty = GateClauses {
            novelty: false,
            risk: true,
        };
        let no_risk = GateClauses {
            novelty: true,
            risk: false,
        };
        assert_eq!(intervene_scores(0.5, 0.0, &t, no_novelty), None);
        assert_eq!(
            intervene_scores(0.5, 0.9, &t, no_novelty),
            Some(SwitchCause::Risk)
        );
        assert_eq!(intervene_scores(0.05, 0.9, &t, no_risk), None);
        assert!(cede_scores(0.5, 0.1, &t, no_novelty));
        assert!(cede_scores(0.001, 0.9, &t, no_risk));
    }

    #[test]
    fn cede_clauses() {
        let t = GateThresholds {
            discrepancy_cede: 0.01,
            risk_cede: 0.5,
            ..thresholds()
        };
        let all = GateClauses::default();
        assert!(cede_scores(0.001, 0.1, &t, all));
        assert!(!cede_scores(0.001, 0.6, &t, all));
        assert!(!cede_scores(0.02, 0.1, &t, all));
    }

    #[test]
    fn hand_walked_mode_trace() {
        use Mode::*;
        let steps = [
            (Autonomous, false, false, Autonomous),
            (Autonomous, true, false, Supervisor),
            (Supervisor, false, false, Supervisor),
            (Supervisor, false, true, Autonomous),
            (Autonomous, false, false, Autonomous),
        ];
        let mut mode = Autonomous;
        for (from, iv, cd, to) in steps {
            assert_eq!(mode, from);
            mode = advance_mode(mode, iv, cd);
            assert_eq!(mode, to);
        }
    }

    #[test]
    fn modes_are_sticky_without_their_predicate() {
        let mut m = Mode::Autonomous;
        for _ in 0..50 {
            m = advance_mode(m, false, true);
        }
        assert_eq!(m, Mode::Autonomous);
        let mut m = Mode::Supervisor;
        for _ in 0..50 {
            m = advance_mode(m, true, false);
        }
        assert_eq!(m, Mode::Supervisor);
    }
}
