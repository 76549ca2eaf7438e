//! Training loops for the gated learner and its baselines, plus evaluation.

mod classifier;
mod gating;

pub use classifier::{normalized_discrepancy, ClassifierConfig, DiscrepancyClassifier};
pub use gating::{Gating, HumanGate, LazyGate, NeverIntervene, SafeGate, ThriftyGate};

use log::{debug, info};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::critic::{collect_eval_rollouts, CriticConfig, RiskCritic};
use crate::dataset::{Dataset, SourceMode, Transition};
use crate::ensemble::{discrepancy, fit_bc, EnsembleConfig, EnsemblePolicy, Policy};
use crate::env::{Action, BottleneckEnv, EnvConfig, State};
use crate::error::{Error, Result};
use crate::gate::{
    retune_entry_thresholds, tune_thresholds, GateClauses, GateThresholds, Mode, SwitchCause,
};
use crate::metrics::{aggregate, EpisodeStats, RunMetrics};
use crate::supervisor::{
    OracleConfig, ScriptedOracle, Supervisor, SyntheticGater, SyntheticGaterConfig,
};
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Thrifty,
    Bc,
    Safedagger,
    Lazydagger,
    Hgdagger,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Thrifty => "thrifty",
            Algorithm::Bc => "bc",
            Algorithm::Safedagger => "safedagger",
            Algorithm::Lazydagger => "lazydagger",
            Algorithm::Hgdagger => "hgdagger",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    Novelty,
    Risk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafeDaggerConfig {
    /// Normalized squared discrepancy that marks a state unsafe.
    pub threshold: f64,
    pub classifier: ClassifierConfig,
}

impl Default for SafeDaggerConfig {
    fn default() -> Self {
        Self {
            threshold: 0.008,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LazyDaggerConfig {
    pub entry_threshold: f64,
    /// Exit threshold as a fraction of the entry threshold.
    pub exit_ratio: f64,
    /// Per-component std of noise injected into executed supervisor actions, in
    /// units of `action_max`.
    pub supervisor_noise: f64,
    pub classifier: ClassifierConfig,
}

impl Default for LazyDaggerConfig {
    fn default() -> Self {
        Self {
            entry_threshold: 0.015,
            exit_ratio: 0.25,
            supervisor_noise: 0.02,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl LazyDaggerConfig {
    pub fn exit_threshold(&self) -> f64 {
        self.exit_ratio * self.entry_threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub ablation: Option<Ablation>,
    pub seed: u64,
    /// Supervised demonstrations collected before interaction.
    pub num_demos: usize,
    /// Demo multiplier for the offline-only baseline.
    pub bc_demo_multiplier: f64,
    /// Interactive environment steps (supervisor plus autonomous).
    pub interactive_steps: usize,
    /// Optional cap on interactive episodes.
    pub max_episodes: Option<usize>,
    pub alpha: f64,
    /// Robot-only rollouts collected right after the initial fit.
    pub initial_rollouts: usize,
    /// Interactive steps between critic refreshes.
    pub critic_refresh_every: usize,
    pub critic_refresh_rollouts: usize,
    /// Refresh rollouts and critic after every episode instead of on the cadence.
    pub refresh_each_episode: bool,
    pub latency: f64,
    pub env: EnvConfig,
    pub oracle: OracleConfig,
    pub ensemble: EnsembleConfig,
    pub critic: CriticConfig,
    pub safedagger: SafeDaggerConfig,
    pub lazydagger: LazyDaggerConfig,
    pub gater: SyntheticGaterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Thrifty,
            ablation: None,
            seed: 0,
            num_demos: 30,
            bc_demo_multiplier: 1.5,
            interactive_steps: 3000,
            max_episodes: None,
            alpha: 0.01,
            initial_rollouts: 10,
            critic_refresh_every: 600,
            critic_refresh_rollouts: 10,
            refresh_each_episode: false,
            latency: 0.0,
            env: EnvConfig::default(),
            oracle: OracleConfig::default(),
            ensemble: EnsembleConfig::default(),
            critic: CriticConfig::default(),
            safedagger: SafeDaggerConfig::default(),
            lazydagger: LazyDaggerConfig::default(),
            gater: SyntheticGaterConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ensemble.validate()?;
        self.critic.validate()?;
        self.gater.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.num_demos == 0 {
            return Err(Error::Config("num_demos must be at least 1".into()));
        }
        if self.interactive_steps == 0 && self.algorithm != Algorithm::Bc {
            return Err(Error::Config("interactive_steps must be positive".into()));
        }
        if self.critic_refresh_every == 0 {
            return Err(Error::Config(
                "critic_refresh_every must be positive".into(),
            ));
        }
        if !(self.bc_demo_multiplier >= 1.0) {
            return Err(Error::Config("bc_demo_multiplier must be >= 1".into()));
        }
        if self.ablation.is_some() && self.algorithm != Algorithm::Thrifty {
            return Err(Error::Config(format!(
                "ablations only apply to thrifty, not {}",
                self.algorithm.name()
            )));
        }
        if self.lazydagger.exit_ratio <= 0.0 || self.lazydagger.exit_ratio >= 1.0 {
            return Err(Error::Config(
                "lazydagger exit_ratio must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn clauses(&self) -> GateClauses {
        match self.ablation {
            None => GateClauses::default(),
            Some(Ablation::Novelty) => GateClauses {
                novelty: false,
                risk: true,
            },
            Some(Ablation::Risk) => GateClauses {
                novelty: true,
                risk: false,
            },
        }
    }

    pub fn label(&self) -> String {
        match self.ablation {
            None => self.algorithm.name().to_string(),
            Some(Ablation::Novelty) => format!("{}-novelty", self.algorithm.name()),
            Some(Ablation::Risk) => format!("{}-risk", self.algorithm.name()),
        }
    }
}

/// One line of the per-episode training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub algorithm: String,
    pub seed: u64,
    pub episode: usize,
    pub steps: usize,
    pub success: bool,
    pub truncated: bool,
    pub aborted: bool,
    pub ints: usize,
    pub acts_h: usize,
    pub acts_r: usize,
    pub switch_causes: Vec<SwitchCause>,
    pub total_env_steps: usize,
    pub dh_size: usize,
    pub dr_size: usize,
    pub thresholds: Option<GateThresholds>,
}

impl EpisodeRecord {
    pub fn stats(&self) -> EpisodeStats {
        EpisodeStats {
            ints: self.ints,
            acts_h: self.acts_h,
            acts_r: self.acts_r,
            success: self.success,
            switch_causes: self.switch_causes.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub policy: EnsemblePolicy,
    pub critic: Option<RiskCritic>,
    pub classifier: Option<DiscrepancyClassifier>,
    pub episodes: Vec<EpisodeRecord>,
    /// Every threshold set produced by tuning, initial one first.
    pub threshold_history: Vec<GateThresholds>,
    pub final_thresholds: Option<GateThresholds>,
    pub dh: Dataset,
    pub dr: Dataset,
    pub interactive_steps_used: usize,
    pub metrics: RunMetrics,
}

impl RunResult {
    pub fn switch_trigger_fraction(&self) -> f64 {
        if self.interactive_steps_used == 0 {
            return 0.0;
        }
        self.metrics.total_ints as f64 / self.interactive_steps_used as f64
    }

    pub fn supervisor_step_fraction(&self) -> f64 {
        if self.interactive_steps_used == 0 {
            return 0.0;
        }
        self.metrics.total_acts_h as f64 / self.interactive_steps_used as f64
    }
}

/// Outcome of one gated episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeOutcome {
    pub modes: Vec<Mode>,
    pub causes: Vec<SwitchCause>,
    pub supervisor_transitions: Vec<Transition>,
    pub robot_transitions: Vec<Transition>,
    pub success: bool,
    pub truncated: bool,
    pub aborted: bool,
}

impl EpisodeOutcome {
    pub fn steps(&self) -> usize {
        self.modes.len()
    }

    pub fn stats(&self) -> EpisodeStats {
        let acts_h = self
            .modes
            .iter()
            .filter(|m| **m == Mode::Supervisor)
            .count();
        EpisodeStats {
            ints: self.causes.len(),
            acts_h,
            acts_r: self.modes.len() - acts_h,
            success: self.success,
            switch_causes: self.causes.clone(),
        }
    }
}

/// Runs one episode of the gated control loop for at most `max_steps` steps.
///
/// Supervisor steps go to `supervisor_transitions` labelled with the supervisor's
/// reference action when one exists; autonomous steps go to `robot_transitions`.
pub fn run_gated_episode<P: Policy + ?Sized>(
    env: &BottleneckEnv,
    policy: &P,
    gating: &mut dyn Gating,
    supervisor: &mut dyn Supervisor,
    max_steps: usize,
    rng: &mut SimRng,
) -> Result<EpisodeOutcome> {
    let mut out = EpisodeOutcome::default();
    gating.begin_episode();
    let mut state = env.reset(rng);
    let mut mode = Mode::Autonomous;
    let limit = env.horizon().min(max_steps);
    let mut success = env.goal_indicator(&state);
    let mut last_mode = Mode::Autonomous;
    while !success && out.steps() < limit {
        let robot_action = env.clip_action(policy.act(&state));
        let reference = supervisor.reference(env, &state);
        if mode == Mode::Autonomous {
            if let Some(cause) = gating.intervene(&state, &robot_action, reference.as_ref())? {
                mode = Mode::Supervisor;
                out.causes.push(cause);
            }
        }
        let next = if mode == Mode::Supervisor {
            let executed = match supervisor.act(env, 0, &state, rng) {
                Ok(a) => a,
                Err(e @ Error::SupervisorUnavailable { .. }) => {
                    info!("episode aborted: {e}");
                    out.aborted = true;
                    out.supervisor_transitions.clear();
                    out.robot_transitions.clear();
                    return Ok(out);
                }
                Err(e) => return Err(e),
            };
            let label = reference.unwrap_or(executed);
            let step = env.step(&state, executed, rng)?;
            out.supervisor_transitions.push(Transition::new(
                env,
                state,
                label,
                step.next_state,
                SourceMode::Supervisor,
            ));
            out.modes.push(Mode::Supervisor);
            last_mode = Mode::Supervisor;
            if gating.cede(&state, &robot_action, &label, &step.next_state)? {
                mode = Mode::Autonomous;
            }
            step
        } else {
            let step = env.step(&state, robot_action, rng)?;
            out.robot_transitions.push(Transition::new(
                env,
                state,
                robot_action,
                step.next_state,
                SourceMode::Autonomous,
            ));
            out.modes.push(Mode::Autonomous);
            last_mode = Mode::Autonomous;
            step
        };
        state = next.next_state;
        success = next.reached_goal;
    }
    if success {
        if last_mode == Mode::Supervisor {
            let label = supervisor
                .reference(env, &state)
                .unwrap_or_else(|| env.clip_action(policy.act(&state)));
            out.supervisor_transitions.push(Transition::terminal(
                env,
                state,
                label,
                SourceMode::Supervisor,
            ));
        } else {
            let a = env.clip_action(policy.act(&state));
            out.robot_transitions
                .push(Transition::terminal(env, state, a, SourceMode::Autonomous));
        }
    }
    out.success = success;
    out.truncated = !success && out.steps() < env.horizon();
    Ok(out)
}

/// `n` full oracle demonstrations; every transition is supervisor-sourced.
pub fn collect_demos(
    env: &BottleneckEnv,
    oracle: &ScriptedOracle,
    n: usize,
    rng: &mut SimRng,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one demonstration".into(),
        ));
    }
    let mut data = Dataset::new();
    let mut sup = oracle.clone();
    sup.config.noise_std = 0.0;
    struct AlwaysSupervise;
    impl Gating for AlwaysSupervise {
        fn intervene(
            &mut self,
            _: &State,
            _: &Action,
            _: Option<&Action>,
        ) -> Result<Option<SwitchCause>> {
            Ok(Some(SwitchCause::External))
        }
        fn cede(&mut self, _: &State, _: &Action, _: &Action, _: &State) -> Result<bool> {
            Ok(false)
        }
    }
    struct Idle;
    impl Policy for Idle {
        fn act(&self, _: &State) -> Action {
            Action::default()
        }
    }
    for _ in 0..n {
        let ep = run_gated_episode(env, &Idle, &mut AlwaysSupervise, &mut sup, usize::MAX, rng)?;
        data.extend(ep.supervisor_transitions);
    }
    Ok(data)
}

fn union(a: &Dataset, b: &Dataset) -> Dataset {
    a.iter().chain(b.iter()).copied().collect()
}

/// Risk and novelty of the robot's own action on each state.
pub fn score_states<'a>(
    ensemble: &EnsemblePolicy,
    critic: &RiskCritic,
    states: impl IntoIterator<Item = &'a State>,
) -> (Vec<f64>, Vec<f64>) {
    let mut risks = Vec::new();
    let mut novelties = Vec::new();
    for s in states {
        let (a, nov) = ensemble.action_and_novelty(s);
        risks.push(critic.risk(s, &a));
        novelties.push(nov);
    }
    (risks, novelties)
}

/// Squared discrepancy between robot and supervisor labels on supervisor states.
pub fn supervisor_discrepancies(ensemble: &EnsemblePolicy, dh: &Dataset) -> Vec<f64> {
    dh.supervisor_only()
        .map(|t| {
            discrepancy(
                ensemble.policy_action(&t.state).as_slice(),
                t.action.as_slice(),
            )
            .expect("2-d actions")
        })
        .collect()
}

struct Interactive {
    env: BottleneckEnv,
    rng: SimRng,
    dh: Dataset,
    dr: Dataset,
    policy: EnsemblePolicy,
    episodes: Vec<EpisodeRecord>,
    steps_used: usize,
}

impl Interactive {
    fn start(config: &RunConfig, num_demos: usize) -> Result<Self> {
        config.validate()?;
        let env = BottleneckEnv::new(config.env.clone())?;
        let mut rng = SimRng::seed_from_u64(config.seed);
        let oracle = ScriptedOracle::new(config.oracle.clone())?;
        let dh = collect_demos(&env, &oracle, num_demos, &mut rng)?;
        let policy = fit_bc(&dh, &config.ensemble, env.config().action_max, &mut rng)?;
        Ok(Self {
            env,
            rng,
            dh,
            dr: Dataset::new(),
            policy,
            episodes: Vec::new(),
            steps_used: 0,
        })
    }

    fn budget_left(&self, config: &RunConfig) -> usize {
        config.interactive_steps.saturating_sub(self.steps_used)
    }

    fn more_episodes(&self, config: &RunConfig) -> bool {
        self.budget_left(config) > 0 && config.max_episodes.is_none_or(|n| self.episodes.len() < n)
    }

    fn record(
        &mut self,
        config: &RunConfig,
        ep: EpisodeOutcome,
        thresholds: Option<GateThresholds>,
    ) {
        self.steps_used += ep.steps();
        let stats = ep.stats();
        if !ep.aborted {
            self.dh.extend(ep.supervisor_transitions.iter().copied());
            self.dr.extend(ep.robot_transitions.iter().copied());
        }
        let rec = EpisodeRecord {
            algorithm: config.label(),
            seed: config.seed,
            episode: self.episodes.len(),
            steps: ep.steps(),
            success: ep.success,
            truncated: ep.truncated,
            aborted: ep.aborted,
            ints: stats.ints,
            acts_h: stats.acts_h,
            acts_r: stats.acts_r,
            switch_causes: stats.switch_causes,
            total_env_steps: self.steps_used,
            dh_size: self.dh.len(),
            dr_size: self.dr.len(),
            thresholds,
        };
        debug!("{} episode {}: {:?}", rec.algorithm, rec.episode, rec);
        self.episodes.push(rec);
    }

    fn finish(
        self,
        config: &RunConfig,
        critic: Option<RiskCritic>,
        classifier: Option<DiscrepancyClassifier>,
        threshold_history: Vec<GateThresholds>,
    ) -> Result<RunResult> {
        let stats: Vec<EpisodeStats> = self.episodes.iter().map(EpisodeRecord::stats).collect();
        let metrics = aggregate(&stats, config.latency)?;
        Ok(RunResult {
            config: config.clone(),
            policy: self.policy,
            critic,
            classifier,
            episodes: self.episodes,
            final_thresholds: threshold_history.last().copied(),
            threshold_history,
            dh: self.dh,
            dr: self.dr,
            interactive_steps_used: self.steps_used,
            metrics,
        })
    }
}

/// Gated training with ensemble novelty and critic risk.
pub fn run_thrifty(config: &RunConfig) -> Result<RunResult> {
    let mut oracle = ScriptedOracle::new(config.oracle.clone())?;
    run_thrifty_with(config, &mut oracle)
}

/// Same as [`run_thrifty`] with a caller-provided supervisor.
pub fn run_thrifty_with(config: &RunConfig, supervisor: &mut dyn Supervisor) -> Result<RunResult> {
    let mut run = Interactive::start(config, config.num_demos)?;
    let action_max = run.env.config().action_max;
    let clauses = config.clauses();

    for r in collect_eval_rollouts(&run.policy, &run.env, config.initial_rollouts, &mut run.rng)? {
        run.dr.extend(r.transitions);
    }
    let mut critic = RiskCritic::new(config.critic.clone(), action_max, &mut run.rng)?;
    critic.train(
        &union(&run.dr, &run.dh),
        &run.policy,
        config.critic.init_steps,
        &mut run.rng,
    )?;

    let discrepancy_cede = {
        let d = supervisor_discrepancies(&run.policy, &run.dh);
        let (risks, novelties) = score_states(&run.policy, &critic, robot_states(&run.dr, &run.dh));
        tune_thresholds(&risks, &novelties, &d, config.alpha)?.discrepancy_cede
    };
    let mut thresholds = retune(
        &run.policy,
        &critic,
        &run.dr,
        &run.dh,
        config.alpha,
        discrepancy_cede,
    )?;
    let mut history = vec![thresholds];
    let mut since_refresh = 0usize;

    while run.more_episodes(config) {
        let budget = run.budget_left(config);
        let ep = {
            let mut gate = ThriftyGate::new(&run.policy, &critic, thresholds, clauses);
            run_gated_episode(
                &run.env,
                &run.policy,
                &mut gate,
                supervisor,
                budget,
                &mut run.rng,
            )?
        };
        since_refresh += ep.steps();
        let used = thresholds;
        run.record(config, ep, Some(used));

        thresholds = retune(
            &run.policy,
            &critic,
            &run.dr,
            &run.dh,
            config.alpha,
            discrepancy_cede,
        )?;
        history.push(thresholds);
        run.policy.retrain(&run.dh, &mut run.rng)?;

        if config.refresh_each_episode || since_refresh >= config.critic_refresh_every {
            since_refresh = 0;
            for r in collect_eval_rollouts(
                &run.policy,
                &run.env,
                config.critic_refresh_rollouts,
                &mut run.rng,
            )? {
                run.dr.extend(r.transitions);
            }
            critic.train(
                &union(&run.dr, &run.dh),
                &run.policy,
                config.critic.update_steps,
                &mut run.rng,
            )?;
        }
    }
    info!(
        "{} seed {}: {} episodes, {} steps, {} ints",
        config.label(),
        config.seed,
        run.episodes.len(),
        run.steps_used,
        run.episodes.iter().map(|e| e.ints).sum::<usize>()
    );
    run.finish(config, Some(critic), None, history)
}

/// States previously visited under robot control; falls back to supervisor
/// states only when the robot has not acted yet.
fn robot_states<'a>(dr: &'a Dataset, dh: &'a Dataset) -> Box<dyn Iterator<Item = &'a State> + 'a> {
    if dr.is_empty() {
        Box::new(dh.iter().map(|t| &t.state))
    } else {
        Box::new(dr.iter().map(|t| &t.state))
    }
}

fn retune(
    policy: &EnsemblePolicy,
    critic: &RiskCritic,
    dr: &Dataset,
    dh: &Dataset,
    alpha: f64,
    discrepancy_cede: f64,
) -> Result<GateThresholds> {
    let (risks, novelties) = score_states(policy, critic, robot_states(dr, dh));
    retune_entry_thresholds(&risks, &novelties, alpha, discrepancy_cede)
}

/// Offline-only baseline on `bc_demo_multiplier` times as many demonstrations.
pub fn run_bc(config: &RunConfig) -> Result<RunResult> {
    let demos = (config.num_demos as f64 * config.bc_demo_multiplier).round() as usize;
    let run = Interactive::start(config, demos)?;
    run.finish(config, None, None, Vec::new())
}

fn run_classifier_gated(config: &RunConfig, lazy: bool) -> Result<RunResult> {
    let mut run = Interactive::start(config, config.num_demos)?;
    let action_max = run.env.config().action_max;
    let (clf_config, threshold) = if lazy {
        (
            config.lazydagger.classifier.clone(),
            config.lazydagger.entry_threshold,
        )
    } else {
        (
            config.safedagger.classifier.clone(),
            config.safedagger.threshold,
        )
    };
    let mut classifier = DiscrepancyClassifier::new(clf_config.clone(), threshold, &mut run.rng)?;
    classifier.fit(&run.dh, &run.policy, clf_config.fit_steps, &mut run.rng)?;
    let mut oracle = ScriptedOracle::new(OracleConfig {
        noise_std: if lazy {
            config.lazydagger.supervisor_noise * action_max
        } else {
            0.0
        },
        ..config.oracle.clone()
    })?;

    while run.more_episodes(config) {
        let budget = run.budget_left(config);
        let ep = if lazy {
            let mut gate =
                LazyGate::new(&classifier, config.lazydagger.exit_threshold(), action_max);
            let ep = run_gated_episode(
                &run.env,
                &run.policy,
                &mut gate,
                &mut oracle,
                budget,
                &mut run.rng,
            )?;
            debug_assert_eq!(gate.classifier_queries_in_supervisor(), 0);
            ep
        } else {
            let mut gate = SafeGate {
                classifier: &classifier,
            };
            run_gated_episode(
                &run.env,
                &run.policy,
                &mut gate,
                &mut oracle,
                budget,
                &mut run.rng,
            )?
        };
        run.record(config, ep, None);
        run.policy.retrain(&run.dh, &mut run.rng)?;
        classifier.fit(&run.dh, &run.policy, clf_config.retrain_steps, &mut run.rng)?;
    }
    run.finish(config, None, Some(classifier), Vec::new())
}

/// Classifier-gated baseline: supervisor acts whenever the state is predicted unsafe.
pub fn run_safedagger(config: &RunConfig) -> Result<RunResult> {
    run_classifier_gated(config, false)
}

/// Predicted-discrepancy entry, measured-discrepancy exit, noisy supervisor.
pub fn run_lazydagger(config: &RunConfig) -> Result<RunResult> {
    run_classifier_gated(config, true)
}

/// Human-gated baseline driven by the synthetic gater.
pub fn run_hgdagger(config: &RunConfig) -> Result<RunResult> {
    let mut run = Interactive::start(config, config.num_demos)?;
    let action_max = run.env.config().action_max;
    let mut oracle = ScriptedOracle::new(config.oracle.clone())?;
    let mut gate = HumanGate {
        gater: SyntheticGater::new(config.gater.clone())?,
        action_max,
    };
    while run.more_episodes(config) {
        let budget = run.budget_left(config);
        let ep = run_gated_episode(
            &run.env,
            &run.policy,
            &mut gate,
            &mut oracle,
            budget,
            &mut run.rng,
        )?;
        run.record(config, ep, None);
        run.policy.retrain(&run.dh, &mut run.rng)?;
    }
    run.finish(config, None, None, Vec::new())
}

pub fn run(config: &RunConfig) -> Result<RunResult> {
    match config.algorithm {
        Algorithm::Thrifty => run_thrifty(config),
        Algorithm::Bc => run_bc(config),
        Algorithm::Safedagger => run_safedagger(config),
        Algorithm::Lazydagger => run_lazydagger(config),
        Algorithm::Hgdagger => run_hgdagger(config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub successes: usize,
    pub stats: Vec<EpisodeStats>,
}

impl EvalStats {
    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }

    pub fn fraction(&self) -> String {
        format!("{}/{}", self.successes, self.episodes)
    }
}

/// Runs `n` episodes without any learning. With `assist`, the supervisor steps in
/// whenever the gate asks; otherwise the policy acts alone.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env: &BottleneckEnv,
    n: usize,
    assist: Option<(&mut dyn Supervisor, &mut dyn Gating)>,
    rng: &mut SimRng,
) -> Result<EvalStats> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut stats = Vec::with_capacity(n);
    match assist {
        Some((supervisor, gating)) => {
            for _ in 0..n {
                let ep = run_gated_episode(env, policy, gating, supervisor, usize::MAX, rng)?;
                stats.push(ep.stats());
            }
        }
        None => {
            struct Unused;
            impl Supervisor for Unused {
                fn act(
                    &mut self,
                    _: &BottleneckEnv,
                    robot_id: usize,
                    _: &State,
                    _: &mut SimRng,
                ) -> Result<Action> {
                    Err(Error::SupervisorUnavailable {
                        robot_id,
                        reason: "autonomous evaluation".into(),
                    })
                }
            }
            for _ in 0..n {
                let ep = run_gated_episode(
                    env,
                    policy,
                    &mut NeverIntervene,
                    &mut Unused,
                    usize::MAX,
                    rng,
                )?;
                stats.push(ep.stats());
            }
        }
    }
    Ok(EvalStats {
        episodes: n,
        successes: stats.iter().filter(|s| s.success).count(),
        stats,
    })
}

/// Evaluation seed stream kept apart from the training stream of the same seed.
pub fn eval_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed ^ 0x5EED_E7A1_0000_0000)
}

/// Intervention-aided evaluation of a trained gated run with an oracle supervisor.
pub fn evaluate_with_interventions(
    result: &RunResult,
    n: usize,
    rng: &mut SimRng,
) -> Result<EvalStats> {
    let env = BottleneckEnv::new(result.config.env.clone())?;
    let mut oracle = ScriptedOracle::new(result.config.oracle.clone())?;
    let critic = result
        .critic
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("run has no critic".into()))?;
    let thresholds = result
        .final_thresholds
        .ok_or_else(|| Error::InvalidArgument("run has no thresholds".into()))?;
    let mut gate = ThriftyGate::new(&result.policy, critic, thresholds, result.config.clauses());
    evaluate(&result.policy, &env, n, Some((&mut oracle, &mut gate)), rng)
}
