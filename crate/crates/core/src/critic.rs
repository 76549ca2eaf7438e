//! Success-probability critic `Q(s, a)` and the derived risk score `1 - Q(s, a)`.
//!
//! Trained by TD regression towards `1_G(s) + (1 - 1_G(s)) * gamma * Q'(s', pi(s'))`
//! where `Q'` is a periodically refreshed snapshot and `pi` the current ensemble mean.

use log::warn;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SourceMode, Transition};
use crate::ensemble::{state_features, Policy};
use crate::env::{Action, BottleneckEnv, State, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{train_step, Activation, AdamConfig, AdamState, Mlp, TrainScratch};

pub const CRITIC_INPUT_DIM: usize = STATE_DIM + ACTION_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub goal_fraction: f64,
    pub lr: f64,
    /// Critic steps between target snapshot refreshes.
    pub target_refresh: usize,
    /// Critic steps per update round.
    pub update_steps: usize,
    /// Critic steps for the initial fit.
    pub init_steps: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            gamma: 0.9999,
            batch_size: 50,
            goal_fraction: 0.10,
            lr: 1e-3,
            target_refresh: 100,
            update_steps: 500,
            init_steps: 1500,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("critic gamma must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_fraction) {
            return Err(Error::Config(
                "critic goal_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.batch_size == 0 || self.target_refresh == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("critic sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![CRITIC_INPUT_DIM];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }

    /// Goal-flagged items per minibatch when balancing is possible.
    pub fn goal_items_per_batch(&self) -> usize {
        (self.goal_fraction * self.batch_size as f64 - 1e-9)
            .ceil()
            .max(0.0) as usize
    }
}

#[derive(Debug, Clone)]
pub struct RiskCritic {
    q_net: Mlp,
    target_net: Mlp,
    action_max: f64,
    config: CriticConfig,
    adam: AdamState,
}

impl PartialEq for RiskCritic {
    fn eq(&self, other: &Self) -> bool {
        self.q_net == other.q_net && self.action_max == other.action_max
    }
}

impl RiskCritic {
    pub fn new<R: RngCore + ?Sized>(
        config: CriticConfig,
        action_max: f64,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let q_net = Mlp::new(
            &config.layer_sizes(),
            Activation::Relu,
            Activation::Sigmoid,
            rng.next_u64(),
        )?;
        Self::from_network(q_net, action_max, config)
    }

    pub fn from_network(q_net: Mlp, action_max: f64, config: CriticConfig) -> Result<Self> {
        config.validate()?;
        if q_net.input_dim() != CRITIC_INPUT_DIM || q_net.output_dim() != 1 {
            return Err(Error::InvalidArchitecture(format!(
                "critic network must map {CRITIC_INPUT_DIM} inputs to 1 output, got {:?}",
                q_net.layer_sizes()
            )));
        }
        if q_net.output_activation() != Activation::Sigmoid {
            return Err(Error::InvalidArchitecture(
                "critic needs a sigmoid output head".into(),
            ));
        }
        let adam = AdamState::new(
            &q_net,
            &AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            target_net: q_net.clone(),
            q_net,
            action_max,
            config,
            adam,
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.q_net
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    pub fn action_max(&self) -> f64 {
        self.action_max
    }

    fn features(&self, state: &State, action: &Action) -> [f64; CRITIC_INPUT_DIM] {
        let s = state_features(state);
        [
            s[0],
            s[1],
            action.0[0] / self.action_max,
            action.0[1] / self.action_max,
        ]
    }

    pub fn q_value(&self, state: &State, action: &Action) -> f64 {
        self.q_net
            .forward(&self.features(state, action))
            .expect("critic input dimension is fixed")[0]
    }

    pub fn risk(&self, state: &State, action: &Action) -> f64 {
        1.0 - self.q_value(state, action)
    }

    fn target_q(&self, state: &State, action: &Action) -> f64 {
        self.target_net
            .forward(&self.features(state, action))
            .expect("critic input dimension is fixed")[0]
    }

    /// TD target against the frozen snapshot; no gradient flows through it.
    pub fn td_target<P: Policy + ?Sized>(&self, policy: &P, transition: &Transition) -> f64 {
        if transition.goal_flag {
            return 1.0;
        }
        let next_action = policy.act(&transition.next_state);
        self.config.gamma * self.target_q(&transition.next_state, &next_action)
    }

    /// Copies the online network into the target snapshot.
    pub fn refresh_target(&mut self) {
        self.target_net = self.q_net.clone();
    }

    /// Runs `steps` goal-balanced TD regression steps on `dataset`.
    ///
    /// Returns the per-step minibatch losses.
    pub fn train<P: Policy + ?Sized, R: Rng + ?Sized>(
        &mut self,
        dataset: &Dataset,
        policy: &P,
        steps: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if dataset.is_empty() {
            return Err(Error::Empty("critic dataset"));
        }
        if steps == 0 {
            return Ok(Vec::new());
        }
        let sampler = BalancedSampler::new(dataset, &self.config);
        // The policy is frozen for the duration of this call.
        let next_actions: Vec<Action> = dataset
            .iter()
            .map(|t| {
                if t.goal_flag {
                    Action::default()
                } else {
                    policy.act(&t.next_state)
                }
            })
            .collect();
        let inputs: Vec<[f64; CRITIC_INPUT_DIM]> = dataset
            .iter()
            .map(|t| self.features(&t.state, &t.action))
            .collect();

        self.refresh_target();
        let mut scratch = TrainScratch::default();
        let mut losses = Vec::with_capacity(steps);
        let mut indices = Vec::with_capacity(self.config.batch_size);
        let mut targets = Vec::with_capacity(self.config.batch_size);
        for step in 0..steps {
            if step > 0 && step % self.config.target_refresh == 0 {
                self.refresh_target();
            }
            sampler.sample(rng, &mut indices);
            targets.clear();
            for &i in &indices {
                let t = &dataset.transitions[i];
                let y = if t.goal_flag {
                    1.0
                } else {
                    self.config.gamma * self.target_q(&t.next_state, &next_actions[i])
                };
                targets.push([y]);
            }
            let batch = indices
                .iter()
                .zip(&targets)
                .map(|(&i, y)| (&inputs[i][..], &y[..]));
            let loss = train_step(
                &mut self.q_net,
                &mut self.adam,
                self.config.lr,
                batch,
                &mut scratch,
            )?;
            losses.push(loss);
        }
        Ok(losses)
    }
}

/// Draws minibatches with a fixed number of goal-flagged items when any exist.
pub struct BalancedSampler {
    goal: Vec<usize>,
    other: Vec<usize>,
    batch_size: usize,
    goal_items: usize,
}

impl BalancedSampler {
    pub fn new(dataset: &Dataset, config: &CriticConfig) -> Self {
        let (goal, other): (Vec<usize>, Vec<usize>) =
            (0..dataset.len()).partition(|&i| dataset.transitions[i].goal_flag);
        let mut goal_items = config.goal_items_per_batch().min(config.batch_size);
        if goal.is_empty() {
            if !dataset.is_empty() {
                warn!("critic dataset has no goal-flagged transitions; sampling uniformly");
            }
            goal_items = 0;
        } else if other.is_empty() {
            goal_items = config.batch_size;
        }
        Self {
            goal,
            other,
            batch_size: config.batch_size,
            goal_items,
        }
    }

    pub fn goal_items(&self) -> usize {
        self.goal_items
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..self.goal_items {
            out.push(self.goal[rng.random_range(0..self.goal.len())]);
        }
        for _ in self.goal_items..self.batch_size {
            out.push(self.other[rng.random_range(0..self.other.len())]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub success: bool,
}

/// Runs one autonomous episode of `policy`.
pub fn rollout<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    env: &BottleneckEnv,
    rng: &mut R,
) -> Result<Rollout> {
    let mut state = env.reset(rng);
    let mut transitions = Vec::new();
    let mut success = env.goal_indicator(&state);
    let mut steps = 0;
    while !success && steps < env.horizon() {
        let action = env.clip_action(policy.act(&state));
        let out = env.step(&state, action, rng)?;
        transitions.push(Transition::new(
            env,
            state,
            action,
            out.next_state,
            SourceMode::Autonomous,
        ));
        state = out.next_state;
        success = out.reached_goal;
        steps += 1;
    }
    if success {
        let action = env.clip_action(policy.act(&state));
        transitions.push(Transition::terminal(
            env,
            state,
            action,
            SourceMode::Autonomous,
        ));
    }
    Ok(Rollout {
        transitions,
        success,
    })
}

/// `k` autonomous evaluation episodes with no supervisor involvement.
pub fn collect_eval_rollouts<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    env: &BottleneckEnv,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Rollout>> {
    (0..k).map(|_| rollout(policy, env, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::SimRng;
    use rand::SeedableRng;

    struct Zero;
    impl Policy for Zero {
        fn act(&self, _: &State) -> Action {
            Action::default()
        }
    }

    fn zero_critic(gamma: f64) -> RiskCritic {
        let config = CriticConfig {
            gamma,
            ..CriticConfig::default()
        };
        let net = Mlp::zeros(&config.layer_sizes(), Activation::Relu, Activation::Sigmoid).unwrap();
        RiskCritic::from_network(net, 0.05, config).unwrap()
    }

    fn t(goal: bool) -> Transition {
        Transition {
            state: State::new(0.3, 0.3),
            action: Action::new(0.01, 0.0),
            next_state: State::new(0.31, 0.3),
            goal_flag: goal,
            source_mode: SourceMode::Autonomous,
        }
    }

    #[test]
    fn risk_complements_q() {
        let critic = zero_critic(0.9999);
        let s = State::new(0.2, 0.7);
        let a = Action::new(0.01, -0.03);
        assert_eq!(critic.q_value(&s, &a), 0.5);
        assert_eq!(critic.risk(&s, &a) + critic.q_value(&s, &a), 1.0);
    }

    #[test]
    fn td_target_branches() {
        let critic = zero_critic(0.9999);
        assert_eq!(critic.td_target(&Zero, &t(true)), 1.0);
        assert!((critic.td_target(&Zero, &t(false)) - 0.49995).abs() < 1e-15);
        let undiscounted = zero_critic(1.0);
        assert_eq!(undiscounted.td_target(&Zero, &t(false)), 0.5);
    }

    #[test]
    fn zero_gamma_gives_zero_target() {
        let critic = zero_critic(0.0);
        assert_eq!(critic.td_target(&Zero, &t(false)), 0.0);
        assert!(CriticConfig {
            gamma: 1.5,
            ..CriticConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn goal_items_per_batch_is_ceiling() {
        let c = CriticConfig::default();
        assert_eq!(c.goal_items_per_batch(), 5);
        let c = CriticConfig {
            batch_size: 64,
            ..CriticConfig::default()
        };
        assert_eq!(c.goal_items_per_batch(), 7);
    }

    #[test]
    fn balanced_batches_hold_five_goal_items() {
        let data: Dataset = (0..5000).map(|i| t(i < 500)).collect();
        let sampler = BalancedSampler::new(&data, &CriticConfig::default());
        let mut rng = SimRng::seed_from_u64(0);
        let mut idx = Vec::new();
        for _ in 0..200 {
            sampler.sample(&mut rng, &mut idx);
            assert_eq!(idx.len(), 50);
            assert_eq!(
                idx.iter()
                    .filter(|&&i| data.transitions[i].goal_flag)
                    .count(),
                5
            );
        }
    }

    #[test]
    fn no_goal_data_samples_uniformly() {
        let data: Dataset = (0..100).map(|_| t(false)).collect();
        let sampler = BalancedSampler::new(&data, &CriticConfig::default());
        assert_eq!(sampler.goal_items(), 0);
    }

    #[test]
    fn zero_steps_leave_critic_unchanged() {
        let mut rng = SimRng::seed_from_u64(1);
        let mut critic = RiskCritic::new(CriticConfig::default(), 0.05, &mut rng).unwrap();
        let before = critic.clone();
        let data: Dataset = (0..10).map(|i| t(i % 2 == 0)).collect();
        assert!(critic.train(&data, &Zero, 0, &mut rng).unwrap().is_empty());
        assert_eq!(critic, before);
        assert!(critic.train(&Dataset::new(), &Zero, 10, &mut rng).is_err());
    }

    #[test]
    fn goal_only_data_drives_q_to_one() {
        let mut rng = SimRng::seed_from_u64(2);
        let env = BottleneckEnv::new(EnvConfig::default()).unwrap();
        let data: Dataset = (0..50)
            .map(|i| {
                let s = State::new(0.86 + 0.001 * i as f64, 0.5);
                Transition::terminal(&env, s, Action::default(), SourceMode::Autonomous)
            })
            .collect();
        assert_eq!(data.goal_count(), 50);
        let mut critic = RiskCritic::new(CriticConfig::default(), 0.05, &mut rng).unwrap();
        critic.train(&data, &Zero, 600, &mut rng).unwrap();
        let mean_q: f64 = data
            .iter()
            .map(|t| critic.q_value(&t.state, &t.action))
            .sum::<f64>()
            / data.len() as f64;
        assert!(mean_q > 0.95, "{mean_q}");
    }

    #[test]
    fn zero_eval_rollouts_is_empty() {
        let env = BottleneckEnv::new(EnvConfig::default()).unwrap();
        let out = collect_eval_rollouts(&Zero, &env, 0, &mut SimRng::seed_from_u64(0)).unwrap();
        assert!(out.is_empty());
    }
}
