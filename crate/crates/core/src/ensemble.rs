//! Bootstrapped ensemble of behavior-cloned MLPs.
//!
//! The executed robot action is the ensemble mean; the disagreement between members
//! (per-component population variance, averaged over components) is the novelty score.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::env::{Action, State, ACTION_DIM, STATE_DIM};
use crate::error::{check_dim, Error, Result};
use crate::nn::{train_step, Activation, AdamConfig, AdamState, Mlp, TrainScratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    /// Gradient steps per member for the initial fit.
    pub fit_steps: usize,
    /// Gradient steps per member for each warm-started refit after new data.
    pub retrain_steps: usize,
    pub retrain_from_scratch: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 5,
            hidden: vec![32, 32],
            lr: 1e-3,
            batch_size: 64,
            fit_steps: 1500,
            retrain_steps: 60,
            retrain_from_scratch: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(
                "batch size and hidden sizes must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&self.hidden);
        sizes.push(ACTION_DIM);
        sizes
    }
}

/// Anything that maps a state to an action.
pub trait Policy {
    fn act(&self, state: &State) -> Action;
}

/// Network input encoding shared by policies and the critic: unit square to [-1, 1].
pub fn state_features(state: &State) -> [f64; STATE_DIM] {
    state.0.map(|v| 2.0 * v - 1.0)
}

#[derive(Debug, Clone)]
pub struct EnsemblePolicy {
    members: Vec<Mlp>,
    action_max: f64,
    config: EnsembleConfig,
    optimizers: Vec<AdamState>,
}

impl PartialEq for EnsemblePolicy {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members && self.action_max == other.action_max
    }
}

impl EnsemblePolicy {
    /// Untrained ensemble with independently seeded members.
    pub fn new<R: RngCore + ?Sized>(
        config: EnsembleConfig,
        action_max: f64,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let sizes = config.layer_sizes();
        let members = (0..config.members)
            .map(|_| Mlp::new(&sizes, Activation::Relu, Activation::Tanh, rng.next_u64()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_members(members, action_max, config))
    }

    pub fn from_members(members: Vec<Mlp>, action_max: f64, config: EnsembleConfig) -> Self {
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let optimizers = members.iter().map(|m| AdamState::new(m, &adam)).collect();
        Self {
            members,
            action_max,
            config,
            optimizers,
        }
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn action_max(&self) -> f64 {
        self.action_max
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    /// Trains every member on its own bootstrap resample of the supervisor-labelled
    /// transitions for `steps` Adam steps.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        dataset: &Dataset,
        steps: usize,
        rng: &mut R,
    ) -> Result<()> {
        let labelled: Vec<([f64; STATE_DIM], [f64; ACTION_DIM])> = dataset
            .supervisor_only()
            .map(|t| {
                (
                    state_features(&t.state),
                    t.action.0.map(|a| a / self.action_max),
                )
            })
            .collect();
        if labelled.is_empty() {
            return Err(Error::Empty("supervisor dataset"));
        }
        let n = labelled.len();
        let mut scratch = TrainScratch::default();
        for (member, adam) in self.members.iter_mut().zip(&mut self.optimizers) {
            let resample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            for _ in 0..steps {
                let batch = (0..self.config.batch_size).map(|_| {
                    let (x, y) = &labelled[resample[rng.random_range(0..n)]];
                    (&x[..], &y[..])
                });
                let batch: Vec<_> = batch.collect();
                train_step(member, adam, self.config.lr, batch, &mut scratch)?;
            }
        }
        Ok(())
    }

    /// Refit after data aggregation: warm-started unless configured otherwise.
    pub fn retrain<R: Rng + ?Sized>(&mut self, dataset: &Dataset, rng: &mut R) -> Result<()> {
        if self.config.retrain_from_scratch {
            let fresh = Self::new(self.config.clone(), self.action_max, rng)?;
            *self = fresh;
            self.train(dataset, self.config.fit_steps, rng)
        } else {
            self.train(dataset, self.config.retrain_steps, rng)
        }
    }

    /// Member outputs in action units.
    pub fn member_actions(&self, state: &State) -> Vec<[f64; ACTION_DIM]> {
        let x = state_features(state);
        self.members
            .iter()
            .map(|m| {
                let out = m.forward(&x).expect("member input dimension is fixed");
                [out[0] * self.action_max, out[1] * self.action_max]
            })
            .collect()
    }

    pub fn policy_action(&self, state: &State) -> Action {
        Action(mean_action(&self.member_actions(state)))
    }

    pub fn novelty(&self, state: &State) -> f64 {
        novelty_of(&self.member_actions(state))
    }

    /// Mean action and novelty from a single pass over the members.
    pub fn action_and_novelty(&self, state: &State) -> (Action, f64) {
        let outs = self.member_actions(state);
        (Action(mean_action(&outs)), novelty_of(&outs))
    }
}

impl Policy for EnsemblePolicy {
    fn act(&self, state: &State) -> Action {
        self.policy_action(state)
    }
}

/// Fits a fresh ensemble on the supervisor transitions of `dataset`.
pub fn fit_bc<R: Rng + ?Sized>(
    dataset: &Dataset,
    config: &EnsembleConfig,
    action_max: f64,
    rng: &mut R,
) -> Result<EnsemblePolicy> {
    if dataset.supervisor_only().next().is_none() {
        return Err(Error::Empty("supervisor dataset"));
    }
    let mut policy = EnsemblePolicy::new(config.clone(), action_max, rng)?;
    policy.train(dataset, config.fit_steps, rng)?;
    Ok(policy)
}

pub fn mean_action(outputs: &[[f64; ACTION_DIM]]) -> [f64; ACTION_DIM] {
    let k = outputs.len() as f64;
    let mut mean = [0.0; ACTION_DIM];
    for o in outputs {
        for (m, v) in mean.iter_mut().zip(o) {
            *m += v;
        }
    }
    mean.map(|m| m / k)
}

/// Population variance of each component across members, averaged over components.
pub fn novelty_of(outputs: &[[f64; ACTION_DIM]]) -> f64 {
    if outputs.len() < 2 {
        return 0.0;
    }
    let k = outputs.len() as f64;
    let mean = mean_action(outputs);
    let mut total = 0.0;
    for (c, m) in mean.iter().enumerate() {
        let var: f64 = outputs.iter().map(|o| (o[c] - m) * (o[c] - m)).sum::<f64>() / k;
        total += var;
    }
    total / ACTION_DIM as f64
}

/// Squared Euclidean distance between two actions.
pub fn discrepancy(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}
