use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ensemble::{discrepancy, state_features, EnsemblePolicy};
use crate::env::{State, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{train_step, Activation, AdamConfig, AdamState, Mlp, TrainScratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub fit_steps: usize,
    pub retrain_steps: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            lr: 1e-3,
            batch_size: 64,
            fit_steps: 800,
            retrain_steps: 60,
        }
    }
}

/// Action discrepancy between two actions measured in units of `action_max`.
pub fn normalized_discrepancy(a: &[f64], b: &[f64], action_max: f64) -> f64 {
    discrepancy(a, b).expect("equal action dims") / (action_max * action_max)
}

/// Predicts whether the robot's action at a state will deviate from the
/// supervisor's by more than a fixed threshold. Sigmoid head, MSE on {0, 1} labels.
#[derive(Debug, Clone)]
pub struct DiscrepancyClassifier {
    net: Mlp,
    adam: AdamState,
    config: ClassifierConfig,
    /// Normalized squared discrepancy above which a state is labelled unsafe.
    pub threshold: f64,
}

impl DiscrepancyClassifier {
    pub fn new<R: RngCore + ?Sized>(
        config: ClassifierConfig,
        threshold: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let net = Mlp::new(
            &sizes,
            Activation::Relu,
            Activation::Sigmoid,
            rng.next_u64(),
        )?;
        Ok(Self::from_network(net, config, threshold))
    }

    pub fn from_network(net: Mlp, config: ClassifierConfig, threshold: f64) -> Self {
        let adam = AdamState::new(
            &net,
            &AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
        );
        Self {
            net,
            adam,
            config,
            threshold,
        }
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn probability_unsafe(&self, state: &State) -> f64 {
        self.net
            .forward(&state_features(state))
            .expect("classifier input dimension is fixed")[0]
    }

    pub fn predicts_unsafe(&self, state: &State) -> bool {
        self.probability_unsafe(state) > 0.5
    }

    /// `1{discrepancy > threshold}` for every supervisor transition under `policy`.
    pub fn labels(&self, dataset: &Dataset, policy: &EnsemblePolicy) -> Vec<(State, f64)> {
        dataset
            .supervisor_only()
            .map(|t| {
                let d = normalized_discrepancy(
                    policy.policy_action(&t.state).as_slice(),
                    t.action.as_slice(),
                    policy.action_max(),
                );
                (t.state, if d > self.threshold { 1.0 } else { 0.0 })
            })
            .collect()
    }

    pub fn train_on<R: Rng + ?Sized>(
        &mut self,
        labelled: &[(State, f64)],
        steps: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if labelled.is_empty() {
            return Err(Error::Empty("classifier labels"));
        }
        let inputs: Vec<([f64; STATE_DIM], [f64; 1])> = labelled
            .iter()
            .map(|(s, y)| (state_features(s), [*y]))
            .collect();
        let mut scratch = TrainScratch::default();
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let batch: Vec<(&[f64], &[f64])> = (0..self.config.batch_size)
                .map(|_| {
                    let (x, y) = &inputs[rng.random_range(0..inputs.len())];
                    (&x[..], &y[..])
                })
                .collect();
            losses.push(train_step(
                &mut self.net,
                &mut self.adam,
                self.config.lr,
                batch,
                &mut scratch,
            )?);
        }
        Ok(losses)
    }

    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        dataset: &Dataset,
        policy: &EnsemblePolicy,
        steps: usize,
        rng: &mut R,
    ) -> Result<()> {
        let labelled = self.labels(dataset, policy);
        self.train_on(&labelled, steps, rng).map(|_| ())
    }

    pub fn accuracy(&self, labelled: &[(State, f64)]) -> f64 {
        if labelled.is_empty() {
            return 0.0;
        }
        let hits = labelled
            .iter()
            .filter(|(s, y)| self.predicts_unsafe(s) == (*y > 0.5))
            .count();
        hits as f64 / labelled.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::SeedableRng;

    #[test]
    fn separable_labels_are_learned() {
        let mut rng = SimRng::seed_from_u64(3);
        let labelled: Vec<(State, f64)> = (0..400)
            .map(|_| {
                let s = State::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                (s, if s.x() > 0.5 { 1.0 } else { 0.0 })
            })
            .collect();
        let mut clf = DiscrepancyClassifier::new(
            ClassifierConfig {
                lr: 3e-3,
                ..ClassifierConfig::default()
            },
            0.008,
            &mut rng,
        )
        .unwrap();
        clf.train_on(&labelled, 1500, &mut rng).unwrap();
        let acc = clf.accuracy(&labelled);
        assert!(acc > 0.95, "{acc}");
    }

    #[test]
    fn normalized_discrepancy_scales_by_action_max() {
        assert!((normalized_discrepancy(&[0.05, 0.0], &[0.0, 0.0], 0.05) - 1.0).abs() < 1e-12);
    }
}
