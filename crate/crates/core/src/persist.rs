//! Dataset JSON-lines files and versioned model checkpoints.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::critic::{CriticConfig, RiskCritic};
use crate::dataset::{Dataset, Transition};
use crate::engine::{
    Algorithm, ClassifierConfig, DiscrepancyClassifier, Gating, HumanGate, LazyGate,
    NeverIntervene, RunConfig, RunResult, SafeGate, ThriftyGate,
};
use crate::ensemble::{EnsembleConfig, EnsemblePolicy};
use crate::env::{EnvConfig, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::gate::GateThresholds;
use crate::metrics::RunMetrics;
use crate::nn::{Activation, Layer, Mlp};
use crate::supervisor::SyntheticGater;

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in dataset.iter() {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`]. Blank lines are skipped; any other
/// unparsable or out-of-arena record fails with its 1-based line number.
pub fn load_dataset(path: impl AsRef<Path>, env: &EnvConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut dataset = Dataset::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let t: Transition = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        validate_transition(&t, env).map_err(malformed)?;
        dataset.push(t);
    }
    Ok(dataset)
}

fn validate_transition(t: &Transition, env: &EnvConfig) -> std::result::Result<(), String> {
    let coords = t.state.as_slice().iter().chain(t.next_state.as_slice());
    if coords.clone().any(|v| !v.is_finite()) || !t.action.is_finite() {
        return Err("non-finite value".into());
    }
    if coords.clone().any(|v| !(0.0..=1.0).contains(v)) {
        return Err("state outside the unit arena".into());
    }
    if t.action
        .as_slice()
        .iter()
        .any(|a| a.abs() > env.action_max + 1e-12)
    {
        return Err(format!("action exceeds action_max {}", env.action_max));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    PolicyEnsemble,
    Critic,
    Classifier,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::PolicyEnsemble => "policy-ensemble",
            ModelKind::Critic => "critic",
            ModelKind::Classifier => "classifier",
        })
    }
}

/// Serialized network: architecture plus weights as nested `[out][in]` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for NetworkRecord {
    fn from(mlp: &Mlp) -> Self {
        Self {
            layer_sizes: mlp.layer_sizes().to_vec(),
            hidden_activation: mlp.hidden_activation(),
            output_activation: mlp.output_activation(),
            weights: mlp
                .layers()
                .iter()
                .map(|l| l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: mlp.layers().iter().map(|l| l.biases.clone()).collect(),
        }
    }
}

impl NetworkRecord {
    pub fn to_mlp(&self) -> Result<Mlp> {
        if self.weights.len() != self.biases.len()
            || self.weights.len() + 1 != self.layer_sizes.len()
        {
            return Err(Error::InvalidArchitecture(format!(
                "{} weight matrices and {} bias vectors for layer sizes {:?}",
                self.weights.len(),
                self.biases.len(),
                self.layer_sizes
            )));
        }
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .zip(self.layer_sizes.windows(2))
            .map(|((rows, biases), dims)| {
                if rows.iter().any(|r| r.len() != dims[0]) {
                    return Err(Error::InvalidArchitecture(format!(
                        "weight row length differs from layer input size {}",
                        dims[0]
                    )));
                }
                Ok(Layer {
                    inputs: dims[0],
                    outputs: dims[1],
                    weights: rows.concat(),
                    biases: biases.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers, self.hidden_activation, self.output_activation)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub steps: usize,
    /// FNV-1a hash of the JSON run configuration, hex encoded.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub action_max: f64,
    pub networks: Vec<NetworkRecord>,
    /// Model configuration (ensemble, critic or classifier settings).
    pub config: serde_json::Value,
    /// Gate thresholds in force at the end of training (critic checkpoints).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<GateThresholds>,
    /// Label threshold of a discrepancy classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_threshold: Option<f64>,
    pub metadata: CheckpointMeta,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    /// Loads a checkpoint of the given kind. The version and kind are checked
    /// before the body is interpreted.
    pub fn load(path: impl AsRef<Path>, expected: ModelKind) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::InvalidArgument("checkpoint has no format_version".into()))?;
        if found != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::VersionMismatch {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                supported: CHECKPOINT_VERSION,
            });
        }
        let kind: ModelKind =
            serde_json::from_value(value.get("kind").cloned().unwrap_or_default())?;
        if kind != expected {
            return Err(Error::WrongModelKind {
                expected: expected.to_string(),
                found: kind.to_string(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

pub fn policy_checkpoint(policy: &EnsemblePolicy, metadata: CheckpointMeta) -> Result<Checkpoint> {
    Ok(Checkpoint {
        format_version: CHECKPOINT_VERSION,
        kind: ModelKind::PolicyEnsemble,
        action_max: policy.action_max(),
        networks: policy.members().iter().map(NetworkRecord::from).collect(),
        config: serde_json::to_value(policy.config())?,
        thresholds: None,
        label_threshold: None,
        metadata,
    })
}

pub fn critic_checkpoint(
    critic: &RiskCritic,
    thresholds: Option<GateThresholds>,
    metadata: CheckpointMeta,
) -> Result<Checkpoint> {
    Ok(Checkpoint {
        format_version: CHECKPOINT_VERSION,
        kind: ModelKind::Critic,
        action_max: critic.action_max(),
        networks: vec![NetworkRecord::from(critic.network())],
        config: serde_json::to_value(critic.config())?,
        thresholds,
        label_threshold: None,
        metadata,
    })
}

pub fn classifier_checkpoint(
    classifier: &DiscrepancyClassifier,
    metadata: CheckpointMeta,
) -> Result<Checkpoint> {
    Ok(Checkpoint {
        format_version: CHECKPOINT_VERSION,
        kind: ModelKind::Classifier,
        action_max: 0.0,
        networks: vec![NetworkRecord::from(classifier.network())],
        config: serde_json::to_value(classifier.config())?,
        thresholds: None,
        label_threshold: Some(classifier.threshold),
        metadata,
    })
}

fn single_network(ckpt: &Checkpoint) -> Result<Mlp> {
    match ckpt.networks.as_slice() {
        [net] => net.to_mlp(),
        nets => Err(Error::InvalidArchitecture(format!(
            "{} checkpoint must hold one network, found {}",
            ckpt.kind,
            nets.len()
        ))),
    }
}

impl Checkpoint {
    pub fn into_policy(self) -> Result<EnsemblePolicy> {
        if self.kind != ModelKind::PolicyEnsemble {
            return Err(Error::WrongModelKind {
                expected: ModelKind::PolicyEnsemble.to_string(),
                found: self.kind.to_string(),
            });
        }
        let config: EnsembleConfig = serde_json::from_value(self.config)?;
        let members = self
            .networks
            .iter()
            .map(NetworkRecord::to_mlp)
            .collect::<Result<Vec<_>>>()?;
        if members.is_empty() {
            return Err(Error::Empty("ensemble members"));
        }
        for m in &members {
            if m.input_dim() != STATE_DIM || m.output_dim() != ACTION_DIM {
                return Err(Error::InvalidArchitecture(format!(
                    "policy member maps {} -> {}, expected {STATE_DIM} -> {ACTION_DIM}",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
        }
        Ok(EnsemblePolicy::from_members(
            members,
            self.action_max,
            config,
        ))
    }

    pub fn into_critic(self) -> Result<(RiskCritic, Option<GateThresholds>)> {
        if self.kind != ModelKind::Critic {
            return Err(Error::WrongModelKind {
                expected: ModelKind::Critic.to_string(),
                found: self.kind.to_string(),
            });
        }
        let net = single_network(&self)?;
        let config: CriticConfig = serde_json::from_value(self.config)?;
        Ok((
            RiskCritic::from_network(net, self.action_max, config)?,
            self.thresholds,
        ))
    }

    pub fn into_classifier(self) -> Result<DiscrepancyClassifier> {
        if self.kind != ModelKind::Classifier {
            return Err(Error::WrongModelKind {
                expected: ModelKind::Classifier.to_string(),
                found: self.kind.to_string(),
            });
        }
        let net = single_network(&self)?;
        let config: ClassifierConfig = serde_json::from_value(self.config)?;
        let threshold = self.label_threshold.ok_or_else(|| {
            Error::InvalidArgument("classifier checkpoint has no label_threshold".into())
        })?;
        Ok(DiscrepancyClassifier::from_network(net, config, threshold))
    }
}

pub fn save_policy(
    path: impl AsRef<Path>,
    policy: &EnsemblePolicy,
    metadata: CheckpointMeta,
) -> Result<()> {
    policy_checkpoint(policy, metadata)?.save(path)
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<EnsemblePolicy> {
    Checkpoint::load(path, ModelKind::PolicyEnsemble)?.into_policy()
}

pub fn save_critic(
    path: impl AsRef<Path>,
    critic: &RiskCritic,
    thresholds: Option<GateThresholds>,
    metadata: CheckpointMeta,
) -> Result<()> {
    critic_checkpoint(critic, thresholds, metadata)?.save(path)
}

pub fn load_critic(path: impl AsRef<Path>) -> Result<(RiskCritic, Option<GateThresholds>)> {
    Checkpoint::load(path, ModelKind::Critic)?.into_critic()
}

pub fn save_classifier(
    path: impl AsRef<Path>,
    classifier: &DiscrepancyClassifier,
    metadata: CheckpointMeta,
) -> Result<()> {
    classifier_checkpoint(classifier, metadata)?.save(path)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<DiscrepancyClassifier> {
    Checkpoint::load(path, ModelKind::Classifier)?.into_classifier()
}

/// File names inside a training run directory.
pub mod run_files {
    pub const CONFIG: &str = "config.json";
    pub const EPISODES: &str = "metrics.jsonl";
    pub const SUMMARY: &str = "summary.json";
    pub const POLICY: &str = "policy.json";
    pub const CRITIC: &str = "critic.json";
    pub const CLASSIFIER: &str = "classifier.json";
    pub const DH: &str = "dh.jsonl";
    pub const DR: &str = "dr.jsonl";
}

/// Writes everything a later `eval`, `fleet` or `export` needs. Output depends only
/// on the run, so identical runs produce identical files.
pub fn save_run(dir: impl AsRef<Path>, result: &RunResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let meta = CheckpointMeta {
        seed: result.config.seed,
        steps: result.interactive_steps_used,
        config_hash: config_hash(&result.config)?,
    };
    write_json(dir.join(run_files::CONFIG), &result.config)?;
    write_json(dir.join(run_files::SUMMARY), &result.metrics)?;
    let mut episodes = BufWriter::new(File::create(dir.join(run_files::EPISODES))?);
    crate::metrics::write_jsonl(&result.episodes, &mut episodes)?;
    episodes.flush()?;
    save_policy(dir.join(run_files::POLICY), &result.policy, meta.clone())?;
    if let Some(critic) = &result.critic {
        save_critic(
            dir.join(run_files::CRITIC),
            critic,
            result.final_thresholds,
            meta.clone(),
        )?;
    }
    if let Some(classifier) = &result.classifier {
        save_classifier(dir.join(run_files::CLASSIFIER), classifier, meta)?;
    }
    save_dataset(dir.join(run_files::DH), &result.dh)?;
    save_dataset(dir.join(run_files::DR), &result.dr)?;
    Ok(())
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

/// Trained models reloaded from a run directory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub policy: EnsemblePolicy,
    pub critic: Option<(RiskCritic, Option<GateThresholds>)>,
    pub classifier: Option<DiscrepancyClassifier>,
    pub metrics: Option<RunMetrics>,
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<RunArtifacts> {
    let dir = dir.as_ref();
    let config = load_run_config(dir.join(run_files::CONFIG))?;
    let policy = load_policy(dir.join(run_files::POLICY))?;
    let optional = |name: &str| {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    let critic = optional(run_files::CRITIC).map(load_critic).transpose()?;
    let classifier = optional(run_files::CLASSIFIER)
        .map(load_classifier)
        .transpose()?;
    let metrics = optional(run_files::SUMMARY)
        .map(|p| -> Result<RunMetrics> {
            Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?)
        })
        .transpose()?;
    Ok(RunArtifacts {
        config,
        policy,
        critic,
        classifier,
        metrics,
    })
}

impl RunArtifacts {
    /// Gate matching the algorithm the run was trained with. Offline-only runs
    /// never ask for help.
    pub fn gate(&self) -> Result<Box<dyn Gating + '_>> {
        let action_max = self.config.env.action_max;
        let missing = |what: &str| {
            Error::InvalidArgument(format!(
                "{} run has no {what}",
                self.config.algorithm.name()
            ))
        };
        Ok(match self.config.algorithm {
            Algorithm::Thrifty => {
                let (critic, thresholds) = self
                    .critic
                    .as_ref()
                    .ok_or_else(|| missing("critic checkpoint"))?;
                let thresholds = thresholds.ok_or_else(|| missing("gate thresholds"))?;
                Box::new(ThriftyGate::new(
                    &self.policy,
                    critic,
                    thresholds,
                    self.config.clauses(),
                ))
            }
            Algorithm::Safedagger => Box::new(SafeGate {
                classifier: self
                    .classifier
                    .as_ref()
                    .ok_or_else(|| missing("classifier checkpoint"))?,
            }),
            Algorithm::Lazydagger => Box::new(LazyGate::new(
                self.classifier
                    .as_ref()
                    .ok_or_else(|| missing("classifier checkpoint"))?,
                self.config.lazydagger.exit_threshold(),
                action_max,
            )),
            Algorithm::Hgdagger => Box::new(HumanGate {
                gater: SyntheticGater::new(self.config.gater.clone())?,
                action_max,
            }),
            Algorithm::Bc => Box::new(NeverIntervene),
        })
    }
}
