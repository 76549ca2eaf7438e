//! Intervention accounting: context switches, human/robot action counts, mean
//! intervention length and supervisor burden `C * (L + I)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{Mode, SwitchCause};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub ints: usize,
    pub acts_h: usize,
    pub acts_r: usize,
    pub success: bool,
    pub switch_causes: Vec<SwitchCause>,
}

impl EpisodeStats {
    pub fn len(&self) -> usize {
        self.acts_h + self.acts_r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cause_count(&self, cause: SwitchCause) -> usize {
        self.switch_causes.iter().filter(|c| **c == cause).count()
    }
}

/// Counts from the per-step control modes of one episode. Episodes start in
/// autonomous mode, so a leading supervisor step is itself a switch.
pub fn episode_stats(mode_trace: &[Mode], success: bool) -> Result<EpisodeStats> {
    if mode_trace.is_empty() {
        return Err(Error::Empty("mode trace"));
    }
    let mut stats = EpisodeStats {
        success,
        ..EpisodeStats::default()
    };
    let mut prev = Mode::Autonomous;
    for &m in mode_trace {
        match m {
            Mode::Supervisor => {
                stats.acts_h += 1;
                if prev == Mode::Autonomous {
                    stats.ints += 1;
                }
            }
            Mode::Autonomous => stats.acts_r += 1,
        }
        prev = m;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub episodes: usize,
    pub successes: usize,
    /// Per-episode statistics over successful episodes only; null when none succeeded.
    pub ints: Option<MeanStd>,
    pub acts_h: Option<MeanStd>,
    pub acts_r: Option<MeanStd>,
    pub total_ints: usize,
    pub total_acts_h: usize,
    pub total_acts_r: usize,
    pub novelty_switches: usize,
    pub risk_switches: usize,
    pub external_switches: usize,
    /// Mean supervisor actions per intervention over the run, `T Acts (H) / T Ints`.
    pub intervention_length: Option<f64>,
    /// Mean context switches per episode over all episodes.
    pub switches_per_episode: Option<f64>,
    pub latency: f64,
    pub burden: Option<f64>,
}

pub fn aggregate(stats: &[EpisodeStats], latency: f64) -> Result<RunMetrics> {
    if !(latency >= 0.0) {
        return Err(Error::InvalidArgument(
            "latency must be non-negative".into(),
        ));
    }
    let succ: Vec<&EpisodeStats> = stats.iter().filter(|s| s.success).collect();
    let column = |f: fn(&EpisodeStats) -> usize| -> Option<MeanStd> {
        MeanStd::of(&succ.iter().map(|s| f(s) as f64).collect::<Vec<_>>())
    };
    let total = |f: fn(&EpisodeStats) -> usize| -> usize { stats.iter().map(f).sum() };
    let causes = |c: SwitchCause| -> usize { stats.iter().map(|s| s.cause_count(c)).sum() };

    let total_ints = total(|s| s.ints);
    let total_acts_h = total(|s| s.acts_h);
    let intervention_length = (total_ints > 0).then(|| total_acts_h as f64 / total_ints as f64);
    let switches_per_episode = (!stats.is_empty()).then(|| total_ints as f64 / stats.len() as f64);
    let burden_value = match (switches_per_episode, intervention_length) {
        (Some(c), Some(i)) => Some(burden(c, i, latency)?),
        (Some(c), None) => Some(burden(c, 0.0, latency)?),
        _ => None,
    };
    Ok(RunMetrics {
        episodes: stats.len(),
        successes: succ.len(),
        ints: column(|s| s.ints),
        acts_h: column(|s| s.acts_h),
        acts_r: column(|s| s.acts_r),
        total_ints,
        total_acts_h,
        total_acts_r: total(|s| s.acts_r),
        novelty_switches: causes(SwitchCause::Novelty),
        risk_switches: causes(SwitchCause::Risk),
        external_switches: causes(SwitchCause::External),
        intervention_length,
        switches_per_episode,
        latency,
        burden: burden_value,
    })
}

/// Supervisor burden `C * (L + I)`.
pub fn burden(switches: f64, intervention_length: f64, latency: f64) -> Result<f64> {
    if !(switches >= 0.0 && intervention_length >= 0.0 && latency >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "burden inputs must be non-negative, got C={switches} I={intervention_length} L={latency}"
        )));
    }
    Ok(switches * (latency + intervention_length))
}

/// Probability that a random `positive` score exceeds a random `negative` one,
/// ties counting half (Mann-Whitney AUC).
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Empty("auc class"));
    }
    if positive.iter().chain(negative).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("auc score"));
    }
    let mut neg = negative.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in positive {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (positive.len() as f64 * neg.len() as f64))
}

/// One exported row in the vocabulary of the results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    #[serde(rename = "Ints")]
    pub ints: Option<f64>,
    #[serde(rename = "Ints Std")]
    pub ints_std: Option<f64>,
    #[serde(rename = "Acts (H)")]
    pub acts_h: Option<f64>,
    #[serde(rename = "Acts (H) Std")]
    pub acts_h_std: Option<f64>,
    #[serde(rename = "Acts (R)")]
    pub acts_r: Option<f64>,
    #[serde(rename = "Acts (R) Std")]
    pub acts_r_std: Option<f64>,
    #[serde(rename = "T Ints")]
    pub total_ints: usize,
    #[serde(rename = "T Acts (H)")]
    pub total_acts_h: usize,
    #[serde(rename = "T Acts (R)")]
    pub total_acts_r: usize,
    #[serde(rename = "Auto Succ")]
    pub auto_succ: Option<String>,
    #[serde(rename = "Int-Aided Succ")]
    pub int_aided_succ: Option<String>,
}

impl SummaryRow {
    pub fn new(algorithm: impl Into<String>, seed: u64, m: &RunMetrics) -> Self {
        Self {
            algorithm: algorithm.into(),
            seed,
            ints: m.ints.map(|v| v.mean),
            ints_std: m.ints.map(|v| v.std),
            acts_h: m.acts_h.map(|v| v.mean),
            acts_h_std: m.acts_h.map(|v| v.std),
            acts_r: m.acts_r.map(|v| v.mean),
            acts_r_std: m.acts_r.map(|v| v.std),
            total_ints: m.total_ints,
            total_acts_h: m.total_acts_h,
            total_acts_r: m.total_acts_r,
            auto_succ: None,
            int_aided_succ: None,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write, T: Serialize>(rows: &[T], mut out: W) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
