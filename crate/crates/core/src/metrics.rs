//! Per-iteration observables and the phase detector that turns a run's
//! history into divergence, explosion and collapse onsets.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Network;
use crate::data::SampleBatch;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    #[default]
    Baseline,
    Divergence,
    Explosion,
    Collapse,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::Divergence => "divergence",
            Phase::Explosion => "explosion",
            Phase::Collapse => "collapse",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Phase::Baseline, Phase::Divergence, Phase::Explosion, Phase::Collapse]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown phase {s:?}")))
    }
}

/// One row of a run's history.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub g_loss: f64,
    pub mean_fake_prob: f64,
    pub grad_norm_g: f64,
    pub diversity: f64,
    pub phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseThresholds {
    pub divergence_drop: f64,
    pub explosion_factor: f64,
    pub explosion_window: usize,
    pub collapse_ratio: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        Self { divergence_drop: 0.1, explosion_factor: 10.0, explosion_window: 50, collapse_ratio: 0.1 }
    }
}

impl PhaseThresholds {
    pub fn validate(&self) -> Result<()> {
        let positive = self.divergence_drop > 0.0
            && self.explosion_factor > 0.0
            && self.explosion_window > 0
            && self.collapse_ratio > 0.0;
        if !positive {
            return Err(Error::config("phase thresholds must all be positive"));
        }
        if !(self.collapse_ratio < 1.0) {
            return Err(Error::config("collapse_ratio must be below 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    pub divergence_onset: Option<u64>,
    pub explosion_onset: Option<u64>,
    pub collapse_onset: Option<u64>,
    pub initial_mean_fake_prob: f64,
    pub initial_diversity: f64,
    pub median_early_grad_norm: f64,
    pub iterations: u64,
}

impl PhaseReport {
    /// Most severe phase whose onset is at or before `iteration`.
    pub fn phase_at(&self, iteration: u64) -> Phase {
        [
            (Phase::Collapse, self.collapse_onset),
            (Phase::Explosion, self.explosion_onset),
            (Phase::Divergence, self.divergence_onset),
        ]
        .into_iter()
        .find(|(_, onset)| onset.is_some_and(|o| o <= iteration))
        .map_or(Phase::Baseline, |(p, _)| p)
    }
}

/// Mean Euclidean distance over all unordered pairs in the batch.
pub fn diversity(batch: &SampleBatch) -> Result<f64> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::usage(format!("diversity needs at least two samples, got {n}")));
    }
    let m = &batch.data;
    let mut total = 0.0;
    for i in 0..n {
        let a = m.row(i);
        for j in i + 1..n {
            let d2: f64 = a.iter().zip(m.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            total += d2.sqrt();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// L2 norm of every gradient entry in the network.
pub fn grad_norm(net: &Network) -> f64 {
    let grads = || net.params().flat_map(|p| p.grad().iter().copied());
    let scale = grads().fold(0.0f64, |m, g| m.max(g.abs()));
    if scale == 0.0 || !scale.is_finite() {
        // NaN propagates through max as the other operand, so test separately
        return if grads().any(f64::is_nan) { f64::NAN } else { scale };
    }
    scale * grads().map(|g| (g / scale).powi(2)).sum::<f64>().sqrt()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn classify_phases(history: &[MetricsRecord], th: &PhaseThresholds) -> Result<PhaseReport> {
    th.validate()?;
    let first = history.first().ok_or_else(|| Error::usage("empty metrics history"))?;
    if first.iteration != 0 {
        return Err(Error::usage("metrics history must start at iteration 0"));
    }
    if th.explosion_window > history.len() {
        return Err(Error::usage(format!(
            "explosion window {} is longer than the history ({} records)",
            th.explosion_window,
            history.len()
        )));
    }
    let mut early: Vec<f64> = history[..th.explosion_window].iter().map(|r| r.grad_norm_g).collect();
    let median_early = median(&mut early);
    let initial_prob = first.mean_fake_prob;
    let initial_div = first.diversity;

    let onset = |pred: &dyn Fn(&MetricsRecord) -> bool| history.iter().find(|r| pred(r)).map(|r| r.iteration);
    let divergence_onset = onset(&|r| r.mean_fake_prob <= initial_prob - th.divergence_drop);
    // a non-finite norm counts as exploded
    let explosion_onset = onset(&|r| {
        !r.grad_norm_g.is_finite() || r.grad_norm_g >= th.explosion_factor * median_early
    });
    let collapse_onset = onset(&|r| r.diversity <= th.collapse_ratio * initial_div);

    Ok(PhaseReport {
        divergence_onset,
        explosion_onset,
        collapse_onset,
        initial_mean_fake_prob: initial_prob,
        initial_diversity: initial_div,
        median_early_grad_norm: median_early,
        iterations: history.last().map_or(0, |r| r.iteration),
    })
}

/// Overwrites each record's phase with the label implied by `report`.
pub fn label_history(history: &mut [MetricsRecord], report: &PhaseReport) {
    for r in history {
        r.phase = report.phase_at(r.iteration);
    }
}
