//! Generator fine-tuning against a frozen discriminator with an inverted
//! objective: the generator is pushed toward samples the discriminator
//! scores as fake. Snapshots of the generator are kept along the way so any
//! point of the trajectory can be revisited.
//!
//! Iteration `k` of a run denotes the generator after `k` updates. Metrics
//! row `k` and snapshot `k` both describe that model; row `k` holds the
//! loss, mean `D(G(z))` and gradient norm on latent batch `k` plus the probe
//! diversity. A run of `N` iterations therefore has `N + 1` rows.

use std::thread;

use sha2::{Digest, Sha256};

use crate::autodiff::{AdamConfig, AdamState, Matrix, Network};
use crate::checkpoint::{network_hash, Checkpoint, Role};
use crate::config::render_finetune_config;
use crate::data::{latent_sample_with, Domain, SampleBatch};
use crate::error::{Error, Result};
use crate::losses::{clamp_prob, inverted_g_loss, inverted_g_loss_grad, LossVariant};
use crate::metrics::{
    classify_phases, diversity, grad_norm, label_history, MetricsRecord, Phase, PhaseReport,
    PhaseThresholds,
};
use crate::rng::{stream, Rng};
use crate::train::{probe_latents, validate_pair, GanPair};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SnapshotSchedule {
    Stride(u64),
    List(Vec<u64>),
}

impl Default for SnapshotSchedule {
    fn default() -> Self {
        SnapshotSchedule::Stride(250)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub base_checkpoint: Option<String>,
    pub loss_variant: LossVariant,
    /// `None` reuses the learning rate the base generator was trained with.
    pub lr_g: Option<f64>,
    pub batch_size: usize,
    pub iterations: u64,
    pub snapshot_schedule: SnapshotSchedule,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            base_checkpoint: None,
            loss_variant: LossVariant::Amplifying,
            lr_g: None,
            batch_size: 64,
            iterations: 2000,
            snapshot_schedule: SnapshotSchedule::default(),
            grad_clip: None,
            seed: 11,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if let Some(lr) = self.lr_g {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::config("lr_g must be finite and non-negative"));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("grad_clip must be a positive threshold"));
            }
        }
        match &self.snapshot_schedule {
            SnapshotSchedule::Stride(0) => return Err(Error::config("snapshot stride must be positive")),
            SnapshotSchedule::Stride(_) => {}
            SnapshotSchedule::List(its) => {
                if its.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config("snapshot list must be strictly ascending"));
                }
                if its.last().is_some_and(|&l| l > self.iterations) {
                    return Err(Error::config("snapshot list reaches past the last iteration"));
                }
            }
        }
        Ok(())
    }

    /// Effective snapshot iterations: always starts at 0 and ends at the
    /// final iteration.
    pub fn snapshot_iterations(&self) -> Vec<u64> {
        let mut its: Vec<u64> = match &self.snapshot_schedule {
            SnapshotSchedule::Stride(s) => (0..=self.iterations).step_by(*s as usize).collect(),
            SnapshotSchedule::List(list) => list.clone(),
        };
        its.push(0);
        its.push(self.iterations);
        its.sort_unstable();
        its.dedup();
        its
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: u64,
    pub checkpoint: Checkpoint,
    /// Generator output on the probe latents at this iteration.
    pub samples: SampleBatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub run_id: String,
    pub base_hash: String,
    pub config_hash: String,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutput {
    pub snapshots: SnapshotSet,
    pub metrics: Vec<MetricsRecord>,
    pub report: PhaseReport,
    pub d_hash_before: String,
    pub d_hash_after: String,
}

/// Generator/discriminator pair prepared for fine-tuning: the discriminator
/// is frozen and the generator gets a fresh optimizer.
pub fn prepare_pair(base: &Checkpoint, cfg: &FinetuneConfig) -> Result<GanPair> {
    let mut pair = GanPair::from_checkpoint(base)?;
    let lr = cfg.lr_g.unwrap_or(pair.adam_g.config.lr);
    pair.adam_g = AdamState::for_network(&pair.g, AdamConfig::with_lr(lr));
    pair.iteration = 0;
    pair.d.freeze();
    Ok(pair)
}

struct StepEval {
    record: MetricsRecord,
    grads_finite: bool,
}

fn evaluate(pair: &mut GanPair, variant: LossVariant, latents: &Matrix, probe: &Matrix) -> Result<StepEval> {
    if !pair.d.is_frozen() {
        return Err(Error::Invariant("discriminator must be frozen during fine-tuning".into()));
    }
    validate_pair(&pair.g, &pair.d)?;
    let div = diversity(&SampleBatch::new(pair.g.forward(probe)?, Domain::Generated))?;
    let g_tape = pair.g.forward_tape(latents)?;
    let d_tape = pair.d.forward_tape(g_tape.output().expect("tape has output"))?;
    let probs = d_tape.output().expect("tape has output").data();
    let loss = inverted_g_loss(probs, variant)?;
    let upstream = Matrix::from_vec(probs.len(), 1, inverted_g_loss_grad(probs, variant)?)?;
    let dx = pair.d.backward_input(&d_tape, &upstream)?;
    pair.g.backward(&g_tape, &dx)?;
    let norm = grad_norm(&pair.g);
    let mean = probs.iter().map(|&p| clamp_prob(p)).sum::<f64>() / probs.len() as f64;
    Ok(StepEval {
        record: MetricsRecord {
            iteration: pair.iteration,
            g_loss: loss,
            mean_fake_prob: mean,
            grad_norm_g: norm,
            diversity: div,
            phase: Phase::Baseline,
        },
        grads_finite: norm.is_finite(),
    })
}

/// One fine-tuning update of the generator. The discriminator must already
/// be frozen; its parameters are never written. Non-finite gradients skip
/// the update and are reported through the returned record; non-finite
/// parameters abort.
pub fn finetune_step(
    pair: &mut GanPair,
    cfg: &FinetuneConfig,
    latents: &Matrix,
    probe: &Matrix,
) -> Result<MetricsRecord> {
    let iteration = pair.iteration;
    let wrap = |e: Error| match e {
        Error::Numeric(msg) => Error::Numeric(format!("iteration {iteration}: {msg}")),
        other => other,
    };
    let eval = evaluate(pair, cfg.loss_variant, latents, probe).map_err(wrap)?;
    if eval.grads_finite {
        if let Some(limit) = cfg.grad_clip {
            let norm = eval.record.grad_norm_g;
            if norm > limit {
                let scale = limit / norm;
                for p in pair.g.params_mut()? {
                    for g in p.grad_mut() {
                        *g *= scale;
                    }
                }
            }
        }
        pair.adam_g.step_network(&mut pair.g).map_err(wrap)?;
        if !pair.g.all_params_finite() {
            return Err(Error::numeric(format!(
                "iteration {iteration}: generator parameters became non-finite"
            )));
        }
    }
    pair.iteration += 1;
    Ok(eval.record)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn finetune_run(base: &Checkpoint, cfg: &FinetuneConfig) -> Result<FinetuneOutput> {
    finetune_run_with(base, cfg, &PhaseThresholds::default())
}

pub fn finetune_run_with(
    base: &Checkpoint,
    cfg: &FinetuneConfig,
    thresholds: &PhaseThresholds,
) -> Result<FinetuneOutput> {
    cfg.validate()?;
    let mut pair = prepare_pair(base, cfg)?;
    let latent_dim = pair.g.in_dim();
    let probe = probe_latents(latent_dim)?;
    if !pair.g.forward(&probe)?.all_finite() {
        return Err(Error::numeric("base generator produces non-finite samples"));
    }
    let d_hash_before = network_hash(&pair.d, Role::Discriminator);
    let base_hash = base.sha256_hex();
    let config_hash = sha256_hex(render_finetune_config(cfg).as_bytes());
    let run_id = sha256_hex(format!("{base_hash}:{config_hash}").as_bytes())[..16].to_string();

    let schedule = cfg.snapshot_iterations();
    let mut next_snapshot = schedule.iter().peekable();
    let mut snapshots = Vec::with_capacity(schedule.len());
    let mut rng = Rng::with_stream(cfg.seed, stream::LATENT);
    let mut metrics = Vec::with_capacity(cfg.iterations as usize + 1);

    for k in 0..=cfg.iterations {
        if next_snapshot.next_if_eq(&&k).is_some() {
            let samples = SampleBatch::new(pair.g.forward(&probe)?, Domain::Generated);
            snapshots.push(Snapshot { iteration: k, checkpoint: pair.to_checkpoint(cfg.seed), samples });
        }
        let z = latent_sample_with(latent_dim, &mut rng, cfg.batch_size)?.data;
        let record = if k < cfg.iterations {
            finetune_step(&mut pair, cfg, &z, &probe)?
        } else {
            evaluate(&mut pair, cfg.loss_variant, &z, &probe)?.record
        };
        metrics.push(record);
    }

    let d_hash_after = network_hash(&pair.d, Role::Discriminator);
    if d_hash_before != d_hash_after {
        return Err(Error::Invariant("discriminator changed during fine-tuning".into()));
    }
    let report = classify_phases(&metrics, thresholds)?;
    label_history(&mut metrics, &report);
    Ok(FinetuneOutput {
        snapshots: SnapshotSet { run_id, base_hash, config_hash, snapshots },
        metrics,
        report,
        d_hash_before,
        d_hash_after,
    })
}

#[derive(Clone, Debug)]
pub struct ComparedRun {
    pub label: String,
    pub base_iteration: u64,
    pub output: FinetuneOutput,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub runs: Vec<ComparedRun>,
}

fn same_architecture(a: &Checkpoint, b: &Checkpoint) -> bool {
    let specs = |c: &Checkpoint| c.nets.iter().map(Network::spec).collect::<Vec<_>>();
    a.role == b.role && specs(a) == specs(b)
}

/// Fine-tunes every base with the same configuration. Runs execute on
/// separate threads; each is deterministic so the report does not depend on
/// scheduling.
pub fn compare_runs(bases: &[(String, Checkpoint)], cfg: &FinetuneConfig) -> Result<ComparisonReport> {
    if bases.len() < 2 {
        return Err(Error::usage(format!(
            "comparison needs at least two base checkpoints, got {}",
            bases.len()
        )));
    }
    if let Some((label, _)) = bases.iter().find(|(_, c)| !same_architecture(c, &bases[0].1)) {
        return Err(Error::config(format!("base {label} differs in architecture from {}", bases[0].0)));
    }
    let results: Vec<Result<FinetuneOutput>> = thread::scope(|s| {
        let handles: Vec<_> = bases
            .iter()
            .map(|(_, ckpt)| s.spawn(move || finetune_run(ckpt, cfg)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("fine-tune thread panicked")).collect()
    });
    let mut runs = Vec::with_capacity(bases.len());
    for ((label, ckpt), res) in bases.iter().zip(results) {
        runs.push(ComparedRun { label: label.clone(), base_iteration: ckpt.iteration, output: res? });
    }
    Ok(ComparisonReport { runs })
}

fn fmt_onset(o: Option<u64>) -> String {
    o.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl ComparisonReport {
    /// Phase onsets per base followed by snapshot-aligned metric columns.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# phase onsets\n");
        out.push_str(&format!(
            "{:<24} {:>10} {:>10} {:>10} {:>10}\n",
            "base", "base_iter", "divergence", "explosion", "collapse"
        ));
        for r in &self.runs {
            let rep = &r.output.report;
            out.push_str(&format!(
                "{:<24} {:>10} {:>10} {:>10} {:>10}\n",
                r.label,
                r.base_iteration,
                fmt_onset(rep.divergence_onset),
                fmt_onset(rep.explosion_onset),
                fmt_onset(rep.collapse_onset)
            ));
        }
        out.push_str("\n# snapshot metrics (mean_fake_prob / grad_norm_g / diversity)\n");
        out.push_str(&format!("{:>9}", "iteration"));
        for r in &self.runs {
            out.push_str(&format!(" | {:^38}", r.label));
        }
        out.push('\n');
        let its: Vec<u64> = self.runs[0].output.snapshots.snapshots.iter().map(|s| s.iteration).collect();
        for it in its {
            out.push_str(&format!("{it:>9}"));
            for r in &self.runs {
                match r.output.metrics.iter().find(|m| m.iteration == it) {
                    Some(m) => out.push_str(&format!(
                        " | {:>10.4e} {:>12.4e} {:>12.4e}  ",
                        m.mean_fake_prob, m.grad_norm_g, m.diversity
                    )),
                    None => out.push_str(&format!(" | {:^38}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}
