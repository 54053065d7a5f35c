//! Standard adversarial training: one discriminator step followed by one
//! generator step per iteration, with periodic checkpoints.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Activation, AdamConfig, AdamState, Matrix, NetSpec, Network};
use crate::checkpoint::{Checkpoint, Role};
use crate::data::{
    latent_sample, latent_sample_with, ring2d_sample_with, sprites_sample_with, Domain, RingConfig,
    SampleBatch, SpriteConfig, SPRITE_DIM,
};
use crate::error::{Error, Result};
use crate::autodiff::gradient_check;
use crate::losses::{
    clamp_prob, d_loss, d_loss_grad, g_loss_standard, g_loss_standard_grad, inverted_g_loss, inverted_g_loss_grad,
    LossVariant,
};
use crate::metrics::{diversity, grad_norm, MetricsRecord, Phase};
use crate::rng::{stream, Rng};

/// Seed of the fixed latent batch every diversity measurement uses.
pub const PROBE_SEED: u64 = 0x005E_ED0F_D1CE;
pub const PROBE_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Ring2d,
    Sprites,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Ring2d => "ring2d",
            DatasetKind::Sprites => "sprites",
        }
    }

    pub fn data_dim(self) -> usize {
        match self {
            DatasetKind::Ring2d => 2,
            DatasetKind::Sprites => SPRITE_DIM,
        }
    }

    /// Output activation of the generator for this kind of data.
    pub fn generator_output(self) -> Activation {
        match self {
            DatasetKind::Ring2d => Activation::Linear,
            DatasetKind::Sprites => Activation::Tanh,
        }
    }

    pub fn from_data_dim(dim: usize) -> Option<Self> {
        match dim {
            2 => Some(DatasetKind::Ring2d),
            SPRITE_DIM => Some(DatasetKind::Sprites),
            _ => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring2d" => Ok(DatasetKind::Ring2d),
            "sprites" => Ok(DatasetKind::Sprites),
            other => Err(Error::config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub latent_dim: usize,
    /// Hidden widths of the generator; input is `latent_dim`, output the data dimension.
    pub g_layers: Vec<usize>,
    /// Hidden widths of the discriminator; output is a single probability.
    pub d_layers: Vec<usize>,
    pub g_activation: Activation,
    pub d_activation: Activation,
    pub lr_g: f64,
    pub lr_d: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn ring2d() -> Self {
        Self {
            dataset: DatasetKind::Ring2d,
            latent_dim: 16,
            g_layers: vec![64, 64, 64],
            d_layers: vec![64, 64],
            g_activation: Activation::Tanh,
            d_activation: Activation::LeakyRelu,
            lr_g: 1e-3,
            lr_d: 1e-3,
            batch_size: 64,
            iterations: 5000,
            checkpoint_every: 1000,
            seed: 7,
        }
    }

    pub fn sprites() -> Self {
        Self {
            dataset: DatasetKind::Sprites,
            latent_dim: 32,
            g_layers: vec![128],
            d_layers: vec![128],
            g_activation: Activation::LeakyRelu,
            d_activation: Activation::LeakyRelu,
            lr_g: 1e-3,
            lr_d: 1e-3,
            batch_size: 64,
            iterations: 2000,
            checkpoint_every: 500,
            seed: 7,
        }
    }

    pub fn for_dataset(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Ring2d => Self::ring2d(),
            DatasetKind::Sprites => Self::sprites(),
        }
    }

    pub fn generator_spec(&self) -> Result<NetSpec> {
        let mut dims = vec![self.latent_dim];
        dims.extend(&self.g_layers);
        dims.push(self.dataset.data_dim());
        NetSpec::uniform(dims, self.g_activation, self.dataset.generator_output())
    }

    pub fn discriminator_spec(&self) -> Result<NetSpec> {
        let mut dims = vec![self.dataset.data_dim()];
        dims.extend(&self.d_layers);
        dims.push(1);
        NetSpec::uniform(dims, self.d_activation, Activation::Sigmoid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch_size == 0 {
            return Err(Error::config("latent_dim and batch_size must be positive"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every must be positive"));
        }
        let lr_ok = |lr: f64| lr.is_finite() && lr >= 0.0;
        if !lr_ok(self.lr_g) || !lr_ok(self.lr_d) {
            return Err(Error::config("learning rates must be finite and non-negative"));
        }
        self.generator_spec()?;
        self.discriminator_spec()?;
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::ring2d()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanPair {
    pub g: Network,
    pub d: Network,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub iteration: u64,
}

impl GanPair {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let g = Network::init(&cfg.generator_spec()?, &mut Rng::with_stream(cfg.seed, stream::G_INIT))?;
        let d = Network::init(&cfg.discriminator_spec()?, &mut Rng::with_stream(cfg.seed, stream::D_INIT))?;
        let adam_g = AdamState::for_network(&g, AdamConfig::with_lr(cfg.lr_g));
        let adam_d = AdamState::for_network(&d, AdamConfig::with_lr(cfg.lr_d));
        Ok(Self { g, d, adam_g, adam_d, iteration: 0 })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.role != Role::Pair {
            return Err(Error::usage("expected a generator/discriminator pair checkpoint"));
        }
        let (g, d) = (ckpt.nets[0].clone(), ckpt.nets[1].clone());
        validate_pair(&g, &d)?;
        let (adam_g, adam_d) = match &ckpt.optim {
            Some(states) => (states[0].clone(), states[1].clone()),
            None => (
                AdamState::for_network(&g, AdamConfig::default()),
                AdamState::for_network(&d, AdamConfig::default()),
            ),
        };
        Ok(Self { g, d, adam_g, adam_d, iteration: ckpt.iteration })
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut g = self.g.clone();
        let mut d = self.d.clone();
        g.unfreeze();
        d.unfreeze();
        Checkpoint {
            role: Role::Pair,
            nets: vec![g, d],
            optim: Some(vec![self.adam_g.clone(), self.adam_d.clone()]),
            seed,
            iteration: self.iteration,
        }
    }
}

pub(crate) fn validate_pair(g: &Network, d: &Network) -> Result<()> {
    if d.final_activation() != Activation::Sigmoid || d.out_dim() != 1 {
        return Err(Error::config("discriminator must end in a single sigmoid unit"));
    }
    if g.out_dim() != d.in_dim() {
        return Err(Error::config(format!(
            "generator emits {} values, discriminator reads {}",
            g.out_dim(),
            d.in_dim()
        )));
    }
    Ok(())
}

/// Latent batch reused for every diversity measurement of a generator.
pub fn probe_latents(latent_dim: usize) -> Result<Matrix> {
    Ok(latent_sample(latent_dim, PROBE_SEED, PROBE_SIZE)?.data)
}

pub fn probe_diversity(g: &Network, probe: &Matrix) -> Result<f64> {
    diversity(&SampleBatch::new(g.forward(probe)?, Domain::Generated))
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub final_checkpoint: Checkpoint,
    pub checkpoints: Vec<Checkpoint>,
    pub metrics: Vec<MetricsRecord>,
}

fn at_iteration(iteration: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("iteration {iteration}: {msg}")),
        other => other,
    }
}

struct DataSource {
    kind: DatasetKind,
    ring: RingConfig,
    sprites: SpriteConfig,
    rng: Rng,
}

impl DataSource {
    fn next(&mut self, n: usize) -> Result<Matrix> {
        Ok(match self.kind {
            DatasetKind::Ring2d => ring2d_sample_with(&self.ring, &mut self.rng, n)?.data,
            DatasetKind::Sprites => sprites_sample_with(&self.sprites, &mut self.rng, n)?.data,
        })
    }
}

fn column(values: Vec<f64>) -> Matrix {
    let n = values.len();
    Matrix::from_vec(n, 1, values).expect("column shape")
}

/// One discriminator step on `real` versus `G(z_d)`. Leaves `G` untouched.
fn discriminator_step(pair: &mut GanPair, real: &Matrix, z_d: &Matrix) -> Result<f64> {
    let fake = pair.g.forward(z_d)?;
    let both = real.vstack(&fake)?;
    let tape = pair.d.forward_tape(&both)?;
    let probs = tape.output().expect("tape has output").data().to_vec();
    let (p_real, p_fake) = probs.split_at(real.rows());
    let loss = d_loss(p_real, p_fake)?;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite discriminator loss"));
    }
    let (gr, gf) = d_loss_grad(p_real, p_fake)?;
    let upstream = column([gr, gf].concat());
    pair.d.backward(&tape, &upstream)?;
    pair.adam_d.step_network(&mut pair.d)?;
    Ok(loss)
}

/// One generator step through the discriminator, which is frozen for the
/// duration of the step. Returns `(g_loss, mean D(G(z)))`.
fn generator_step(pair: &mut GanPair, z_g: &Matrix) -> Result<(f64, f64)> {
    pair.d.freeze();
    let result = (|| {
        let g_tape = pair.g.forward_tape(z_g)?;
        let d_tape = pair.d.forward_tape(g_tape.output().expect("tape has output"))?;
        let probs = d_tape.output().expect("tape has output").data().to_vec();
        let loss = g_loss_standard(&probs)?;
        if !loss.is_finite() {
            return Err(Error::numeric("non-finite generator loss"));
        }
        let upstream = column(g_loss_standard_grad(&probs)?);
        let dx = pair.d.backward_input(&d_tape, &upstream)?;
        pair.g.backward(&g_tape, &dx)?;
        pair.adam_g.step_network(&mut pair.g)?;
        let mean = probs.iter().map(|&p| clamp_prob(p)).sum::<f64>() / probs.len() as f64;
        Ok((loss, mean))
    })();
    pair.d.unfreeze();
    result
}

/// Trains a fresh pair. Metrics row `i` (1-based) carries the generator
/// loss, mean `D(G(z))` and generator gradient norm of iteration `i`'s
/// generator step, and the probe diversity after the iteration.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut pair = GanPair::init(cfg)?;
    train_from(cfg, &mut pair)
}

pub fn train_from(cfg: &TrainConfig, pair: &mut GanPair) -> Result<TrainOutput> {
    cfg.validate()?;
    validate_pair(&pair.g, &pair.d)?;
    let mut data = DataSource {
        kind: cfg.dataset,
        ring: RingConfig::default(),
        sprites: SpriteConfig::default(),
        rng: Rng::with_stream(cfg.seed, stream::DATA),
    };
    let mut latents = Rng::with_stream(cfg.seed, stream::LATENT);
    let probe = probe_latents(cfg.latent_dim)?;
    let mut metrics = Vec::with_capacity(cfg.iterations as usize);
    let mut checkpoints = Vec::new();
    let start = pair.iteration;
    for i in start + 1..=start + cfg.iterations {
        let wrap = at_iteration(i);
        let real = data.next(cfg.batch_size)?;
        let z_d = latent_sample_with(cfg.latent_dim, &mut latents, cfg.batch_size)?.data;
        let z_g = latent_sample_with(cfg.latent_dim, &mut latents, cfg.batch_size)?.data;
        discriminator_step(pair, &real, &z_d).map_err(&wrap)?;
        let (g_loss, mean_fake_prob) = generator_step(pair, &z_g).map_err(&wrap)?;
        let grad_norm_g = grad_norm(&pair.g);
        pair.iteration = i;
        let div = probe_diversity(&pair.g, &probe).map_err(&wrap)?;
        metrics.push(MetricsRecord {
            iteration: i,
            g_loss,
            mean_fake_prob,
            grad_norm_g,
            diversity: div,
            phase: Phase::Baseline,
        });
        if i % cfg.checkpoint_every == 0 || i == start + cfg.iterations {
            checkpoints.push(pair.to_checkpoint(cfg.seed));
        }
    }
    Ok(TrainOutput { final_checkpoint: pair.to_checkpoint(cfg.seed), checkpoints, metrics })
}

/// `n` samples from the checkpoint's generator on latents drawn with `seed`.
pub fn sample_generator(ckpt: &Checkpoint, n: usize, seed: u64) -> Result<SampleBatch> {
    let g = ckpt.generator()?;
    let z = latent_sample(g.in_dim(), seed, n)?;
    Ok(SampleBatch::new(g.forward(&z.data)?, Domain::Generated))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanGradCheck {
    pub generator: f64,
    pub discriminator: f64,
}

impl GanGradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.generator.max(self.discriminator)
    }
}

/// Finite-difference check of a small ring2d pair: `D` under the
/// discriminator loss on a real/fake batch, `G` under the inverted loss
/// back-propagated through `D`. Both nets have three layers.
pub fn gan_gradient_check(n_probes: usize, seed: u64) -> Result<GanGradCheck> {
    let cfg = TrainConfig {
        latent_dim: 4,
        g_layers: vec![8, 8],
        d_layers: vec![8, 8],
        seed,
        ..TrainConfig::ring2d()
    };
    let pair = GanPair::init(&cfg)?;
    let real = ring2d_sample_with(&RingConfig::default(), &mut Rng::with_stream(seed, stream::DATA), 8)?.data;
    let z = latent_sample(cfg.latent_dim, seed, 8)?.data;
    let fake = pair.g.forward(&z)?;
    let n_real = real.rows();
    let d_loss_fn = |out: &Matrix| -> Result<(f64, Matrix)> {
        let (p_real, p_fake) = out.data().split_at(n_real);
        let (gr, gf) = d_loss_grad(p_real, p_fake)?;
        Ok((d_loss(p_real, p_fake)?, column([gr, gf].concat())))
    };
    let d = gradient_check(&pair.d, &real.vstack(&fake)?, &d_loss_fn, n_probes, 1e-5, seed)?;
    let d_net = &pair.d;
    let g_loss_fn = |out: &Matrix| -> Result<(f64, Matrix)> {
        let tape = d_net.forward_tape(out)?;
        let probs = tape.output().expect("tape has output").data();
        let loss = inverted_g_loss(probs, LossVariant::Amplifying)?;
        let up = column(inverted_g_loss_grad(probs, LossVariant::Amplifying)?);
        Ok((loss, d_net.backward_input(&tape, &up)?))
    };
    let g = gradient_check(&pair.g, &z, &g_loss_fn, n_probes, 1e-5, seed ^ 1)?;
    Ok(GanGradCheck { generator: g.max_rel_error, discriminator: d.max_rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            latent_dim: 4,
            g_layers: vec![8],
            d_layers: vec![8],
            iterations: 20,
            checkpoint_every: 7,
            batch_size: 16,
            ..TrainConfig::ring2d()
        }
    }

    #[test]
    fn zero_iterations_returns_initial_networks() {
        let cfg = TrainConfig { iterations: 0, ..tiny() };
        let out = train(&cfg).unwrap();
        assert!(out.metrics.is_empty());
        assert!(out.checkpoints.is_empty());
        let init = GanPair::init(&cfg).unwrap();
        assert_eq!(out.final_checkpoint, init.to_checkpoint(cfg.seed));
    }

    #[test]
    fn checkpoints_follow_schedule_and_last_is_forced() {
        let out = train(&tiny()).unwrap();
        let its: Vec<u64> = out.checkpoints.iter().map(|c| c.iteration).collect();
        assert_eq!(its, vec![7, 14, 20]);
        assert_eq!(out.metrics.len(), 20);
        assert_eq!(out.metrics[0].iteration, 1);
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&tiny()).unwrap();
        let b = train(&tiny()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_checkpoint.to_bytes(), b.final_checkpoint.to_bytes());
    }

    #[test]
    fn steps_touch_only_their_own_network() {
        let cfg = tiny();
        let mut pair = GanPair::init(&cfg).unwrap();
        let real = ring2d_sample_with(&RingConfig::default(), &mut Rng::new(1), 16).unwrap().data;
        let z = latent_sample(4, 2, 16).unwrap().data;
        let g_before = pair.g.param_bytes();
        let d_before = pair.d.param_bytes();
        discriminator_step(&mut pair, &real, &z).unwrap();
        assert_eq!(pair.g.param_bytes(), g_before);
        assert_ne!(pair.d.param_bytes(), d_before);
        let d_mid = pair.d.param_bytes();
        generator_step(&mut pair, &z).unwrap();
        assert_eq!(pair.d.param_bytes(), d_mid);
        assert_ne!(pair.g.param_bytes(), g_before);
        assert!(!pair.d.is_frozen());
    }

    #[test]
    fn sampling_shape_and_determinism() {
        let ck = GanPair::init(&tiny()).unwrap().to_checkpoint(7);
        let a = sample_generator(&ck, 10, 3).unwrap();
        assert_eq!((a.len(), a.dim()), (10, 2));
        assert!(a.data.all_finite());
        assert_eq!(a, sample_generator(&ck, 10, 3).unwrap());
    }

    #[test]
    fn invalid_configs() {
        assert!(train(&TrainConfig { checkpoint_every: 0, ..tiny() }).is_err());
        assert!(train(&TrainConfig { g_layers: vec![0], ..tiny() }).is_err());
    }

    #[test]
    fn gan_oracle_within_tolerance() {
        let r = gan_gradient_check(100, 3).unwrap();
        assert!(r.max_rel_error() < 1e-4, "{r:?}");
    }
}
