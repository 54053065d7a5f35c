//! Toy data sources: a Gaussian ring in 2D and procedural 16x16 face sprites,
//! plus the standard-normal latent source fed to generators.

use std::f64::consts::TAU;

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

pub const SPRITE_SIDE: usize = 16;
pub const SPRITE_DIM: usize = SPRITE_SIDE * SPRITE_SIDE;

const BACKGROUND: f64 = 0.1;
const SKIN: f64 = 0.9;
const FEATURE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Ring2d,
    Sprites,
    Generated,
    Latent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub data: Matrix,
    pub domain: Domain,
}

impl SampleBatch {
    pub fn new(data: Matrix, domain: Domain) -> Self {
        Self { data, domain }
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingConfig {
    pub n_modes: usize,
    pub radius: f64,
    pub sigma: f64,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self { n_modes: 8, radius: 2.0, sigma: 0.05 }
    }
}

impl RingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 2 {
            return Err(Error::config("ring needs at least two modes"));
        }
        if !(self.sigma > 0.0) || !self.radius.is_finite() {
            return Err(Error::config("ring sigma must be positive and radius finite"));
        }
        Ok(())
    }

    pub fn center(&self, k: usize) -> (f64, f64) {
        let angle = TAU * k as f64 / self.n_modes as f64;
        (self.radius * angle.cos(), self.radius * angle.sin())
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.n_modes).map(|k| self.center(k)).collect()
    }

    /// Index and distance of the closest mode center.
    pub fn nearest_mode(&self, x: f64, y: f64) -> (usize, f64) {
        self.centers()
            .into_iter()
            .enumerate()
            .map(|(k, (cx, cy))| (k, ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least two modes")
    }

    /// Number of modes that receive at least `min_count` samples within
    /// `radius_sigmas * sigma` of their center.
    pub fn mode_coverage(&self, batch: &SampleBatch, radius_sigmas: f64, min_count: usize) -> usize {
        let mut counts = vec![0usize; self.n_modes];
        for p in batch.data.iter_rows() {
            let (k, d) = self.nearest_mode(p[0], p[1]);
            if d <= radius_sigmas * self.sigma {
                counts[k] += 1;
            }
        }
        counts.iter().filter(|&&c| c >= min_count).count()
    }
}

pub fn ring2d_sample(cfg: &RingConfig, seed: u64, n: usize) -> Result<SampleBatch> {
    ring2d_sample_with(cfg, &mut Rng::with_stream(seed, stream::DATA), n)
}

pub fn ring2d_sample_with(cfg: &RingConfig, rng: &mut Rng, n: usize) -> Result<SampleBatch> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::usage("sample count must be at least 1"));
    }
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (cx, cy) = cfg.center(rng.below(cfg.n_modes));
        data.push(cx + cfg.sigma * rng.normal());
        data.push(cy + cfg.sigma * rng.normal());
    }
    Ok(SampleBatch::new(Matrix::from_vec(n, 2, data)?, Domain::Ring2d))
}

/// Jitter ranges for the sprite generator. Each range is `(lo, hi)` and is
/// sampled uniformly; a degenerate range fixes the feature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpriteConfig {
    pub side: usize,
    pub head_radius: (f64, f64),
    pub eye_offset: (f64, f64),
    pub mouth_curvature: (f64, f64),
    pub noise_std: f64,
}

impl Default for SpriteConfig {
    fn default() -> Self {
        Self {
            side: SPRITE_SIDE,
            head_radius: (5.0, 7.0),
            eye_offset: (2.0, 4.0),
            mouth_curvature: (-2.0, 2.0),
            noise_std: 0.02,
        }
    }
}

impl SpriteConfig {
    /// Every sprite identical: midpoint features, no noise.
    pub fn zero_jitter() -> Self {
        Self {
            side: SPRITE_SIDE,
            head_radius: (6.0, 6.0),
            eye_offset: (3.0, 3.0),
            mouth_curvature: (0.0, 0.0),
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side != SPRITE_SIDE {
            return Err(Error::config(format!("sprite side is fixed at {SPRITE_SIDE}")));
        }
        for (name, (lo, hi)) in [
            ("head_radius", self.head_radius),
            ("eye_offset", self.eye_offset),
            ("mouth_curvature", self.mouth_curvature),
        ] {
            if !(lo <= hi) {
                return Err(Error::config(format!("{name} range is empty")));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be non-negative"));
        }
        Ok(())
    }
}

fn draw_sprite(cfg: &SpriteConfig, rng: &mut Rng, out: &mut [f64]) {
    let side = cfg.side;
    let c = (side as f64 - 1.0) / 2.0;
    let r = rng.uniform_in(cfg.head_radius.0, cfg.head_radius.1);
    let e = rng.uniform_in(cfg.eye_offset.0, cfg.eye_offset.1);
    let curve = rng.uniform_in(cfg.mouth_curvature.0, cfg.mouth_curvature.1);

    for y in 0..side {
        for x in 0..side {
            let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            out[y * side + x] = if d2 <= r * r { SKIN } else { BACKGROUND };
        }
    }
    // eyes: 1x2 dots mirrored about the vertical axis
    let left = (c - e).round().clamp(0.0, (side - 1) as f64) as usize;
    let right = side - 1 - left;
    for row in [5, 6] {
        out[row * side + left] = FEATURE;
        out[row * side + right] = FEATURE;
    }
    // mouth: five pixels, ends lifted by the curvature
    for dx in -2i32..=2 {
        let lift = (curve * (dx as f64 / 2.0).powi(2)).round() as i32;
        let row = (11 - lift).clamp(0, side as i32 - 1) as usize;
        let col = (8 + dx) as usize;
        out[row * side + col] = FEATURE;
    }
    for v in out.iter_mut() {
        if cfg.noise_std > 0.0 {
            *v += cfg.noise_std * rng.normal();
        }
        *v = 2.0 * v.clamp(0.0, 1.0) - 1.0;
    }
}

pub fn sprites_sample(cfg: &SpriteConfig, seed: u64, n: usize) -> Result<SampleBatch> {
    sprites_sample_with(cfg, &mut Rng::with_stream(seed, stream::DATA), n)
}

pub fn sprites_sample_with(cfg: &SpriteConfig, rng: &mut Rng, n: usize) -> Result<SampleBatch> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::usage("sample count must be at least 1"));
    }
    let dim = cfg.side * cfg.side;
    let mut data = vec![0.0; n * dim];
    for chunk in data.chunks_exact_mut(dim) {
        draw_sprite(cfg, rng, chunk);
    }
    Ok(SampleBatch::new(Matrix::from_vec(n, dim, data)?, Domain::Sprites))
}

pub fn latent_sample(dim: usize, seed: u64, n: usize) -> Result<SampleBatch> {
    latent_sample_with(dim, &mut Rng::with_stream(seed, stream::LATENT), n)
}

pub fn latent_sample_with(dim: usize, rng: &mut Rng, n: usize) -> Result<SampleBatch> {
    if dim == 0 {
        return Err(Error::config("latent dimension must be at least 1"));
    }
    let data = (0..dim * n).map(|_| rng.normal()).collect();
    Ok(SampleBatch::new(Matrix::from_vec(n, dim, data)?, Domain::Latent))
}
