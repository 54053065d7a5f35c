//! Adversarial losses over discriminator probabilities.
//!
//! Every probability is clamped to `[PROB_MIN, PROB_MAX]` before `ln`. The
//! gradient helpers return `d loss / d probability` per element, evaluated
//! at the clamped value, so a saturated sigmoid never yields `inf` or NaN.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const PROB_MIN: f64 = 1e-7;
pub const PROB_MAX: f64 = 1.0 - 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_MIN, PROB_MAX)
}

fn nonempty(xs: &[f64], what: &str) -> Result<f64> {
    if xs.is_empty() {
        Err(Error::usage(format!("{what} batch is empty")))
    } else {
        Ok(xs.len() as f64)
    }
}

fn mean_of(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter().map(|&p| f(clamp_prob(p))).sum::<f64>() / xs.len() as f64
}

/// `-mean(ln D(x)) - mean(ln(1 - D(G(z))))`.
pub fn d_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    nonempty(d_real, "real")?;
    nonempty(d_fake, "fake")?;
    Ok(-mean_of(d_real, f64::ln) - mean_of(d_fake, |p| (1.0 - p).ln()))
}

/// Gradients of [`d_loss`] with respect to `d_real` and `d_fake`.
pub fn d_loss_grad(d_real: &[f64], d_fake: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let nr = nonempty(d_real, "real")?;
    let nf = nonempty(d_fake, "fake")?;
    let real = d_real
        .iter()
        .map(|&p| -1.0 / (nr * clamp_prob(p)))
        .collect();
    let fake = d_fake
        .iter()
        .map(|&p| 1.0 / (nf * (1.0 - clamp_prob(p))))
        .collect();
    Ok((real, fake))
}

/// Non-saturating generator loss `-mean(ln D(G(z)))`.
pub fn g_loss_standard(d_fake: &[f64]) -> Result<f64> {
    nonempty(d_fake, "fake")?;
    Ok(-mean_of(d_fake, f64::ln))
}

pub fn g_loss_standard_grad(d_fake: &[f64]) -> Result<Vec<f64>> {
    let n = nonempty(d_fake, "fake")?;
    Ok(d_fake
        .iter()
        .map(|&p| -1.0 / (n * clamp_prob(p)))
        .collect())
}

/// Which inverted objective the fine-tuner minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// `mean(ln D(G(z)))`: the push grows like `1/D` as samples look faker.
    #[default]
    Amplifying,
    /// `-mean(ln(1 - D(G(z))))`: same target, bounded push.
    Saturating,
}

impl LossVariant {
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Amplifying => "amplifying",
            LossVariant::Saturating => "saturating",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplifying" => Ok(LossVariant::Amplifying),
            "saturating" => Ok(LossVariant::Saturating),
            other => Err(Error::config(format!("unknown loss variant {other:?}"))),
        }
    }
}

pub fn inverted_g_loss(d_fake: &[f64], variant: LossVariant) -> Result<f64> {
    nonempty(d_fake, "fake")?;
    Ok(match variant {
        LossVariant::Amplifying => mean_of(d_fake, f64::ln),
        LossVariant::Saturating => -mean_of(d_fake, |p| (1.0 - p).ln()),
    })
}

pub fn inverted_g_loss_grad(d_fake: &[f64], variant: LossVariant) -> Result<Vec<f64>> {
    let n = nonempty(d_fake, "fake")?;
    Ok(d_fake
        .iter()
        .map(|&p| {
            let p = clamp_prob(p);
            match variant {
                LossVariant::Amplifying => 1.0 / (n * p),
                LossVariant::Saturating => 1.0 / (n * (1.0 - p)),
            }
        })
        .collect())
}
