//! Line-oriented `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are exactly the
//! fields of [`TrainConfig`] or [`FinetuneConfig`]; anything else is
//! rejected with its line number. Missing keys take their default.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::autodiff::Activation;
use crate::error::{FormatError, Result};
use crate::finetune::{FinetuneConfig, SnapshotSchedule};
use crate::train::{DatasetKind, TrainConfig};

const TRAIN_KEYS: &[&str] = &[
    "dataset",
    "latent_dim",
    "g_layers",
    "d_layers",
    "g_activation",
    "d_activation",
    "lr_g",
    "lr_d",
    "batch_size",
    "iterations",
    "checkpoint_every",
    "seed",
];

const FINETUNE_KEYS: &[&str] = &[
    "base_checkpoint",
    "loss_variant",
    "lr_g",
    "batch_size",
    "iterations",
    "snapshot_schedule",
    "grad_clip",
    "seed",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

fn parse_entries(text: &str, allowed: &[&str]) -> Result<Entries, FormatError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
        let key = key.trim();
        if !allowed.contains(&key) {
            return Err(parse_err(line, format!("unknown key {key:?}")));
        }
        if map.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(parse_err(line, format!("duplicate key {key:?}")));
        }
    }
    Ok(Entries { map })
}

impl Entries {
    fn get<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T, FormatError> {
        match self.map.get(key) {
            None => Ok(default),
            Some((line, v)) => {
                parse(v).ok_or_else(|| parse_err(*line, format!("invalid value {v:?} for {key}")))
            }
        }
    }
}

fn parse_list(s: &str) -> Option<Vec<u64>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

fn render_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse().ok()
}

pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let e = parse_entries(text, TRAIN_KEYS)?;
    let dataset: DatasetKind = e.get("dataset", DatasetKind::Ring2d, |s| s.parse().ok())?;
    let d = TrainConfig::for_dataset(dataset);
    let widths = |s: &str| parse_list(s).map(|v| v.into_iter().map(|x| x as usize).collect());
    Ok(TrainConfig {
        dataset,
        latent_dim: e.get("latent_dim", d.latent_dim, |s| s.parse().ok())?,
        g_layers: e.get("g_layers", d.g_layers, widths)?,
        d_layers: e.get("d_layers", d.d_layers, widths)?,
        g_activation: e.get("g_activation", d.g_activation, Activation::parse)?,
        d_activation: e.get("d_activation", d.d_activation, Activation::parse)?,
        lr_g: e.get("lr_g", d.lr_g, parse_f64)?,
        lr_d: e.get("lr_d", d.lr_d, parse_f64)?,
        batch_size: e.get("batch_size", d.batch_size, |s| s.parse().ok())?,
        iterations: e.get("iterations", d.iterations, |s| s.parse().ok())?,
        checkpoint_every: e.get("checkpoint_every", d.checkpoint_every, |s| s.parse().ok())?,
        seed: e.get("seed", d.seed, |s| s.parse().ok())?,
    })
}

pub fn render_train_config(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("dataset", cfg.dataset.to_string());
    kv("latent_dim", cfg.latent_dim.to_string());
    kv("g_layers", render_list(&cfg.g_layers));
    kv("d_layers", render_list(&cfg.d_layers));
    kv("g_activation", cfg.g_activation.to_string());
    kv("d_activation", cfg.d_activation.to_string());
    kv("lr_g", cfg.lr_g.to_string());
    kv("lr_d", cfg.lr_d.to_string());
    kv("batch_size", cfg.batch_size.to_string());
    kv("iterations", cfg.iterations.to_string());
    kv("checkpoint_every", cfg.checkpoint_every.to_string());
    kv("seed", cfg.seed.to_string());
    out
}

fn parse_schedule(s: &str) -> Option<SnapshotSchedule> {
    if let Some(rest) = s.strip_prefix("stride:") {
        return rest.trim().parse().ok().map(SnapshotSchedule::Stride);
    }
    if let Some(rest) = s.strip_prefix("list:") {
        return parse_list(rest.trim()).map(SnapshotSchedule::List);
    }
    // a bare number is a stride, a bare comma list is explicit
    if s.contains(',') {
        parse_list(s).map(SnapshotSchedule::List)
    } else {
        s.parse().ok().map(SnapshotSchedule::Stride)
    }
}

fn render_schedule(s: &SnapshotSchedule) -> String {
    match s {
        SnapshotSchedule::Stride(n) => format!("stride:{n}"),
        SnapshotSchedule::List(xs) => format!("list:{}", render_list(xs)),
    }
}

fn parse_optional_f64(s: &str, none_word: &str) -> Option<Option<f64>> {
    if s == none_word {
        Some(None)
    } else {
        s.parse().ok().map(Some)
    }
}

pub fn parse_finetune_config(text: &str) -> Result<FinetuneConfig> {
    let e = parse_entries(text, FINETUNE_KEYS)?;
    let d = FinetuneConfig::default();
    Ok(FinetuneConfig {
        base_checkpoint: e.get("base_checkpoint", d.base_checkpoint, |s| {
            Some((!s.is_empty()).then(|| s.to_string()))
        })?,
        loss_variant: e.get("loss_variant", d.loss_variant, |s| s.parse().ok())?,
        lr_g: e.get("lr_g", d.lr_g, |s| parse_optional_f64(s, "base"))?,
        batch_size: e.get("batch_size", d.batch_size, |s| s.parse().ok())?,
        iterations: e.get("iterations", d.iterations, |s| s.parse().ok())?,
        snapshot_schedule: e.get("snapshot_schedule", d.snapshot_schedule, parse_schedule)?,
        grad_clip: e.get("grad_clip", d.grad_clip, |s| parse_optional_f64(s, "off"))?,
        seed: e.get("seed", d.seed, |s| s.parse().ok())?,
    })
}

pub fn render_finetune_config(cfg: &FinetuneConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("base_checkpoint", cfg.base_checkpoint.clone().unwrap_or_default());
    kv("loss_variant", cfg.loss_variant.to_string());
    kv("lr_g", cfg.lr_g.map_or_else(|| "base".to_string(), |v| v.to_string()));
    kv("batch_size", cfg.batch_size.to_string());
    kv("iterations", cfg.iterations.to_string());
    kv("snapshot_schedule", render_schedule(&cfg.snapshot_schedule));
    kv("grad_clip", cfg.grad_clip.map_or_else(|| "off".to_string(), |v| v.to_string()));
    kv("seed", cfg.seed.to_string());
    out
}
