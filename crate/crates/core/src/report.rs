//! Metrics CSV, the flat key-value phase report and plain-text sample files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Matrix;
use crate::data::{Domain, SampleBatch};
use crate::error::{Error, FormatError, Result};
use crate::metrics::{MetricsRecord, PhaseReport};

pub const METRICS_HEADER: &str = "iteration,g_loss,mean_fake_prob,grad_norm_g,diversity,phase";

/// 17 significant digits: enough for every `f64` to read back bit-exactly.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn onset(o: Option<u64>) -> String {
    o.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn render_phase_report(r: &PhaseReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "divergence_onset = {}", onset(r.divergence_onset));
    let _ = writeln!(out, "explosion_onset = {}", onset(r.explosion_onset));
    let _ = writeln!(out, "collapse_onset = {}", onset(r.collapse_onset));
    let _ = writeln!(out, "initial_mean_fake_prob = {}", real(r.initial_mean_fake_prob));
    let _ = writeln!(out, "initial_diversity = {}", real(r.initial_diversity));
    let _ = writeln!(out, "median_early_grad_norm = {}", real(r.median_early_grad_norm));
    let _ = writeln!(out, "iterations = {}", r.iterations);
    out
}

pub fn parse_phase_report(text: &str) -> Result<PhaseReport> {
    let mut fields: Vec<(String, String, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or(FormatError::Parse { line: i + 1, msg: "expected `key = value`".into() })?;
        fields.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    let find = |key: &str| -> Result<(String, usize)> {
        fields
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.clone(), *l))
            .ok_or_else(|| FormatError::Invalid(format!("phase report lacks {key}")).into())
    };
    let bad = |line: usize, key: &str| -> Error { FormatError::Parse { line, msg: format!("invalid {key}") }.into() };
    let get_onset = |key: &str| -> Result<Option<u64>> {
        let (v, l) = find(key)?;
        if v == "none" {
            Ok(None)
        } else {
            v.parse().map(Some).map_err(|_| bad(l, key))
        }
    };
    let get_real = |key: &str| -> Result<f64> {
        let (v, l) = find(key)?;
        v.parse().map_err(|_| bad(l, key))
    };
    let (its, l) = find("iterations")?;
    Ok(PhaseReport {
        divergence_onset: get_onset("divergence_onset")?,
        explosion_onset: get_onset("explosion_onset")?,
        collapse_onset: get_onset("collapse_onset")?,
        initial_mean_fake_prob: get_real("initial_mean_fake_prob")?,
        initial_diversity: get_real("initial_diversity")?,
        median_early_grad_norm: get_real("median_early_grad_norm")?,
        iterations: its.parse().map_err(|_| bad(l, "iterations"))?,
    })
}

/// CSV text for `records`, optionally followed by the phase report as a
/// `#`-prefixed footer.
pub fn render_metrics_csv(records: &[MetricsRecord], footer: Option<&PhaseReport>) -> Result<String> {
    if let Some(w) = records.windows(2).find(|w| w[1].iteration <= w[0].iteration) {
        return Err(Error::usage(format!(
            "metrics iterations must strictly increase ({} then {})",
            w[0].iteration, w[1].iteration
        )));
    }
    let mut out = String::with_capacity(records.len() * 110 + 64);
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            real(r.g_loss),
            real(r.mean_fake_prob),
            real(r.grad_norm_g),
            real(r.diversity),
            r.phase
        );
    }
    if let Some(rep) = footer {
        out.push_str("# phases\n");
        for line in render_phase_report(rep).lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    Ok(out)
}

pub fn parse_metrics_csv(text: &str) -> Result<(Vec<MetricsRecord>, Option<PhaseReport>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == METRICS_HEADER => {}
        _ => return Err(FormatError::Parse { line: 1, msg: format!("expected header `{METRICS_HEADER}`") }.into()),
    }
    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut footer = String::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let t = raw.trim_end();
        if let Some(rest) = t.strip_prefix('#') {
            // the "# phases" marker line carries no key
            if rest.contains('=') {
                footer.push_str(rest.trim_start());
                footer.push('\n');
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        let err = |msg: &str| -> Error { FormatError::Parse { line, msg: msg.to_string() }.into() };
        let cols: Vec<&str> = t.split(',').collect();
        if cols.len() != 6 {
            return Err(err("expected 6 columns"));
        }
        let num = |i: usize| cols[i].parse::<f64>().map_err(|_| err(&format!("bad number {:?}", cols[i])));
        let rec = MetricsRecord {
            iteration: cols[0].parse().map_err(|_| err("bad iteration"))?,
            g_loss: num(1)?,
            mean_fake_prob: num(2)?,
            grad_norm_g: num(3)?,
            diversity: num(4)?,
            phase: cols[5].parse().map_err(|_| err("bad phase"))?,
        };
        if records.last().is_some_and(|p| rec.iteration <= p.iteration) {
            return Err(err("iterations must strictly increase"));
        }
        records.push(rec);
    }
    let footer = if footer.contains('=') { Some(parse_phase_report(&footer)?) } else { None };
    Ok((records, footer))
}

pub fn write_metrics_csv(
    records: &[MetricsRecord],
    footer: Option<&PhaseReport>,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, render_metrics_csv(records, footer)?)?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<(Vec<MetricsRecord>, Option<PhaseReport>)> {
    parse_metrics_csv(&fs::read_to_string(path)?)
}

/// One sample per line, comma-separated, same float rendering as the CSV.
pub fn render_samples(batch: &SampleBatch) -> String {
    let mut out = String::with_capacity(batch.len() * batch.dim() * 24);
    for row in batch.data.iter_rows() {
        let line: Vec<String> = row.iter().map(|&v| real(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_samples(text: &str) -> Result<SampleBatch> {
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |msg: String| -> Error { FormatError::Parse { line: idx + 1, msg }.into() };
        let start = data.len();
        for cell in t.split(',') {
            data.push(cell.trim().parse::<f64>().map_err(|_| err(format!("bad number {cell:?}")))?);
        }
        let n = data.len() - start;
        match dim {
            None => dim = Some(n),
            Some(d) if d != n => return Err(err(format!("expected {d} values, found {n}"))),
            Some(_) => {}
        }
        rows += 1;
    }
    let matrix = Matrix::from_vec(rows, dim.unwrap_or(0), data)?;
    Ok(SampleBatch::new(matrix, Domain::Generated))
}

pub fn write_samples(batch: &SampleBatch, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_samples(batch))?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleBatch> {
    parse_samples(&fs::read_to_string(path)?)
}
