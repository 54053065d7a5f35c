//! Command-line front end: `cli_dispatch` parses argv, runs one command and
//! maps the outcome to an exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use invgan::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use invgan::config::{parse_finetune_config, parse_train_config, render_finetune_config, render_train_config};
use invgan::data::SampleBatch;
use invgan::finetune::{compare_runs, finetune_run_with, FinetuneOutput};
use invgan::metrics::{classify_phases, PhaseThresholds};
use invgan::render::{render_grid, render_scatter, Bounds, GridSpec};
use invgan::report::{read_metrics_csv, read_samples, render_metrics_csv, render_phase_report, write_samples};
use invgan::train::{gan_gradient_check, sample_generator, train};
use invgan::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Gradient-check tolerance for the `gradcheck` command.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "invgan", version, about = "Inverted-objective GAN fine-tuning lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a generator/discriminator pair from scratch.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a trained pair against its frozen discriminator.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a checkpoint's generator.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render square samples as a PGM grid.
    Grid {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 8)]
        rows: usize,
        #[arg(long, default_value_t = 8)]
        cols: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render 2D samples as a log-scaled PGM histogram.
    Scatter {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 256)]
        side: usize,
        /// Half-width of the square plotting window.
        #[arg(long, default_value_t = 3.0)]
        extent: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect phase onsets in a metrics CSV.
    Phases {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        divergence_drop: Option<f64>,
        #[arg(long)]
        explosion_factor: Option<f64>,
        #[arg(long)]
        explosion_window: Option<usize>,
        #[arg(long)]
        collapse_ratio: Option<f64>,
    },
    /// Fine-tune several bases with one config and tabulate the trajectories.
    Compare {
        #[arg(long = "base", required = true)]
        bases: Vec<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of generator and discriminator gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Sample file written by `sample`.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Checkpoint to sample from instead.
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::Config(_) => EXIT_USAGE,
        Error::Format(_) | Error::Io(_) => EXIT_FORMAT,
        Error::Numeric(_) | Error::Invariant(_) | Error::State(_) => EXIT_NUMERIC,
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train { config, out } => cmd_train(&config, &out),
        Command::Finetune { config, base, out } => cmd_finetune(&config, &base, &out),
        Command::Sample { ckpt, n, seed, out } => {
            let batch = sample_generator(&load_checkpoint(&ckpt)?, n, seed)?;
            write_samples(&batch, &out)?;
            Ok(EXIT_OK)
        }
        Command::Grid { source, rows, cols, out } => {
            let batch = load_source(&source, rows * cols)?;
            let spec = GridSpec::for_dim(rows, cols, batch.dim())?;
            fs::write(&out, render_grid(&batch, &spec)?)?;
            Ok(EXIT_OK)
        }
        Command::Scatter { source, side, extent, out } => {
            let batch = load_source(&source, 4096)?;
            let bounds = Bounds { x_min: -extent, x_max: extent, y_min: -extent, y_max: extent };
            fs::write(&out, render_scatter(&batch, &bounds, side)?)?;
            Ok(EXIT_OK)
        }
        Command::Phases { metrics, divergence_drop, explosion_factor, explosion_window, collapse_ratio } => {
            let d = PhaseThresholds::default();
            let th = PhaseThresholds {
                divergence_drop: divergence_drop.unwrap_or(d.divergence_drop),
                explosion_factor: explosion_factor.unwrap_or(d.explosion_factor),
                explosion_window: explosion_window.unwrap_or(d.explosion_window),
                collapse_ratio: collapse_ratio.unwrap_or(d.collapse_ratio),
            };
            th.validate()?;
            let (records, _) = read_metrics_csv(&metrics)?;
            print!("{}", render_phase_report(&classify_phases(&records, &th)?));
            Ok(EXIT_OK)
        }
        Command::Compare { bases, config, out } => cmd_compare(&bases, &config, &out),
        Command::Gradcheck { probes, seed } => {
            let r = gan_gradient_check(probes, seed)?;
            println!("generator max_rel_error = {:e}", r.generator);
            println!("discriminator max_rel_error = {:e}", r.discriminator);
            println!("max_rel_error = {:e}", r.max_rel_error());
            if r.max_rel_error() < GRADCHECK_TOL {
                Ok(EXIT_OK)
            } else {
                eprintln!("gradient check failed: tolerance {GRADCHECK_TOL:e}");
                Ok(EXIT_NUMERIC)
            }
        }
    }
}

fn load_source(source: &Source, n: usize) -> Result<SampleBatch> {
    match (&source.samples, &source.ckpt) {
        (Some(path), _) => read_samples(path),
        (None, Some(path)) => sample_generator(&load_checkpoint(path)?, n, 0),
        (None, None) => Err(Error::Usage("one of --samples or --ckpt is required".into())),
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn iter_name(prefix: &str, iteration: u64, ext: &str) -> String {
    format!("{prefix}_{iteration:06}.{ext}")
}

fn cmd_train(config: &Path, out: &Path) -> Result<i32> {
    let cfg = parse_train_config(&read_text(config)?)?;
    let result = train(&cfg)?;
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    fs::write(out.join("config.txt"), render_train_config(&cfg))?;
    for c in &result.checkpoints {
        save_checkpoint(c, ckpt_dir.join(iter_name("iter", c.iteration, "uagc")))?;
    }
    save_checkpoint(&result.final_checkpoint, out.join("final.uagc"))?;
    fs::write(out.join("metrics.csv"), render_metrics_csv(&result.metrics, None)?)?;
    println!("trained {} iterations -> {}", cfg.iterations, out.join("final.uagc").display());
    Ok(EXIT_OK)
}

/// Writes snapshots, metrics, report, manifest and per-snapshot images.
fn write_run(out: &Path, cfg_text: &str, run: &FinetuneOutput) -> Result<()> {
    let snap_dir = out.join("snapshots");
    let img_dir = out.join("images");
    fs::create_dir_all(&snap_dir)?;
    fs::create_dir_all(&img_dir)?;
    fs::write(out.join("config.txt"), cfg_text)?;
    fs::write(out.join("metrics.csv"), render_metrics_csv(&run.metrics, Some(&run.report))?)?;

    let set = &run.snapshots;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "run_id = {}", set.run_id);
    let _ = writeln!(manifest, "base_hash = {}", set.base_hash);
    let _ = writeln!(manifest, "config_hash = {}", set.config_hash);
    for snap in &set.snapshots {
        let name = iter_name("iter", snap.iteration, "uagc");
        save_checkpoint(&snap.checkpoint, snap_dir.join(&name))?;
        let _ = writeln!(manifest, "snapshot {} snapshots/{name} {}", snap.iteration, snap.checkpoint.sha256_hex());
        write_snapshot_image(&img_dir, snap.iteration, &snap.samples)?;
    }
    fs::write(out.join("manifest.txt"), manifest)?;

    let mut report = String::new();
    let _ = writeln!(report, "run_id = {}", set.run_id);
    let _ = writeln!(report, "base_hash = {}", set.base_hash);
    let _ = writeln!(report, "config_hash = {}", set.config_hash);
    let _ = writeln!(report, "d_hash_before = {}", run.d_hash_before);
    let _ = writeln!(report, "d_hash_after = {}", run.d_hash_after);
    report.push_str(&render_phase_report(&run.report));
    fs::write(out.join("report.txt"), report)?;
    Ok(())
}

fn write_snapshot_image(dir: &Path, iteration: u64, samples: &SampleBatch) -> Result<()> {
    if samples.dim() == 2 {
        let bytes = render_scatter(samples, &Bounds::default(), 128)?;
        fs::write(dir.join(iter_name("scatter", iteration, "pgm")), bytes)?;
    } else if let Ok(spec) = GridSpec::for_dim(8, 8, samples.dim()) {
        if samples.len() >= 64 {
            fs::write(dir.join(iter_name("grid", iteration, "pgm")), render_grid(samples, &spec)?)?;
        }
    }
    Ok(())
}

fn print_summary(run: &FinetuneOutput) {
    let onset = |o: Option<u64>| o.map_or_else(|| "none".to_string(), |v| v.to_string());
    let r = &run.report;
    println!(
        "divergence {} explosion {} collapse {}",
        onset(r.divergence_onset),
        onset(r.explosion_onset),
        onset(r.collapse_onset)
    );
}

fn cmd_finetune(config: &Path, base: &Path, out: &Path) -> Result<i32> {
    let mut cfg = parse_finetune_config(&read_text(config)?)?;
    cfg.base_checkpoint = Some(base.display().to_string());
    let ckpt = load_checkpoint(base)?;
    let run = finetune_run_with(&ckpt, &cfg, &PhaseThresholds::default())?;
    write_run(out, &render_finetune_config(&cfg), &run)?;
    print_summary(&run);
    Ok(EXIT_OK)
}

fn cmd_compare(bases: &[PathBuf], config: &Path, out: &Path) -> Result<i32> {
    let cfg = parse_finetune_config(&read_text(config)?)?;
    let loaded = bases
        .iter()
        .map(|p| Ok((p.display().to_string(), load_checkpoint(p)?)))
        .collect::<Result<Vec<(String, Checkpoint)>>>()?;
    let report = compare_runs(&loaded, &cfg)?;
    fs::create_dir_all(out)?;
    let cfg_text = render_finetune_config(&cfg);
    for (i, run) in report.runs.iter().enumerate() {
        write_run(&out.join(format!("run_{i}")), &cfg_text, &run.output)?;
    }
    let text = report.render();
    fs::write(out.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use invgan::FormatError;

    #[test]
    fn exit_codes_partition_error_classes() {
        assert_eq!(exit_code(&Error::Usage("u".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Config("c".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Format(FormatError::BadMagic(*b"XXXX"))), EXIT_FORMAT);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(exit_code(&Error::Io(io)), EXIT_FORMAT);
        assert_eq!(exit_code(&Error::Numeric("n".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Invariant("i".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::State("s".into())), EXIT_NUMERIC);
    }

    #[test]
    fn dispatch_in_process() {
        assert_eq!(cli_dispatch(["invgan", "gradcheck", "--probes", "20"]), EXIT_OK);
        assert_eq!(cli_dispatch(["invgan", "gradcheck", "--probes", "0"]), EXIT_USAGE);
        assert_eq!(cli_dispatch(["invgan", "sample"]), EXIT_USAGE);
    }
}
