use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use neckpinch_core::pipeline::ErrorRecord;
use neckpinch_core::{parse_config, run_mode, Mode, RunOptions, SimConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Physical,
    Rescaled,
    Fit,
    Spectrum,
    Verify,
    All,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Physical => Mode::Physical,
            ModeArg::Rescaled => Mode::Rescaled,
            ModeArg::Fit => Mode::Fit,
            ModeArg::Spectrum => Mode::Spectrum,
            ModeArg::Verify => Mode::Verify,
            ModeArg::All => Mode::All,
        }
    }
}

/// Simulate and verify the mean curvature flow neckpinch.
#[derive(Debug, Parser)]
#[command(name = "neckpinch", version)]
struct Args {
    mode: ModeArg,
    /// TOML config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (NECKPINCH_OUT takes precedence).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Checkpoint file, written during physical and rescaled runs.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue from --checkpoint.
    #[arg(long, requires = "checkpoint")]
    resume: bool,
    /// Multiply every grid resolution by this factor.
    #[arg(long)]
    grid_scale: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

fn load_config(args: &Args) -> anyhow::Result<SimConfig> {
    let cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => SimConfig::default(),
    };
    Ok(match args.grid_scale {
        Some(f) => cfg.with_grid_scale(f)?,
        None => cfg,
    })
}

fn write_error(out_dir: &Path, record: &ErrorRecord) {
    if std::fs::create_dir_all(out_dir).is_ok() {
        if let Ok(text) = serde_json::to_string_pretty(record) {
            let _ = std::fs::write(out_dir.join("error.json"), text + "\n");
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let out_dir = std::env::var_os("NECKPINCH_OUT").map_or_else(|| args.out.clone(), PathBuf::from);

    let cfg = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            let record = match e.downcast_ref::<neckpinch_core::Error>() {
                Some(core) => ErrorRecord {
                    message: format!("{e:#}"),
                    ..ErrorRecord::from(core)
                },
                None => ErrorRecord {
                    kind: "config".into(),
                    message: format!("{e:#}"),
                },
            };
            write_error(&out_dir, &record);
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out_dir: out_dir.clone(),
        checkpoint: args.checkpoint.clone(),
        resume: args.resume,
        checkpoint_every: 50,
    };
    match run_mode(args.mode.into(), &cfg, &opts) {
        Ok(manifest) => {
            if !args.quiet {
                for c in &manifest.checks {
                    println!(
                        "{} {}: {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.detail
                    );
                }
                println!(
                    "run {} ({:.1} s), outputs in {}",
                    manifest.run_id,
                    manifest.wall_clock_s,
                    out_dir.display()
                );
            }
            if manifest.all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            write_error(&out_dir, &ErrorRecord::from(&e));
            ExitCode::from(2)
        }
    }
}
