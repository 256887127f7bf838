use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rtk_core::bench::{run_experiment, write_outputs, ExperimentConfig};
use rtk_core::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "rtk-bench", version, about = "RTK diffusion-inference benchmarks on Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `master_seed` and `seeds`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a preset config.
    Preset {
        name: PresetName,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    MogPaper,
}

fn configure_workers() -> Result<(), String> {
    if let Ok(v) = std::env::var("RTK_WORKERS") {
        let n: usize = v.parse().map_err(|_| format!("RTK_WORKERS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            return Err("RTK_WORKERS must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, seed, out } => {
            configure_workers()?;
            let mut cfg = ExperimentConfig::from_file(&config).map_err(|e| e.to_string())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
                cfg.seeds = None;
            }
            let dir = match out {
                Some(d) => d,
                None if cfg.output_dir.is_relative() => cfg
                    .base_dir
                    .clone()
                    .unwrap_or_default()
                    .join(&cfg.output_dir),
                None => cfg.output_dir.clone(),
            };
            let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_outputs(&report, &dir).map_err(|e| e.to_string())?;
            println!("{} rows written to {}", report.rows.len(), dir.join("results.csv").display());
            Ok(())
        }
        Command::Preset { name: PresetName::MogPaper, out } => {
            let text = ExperimentConfig::paper_preset().to_toml_string();
            std::fs::write(&out, text).map_err(|e| format!("{}: {e}", out.display()))
        }
        Command::Selftest => {
            configure_workers()?;
            let checks = run_selftest();
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                if c.detail.is_empty() {
                    println!("{tag} {}", c.name);
                } else {
                    println!("{tag} {} ({})", c.name, c.detail);
                }
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err("selftest failed".into())
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
