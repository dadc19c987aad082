use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use warpsep::experiment::{self, Algorithm, ExperimentConfig};

/// Separation of time-warped sources mixed by a slowly varying matrix.
#[derive(Parser, Debug)]
#[command(name = "warpsep", version)]
struct Cli {
    /// Worker threads for the data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic mixture and its ground truth.
    Synth {
        /// Experiment configuration (TOML). Defaults to the shipped default.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one separation algorithm on a data directory.
    Run {
        /// Data directory written by `synth`.
        data: PathBuf,
        /// Defaults to the configuration stored with the data.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// jefas-bss, sobi or p-sobi.
        #[arg(long, default_value = "jefas-bss")]
        algorithm: Algorithm,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score result directories against the ground truth.
    Eval {
        /// Data directory holding the ground truth.
        data: PathBuf,
        /// Result directories written by `run`.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, fallback_data: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = match (path, fallback_data) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(data)) => experiment::data_config(data)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WARPSEP_LOG", "info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        warpsep::par::set_global_threads(threads).map_err(anyhow::Error::msg).context("configuring threads")?;
    }
    match cli.command {
        Command::Synth { config, seed, out } => {
            let config = load_config(config.as_deref(), None, seed)?;
            let manifest = experiment::synth(&config, &out).context("synth")?;
            println!(
                "{} sources × {} samples (seed {}, {}) written to {}",
                manifest.n_sources,
                manifest.n_samples,
                manifest.seed,
                manifest.config_hash,
                out.display()
            );
        }
        Command::Run { data, config, seed, algorithm, out } => {
            let config = load_config(config.as_deref(), Some(&data), seed)?;
            let run = experiment::run(&config, &data, algorithm, &out).with_context(|| format!("run {algorithm}"))?;
            let status = if run.converged { "converged" } else { "did not converge" };
            print!("{algorithm}: {status} after {} iteration(s)", run.iterations);
            if let Some(a) = run.mean_amari {
                print!(", mean Amari index {a:.3e}");
            }
            println!();
        }
        Command::Eval { data, results, out } => {
            let report = experiment::eval(&data, &results, &out).context("eval")?;
            println!("{:<16} {:>10} {:>10} {:>12}", "algorithm", "SIR (dB)", "SDR (dB)", "Amari");
            for r in &report.rows {
                println!("{:<16} {:>10.2} {:>10.2} {:>12.3e}", r.label, r.sir_db, r.sdr_db, r.amari);
            }
        }
    }
    Ok(())
}
