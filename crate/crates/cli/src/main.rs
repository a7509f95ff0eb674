mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Target;
use config::RunConfig;
use error::CliError;
use output::Staging;

/// Stokes/anti-Stokes correlation models: analytic sweeps, master-equation
/// simulation, coincidence counting and lifetime fits.
#[derive(Debug, Parser)]
#[command(name = "phonocorr", version)]
struct Cli {
    /// TOML run configuration; the bundled defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps; all cores when absent.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detector-model power sweep, heralded auto-correlation and mode-count tables.
    Analytic,
    /// Master-equation trajectory, amplitude sweep and delay sweep.
    Simulate,
    /// Monte-Carlo coincidence histogram and its g2.
    Counts,
    /// Lifetime fits of delay curves.
    Fit {
        /// Delay-curve CSVs (`delay_ps,g2,sigma_g2`); replace `fit.curves`.
        curves: Vec<PathBuf>,
    },
    /// Full pipeline for one figure target with pass/fail checks.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Print the bundled default configuration.
    DefaultConfig,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Analytic => "analytic".into(),
            Command::Simulate => "simulate".into(),
            Command::Counts => "counts".into(),
            Command::Fit { .. } => "fit".into(),
            Command::Reproduce { target } => format!("reproduce {}", target.name()),
            Command::DefaultConfig => "default-config".into(),
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::bundled(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Command::Fit { curves } = &cli.command {
        if !curves.is_empty() {
            cfg.fit.curves = curves.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", config::BUNDLED_DEFAULT);
        return Ok(());
    }
    let cfg = resolve(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(error::numerical)?;
    }
    let mut staging = Staging::new(&cfg.out_dir)?;
    let checks = match &cli.command {
        Command::Analytic => commands::analytic(&cfg, &mut staging)?,
        Command::Simulate => commands::simulate(&cfg, &mut staging)?,
        Command::Counts => commands::counts(&cfg, &mut staging)?,
        Command::Fit { .. } => commands::fit(&cfg, &mut staging)?,
        Command::Reproduce { target } => commands::reproduce(*target, &cfg, &mut staging)?,
        Command::DefaultConfig => unreachable!("handled above"),
    };
    let outputs = staging.files().to_vec();
    let manifest = commands::manifest(&cli.command.name(), &cfg, &outputs);
    staging.write("manifest.toml", |buf| {
        buf.extend_from_slice(manifest.as_bytes());
        Ok(())
    })?;
    let written = staging.commit()?;
    eprintln!("wrote {} files to {}", written.len(), cfg.out_dir.display());
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Acceptance(failed.join(", ")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phonocorr: {e}");
            e.exit_code()
        }
    }
}
