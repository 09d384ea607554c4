//! `lfm`: runs the latent-force-model experiments and writes plot-ready
//! CSV and JSON files.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::FileConfig;
use output::OutputDir;

#[derive(Parser)]
#[command(name = "lfm", version, about = "State-space latent force model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration with optional [spring], [heat], [kernel] and [certify] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Noise seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated snapshot times for heat-control.
    #[arg(long, global = true, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Learn the spring's force from noisy positions and extrapolate.
    SpringOpenLoop,
    /// Compare force-blind and force-aware LQR on the spring.
    SpringControl,
    /// Compare both controllers on the heat equation with a moving source.
    HeatControl,
    /// Tabulate a state-space covariance against its exact kernel.
    KernelCheck,
    /// Observability, controllability and sampling certificate of a model.
    Certify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SpringOpenLoop => "spring-open-loop",
            Command::SpringControl => "spring-control",
            Command::HeatControl => "heat-control",
            Command::KernelCheck => "kernel-check",
            Command::Certify => "certify",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    library_version: &'a str,
    seed: Option<u64>,
    noise_generator: &'a str,
    wall_time_seconds: f64,
    outputs: Vec<String>,
    config: &'a C,
}

fn finish<C: Serialize>(cli: &Cli, seed: Option<u64>, config: &C, run: impl FnOnce() -> Result<commands::Outcome>) -> Result<()> {
    let start = Instant::now();
    let outcome = run()?;
    let mut out = OutputDir::create(&cli.out)?;
    let written = commands::write(&outcome, &mut out).and_then(|()| {
        let mut outputs = out.file_names();
        outputs.push("manifest.toml".into());
        let manifest = Manifest {
            command: cli.command.name(),
            library_version: lfm_core::VERSION,
            seed,
            noise_generator: lfm_core::experiments::NOISE_GENERATOR,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            outputs,
            config,
        };
        out.write_text("manifest.toml", &toml::to_string(&manifest)?)
    });
    if let Err(e) = written {
        out.discard();
        return Err(e);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    cfg.resolve_seed(cli.seed);
    if let Some(times) = &cli.snapshot_times {
        cfg.heat.snapshot_times = times.clone();
    }
    match cli.command {
        Command::SpringOpenLoop => finish(cli, Some(cfg.spring.seed), &cfg.spring, || commands::spring_open_loop(&cfg.spring)),
        Command::SpringControl => finish(cli, Some(cfg.spring.seed), &cfg.spring, || commands::spring_control(&cfg.spring)),
        Command::HeatControl => finish(cli, Some(cfg.heat.seed), &cfg.heat, || commands::heat_control(&cfg.heat)),
        Command::KernelCheck => finish(cli, None, &cfg.kernel, || commands::kernel_check(&cfg.kernel)),
        Command::Certify => finish(cli, None, &cfg.certify, || commands::certify(&cfg.certify)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
