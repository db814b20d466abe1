use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod report;

use cascade_core::CascadeError;
use config::{ConfigError, ExperimentConfig};
use report::Run;

#[derive(Parser)]
#[command(name = "cascade", version, about = "Controllability experiments for 1-D wave-heat and heat-wave cascades")]
struct Cli {
    /// Print the default configuration and exit.
    #[arg(long)]
    print_defaults: bool,
    /// Also write a gnuplot script template next to the CSV files.
    #[arg(long, global = true)]
    gnuplot_stub: bool,
    /// Override `output_dir` from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue tables, mode evaluations and weights.
    Spectrum { config: PathBuf },
    /// Sign scan of gamma_n over indicator supports, with refined zeros.
    GammaScan { config: PathBuf },
    /// Minimum-energy steering of random unit-norm pairs.
    Hum { config: PathBuf },
    /// Growth of the V-norm ratio along single-mode controls.
    Noninv { config: PathBuf },
    /// Observability / admissibility estimates and the Ingham gap table.
    Constants { config: PathBuf },
    /// Heat-wave cascade: Gamma_m, exponents, weights and steering.
    Hw { config: PathBuf },
}

impl Command {
    fn parts(&self) -> (&'static str, &PathBuf) {
        match self {
            Command::Spectrum { config } => ("spectrum", config),
            Command::GammaScan { config } => ("gamma-scan", config),
            Command::Hum { config } => ("hum", config),
            Command::Noninv { config } => ("noninv", config),
            Command::Constants { config } => ("constants", config),
            Command::Hw { config } => ("hw", config),
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<CascadeError>() {
        Some(CascadeError::VanishingCoupling { .. }) => 3,
        Some(CascadeError::IllConditioned { .. }) => 4,
        Some(CascadeError::InvalidParameter { .. } | CascadeError::InsufficientRange { .. } | CascadeError::Domain { .. }) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.print_defaults {
        print!("{}", ExperimentConfig::defaults_toml());
        return Ok(());
    }
    let Some(cmd) = cli.command else {
        return Err(ConfigError("no command given (see --help)".into()).into());
    };
    let (name, path) = cmd.parts();
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e.downcast::<ConfigError>() {
        Ok(c) => anyhow::Error::new(c),
        Err(e) => anyhow::Error::new(ConfigError(format!("{e:#}"))),
    })?;
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().ok();
    }
    let start = Instant::now();
    let mut r = Run::new(name);
    commands::dispatch(name, &cfg, &mut r)?;
    let echo = serde_json::to_value(&cfg)?;
    let report = r.finish(&cfg.output_dir, echo, start.elapsed().as_secs_f64(), cli.gnuplot_stub)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{name}: wrote {} tables to {}", report.tables.len(), cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
