mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::commands::RunOutput;
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::manifest::{Manifest, Versions};

/// Weyl-remainder laboratory: recurrence volumes, invariants, spectra and
/// remainder bounds.
#[derive(Debug, Parser)]
#[command(name = "weylab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for stochastic commands; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Re-run and compare outputs with the stored manifest instead of writing.
    #[arg(long, global = true)]
    check: bool,

    /// Semiclassical parameter grid, e.g. `1e-4:1e-2:geom:20`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    h: Option<String>,

    /// Laplace eigenvalue threshold grid.
    #[arg(long, global = true)]
    lambda: Option<String>,

    /// Time horizon grid.
    #[arg(long = "T", global = true)]
    t: Option<String>,

    /// Recurrence radius grid.
    #[arg(long, global = true)]
    eps: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Monte-Carlo recurrence-set volumes over a (T, ε) grid.
    Recurrence,
    /// Expansion rate, Lyapunov spectrum, χ and separated-set entropy.
    Invariants,
    /// Exact eigenvalue counts with Weyl leading terms.
    Spectrum,
    /// Weyl remainder series R_h.
    Weyl,
    /// Parameter plan (δ, ε, T) for a model class.
    Plan,
    /// Equatorial return map of a surface of revolution.
    Returnmap,
    /// Power or exponential law fit to a recurrence table.
    ScalingFit,
    /// Calibrated bound check on a remainder or recurrence table.
    VerifyBound,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Recurrence => "recurrence",
            Command::Invariants => "invariants",
            Command::Spectrum => "spectrum",
            Command::Weyl => "weyl",
            Command::Plan => "plan",
            Command::Returnmap => "returnmap",
            Command::ScalingFit => "scaling-fit",
            Command::VerifyBound => "verify-bound",
        }
    }

    fn run(self, cfg: &Config) -> Result<RunOutput> {
        match self {
            Command::Recurrence => commands::recurrence(cfg),
            Command::Invariants => commands::invariants(cfg),
            Command::Spectrum => commands::spectrum(cfg),
            Command::Weyl => commands::weyl(cfg),
            Command::Plan => commands::plan(cfg),
            Command::Returnmap => commands::returnmap(cfg),
            Command::ScalingFit => commands::scaling_fit_cmd(cfg),
            Command::VerifyBound => commands::verify_bound_cmd(cfg),
        }
    }
}

fn effective_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", Value::from(seed));
    }
    for (key, flag) in [("h", &cli.h), ("lambda", &cli.lambda), ("T", &cli.t), ("eps", &cli.eps)] {
        if let Some(v) = flag {
            cfg.set(key, Value::String(v.clone()));
        }
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = effective_config(cli)?;
    let started = Instant::now();
    let run = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| cli.command.run(&cfg))?,
        None => cli.command.run(&cfg)?,
    };
    let name = cli.command.name();
    let mut lines = run.summary.clone();
    if cli.check {
        let n = manifest::check(&cli.out, name, &cfg.hash(), &run)?;
        lines.push(format!("check ok: {n} outputs match {}", manifest::manifest_name(name)));
        return Ok(lines);
    }
    let m = Manifest {
        command: name.to_string(),
        config_hash: cfg.hash(),
        config: cfg.value(),
        seed: cfg.get("seed").ok().flatten(),
        threads: cli.threads,
        versions: Versions::current(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        inputs: run
            .inputs
            .iter()
            .map(|(path, sha256)| manifest::FileHash {
                path: path.clone(),
                sha256: sha256.clone(),
            })
            .collect(),
        outputs: manifest::outputs_of(&run),
    };
    manifest::write(&cli.out, &run, &m)?;
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("weylab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
