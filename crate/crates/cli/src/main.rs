//! `kickflow` command-line experiments.

mod checkpoint;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::linearize::LinearizeArgs;
use commands::mix::MixArgs;
use commands::Status;
use config::ExperimentConfig;
use error::{CliError, CliResult};
use output::Outputs;

#[derive(Parser, Debug)]
#[command(
    name = "kickflow",
    version,
    about = "Kick-forced Navier-Stokes experiments"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides both seeds in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble and assembly loops.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one kicked trajectory.
    Simulate {
        /// `zero`, `random:<seed>` or a field file.
        #[arg(long)]
        u0: Option<String>,
        #[arg(long)]
        kicks: Option<usize>,
    },
    /// Tangent operators and Gram spectrum along one kick.
    Linearize {
        /// `zero`, `random:<seed>` or a field file.
        #[arg(long, default_value = "zero")]
        u0: String,
        /// Kick index on lineage 0, or a kick file.
        #[arg(long, default_value = "0")]
        kick: String,
        /// Also write the dense operator matrices.
        #[arg(long)]
        matrices: bool,
    },
    /// Controlled coupling of nearby pairs.
    Couple {
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Mixing between two ensembles.
    Mix {
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        kicks: Option<usize>,
        /// Two comma-separated compacts: `unit`, `r3` or matrix files.
        #[arg(long)]
        compact: Option<String>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Write a checkpoint after this kick and stop.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Sample statistics of the noise law.
    NoiseCheck {
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Eigenvalue and amplitude table.
    Spectrum,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Linearize { .. } => "linearize",
            Command::Couple { .. } => "couple",
            Command::Mix { .. } => "mix",
            Command::NoiseCheck { .. } => "noise-check",
            Command::Spectrum => "spectrum",
        }
    }

    /// Folds command-line overrides into the configuration.
    fn apply(&self, cfg: &mut ExperimentConfig) {
        match self {
            Command::Simulate { u0, kicks } => {
                if let Some(u0) = u0 {
                    cfg.simulate.u0 = u0.clone();
                }
                if let Some(k) = kicks {
                    cfg.simulate.kicks = *k;
                }
            }
            Command::Couple {
                delta,
                steps,
                pairs,
            } => {
                if let Some(d) = delta {
                    cfg.control.delta = *d;
                }
                if let Some(s) = steps {
                    cfg.couple.steps = *s;
                }
                if let Some(p) = pairs {
                    cfg.couple.pairs = *p;
                }
            }
            Command::Mix {
                particles,
                kicks,
                compact,
                checkpoint_every,
                ..
            } => {
                if let Some(p) = particles {
                    cfg.mix.particles = *p;
                }
                if let Some(k) = kicks {
                    cfg.mix.kicks = *k;
                }
                if let Some(c) = compact {
                    cfg.mix.compact = c.clone();
                }
                if let Some(c) = checkpoint_every {
                    cfg.mix.checkpoint_every = *c;
                }
            }
            Command::NoiseCheck { draws } => {
                if let Some(d) = draws {
                    cfg.noise_check.draws = *d;
                }
            }
            Command::Linearize { .. } | Command::Spectrum => {}
        }
    }
}

fn dispatch(cli: &Cli, cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Status> {
    match &cli.command {
        Command::Simulate { .. } => commands::simulate::run(cfg, out),
        Command::Linearize { u0, kick, matrices } => commands::linearize::run(
            cfg,
            &LinearizeArgs {
                u0: u0.clone(),
                kick: kick.clone(),
                matrices: *matrices,
            },
            out,
        ),
        Command::Couple { .. } => commands::couple::run(cfg, out),
        Command::Mix {
            resume, stop_after, ..
        } => commands::mix::run(
            cfg,
            &MixArgs {
                resume: resume.clone(),
                stop_after: *stop_after,
            },
            out,
        ),
        Command::NoiseCheck { .. } => commands::noise_check::run(cfg, out),
        Command::Spectrum => commands::spectrum::run(cfg, out),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
        cfg.noise.seed = None;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    let name = cli.command.name();
    cli.command.apply(&mut cfg);
    cfg.validate(name)?;
    if let Some(n) = g.workers {
        if n == 0 {
            return Err(CliError::config("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    log::info!("{name}: writing to {}", cfg.out_dir.display());
    let mut out = Outputs::create(&cfg.out_dir)?;
    let result = dispatch(&cli, &cfg, &mut out);
    let status = match &result {
        Ok(s) => s.as_str().to_string(),
        Err(e) => format!(
            "failed: {}",
            e.record()["error"].as_str().unwrap_or("error")
        ),
    };
    out.finish(name, &cfg, &status)?;
    result.map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KICKFLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
