//! `nowcast`: prep → flow → train → predict → eval over NWG1 stacks.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nowcast_core::eval::CrpsEstimator;

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "nowcast",
    version,
    about = "Satellite radiance rainfall nowcasting pipeline"
)]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-sample stages.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sanitise, segment, normalise and window the input stacks.
    Prep {
        #[arg(long)]
        radiance: Option<PathBuf>,
        #[arg(long)]
        rain: Option<PathBuf>,
    },
    /// Extrapolate every sample with optical flow.
    Flow {
        /// Lead steps to forecast [default: 16].
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        emit_pgm: bool,
    },
    /// Train the radiance-to-rain translator.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Translate forecasts to rain and accumulate.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        emit_pgm: bool,
    },
    /// Score cumulative predictions against observations.
    Eval {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        obs: Option<PathBuf>,
        /// Block edge in pixels [default: 32].
        #[arg(long)]
        block: Option<usize>,
        #[arg(long, value_parser = parse_estimator)]
        estimator: Option<CrpsEstimator>,
    },
    /// Write a synthetic drifting-cloud fixture (radiance.nwg, rain.nwg).
    Synth {
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 252)]
        size: usize,
    },
}

fn parse_estimator(s: &str) -> std::result::Result<CrpsEstimator, String> {
    s.parse().map_err(|e: nowcast_core::Error| e.to_string())
}

/// Resolves configuration (defaults < file < flags) and runs the command.
pub fn run(cli: Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    match cli.command {
        Command::Prep { radiance, rain } => {
            cfg.radiance = radiance.or(cfg.radiance);
            cfg.rain = rain.or(cfg.rain);
            commands::cmd_prep(&cfg)
        }
        Command::Flow { steps, emit_pgm } => {
            if let Some(s) = steps {
                cfg.steps = s;
            }
            commands::cmd_flow(&cfg, emit_pgm)
        }
        Command::Train { epochs, checkpoint } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            commands::cmd_train(&cfg)
        }
        Command::Predict {
            checkpoint,
            emit_pgm,
        } => {
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            commands::cmd_predict(&cfg, emit_pgm)
        }
        Command::Eval {
            pred,
            obs,
            block,
            estimator,
        } => {
            if let Some(b) = block {
                cfg.pipeline.block_size = b;
            }
            if let Some(e) = estimator {
                cfg.estimator = e;
            }
            commands::cmd_eval(&cfg, pred, obs)
        }
        Command::Synth { frames, size } => commands::cmd_synth(&cfg, frames, size),
    }
}
