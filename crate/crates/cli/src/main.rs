//! `uvc`: synthesis, simulation and verification of unit vector controllers.

mod commands;
mod config;
mod design;
mod error;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::AlphaChoice;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "uvc", version, about = "Unit vector control for polytopic systems with saturating actuators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the LMI program and write a design document.
    Synth(SynthCmd),
    /// Simulate the closed loop from one initial state.
    Sim(SimCmd),
    /// Export Ω radii and D_u admissibility along sampled directions.
    Region(RegionCmd),
    /// Re-check a stored design and simulate from the boundary of Ω.
    Verify(VerifyCmd),
    /// Built-in plant models.
    Models {
        #[command(subcommand)]
        action: ModelsCmd,
    },
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config value of μ.
    #[arg(long, conflicts_with = "mu_grid")]
    mu: Option<f64>,
    /// Logarithmic grid `lo:hi:count`; the design with the smallest φ wins.
    #[arg(long, value_name = "LO:HI:COUNT")]
    mu_grid: Option<String>,
    /// Design JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimCmd {
    #[arg(long)]
    design: PathBuf,
    /// Initial state `v1,...,vn`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    /// Simplex weights `a1,...,aN`.
    #[arg(long, value_delimiter = ',', group = "weights")]
    alpha: Option<Vec<f64>>,
    /// Zero-based vertex index.
    #[arg(long, group = "weights")]
    vertex: Option<usize>,
    /// Number of random simplex weights; one CSV per sample.
    #[arg(long, group = "weights")]
    random_alpha: Option<usize>,
    /// Integration step (s), default 1e-4.
    #[arg(long)]
    step: Option<f64>,
    /// Horizon (s), default 2ρ.
    #[arg(long)]
    tmax: Option<f64>,
    /// Record every k-th step.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegionCmd {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    samples: usize,
    /// Used for direction sampling when n > 3.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyCmd {
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value_t = 64)]
    boundary_points: usize,
    /// Random simplex weights simulated in addition to the vertices.
    #[arg(long, default_value_t = 4)]
    random_alpha: usize,
    /// Integration step (s), default 1e-4·ρ.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum ModelsCmd {
    /// List the built-in models and their default parameters.
    List,
    /// Write a synthesis config with the model's vertices.
    Emit {
        #[arg(long)]
        name: String,
        /// `key=value` overrides, repeatable or comma separated.
        #[arg(long = "param", alias = "params")]
        params: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var("UVC_THREADS") {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(CliError::invalid(format!("UVC_THREADS={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(c) => commands::synth(commands::SynthArgs {
            config: c.config,
            mu: c.mu,
            mu_grid: c.mu_grid,
            out: c.out,
        }),
        Command::Sim(c) => {
            let alpha = match (c.alpha, c.vertex, c.random_alpha) {
                (Some(w), _, _) => AlphaChoice::Weights(w),
                (_, Some(i), _) => AlphaChoice::Vertex(i),
                (_, _, Some(n)) => AlphaChoice::Random(n),
                _ => AlphaChoice::Centroid,
            };
            commands::sim(commands::SimArgs {
                design: c.design,
                x0: c.x0,
                alpha,
                step: c.step,
                t_max: c.tmax,
                stride: c.stride,
                seed: c.seed,
                out: c.out,
            })
        }
        Command::Region(c) => commands::region(commands::RegionArgs {
            design: c.design,
            samples: c.samples,
            seed: c.seed,
            out: c.out,
        }),
        Command::Verify(c) => commands::verify(commands::VerifyArgs {
            design: c.design,
            boundary_points: c.boundary_points,
            random_alpha: c.random_alpha,
            step: c.step,
            seed: c.seed,
        }),
        Command::Models { action } => match action {
            ModelsCmd::List => {
                commands::models_list();
                Ok(())
            }
            ModelsCmd::Emit { name, params, out } => commands::models_emit(&name, &params, out.as_deref()),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = threads_from_env()
        .and_then(|threads| uvc_core::par::with_thread_cap(threads, || dispatch(cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Some(report) = err.residual_report() {
                eprintln!("{report}");
            }
            err.exit_code()
        }
    }
}
