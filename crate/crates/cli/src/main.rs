//! `ocean-gnn`: build meshes and graphs, generate synthetic data, train,
//! forecast and evaluate.
//!
//! Failures print one line `error[CODE]: message` on stderr and exit with 2
//! (configuration), 3 (data) or 4 (numerical failure).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocean_gnn::error::ErrorClass;
use ocean_gnn::rollout::ForcingKind;
use ocean_gnn::training::Phase;
use ocean_gnn::Error;

#[derive(Debug, Parser)]
#[command(name = "ocean-gnn", version, about = "Multi-scale GNN ocean forecaster")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write icosahedral meshes for levels L-1 and L.
    BuildMesh {
        #[arg(long)]
        levels: u32,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the pruned ocean graph for a grid and a mesh pair.
    BuildGraph {
        /// Statics file (or dataset directory) defining the grid and mask.
        #[arg(long)]
        grid: PathBuf,
        /// Directory written by build-mesh.
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        radius_factor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        days: usize,
        /// First day index (day 0 is 1993-01-01).
        #[arg(long, default_value_t = 0)]
        start: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one curriculum phase.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// 1 (one-day steps) or 2 (two-day rollouts).
        #[arg(long, value_parser = parse_phase)]
        phase: Phase,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a multi-day forecast.
    Forecast {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory holding the initial states and forcing.
        #[arg(long)]
        init: PathBuf,
        /// Initialization day t0 (default: first validation day + 1).
        #[arg(long)]
        day: Option<i64>,
        #[arg(long, value_parser = parse_forcing)]
        forcing: ForcingKind,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// RMSE of a forecast against a dataset.
    EvalRmse {
        /// Forecast directory.
        #[arg(long)]
        pred: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        region: Option<String>,
        /// Only variables with several depth levels, shallow to deep.
        #[arg(long)]
        depth_profile: bool,
        /// Weight cells by the cosine of latitude.
        #[arg(long)]
        cos_lat: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Surface kinetic-energy spectra of a forecast and the truth.
    EvalSpectra {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        region: String,
        /// Disable the Hann window.
        #[arg(long)]
        no_window: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_forcing(s: &str) -> Result<ForcingKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> ocean_gnn::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::BuildMesh { levels, out } => commands::build_mesh(levels, &out),
        Command::BuildGraph {
            grid,
            mesh,
            radius_factor,
            out,
        } => commands::build_graph(&grid, &mesh, radius_factor, &out),
        Command::GenData {
            config,
            days,
            start,
            out,
        } => commands::gen_data(&config, start, days, &out),
        Command::Train {
            config,
            phase,
            resume,
        } => commands::train(&config, phase, resume.as_deref()),
        Command::Forecast {
            ckpt,
            init,
            day,
            forcing,
            horizon,
            out,
        } => commands::forecast(&ckpt, &init, day, forcing, horizon, &out),
        Command::EvalRmse {
            pred,
            truth,
            region,
            depth_profile,
            cos_lat,
            out,
        } => commands::eval_rmse(&pred, &truth, region.as_deref(), depth_profile, cos_lat, &out),
        Command::EvalSpectra {
            pred,
            truth,
            region,
            no_window,
            out,
        } => commands::eval_spectra(&pred, &truth, &region, no_window, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, status) = match e.class() {
                ErrorClass::Config => ("E_CONFIG", 2),
                ErrorClass::Data => ("E_DATA", 3),
                ErrorClass::Numerical => ("E_NUMERIC", 4),
            };
            let text = e.to_string().replace('\n', " ");
            eprintln!("error[{code}]: {text}");
            ExitCode::from(status)
        }
    }
}
