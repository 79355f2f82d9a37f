use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use topopt_cli::commands::{self, GradCheck};
use topopt_cli::config::{load, Overrides};
use topopt_cli::CliError;
use topopt_core::grad::DirectionKind;

/// Shape and topology optimization for Dirichlet problems on a fixed domain.
#[derive(Parser)]
#[command(name = "topopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Tracing {
    /// Orbit time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Fixed number of intervals per orbit.
    #[arg(long)]
    fixed_m: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer and write history, final fields, orbits and a report.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tracing: Tracing,
        /// Descent direction.
        #[arg(long, value_parser = parse_direction)]
        direction: Option<DirectionKind>,
        /// Also write the orbits of every accepted iterate.
        #[arg(long)]
        dump_orbits: bool,
        /// Suppress per-iteration output.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Dirichlet solves on the optimized domain and on the zero-level domain of y.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Directory holding the run's final_state.vtk; defaults to the output directory.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Trace the orbits of the initial level set.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tracing: Tracing,
    },
    /// Solve the state equation for the initial fields.
    State {
        #[command(flatten)]
        common: Common,
    },
    /// Compare both derivative forms with finite differences.
    GradCheck {
        /// Run configuration; the check is made at its initial fields.
        #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
        config: Option<PathBuf>,
        /// Use the built-in manufactured configuration instead of a config file.
        #[arg(long)]
        fixture: bool,
        #[command(flatten)]
        tracing: Tracing,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        lambda: f64,
        /// Number of random directions.
        #[arg(long, default_value_t = 5)]
        directions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write the configured mesh as text and VTK.
    Mesh {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_direction(s: &str) -> Result<DirectionKind, String> {
    s.parse()
}

fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Solve { common, tracing, direction, dump_orbits, quiet } => {
            let ov = Overrides { dt: tracing.dt, fixed_m: tracing.fixed_m, direction, out: common.out };
            commands::solve(&load(&common.config, &ov)?, dump_orbits, quiet)
        }
        Command::Compare { common, run } => {
            let l = load(&common.config, &Overrides { out: common.out, ..Default::default() })?;
            let run_dir = run.unwrap_or_else(|| l.out_dir.clone());
            commands::compare(&l, &run_dir)
        }
        Command::Trace { common, tracing } => {
            let ov = Overrides { dt: tracing.dt, fixed_m: tracing.fixed_m, out: common.out, ..Default::default() };
            commands::trace(&load(&common.config, &ov)?)
        }
        Command::State { common } => {
            commands::state(&load(&common.config, &Overrides { out: common.out, ..Default::default() })?)
        }
        Command::GradCheck { config, fixture, tracing, lambda, directions, seed } => {
            let opts = GradCheck { lambda, directions, seed };
            let (table, _) = if fixture {
                commands::grad_check_fixture(&opts)?
            } else {
                let path = config.expect("clap enforces --config without --fixture");
                let ov = Overrides { dt: tracing.dt, fixed_m: tracing.fixed_m, ..Default::default() };
                let l = load(&path, &ov)?;
                commands::grad_check(&l.problem, &l.g0, &l.u0, &opts)?
            };
            Ok(table)
        }
        Command::Mesh { common } => {
            commands::mesh(&load(&common.config, &Overrides { out: common.out, ..Default::default() })?)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("topopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
