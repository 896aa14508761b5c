mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{LmArgs, PortraitArgs, ShootArgs};
use crate::config::{RunArgs, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::Output;

/// Quantum trajectories, readout statistics and optimal paths for a
/// fluorescing qubit. Times are in units of T₁.
#[derive(Debug, Parser)]
#[command(name = "fluortraj", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "FLUORTRAJ_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write CSV floats as hexadecimal literals.
    #[arg(long, global = true)]
    exact_floats: bool,
    /// Decay rate in MHz, recorded in the metadata only.
    #[arg(long, global = true)]
    gamma_mhz: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Plain {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unconditioned decay by RK4.
    Decay(Plain),
    /// Simulate an ensemble and write it as CSV.
    Simulate(Plain),
    /// Compare the ensemble mean with the unconditioned decay.
    AvgCheck {
        #[command(flatten)]
        run: RunArgs,
        /// Allowed deviation in standard errors.
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
    },
    /// Check the ellipse law for homodyne detection at dt and dt/2.
    EllipseCheck {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0])]
        times: Vec<f64>,
    },
    /// Energy grid, contours, stationary points and regions of the polar Hamiltonian.
    Portrait {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 400)]
        theta_cells: usize,
        #[arg(long, default_value_t = 200)]
        p_cells: usize,
        #[arg(long, default_value_t = 3.0)]
        p_max: f64,
    },
    /// Lagrangian manifold of the planar optimal paths.
    Lm {
        #[command(flatten)]
        run: RunArgs,
        /// Initial momenta span [-extent, extent] on both axes.
        #[arg(long, default_value_t = 2.0)]
        extent: f64,
        /// Momenta per axis.
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])]
        times: Vec<f64>,
    },
    /// Optimal paths between two polar angles by shooting.
    OpShoot {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, allow_negative_numbers = true)]
        theta_i: f64,
        #[arg(long, allow_negative_numbers = true)]
        theta_f: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = -8.0)]
        p_min: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 8.0)]
        p_max: f64,
        #[arg(long, default_value_t = 400)]
        points: usize,
    },
    /// Most-likely path of a post-selected ensemble.
    Mlp(Plain),
    /// Time-reversal symmetry and the uncollapse round trip.
    RetroCheck {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1000)]
        points: usize,
    },
    /// Completeness of every measurement's operators.
    PovmCheck(Plain),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Decay(_) => "decay",
            Command::Simulate(_) => "simulate",
            Command::AvgCheck { .. } => "avg-check",
            Command::EllipseCheck { .. } => "ellipse-check",
            Command::Portrait { .. } => "portrait",
            Command::Lm { .. } => "lm",
            Command::OpShoot { .. } => "op-shoot",
            Command::Mlp(_) => "mlp",
            Command::RetroCheck { .. } => "retro-check",
            Command::PovmCheck(_) => "povm-check",
        }
    }

    fn run_args(&self) -> &RunArgs {
        match self {
            Command::Decay(p) | Command::Simulate(p) | Command::Mlp(p) | Command::PovmCheck(p) => &p.run,
            Command::AvgCheck { run, .. }
            | Command::EllipseCheck { run, .. }
            | Command::Portrait { run, .. }
            | Command::Lm { run, .. }
            | Command::OpShoot { run, .. }
            | Command::RetroCheck { run, .. } => run,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(cli.command.run_args());
    if let Some(dir) = &cli.out {
        cfg.out = dir.clone();
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    let mut out = Output::create(&cfg.out, cli.command.name(), cli.exact_floats, cli.gamma_mhz)?;
    let result = match &cli.command {
        Command::Decay(_) => commands::decay(&cfg, &mut out),
        Command::Simulate(_) => commands::simulate(&cfg, &mut out),
        Command::AvgCheck { sigmas, .. } => commands::avg_check(&cfg, *sigmas, &mut out),
        Command::EllipseCheck { times, .. } => commands::ellipse_check(&cfg, times, &mut out),
        Command::Portrait {
            theta_cells,
            p_cells,
            p_max,
            ..
        } => commands::portrait(
            &PortraitArgs {
                theta_cells: *theta_cells,
                p_cells: *p_cells,
                p_max: *p_max,
            },
            &mut out,
        ),
        Command::Lm {
            extent, points, times, ..
        } => commands::lm(
            &cfg,
            &LmArgs {
                extent: *extent,
                points: *points,
                times: times.clone(),
            },
            &mut out,
        ),
        Command::OpShoot {
            theta_i,
            theta_f,
            p_min,
            p_max,
            points,
            ..
        } => commands::op_shoot(
            &cfg,
            &ShootArgs {
                theta_i: *theta_i,
                theta_f: *theta_f,
                p_min: *p_min,
                p_max: *p_max,
                points: *points,
            },
            &mut out,
        ),
        Command::Mlp(_) => commands::mlp(&cfg, &mut out),
        Command::RetroCheck { points, .. } => commands::retro_check(&cfg, *points, &mut out),
        Command::PovmCheck(_) => commands::povm_check(&cfg, &mut out),
    };
    // a failed check still leaves its data and manifest behind
    if result.is_ok() || matches!(result, Err(CliError::CheckFailed(_))) {
        out.finish(&cfg)?;
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
