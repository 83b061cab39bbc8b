use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcc_cbf::sim::ControllerMode;
use pcc_cbf_cli::commands;
use pcc_cbf_cli::config::Overrides;

/// Safety-filtered control of soft-rigid PCC manipulators.
#[derive(Parser)]
#[command(name = "pcc-cbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory log.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV output; defaults to output.csv from the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// pd_plus or cbf_qp.
        #[arg(long)]
        controller: Option<ControllerMode>,
        /// Simulated duration (s).
        #[arg(long = "t-final")]
        t_final: Option<f64>,
        /// Control period (s); the integrator step scales with it.
        #[arg(long)]
        dt: Option<f64>,
        /// Class-K coefficient (1/s).
        #[arg(long)]
        p: Option<f64>,
    },
    /// Validate a scenario and its initial admissibility without running.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare barrier minima and steady-state torques of two logs.
    Compare { log_a: PathBuf, log_b: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Simulate { config, out, controller, t_final, dt, p } => {
            let overrides = Overrides { mode: controller, t_final, control_dt: dt, p };
            commands::simulate(&config, out.as_deref(), &overrides, &mut stdout)
        }
        Command::Check { config } => commands::check(&config, &mut stdout),
        Command::Compare { log_a, log_b } => commands::compare(&log_a, &log_b, &mut stdout).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
