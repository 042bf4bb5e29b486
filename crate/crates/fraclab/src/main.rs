use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fraclab::selftest::REPORT_SCHEMA;
use fraclab::{emit_csv, load_config, run_experiment, selftest, Command, HarnessError, RunContext};

#[derive(Parser)]
#[command(
    name = "fraclab",
    version,
    about = "Transition-energy experiments for fractional phase-field energies"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Output CSV path; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the config's `workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// One optimal transition profile and its energy.
    Profile {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Transition energy along increasing clamp lengths.
    Curve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Minimal energies along an eps sweep against the predicted limit.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Energies of the pasted recovery sequence.
    Recovery {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Small-grid invariant checks.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn experiment(command: Command, config: PathBuf, common: Common) -> Result<(), HarnessError> {
    let cfg = load_config(&config, command)?;
    let ctx = RunContext {
        out: common.out,
        workers: common.workers,
        quiet: common.quiet,
    };
    run_experiment(&cfg, &ctx)?;
    Ok(())
}

fn run_selftest(common: Common) -> Result<bool, HarnessError> {
    let report = selftest();
    if !common.quiet {
        print!("{}", report.table());
    }
    if let Some(out) = &common.out {
        emit_csv(&report.rows(), &REPORT_SCHEMA, out)?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Profile { config, common } => {
            experiment(Command::Profile, config, common).map(|()| true)
        }
        Cmd::Curve { config, common } => experiment(Command::Curve, config, common).map(|()| true),
        Cmd::Sweep { config, common } => experiment(Command::Sweep, config, common).map(|()| true),
        Cmd::Recovery { config, common } => {
            experiment(Command::Recovery, config, common).map(|()| true)
        }
        Cmd::Selftest { common } => run_selftest(common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
