mod commands;
mod config;
mod forms;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::{
    ConvergeArgs, OracleCheckArgs, PureGrowthArgs, RegimesArgs, ScalingArgs, SdpArgs, SdpScanArgs,
    SimulateArgs, ThetaArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime cap exceeded: {0}")]
    Cap(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Cap(_) => 3,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

/// Forest-fire, pure growth and self-destructive percolation on finite r-ary trees.
#[derive(Debug, Parser)]
#[command(name = "treefire", version)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the forest-fire engine once; event log CSV and final-state summary.
    SimulateFf(SimulateArgs),
    /// Pure growth snapshot and cluster census at time t.
    PureGrowth(PureGrowthArgs),
    /// One self-destructive percolation realization plus a boundary-reach estimate.
    Sdp(SdpArgs),
    /// Boundary-reach frequency over a refresh grid and depth list.
    SdpScan(SdpScanArgs),
    /// Fixed-point percolation probability over a p grid.
    Theta(ThetaArgs),
    /// Coupled destruction experiment (convergence, or timing around τ).
    Converge(ConvergeArgs),
    /// Fire statistics of the root cluster at τ_n.
    Scaling(ScalingArgs),
    /// Engine marginals against the exact chain on tiny trees.
    OracleCheck(OracleCheckArgs),
    /// Asymptotic regime of an ignition-rate schedule.
    Regimes(RegimesArgs),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(config::ConfigFile::load).transpose()?;
    let ctx = commands::Context { file: file.as_ref(), dry_run: cli.dry_run };
    match cli.command {
        Command::SimulateFf(a) => commands::simulate_ff(&ctx, a),
        Command::PureGrowth(a) => commands::pure_growth(&ctx, a),
        Command::Sdp(a) => commands::sdp(&ctx, a),
        Command::SdpScan(a) => commands::sdp_scan(&ctx, a),
        Command::Theta(a) => commands::theta(&ctx, a),
        Command::Converge(a) => commands::converge(&ctx, a),
        Command::Scaling(a) => commands::scaling(&ctx, a),
        Command::OracleCheck(a) => commands::oracle_check(&ctx, a),
        Command::Regimes(a) => commands::regimes(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("treefire: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
