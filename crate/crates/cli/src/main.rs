use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multiport_cli::config::{ExperimentConfig, ExperimentKind};
use multiport_cli::experiments;
use multiport_cli::manifest::RunManifest;
use multiport_core::Result;

/// Desk-scale simulator for a programmable multiport photonic network:
/// characterize the mode mixer, design phase planes, and run the
/// entanglement-distribution experiments end to end.
#[derive(Parser)]
#[command(name = "multiport", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace every stage seed, deterministically derived from this value.
    #[arg(long, value_name = "SEED")]
    seed_override: Option<u64>,
    /// Design against the true medium instead of the intensity-probe fit.
    #[arg(long)]
    oracle_medium: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the fibre transmission matrix from intensity-only probes.
    #[command(name = "characterize-tm")]
    CharacterizeTm(RunArgs),
    /// Design phase planes for the configured gates and score them.
    #[command(name = "design-gates")]
    DesignGates(RunArgs),
    /// Certify entanglement on every routed user pair of each gate.
    Routing(RunArgs),
    /// Routing with one channel per port (qubit or qutrit sources).
    #[command(name = "routing-single-channel")]
    RoutingSingleChannel(RunArgs),
    /// Entanglement swapping on channel 1 of a splitter gate.
    Swap(RunArgs),
    /// Entanglement swapping on every channel simultaneously.
    #[command(name = "swap-multiplexed")]
    SwapMultiplexed(RunArgs),
    /// Two-photon interference scan against arrival-time delay.
    #[command(name = "hom-scan")]
    HomScan(RunArgs),
    /// Replay frozen phase planes while the fibre drifts.
    Stability(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::CharacterizeTm(a) => (ExperimentKind::CharacterizeTm, a),
            Command::DesignGates(a) => (ExperimentKind::DesignGates, a),
            Command::Routing(a) => (ExperimentKind::Routing, a),
            Command::RoutingSingleChannel(a) => (ExperimentKind::RoutingSingleChannel, a),
            Command::Swap(a) => (ExperimentKind::Swap, a),
            Command::SwapMultiplexed(a) => (ExperimentKind::SwapMultiplexed, a),
            Command::HomScan(a) => (ExperimentKind::HomScan, a),
            Command::Stability(a) => (ExperimentKind::Stability, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<(RunManifest, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.expect_kind(kind)?;
    cfg.apply_overrides(args.seed_override, args.out, args.oracle_medium);
    let manifest = experiments::run(&cfg)?;
    let dir = cfg.output_dir.join(&manifest.run_dir);
    Ok((manifest, dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok((manifest, dir)) => {
            println!(
                "{}: {} result file(s) under {}",
                manifest.experiment,
                manifest.results.len(),
                dir.display()
            );
            println!(
                "manifest {}  config {}",
                &manifest.manifest_hash[..16],
                &manifest.config_hash[..16]
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
