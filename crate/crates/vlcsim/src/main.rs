use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vlcsim::{CliError, Experiment, ExperimentConfig};

/// Link-level simulator for ACO-OFDM, ACO-SCFDE and OOK visible light links.
#[derive(Parser)]
#[command(name = "vlcsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PAPR CCDF of ACO-OFDM and ACO-SCFDE frames (ccdf.csv).
    Papr(RunArgs),
    /// BER versus SNR over the configured channel and LED (ber.csv).
    Ber(RunArgs),
    /// BER at each LED bias point in `led.bias_sweep_v` (ber.csv).
    BiasSweep(RunArgs),
    /// Uncoded and BICM-coded BER at matched information-bit energy (ber.csv).
    CodedVsUncoded(RunArgs),
    /// Normalized SNR and bandwidth relative to OOK (ber.csv, normalized.csv).
    NormalizedComparison(RunArgs),
    /// Ray-traced channel impulse response (cir.csv, taps.csv).
    Channel(RunArgs),
    /// Print a configuration file listing every key with its default.
    ReferenceConfig {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out_dir` from the config, then
    /// `results/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("VLCSIM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "VLCSIM_THREADS: expected a positive integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn execute(kind: Experiment, args: RunArgs) -> Result<PathBuf, CliError> {
    configure_threads()?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(kind.to_string()));
    let artifacts = vlcsim::run(kind, &cfg)?;
    vlcsim::write_outputs(&out, kind, &cfg, &artifacts)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::ReferenceConfig { seed } => {
            print!("{}", ExperimentConfig::reference(seed).to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Papr(a) => (Experiment::Papr, a),
        Command::Ber(a) => (Experiment::Ber, a),
        Command::BiasSweep(a) => (Experiment::BiasSweep, a),
        Command::CodedVsUncoded(a) => (Experiment::CodedVsUncoded, a),
        Command::NormalizedComparison(a) => (Experiment::NormalizedComparison, a),
        Command::Channel(a) => (Experiment::Channel, a),
    };
    match execute(kind, args) {
        Ok(out) => {
            eprintln!("{kind}: wrote results to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vlcsim {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
