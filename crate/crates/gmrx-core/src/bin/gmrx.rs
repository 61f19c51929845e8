//! Experiment CLI: sweeps the collision receivers over SNR/power grids and
//! emits CSV rows (stdout) plus optional CSV/SVG artifacts (`--out`).
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration or
//! usage error.

use clap::{Args, Parser, Subcommand};
use gmrx_core::harness::report::{rows_to_csv, write_outputs};
use gmrx_core::harness::{find_sinr_threshold, run_sweep, ExperimentConfig, Scenario, ThresholdOutcome};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gmrx", version, about = "Collision receiver experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Uncoded BER of the overlapped span, all receivers.
    Uncoded(Common),
    /// LDPC-coded BER/BLER for both packets.
    Coded(Common),
    /// Probability of localizing the second packet's start.
    DetectProb(Common),
    /// Channel-tracking MSE over the overlapped span.
    Mse(Common),
    /// Weakest interferer deficit where the mixture detector still wins.
    Threshold(Common),
}

impl Cmd {
    fn scenario(&self) -> Scenario {
        match self {
            Cmd::Uncoded(_) => Scenario::Uncoded,
            Cmd::Coded(_) => Scenario::Coded,
            Cmd::DetectProb(_) => Scenario::DetectProb,
            Cmd::Mse(_) => Scenario::Mse,
            Cmd::Threshold(_) => Scenario::Threshold,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Cmd::Uncoded(c)
            | Cmd::Coded(c)
            | Cmd::DetectProb(c)
            | Cmd::Mse(c)
            | Cmd::Threshold(c) => c,
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the SNR grid in dB (comma-separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    snr: Option<Vec<f64>>,

    /// Override the interferer power ratio grid in dB (comma-separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    ratio: Option<Vec<f64>>,

    /// Initial trials per grid point.
    #[arg(long)]
    trials: Option<u64>,

    /// Trial cap for the adaptive extension.
    #[arg(long)]
    max_trials: Option<u64>,

    /// Master seed for the paired trial streams.
    #[arg(long)]
    seed: Option<u64>,

    /// Mixture component budget of the detector.
    #[arg(long)]
    kmax: Option<usize>,

    /// Detection threshold on the normalized correlation statistic.
    #[arg(long)]
    tau: Option<f64>,

    /// Directory for results.csv and SVG plots.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(scenario: Scenario, c: &Common) -> gmrx_core::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment.scenario = scenario;
    if let Some(snr) = &c.snr {
        cfg.grid.snr_db = snr.clone();
    }
    if let Some(ratio) = &c.ratio {
        cfg.grid.power_ratio_db = ratio.clone();
    }
    if let Some(trials) = c.trials {
        cfg.experiment.trials = trials;
        cfg.experiment.max_trials = cfg.experiment.max_trials.max(trials);
    }
    if let Some(max_trials) = c.max_trials {
        cfg.experiment.max_trials = max_trials;
    }
    if let Some(seed) = c.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(kmax) = c.kmax {
        cfg.detector.k_max = kmax;
    }
    if let Some(tau) = c.tau {
        cfg.detector.tau = tau;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig, c: &Common) -> gmrx_core::Result<()> {
    let rows = if cfg.experiment.scenario == Scenario::Threshold {
        let (outcome, rows) = find_sinr_threshold(cfg)?;
        match outcome {
            ThresholdOutcome::Found { deficit_db } => {
                eprintln!("threshold: interferer deficit {deficit_db:.2} dB");
            }
            ThresholdOutcome::OutOfRange { max_ratio } => {
                eprintln!("threshold: no crossing in range (max ratio {max_ratio:.2})");
            }
        }
        rows
    } else {
        run_sweep(cfg)?.rows
    };
    print!("{}", rows_to_csv(&rows));
    let dir = c
        .out
        .clone()
        .or_else(|| (!cfg.output.dir.is_empty()).then(|| PathBuf::from(&cfg.output.dir)));
    if let Some(dir) = dir {
        let written = write_outputs(&rows, &dir)?;
        eprintln!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.cmd.common();
    let cfg = match build_config(cli.cmd.scenario(), common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
