use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfrc_beamtrack::harness::{self, config::ScenarioConfig};
use dfrc_beamtrack::Error;
use log::info;

#[derive(Parser)]
#[command(name = "dfrc-beamtrack", version, about = "Radar-assisted predictive beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace, metrics and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of Monte-Carlo trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Only print errors.
        #[arg(long)]
        quiet: bool,
    },
    /// Write the data behind every figure.
    Figures {
        #[arg(long)]
        out: PathBuf,
        /// Monte-Carlo trials per curve.
        #[arg(long, default_value_t = harness::figures::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the invariant suite.
    Check {
        #[arg(long)]
        quiet: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Infeasible { .. } => 3,
        Error::Io { .. } => 4,
        _ => 1,
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(command: Command) -> dfrc_beamtrack::Result<bool> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            trials,
            quiet,
        } => {
            init_logging(quiet);
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(t) = trials {
                cfg.monte_carlo = t;
            }
            cfg.validate()?;
            let summary = harness::run_to_dir(&cfg, &out)?;
            info!(
                "{} trials x {} epochs: median angle RMSE {:.4} deg, mean sum-rate {:.3} bps/Hz",
                summary.trials, summary.epochs, summary.median_rmse_theta_deg, summary.mean_sum_rate
            );
            if !quiet {
                println!("wrote {}", out.display());
            }
            Ok(true)
        }
        Command::Figures { out, trials, quiet } => {
            init_logging(quiet);
            if trials == 0 {
                return Err(Error::Config("--trials must be at least 1".into()));
            }
            harness::figures::write_all(&out, trials)?;
            if !quiet {
                println!("wrote {}", out.display());
            }
            Ok(true)
        }
        Command::Check { quiet } => {
            init_logging(quiet);
            let results = harness::selfcheck::run_all()?;
            let mut ok = true;
            for r in &results {
                ok &= r.passed;
                if !quiet || !r.passed {
                    println!("{r}");
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
