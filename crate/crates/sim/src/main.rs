use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamsync_core::estimators::ReceiverModel;
use beamsync_core::joint::{joint_estimate, JointOptions};
use beamsync_core::synthesis::{draw_ground_truth, synthesize_burst};
use beamsync_sim::burst_io::{read_burst, receiver_delays, write_burst};
use beamsync_sim::config::ConfigFile;
use beamsync_sim::harness::{crlb_table, render_crlb_csv, render_csv, run_sweep_with, trial_rng, CsvOptions};
use beamsync_sim::selftest::run_selftest;
use beamsync_sim::{Error, Result};
use clap::{Parser, Subcommand};

/// Multi-station CFO and channel estimation simulator.
#[derive(Parser)]
#[command(name = "beamsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one burst and write it as `<out>` plus `<out>.toml`.
    Simulate {
        /// TOML config; the reference scenario when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Trial index selecting the random stream.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Overrides the scenario's target SINR, dB.
        #[arg(long, allow_hyphen_values = true)]
        sinr: Option<f64>,
    },
    /// Run the joint estimator on a burst file and print the result as TOML.
    Estimate {
        burst: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over SINR, written as CSV.
    Sweep {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Output CSV, rewritten after every SINR point; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Adds the wall_time_s column (not reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-station CRLB of one drawn scenario, written as CSV.
    Crlb {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn load(config: Option<&Path>) -> Result<ConfigFile> {
    config.map_or_else(|| Ok(ConfigFile::default()), ConfigFile::load)
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            trial,
            sinr,
        } => {
            let mut scenario = load(config.as_deref())?.scenario_config()?;
            if let Some(s) = sinr {
                scenario.target_sinr_db = s;
            }
            scenario.resolve_sigma_c2()?;
            let mut rng = trial_rng(scenario.seed, trial);
            let truth = draw_ground_truth(&scenario, &mut rng)?;
            let burst = synthesize_burst(&scenario, &truth, &mut rng)?;
            write_burst(&burst, &out)?;
            eprintln!("wrote {} samples to {}", burst.samples.len(), out.display());
        }
        Command::Estimate {
            burst,
            epsilon,
            max_iter,
            out,
        } => {
            let burst = read_burst(&burst)?;
            let delays = receiver_delays(&burst)?;
            let model = ReceiverModel::from_config(&burst.config, &delays)?;
            let d = JointOptions::default();
            let options = JointOptions {
                epsilon: epsilon.unwrap_or(d.epsilon),
                max_iter: max_iter.unwrap_or(d.max_iter),
            };
            let est = joint_estimate(&burst.samples, &model, &options)?;
            let text = toml::to_string(&est).map_err(|e| Error::Config(format!("result: {e}")))?;
            write_out(out.as_deref(), &text)?;
        }
        Command::Sweep {
            config,
            out,
            timing,
            workers,
            trials,
            seed,
        } => {
            let mut spec = load(config.as_deref())?.sweep_spec()?;
            if workers.is_some() {
                spec.workers = workers;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let opts = CsvOptions {
                timing,
                hz: spec.sample_rate_hz.is_some(),
            };
            let rows = run_sweep_with(&spec, |partial| match &out {
                Some(path) => write_out(Some(path), &render_csv(partial, opts)?),
                None => Ok(()),
            })?;
            if out.is_none() {
                write_out(None, &render_csv(&rows, opts)?)?;
            }
        }
        Command::Crlb { config, out, trial } => {
            let scenario = load(config.as_deref())?.scenario_config()?;
            let table = crlb_table(&scenario, trial)?;
            write_out(out.as_deref(), &render_crlb_csv(&table)?)?;
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
