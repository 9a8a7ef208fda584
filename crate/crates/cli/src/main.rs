use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use csk_core::composition::{compose, CompositionMode, Profile};
use csk_core::scenario_bridge::{forward_bridge_stats, BridgeConfig, ScoreDistribution};
use csk_core::{calibrate_tube, certificate, invert_eps, min_sample_size, Allocation, NominalPredictor};
use serde::Serialize;

mod reproduce;
mod tasks_csv;

/// Finite-sample calibration certificates, risk budgets and tube reproduction.
#[derive(Parser, Debug)]
#[command(name = "csk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Confidence of an order-statistic calibration block.
    Certificate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        eps: f64,
    },
    /// Solve for eps given (m, r, delta), or for the smallest m given (r, eps, delta).
    Invert {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: f64,
    },
    /// Compose blocks into a joint certificate.
    Compose {
        /// Named profile: increasing, uniform or decreasing.
        #[arg(long, conflicts_with_all = ["r", "eps"])]
        profile: Option<String>,
        /// Calibration sample size shared by all blocks.
        #[arg(long, default_value_t = 120)]
        m: usize,
        /// Comma-separated ranks, one per block.
        #[arg(long, value_delimiter = ',', requires = "eps")]
        r: Vec<usize>,
        /// Comma-separated eps values, one per block.
        #[arg(long, value_delimiter = ',', requires = "r")]
        eps: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Additive)]
        mode: Mode,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Calibrate a multi-step output tube from a CSV of tasks.
    Tube {
        /// CSV with columns y0, u_1..u_H, y_1..y_H (header row optional).
        #[arg(long)]
        calibration: PathBuf,
        /// Profile label, or path to an allocation JSON file.
        #[arg(long)]
        allocation: String,
        #[arg(long, default_value_t = csk_core::tube::A_HAT)]
        a_hat: f64,
        #[arg(long, default_value_t = csk_core::tube::B_HAT)]
        b_hat: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo check of the discard-set bridge and the violation law.
    ScenarioVerify {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 50_000)]
        trials: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "normal")]
        distribution: ScoreDistribution,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Regenerate the tables and figure data of the numerical study.
    Reproduce(reproduce::Args),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Additive,
    Multiplicative,
}

impl From<Mode> for CompositionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Additive => CompositionMode::Additive,
            Mode::Multiplicative => CompositionMode::Multiplicative,
        }
    }
}

/// Exit 1 for internal invariant failures, exit 2 for bad input.
#[derive(Debug)]
pub enum Failure {
    Invariant(String),
    Usage(String),
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure::Usage(msg.to_string())
    }
}

impl From<csk_core::Error> for Failure {
    fn from(e: csk_core::Error) -> Self {
        use csk_core::Error::*;
        match e {
            Invariant(_) | ContainmentViolated { .. } | Convergence { .. } => Failure::Invariant(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Writes `text` to `path`, or stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn to_json<S: Serialize>(value: &S) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Invariant(e.to_string()))
}

#[derive(Serialize)]
struct CertificateOut {
    m: usize,
    r: usize,
    eps: f64,
    delta: f64,
    confidence: f64,
}

fn load_allocation(spec: &str, rows: usize) -> CliResult<Allocation<f64>> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{spec}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{spec}: {e}")));
    }
    Ok(Profile::parse(spec)?.allocation(rows)?)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Certificate { m, r, eps } => {
            let b = certificate(m, r, eps)?;
            let out = CertificateOut {
                m: b.m,
                r: b.r,
                eps: b.eps,
                delta: b.delta,
                confidence: b.confidence(),
            };
            emit(&to_json(&out)?, None)
        }
        Command::Invert { m, r, eps, delta } => {
            let value = match (m, eps) {
                (Some(m), None) => serde_json::json!({ "m": m, "r": r, "delta": delta, "eps": invert_eps(m, r, delta)? }),
                (None, Some(eps)) => {
                    serde_json::json!({ "r": r, "eps": eps, "delta": delta, "m": min_sample_size(r, eps, delta)? })
                }
                _ => return Err(Failure::usage("give exactly one of --m (solve eps) or --eps (solve m)")),
            };
            emit(&to_json(&value)?, None)
        }
        Command::Compose { profile, m, r, eps, mode, output } => {
            let alloc = match profile {
                Some(label) => {
                    let alloc: Allocation<f64> = Profile::parse(&label)?.allocation(m)?;
                    if matches!(mode, Mode::Multiplicative) {
                        compose(alloc.blocks.clone(), mode.into())?.with_label(alloc.label)
                    } else {
                        alloc
                    }
                }
                None => {
                    if r.is_empty() {
                        return Err(Failure::usage("give --profile or both --r and --eps"));
                    }
                    if r.len() != eps.len() {
                        return Err(Failure::usage(format!("{} ranks but {} eps values", r.len(), eps.len())));
                    }
                    let blocks = r
                        .iter()
                        .zip(&eps)
                        .map(|(&r, &e)| certificate(m, r, e))
                        .collect::<Result<Vec<_>, _>>()?;
                    compose(blocks, mode.into())?
                }
            };
            emit(&to_json(&alloc)?, output.as_deref())
        }
        Command::Tube {
            calibration,
            allocation,
            a_hat,
            b_hat,
            output,
        } => {
            let alloc_horizon = |rows| load_allocation(&allocation, rows);
            let (tasks, alloc) = tasks_csv::read_tasks(&calibration, alloc_horizon)?;
            let predictor = NominalPredictor::new(a_hat, b_hat, alloc.len())?;
            let tube = calibrate_tube(&predictor, &tasks, &alloc)?;
            emit(&to_json(&tube)?, output.as_deref())
        }
        Command::ScenarioVerify {
            m,
            r,
            trials,
            seed,
            distribution,
            output,
        } => {
            let stats = forward_bridge_stats(&BridgeConfig::new(m, r, trials, seed).with_distribution(distribution))?;
            emit(&to_json(&stats)?, output.as_deref())?;
            if stats.containment_violations > 0 {
                return Err(Failure::Invariant(format!(
                    "containment violated in {} trial(s)",
                    stats.containment_violations
                )));
            }
            Ok(())
        }
        Command::Reproduce(args) => reproduce::run(args),
    }
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("CSK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("CSK_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invariant(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
