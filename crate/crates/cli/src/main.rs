//! `bellforge` — command-line driver for the certification pipeline:
//! question-set generation, Bell audits (exact and sampled), self-test
//! extraction, remote-state-preparation reports, and the tail-bound oracle.
//!
//! Exit codes: 0 when every gate passes, 1 when a gate fails, 2 on errors
//! (bad config, malformed files, invalid arguments).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "bellforge", version, about = "Bell certification pipeline")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed override for all derived randomness streams.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory for report files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw or validate the special set and expand it to the full question set.
    GenQuestions,
    /// Exact (and optionally sampled) Bell audit of a strategy.
    Audit {
        /// Pass when the exact epsilon is at most this value
        /// (default: config tolerance).
        #[arg(long, value_name = "FLOAT")]
        gate: Option<f64>,
        /// Rounds sampled per question cell (default: config value; 0 skips
        /// the sampled audit).
        #[arg(long, value_name = "N")]
        trials: Option<usize>,
        /// Confidence parameter for Hoeffding radii (default: config value).
        #[arg(long, value_name = "FLOAT")]
        alpha: Option<f64>,
    },
    /// Relation residuals and extraction-isometry distances.
    Selftest {
        /// Pass when every residual and distance is at most this value
        /// (default: config tolerance).
        #[arg(long, value_name = "FLOAT")]
        gate: Option<f64>,
    },
    /// Remote-state-preparation report for one special question.
    Prepare {
        /// The special question to prepare against (must be in 𝒮).
        #[arg(long, value_name = "DIGITS")]
        chi: String,
        /// Pass when the exceedance probability is at most this value
        /// (default: 4·threshold, the tail bound).
        #[arg(long, value_name = "FLOAT")]
        gate: Option<f64>,
        /// Trace-distance threshold (default: γ^{2/3} from the measured
        /// product distances).
        #[arg(long, value_name = "FLOAT")]
        threshold: Option<f64>,
    },
    /// Tail-bound oracle on random synthetic vector families.
    Oracle {
        /// Number of random families to sweep (default 1000).
        #[arg(long, value_name = "N")]
        trials: Option<usize>,
        /// Exponent in the threshold δ^c (default 2/3).
        #[arg(long, value_name = "FLOAT")]
        c: Option<f64>,
    },
}

fn init_threads() {
    if let Ok(raw) = std::env::var("BELLFORGE_THREADS") {
        match raw.parse::<usize>() {
            Ok(k) if k >= 1 => {
                // Ignore the error if a pool already exists (e.g. in tests).
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring BELLFORGE_THREADS={raw:?} (want a positive integer)"),
        }
    }
}

fn run(cli: &Cli) -> bellforge_core::Result<bool> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    match &cli.cmd {
        Cmd::GenQuestions => commands::gen_questions(&cfg, &cli.out),
        Cmd::Audit {
            gate,
            trials,
            alpha,
        } => commands::audit(&cfg, &cli.out, *gate, *trials, *alpha),
        Cmd::Selftest { gate } => commands::selftest(&cfg, &cli.out, *gate),
        Cmd::Prepare {
            chi,
            gate,
            threshold,
        } => commands::prepare(&cfg, &cli.out, chi, *gate, *threshold),
        Cmd::Oracle { trials, c } => commands::oracle(&cfg, &cli.out, *trials, *c),
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
