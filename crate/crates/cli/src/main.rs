//! `crowdkit`: simulate crowds, fuse their labels, train end-to-end
//! classifiers and score the results.
//!
//! Exit codes: 0 success, 2 malformed input, 3 numerical failure. Errors are
//! printed to stderr as `{"error": {"kind": ..., "message": ...}}`.

mod bench;
mod config;
mod error;
mod eval;
mod fuse;
mod metrics;
mod output;
mod simulate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::KvConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "crowdkit", version, about = "Label integration from crowdsourced annotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Record wall_time_ms as null so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset from a key = value config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse annotations into labels with one of the estimators.
    Fuse {
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Sequence CSV, for hmm-em.
        #[arg(long)]
        sequences: Option<PathBuf>,
        /// mv, wmv, ds-em, one-coin-em, spectral, cnmf-spa, cnmf-opt, ctd, hmm-em, grouped
        #[arg(long)]
        method: Option<String>,
        /// EM initialization: mv, spectral or cnmf-spa.
        #[arg(long)]
        init: Option<String>,
        /// Number of annotator groups for `grouped`.
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground truth `item,label`; adds metrics to the report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a linear classifier with per-annotator confusion layers.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `ccem` (coupled cross-entropy) or `em`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare methods across datasets.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { config, out, common } => simulate::run(&config, &out, !common.no_timing),
        Command::Fuse { annotations, sequences, method, init, groups, seed, config, truth, classes, out, common } => {
            let mut kv = KvConfig::load(config.as_deref())?;
            kv.set("method", method);
            kv.set("init", init);
            kv.set("groups", groups.map(|g| g.to_string()));
            kv.set("seed", seed.map(|s| s.to_string()));
            let args = fuse::FuseArgs { annotations, sequences, truth, classes, out, timing: !common.no_timing };
            fuse::run(&args, &kv)
        }
        Command::Train { features, annotations, config, mode, seed, truth, classes, out, common } => {
            let mut kv = KvConfig::load(config.as_deref())?;
            kv.set("mode", mode);
            kv.set("seed", seed.map(|s| s.to_string()));
            let args = train::TrainArgs { features, annotations, truth, classes, out, timing: !common.no_timing };
            train::run(&args, &kv)
        }
        Command::Eval { pred, truth, classes, out, common } => {
            eval::run(&eval::EvalArgs { pred, truth, classes, out, timing: !common.no_timing })
        }
        Command::Bench { config, out, common } => bench::run(&config, &out, !common.no_timing),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{body}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::BadInput(e.to_string().trim().to_string())),
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
