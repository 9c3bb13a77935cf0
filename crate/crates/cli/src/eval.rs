use std::io::Write;
use std::path::PathBuf;

use crowdkit::io::read_labels;
use serde_json::json;

use crate::error::CliError;
use crate::fuse::{load_truth, open};
use crate::metrics::score;
use crate::output::{write_json, Report, Timer};

pub struct EvalArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub classes: Option<usize>,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let timer = Timer::start(args.timing);
    let pred = read_labels(open(&args.pred)?)?;
    let metrics = score(&pred, &load_truth(&args.truth)?, args.classes.unwrap_or(0))?;
    let report = Report {
        method: "eval".into(),
        config: json!({ "pred": args.pred, "truth": args.truth, "classes": args.classes }),
        metrics: json!(metrics),
        params_path: None,
        wall_time_ms: timer.elapsed_ms(),
    };
    match &args.out {
        Some(path) => write_json(path, &report),
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::BadInput(e.to_string()))?;
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::BadInput(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}
