//! Methods × datasets comparison.
//!
//! Datasets are directories holding `annotations.csv` and `truth.csv`
//! (`datasets = a, b`), or seeded synthetic sets built from the `simulate`
//! keys in the same file, one per entry of `seeds`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crowdkit::AnnotationSet;
use serde::Serialize;
use serde_json::json;

use crate::config::KvConfig;
use crate::error::CliError;
use crate::fuse::{fuse_flat, load_annotations, load_truth, FuseConfig};
use crate::metrics::score;
use crate::output::{write_json, Report, Timer};
use crate::simulate::{simulate_flat, SimConfig};

#[derive(Debug, Serialize)]
struct Row {
    dataset: String,
    method: String,
    error: f64,
    macro_f1: f64,
    wall_time_ms: Option<u64>,
}

struct Dataset {
    name: String,
    annotations: AnnotationSet,
    truth: std::collections::BTreeMap<usize, usize>,
}

fn datasets(kv: &KvConfig, base: &Path) -> Result<(Vec<Dataset>, serde_json::Value), CliError> {
    if let Some(dirs) = kv.list::<String>("datasets")? {
        let mut out = Vec::new();
        for d in &dirs {
            let dir = base.join(d);
            out.push(Dataset {
                name: d.clone(),
                annotations: load_annotations(&dir.join("annotations.csv"), kv.opt("classes")?)?,
                truth: load_truth(&dir.join("truth.csv"))?,
            });
        }
        return Ok((out, json!({ "datasets": dirs })));
    }
    let sim = SimConfig::from_kv(kv)?;
    let seeds = kv.list::<u64>("seeds")?.unwrap_or_else(|| vec![sim.seed]);
    let mut out = Vec::new();
    for &seed in &seeds {
        let d = simulate_flat(&SimConfig { seed, ..sim.clone() })?;
        out.push(Dataset {
            name: format!("synthetic-seed{seed}"),
            annotations: d.annotations,
            truth: d.labels.into_iter().enumerate().collect(),
        });
    }
    Ok((out, json!({ "synthetic": sim, "seeds": seeds })))
}

pub fn run(config: &Path, out: &Path, timing: bool) -> Result<(), CliError> {
    let timer = Timer::start(timing);
    let kv = KvConfig::load(Some(config))?;
    let methods = kv.list::<String>("methods")?.unwrap_or_else(|| vec!["mv".into(), "ds-em".into()]);
    let base = config.parent().map(PathBuf::from).unwrap_or_default();
    let (sets, source) = datasets(&kv, &base)?;
    let mut fuse_cfgs = Vec::new();
    for m in &methods {
        let mut c = kv.clone();
        c.set("method", Some(m.clone()));
        fuse_cfgs.push(FuseConfig::from_kv(&c)?);
    }
    let mut results = Vec::new();
    let mut ranking = serde_json::Map::new();
    for set in &sets {
        let mut rows_here = Vec::new();
        for cfg in &fuse_cfgs {
            let start = Instant::now();
            let fused = fuse_flat(&set.annotations, cfg)?;
            let elapsed = timing.then(|| start.elapsed().as_millis() as u64);
            let m = score(&fused.labels, &set.truth, set.annotations.num_classes())?;
            rows_here.push(Row {
                dataset: set.name.clone(),
                method: cfg.method.clone(),
                error: m.error,
                macro_f1: m.macro_f1,
                wall_time_ms: elapsed,
            });
        }
        // stable sort keeps the configured order among ties
        let mut order: Vec<&Row> = rows_here.iter().collect();
        order.sort_by(|a, b| a.error.total_cmp(&b.error));
        ranking.insert(set.name.clone(), json!(order.iter().map(|r| r.method.clone()).collect::<Vec<_>>()));
        results.extend(rows_here);
    }
    let report = Report {
        method: "bench".into(),
        config: json!({ "methods": methods, "fuse": fuse_cfgs.first().map(|c| json!({"init": c.init, "max_iters": c.max_iters, "tol": c.tol, "seed": c.seed})), "source": source }),
        metrics: json!({ "results": results, "ranking": ranking }),
        params_path: None,
        wall_time_ms: timer.elapsed_ms(),
    };
    write_json(out, &report)
}
