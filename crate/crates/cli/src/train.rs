//! End-to-end classifier training from features and annotations.

use std::path::PathBuf;

use crowdkit::e2e_ccem::{train_ccem, train_em_e2e, CcemModel, TrainConfig};
use crowdkit::io::{read_features, write_labels};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::KvConfig;
use crate::error::CliError;
use crate::fuse::{load_annotations, load_truth, open};
use crate::metrics::score;
use crate::output::{write_json, write_with, Report, Timer};
use crate::simulate::rows;

#[derive(Debug, Clone, Serialize)]
pub struct TrainSettings {
    pub mode: String,
    pub step_size: f64,
    pub iterations: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub batch_size: Option<usize>,
    pub em_iters: Option<usize>,
}

impl TrainSettings {
    pub fn from_kv(c: &KvConfig) -> Result<Self, CliError> {
        let mode = c.str_or("mode", "ccem");
        if !matches!(mode.as_str(), "ccem" | "em") {
            return Err(CliError::BadInput(format!("unknown mode `{mode}` (ccem, em)")));
        }
        let d = TrainConfig::<f64>::default();
        Ok(Self {
            em_iters: if mode == "em" { Some(c.get_or("em_iters", 20)?) } else { None },
            mode,
            step_size: c.get_or("step_size", d.step_size)?,
            iterations: c.get_or("iterations", d.iterations)?,
            beta: c.get_or("beta", d.beta)?,
            epsilon: c.get_or("epsilon", d.epsilon)?,
            seed: c.get_or("seed", d.seed)?,
            init_scale: c.get_or("init_scale", d.init_scale)?,
            batch_size: c.opt("batch_size")?,
        })
    }

    fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            step_size: self.step_size,
            iterations: self.iterations,
            beta: self.beta,
            epsilon: self.epsilon,
            seed: self.seed,
            init_scale: self.init_scale,
            batch_size: self.batch_size,
        }
    }
}

fn model_json(m: &CcemModel<f64>) -> Value {
    json!({
        "weights": m.w.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        "bias": m.b.to_vec(),
        "confusion_logits": m.z.iter().map(|z| z.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "confusions": (0..m.num_annotators()).map(|i| rows(&m.confusion(i))).collect::<Vec<_>>(),
    })
}

pub struct TrainArgs {
    pub features: PathBuf,
    pub annotations: PathBuf,
    pub truth: Option<PathBuf>,
    pub classes: Option<usize>,
    pub out: PathBuf,
    pub timing: bool,
}

pub fn run(args: &TrainArgs, kv: &KvConfig) -> Result<(), CliError> {
    let timer = Timer::start(args.timing);
    let settings = TrainSettings::from_kv(kv)?;
    let features = read_features::<f64, _>(open(&args.features)?)?;
    let a = load_annotations(&args.annotations, args.classes)?;
    let cfg = settings.train_config();
    let mut metrics = serde_json::Map::new();
    let model = if settings.mode == "em" {
        let fit = train_em_e2e(&features, &a, &cfg, settings.em_iters.unwrap_or(20))?;
        metrics.insert("log_likelihood".into(), json!(fit.loglik_trace.last()));
        fit.model
    } else {
        let fit = train_ccem(&features, &a, &cfg)?;
        metrics.insert("final_loss".into(), json!(fit.loss_trace.last()));
        fit.model
    };
    let labels = model.predict_labels(&features)?;
    if let Some(t) = &args.truth {
        if let Value::Object(o) = json!(score(&labels, &load_truth(t)?, a.num_classes())?) {
            metrics.extend(o);
        }
    }
    write_json(&args.out.join("model.json"), &model_json(&model))?;
    write_with(&args.out.join("labels.csv"), |w| write_labels(w, &labels))?;
    let mut config = json!(settings);
    config["features"] = json!(args.features);
    config["annotations"] = json!(args.annotations);
    config["truth"] = json!(args.truth);
    config["classes"] = json!(args.classes);
    let report = Report {
        method: format!("train-{}", settings.mode),
        config,
        metrics: metrics.into(),
        params_path: Some("model.json".into()),
        wall_time_ms: timer.elapsed_ms(),
    };
    write_json(&args.out.join("report.json"), &report)
}
