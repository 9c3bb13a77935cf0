//! Seeded synthetic datasets written to disk.

use std::path::Path;

use crowdkit::io::{write_annotations, write_features, write_labels, write_params, write_sequences, ParamsFile};
use crowdkit::simgen::{gen_ds, gen_e2e, gen_grouped, gen_hmm, ConfusionSpec, PriorSpec, TransitionSpec};
use crowdkit::{AnnotationSet, ConfusionMatrix, DsParams, GenSpec64, Prior};
use ndarray::Array1;
use serde::Serialize;
use serde_json::json;

use crate::config::KvConfig;
use crate::error::CliError;
use crate::output::{write_json, write_with, Report, Timer};

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub kind: String,
    pub classes: usize,
    pub annotators: usize,
    pub items: usize,
    pub p_obs: f64,
    pub seed: u64,
    pub prior: Option<Vec<f64>>,
    pub confusion: String,
    pub gamma: f64,
    pub low: f64,
    pub high: f64,
    pub q: f64,
    pub hammer_accuracy: f64,
    pub sequences: Option<usize>,
    pub stay: Option<f64>,
    pub group_sizes: Option<Vec<usize>>,
    pub group_accuracy: Option<Vec<f64>>,
    pub dim: Option<usize>,
    pub separation: Option<f64>,
}

impl SimConfig {
    pub fn from_kv(c: &KvConfig) -> Result<Self, CliError> {
        let kind = c.str_or("kind", "ds");
        let hmm = kind == "hmm";
        let grouped = kind == "grouped";
        let e2e = kind == "e2e";
        if !matches!(kind.as_str(), "ds" | "hmm" | "grouped" | "e2e") {
            return Err(CliError::BadInput(format!("unknown kind `{kind}` (ds, hmm, grouped, e2e)")));
        }
        let classes = c.get_or("classes", 2)?;
        Ok(Self {
            kind,
            classes,
            annotators: c.require("annotators")?,
            items: c.require("items")?,
            p_obs: c.get_or("p_obs", 1.0)?,
            seed: c.get_or("seed", 0)?,
            prior: c.list("prior")?,
            confusion: c.str_or("confusion", "diag_dominant"),
            gamma: c.get_or("gamma", 0.5f64.max(1.0 / classes as f64 + 0.1))?,
            low: c.get_or("low", 0.6)?,
            high: c.get_or("high", 0.9)?,
            q: c.get_or("q", 0.5)?,
            hammer_accuracy: c.get_or("hammer_accuracy", 1.0)?,
            sequences: if hmm { Some(c.get_or("sequences", 1)?) } else { None },
            stay: if hmm { Some(c.get_or("stay", 0.8)?) } else { None },
            group_sizes: if grouped {
                Some(
                    c.list("group_sizes")?
                        .ok_or_else(|| CliError::BadInput("config is missing `group_sizes`".into()))?,
                )
            } else {
                None
            },
            group_accuracy: if grouped { c.list("group_accuracy")? } else { None },
            dim: if e2e { Some(c.get_or("dim", 2)?) } else { None },
            separation: if e2e { Some(c.get_or("separation", 4.0)?) } else { None },
        })
    }

    pub fn gen_spec(&self) -> Result<GenSpec64, CliError> {
        let confusions = match self.confusion.as_str() {
            "diag_dominant" => ConfusionSpec::DiagDominant { gamma: self.gamma },
            "one_coin" => ConfusionSpec::OneCoin { low: self.low, high: self.high },
            "spammer_hammer" => ConfusionSpec::SpammerHammer { q: self.q, hammer_accuracy: self.hammer_accuracy },
            "confusion_vector" => ConfusionSpec::ConfusionVector { low: self.low, high: self.high },
            other => {
                return Err(CliError::BadInput(format!(
                    "unknown confusion `{other}` (diag_dominant, one_coin, spammer_hammer, confusion_vector)"
                )))
            }
        };
        let mut spec = GenSpec64::new(self.classes, self.annotators, self.items, confusions, self.seed);
        spec.p_obs = self.p_obs;
        if let Some(p) = &self.prior {
            spec.prior = PriorSpec::Given(Prior::new(Array1::from(p.clone()))?);
        }
        Ok(spec)
    }
}

/// Annotations, truth and parameters held in memory.
pub struct Simulated {
    pub annotations: AnnotationSet,
    pub labels: Vec<usize>,
    pub params: DsParams<f64>,
}

/// Flat (non-sequential) dataset for the kinds that have one.
pub fn simulate_flat(cfg: &SimConfig) -> Result<Simulated, CliError> {
    let spec = cfg.gen_spec()?;
    match cfg.kind.as_str() {
        "ds" => {
            let d = gen_ds(&spec)?;
            Ok(Simulated { annotations: d.annotations, labels: d.labels, params: d.params })
        }
        "grouped" => {
            let d = grouped(cfg, &spec)?;
            let params = DsParams::new(d.model.annotator_confusions.clone(), d.model.prior.clone())?;
            Ok(Simulated { annotations: d.annotations, labels: d.labels, params })
        }
        other => Err(CliError::BadInput(format!("kind `{other}` cannot be used here; use ds or grouped"))),
    }
}

fn grouped(cfg: &SimConfig, spec: &GenSpec64) -> Result<crowdkit::simgen::GroupedData<f64>, CliError> {
    let sizes = cfg.group_sizes.clone().unwrap_or_default();
    let acc = cfg.group_accuracy.clone().unwrap_or_else(|| vec![0.8; sizes.len()]);
    if acc.len() != sizes.len() {
        return Err(CliError::BadInput("group_accuracy must list one value per group".into()));
    }
    if let Some(bad) = acc.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(CliError::BadInput(format!("group accuracy {bad} outside [0, 1]")));
    }
    let xi: Vec<ConfusionMatrix<f64>> = acc.iter().map(|&a| ConfusionMatrix::one_coin(cfg.classes, a)).collect();
    Ok(gen_grouped(spec, &sizes, &xi)?)
}

pub fn run(config: &Path, out: &Path, timing: bool) -> Result<(), CliError> {
    let timer = Timer::start(timing);
    let cfg = SimConfig::from_kv(&KvConfig::load(Some(config))?)?;
    let spec = cfg.gen_spec()?;
    let mut metrics = serde_json::Map::new();
    match cfg.kind.as_str() {
        "ds" | "grouped" => {
            let d = simulate_flat(&cfg)?;
            write_with(&out.join("annotations.csv"), |w| write_annotations(w, &d.annotations))?;
            write_with(&out.join("truth.csv"), |w| write_labels(w, &d.labels))?;
            write_with(&out.join("params.json"), |w| write_params(w, &d.params))?;
            metrics.insert("records".into(), json!(d.annotations.len()));
            if cfg.kind == "grouped" {
                let g = grouped(&cfg, &spec)?;
                let groups = json!({
                    "assignment": g.model.assignment,
                    "group_confusions": g.model.group_confusions.iter().map(rows).collect::<Vec<_>>(),
                });
                write_json(&out.join("groups.json"), &groups)?;
            }
        }
        "hmm" => {
            let transition = TransitionSpec::Sticky { stay: cfg.stay.unwrap_or(0.8) };
            let d = gen_hmm(&spec, &transition, cfg.sequences.unwrap_or(1))?;
            write_with(&out.join("sequences.csv"), |w| write_sequences(w, &d.sequences))?;
            // truth in pooled order: sequence by sequence
            write_with(&out.join("truth.csv"), |w| write_labels(w, &d.paths.concat()))?;
            let params = json!({
                "params": ParamsFile::from_params(&d.params.ds_params()),
                "transition": rows(&d.params.transition),
            });
            write_json(&out.join("params.json"), &params)?;
            metrics.insert("records".into(), json!(d.sequences.iter().map(|s| s.annotations().len()).sum::<usize>()));
        }
        "e2e" => {
            let d = gen_e2e(&spec, cfg.dim.unwrap_or(2), cfg.separation.unwrap_or(4.0))?;
            write_with(&out.join("annotations.csv"), |w| write_annotations(w, &d.annotations))?;
            write_with(&out.join("features.csv"), |w| write_features(w, &d.features))?;
            write_with(&out.join("truth.csv"), |w| write_labels(w, &d.labels))?;
            write_with(&out.join("params.json"), |w| write_params(w, &d.params))?;
            metrics.insert("records".into(), json!(d.annotations.len()));
        }
        _ => unreachable!("kind validated when parsing"),
    }
    let report = Report {
        method: "simulate".into(),
        config: json!(cfg),
        metrics: metrics.into(),
        params_path: Some("params.json".into()),
        wall_time_ms: timer.elapsed_ms(),
    };
    write_json(&out.join("report.json"), &report)
}

/// Row-major `[reported][truth]` entries.
pub fn rows(c: &ConfusionMatrix<f64>) -> Vec<Vec<f64>> {
    c.matrix().rows().into_iter().map(|r| r.to_vec()).collect()
}
