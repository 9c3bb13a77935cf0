//! Label fusion: annotations in, labels and parameters out.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use crowdkit::groups::fit_hierarchical;
use crowdkit::io::{read_annotations, read_sequences, read_sparse_labels, write_labels, ParamsFile, Shape};
use crowdkit::moments::{cnmf_opt, cnmf_spa, ctd_fit, pairwise_stats, triple_stats, Partition};
use crowdkit::seqhmm::{fit_hmm_em, viterbi, HmmInit};
use crowdkit::spectral::fit_one_coin_spectral;
use crowdkit::voting::{majority_vote, one_coin_log_odds_weights, weighted_majority_vote};
use crowdkit::{
    e_step, fit_em, map_decode, AnnotationSet, ConfusionMatrix, DsParams, EmConfig, EmInit, EmVariant, Prior,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::KvConfig;
use crate::error::CliError;
use crate::metrics::score;
use crate::output::{write_json, write_with, Report, Timer};
use crate::simulate::rows;

pub const METHODS: [&str; 10] =
    ["mv", "wmv", "ds-em", "one-coin-em", "spectral", "cnmf-spa", "cnmf-opt", "ctd", "hmm-em", "grouped"];

#[derive(Debug, Clone, Serialize)]
pub struct FuseConfig {
    pub method: String,
    pub init: String,
    pub max_iters: usize,
    pub tol: f64,
    pub smoothing: f64,
    pub min_colabels: usize,
    pub moment_iters: usize,
    pub moment_tol: f64,
    pub groups: Option<usize>,
    pub seed: u64,
}

impl FuseConfig {
    pub fn from_kv(c: &KvConfig) -> Result<Self, CliError> {
        let method = c.str_or("method", "ds-em");
        if !METHODS.contains(&method.as_str()) {
            return Err(CliError::BadInput(format!("unknown method `{method}` ({})", METHODS.join(", "))));
        }
        let init = c.str_or("init", "mv");
        if !matches!(init.as_str(), "mv" | "spectral" | "cnmf-spa") {
            return Err(CliError::BadInput(format!("unknown init `{init}` (mv, spectral, cnmf-spa)")));
        }
        let groups = c.opt("groups")?;
        if method == "grouped" && groups.is_none() {
            return Err(CliError::BadInput("method grouped needs `groups`".into()));
        }
        Ok(Self {
            groups: if method == "grouped" { groups } else { None },
            method,
            init,
            max_iters: c.get_or("max_iters", 500)?,
            tol: c.get_or("tol", 1e-8)?,
            smoothing: c.get_or("smoothing", 1e-12)?,
            min_colabels: c.get_or("min_colabels", crowdkit::moments::DEFAULT_MIN_COLABELS)?,
            moment_iters: c.get_or("moment_iters", 500)?,
            moment_tol: c.get_or("moment_tol", 1e-10)?,
            seed: c.get_or("seed", 0)?,
        })
    }

    fn em(&self) -> EmConfig<f64> {
        let init = match self.init.as_str() {
            "spectral" => EmInit::FromSpectral,
            "cnmf-spa" => EmInit::FromCnmfSpa,
            _ => EmInit::FromMajorityVote,
        };
        EmConfig {
            max_iters: self.max_iters,
            rel_tol: self.tol,
            smoothing_floor: self.smoothing,
            ..EmConfig::default()
        }
        .with_init(init)
    }
}

/// What a fusion method produced.
pub struct Fused {
    pub labels: Vec<usize>,
    pub params: Option<Value>,
    pub diagnostics: BTreeMap<String, Value>,
}

fn ds_json(p: &DsParams<f64>) -> Value {
    json!(ParamsFile::from_params(p))
}

fn decoded(a: &AnnotationSet, p: DsParams<f64>, diagnostics: BTreeMap<String, Value>) -> Result<Fused, CliError> {
    let labels = map_decode(&e_step(a, &p)?);
    Ok(Fused { labels, params: Some(ds_json(&p)), diagnostics })
}

fn spa(a: &AnnotationSet, cfg: &FuseConfig) -> Result<DsParams<f64>, CliError> {
    Ok(cnmf_spa(&pairwise_stats::<f64>(a, cfg.min_colabels), &Partition::Auto)?)
}

/// Runs a non-sequential method.
pub fn fuse_flat(a: &AnnotationSet, cfg: &FuseConfig) -> Result<Fused, CliError> {
    let mut diag = BTreeMap::new();
    match cfg.method.as_str() {
        "mv" => {
            let mv = majority_vote(a);
            diag.insert("unvoted_items".into(), json!(mv.unvoted.len()));
            Ok(Fused { labels: mv.labels, params: None, diagnostics: diag })
        }
        "wmv" => {
            // weights are log-odds of one-coin EM accuracies
            let fit = fit_em(a, &cfg.em().with_variant(EmVariant::OneCoin))?;
            let acc: Vec<f64> = fit.params.confusions.iter().map(|c| c.get(0, 0)).collect();
            let weights = one_coin_log_odds_weights(&acc, a.num_classes());
            let labels = weighted_majority_vote(a, &weights)?;
            diag.insert("weights".into(), json!(weights));
            Ok(Fused { labels, params: Some(ds_json(&fit.params)), diagnostics: diag })
        }
        "ds-em" | "one-coin-em" => {
            let variant = if cfg.method == "ds-em" { EmVariant::General } else { EmVariant::OneCoin };
            let fit = fit_em(a, &cfg.em().with_variant(variant))?;
            diag.insert("iterations".into(), json!(fit.iterations));
            diag.insert("converged".into(), json!(fit.converged));
            diag.insert("log_likelihood".into(), json!(fit.loglik_trace.last()));
            diag.insert("empty_annotators".into(), json!(fit.empty_annotators));
            Ok(Fused { labels: map_decode(&fit.posterior), params: Some(ds_json(&fit.params)), diagnostics: diag })
        }
        "spectral" => {
            let fit = fit_one_coin_spectral::<f64>(a)?;
            let confusions = fit.p_hat.iter().map(|&p| ConfusionMatrix::one_coin(2, p)).collect();
            let params = DsParams::new(confusions, Prior::uniform(2))?;
            diag.insert("kappa_hat".into(), json!(fit.kappa_hat));
            diag.insert("fully_observed".into(), json!(fit.fully_observed));
            diag.insert("converged".into(), json!(fit.converged));
            Ok(Fused { labels: fit.labels, params: Some(ds_json(&params)), diagnostics: diag })
        }
        "cnmf-spa" => decoded(a, spa(a, cfg)?, diag),
        "cnmf-opt" => {
            let stats = pairwise_stats::<f64>(a, cfg.min_colabels);
            let init = cnmf_spa(&stats, &Partition::Auto)?;
            let fit = cnmf_opt(&stats, &init, cfg.moment_iters, cfg.moment_tol)?;
            diag.insert("iterations".into(), json!(fit.iterations));
            diag.insert("objective".into(), json!(fit.objective_trace.last()));
            decoded(a, fit.params, diag)
        }
        "ctd" => {
            let init = match spa(a, cfg) {
                Ok(p) => {
                    diag.insert("init".into(), json!("cnmf-spa"));
                    p
                }
                Err(_) => {
                    diag.insert("init".into(), json!("diagonal"));
                    DsParams::diagonal(a.num_annotators(), a.num_classes(), 0.7)
                }
            };
            let fit = ctd_fit(&triple_stats::<f64>(a, cfg.min_colabels), &init, cfg.moment_iters, cfg.moment_tol)?;
            diag.insert("iterations".into(), json!(fit.iterations));
            diag.insert("objective".into(), json!(fit.objective_trace.last()));
            decoded(a, fit.params, diag)
        }
        "grouped" => {
            let l = cfg.groups.unwrap_or(1);
            let fit = fit_hierarchical(a, l, &cfg.em(), cfg.seed)?;
            let params = json!({
                "assignment": fit.model.assignment,
                "prior": fit.model.prior.vector().to_vec(),
                "group_confusions": fit.model.group_confusions.iter().map(rows).collect::<Vec<_>>(),
                "annotator_confusions": fit.model.annotator_confusions.iter().map(rows).collect::<Vec<_>>(),
            });
            Ok(Fused { labels: fit.labels, params: Some(params), diagnostics: diag })
        }
        "hmm-em" => Err(CliError::BadInput("hmm-em reads sequences; pass --sequences".into())),
        other => Err(CliError::BadInput(format!("unknown method `{other}`"))),
    }
}

fn fuse_sequences(path: &Path, classes: Option<usize>, cfg: &FuseConfig) -> Result<Fused, CliError> {
    let seqs = read_sequences(open(path)?, None, classes)?;
    if seqs.is_empty() {
        return Err(CliError::BadInput("sequence file is empty".into()));
    }
    let fit = fit_hmm_em(&seqs, &HmmInit::FromDsEm, &cfg.em())?;
    let mut labels = Vec::new();
    for s in &seqs {
        labels.extend(viterbi(s, &fit.params)?);
    }
    let mut diag = BTreeMap::new();
    diag.insert("iterations".into(), json!(fit.iterations));
    diag.insert("converged".into(), json!(fit.converged));
    diag.insert("log_likelihood".into(), json!(fit.loglik_trace.last()));
    let params = json!({
        "params": ParamsFile::from_params(&fit.params.ds_params()),
        "transition": rows(&fit.params.transition),
    });
    Ok(Fused { labels, params: Some(params), diagnostics: diag })
}

pub fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::BadInput(format!("cannot open {}: {e}", path.display())))
}

pub fn load_annotations(path: &Path, classes: Option<usize>) -> Result<AnnotationSet, CliError> {
    Ok(read_annotations(open(path)?, Shape { num_classes: classes, ..Shape::default() })?)
}

pub fn load_truth(path: &Path) -> Result<BTreeMap<usize, usize>, CliError> {
    Ok(read_sparse_labels(open(path)?)?)
}

pub struct FuseArgs {
    pub annotations: Option<PathBuf>,
    pub sequences: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub classes: Option<usize>,
    pub out: PathBuf,
    pub timing: bool,
}

pub fn run(args: &FuseArgs, kv: &KvConfig) -> Result<(), CliError> {
    let timer = Timer::start(args.timing);
    let cfg = FuseConfig::from_kv(kv)?;
    let (fused, k) = match (&args.annotations, &args.sequences, cfg.method.as_str()) {
        (_, Some(seq), "hmm-em") => {
            let f = fuse_sequences(seq, args.classes, &cfg)?;
            let k = args.classes.unwrap_or(0);
            (f, k)
        }
        (_, None, "hmm-em") => return Err(CliError::BadInput("hmm-em needs --sequences".into())),
        (Some(ann), None, _) => {
            let a = load_annotations(ann, args.classes)?;
            let k = a.num_classes();
            (fuse_flat(&a, &cfg)?, k)
        }
        (None, _, m) => return Err(CliError::BadInput(format!("method {m} needs --annotations"))),
        (Some(_), Some(_), m) => return Err(CliError::BadInput(format!("method {m} does not read --sequences"))),
    };
    let mut metrics = serde_json::Map::new();
    if let Some(t) = &args.truth {
        let m = score(&fused.labels, &load_truth(t)?, k)?;
        if let Value::Object(o) = json!(m) {
            metrics.extend(o);
        }
    }
    for (key, v) in fused.diagnostics {
        metrics.insert(key, v);
    }
    write_with(&args.out.join("labels.csv"), |w| write_labels(w, &fused.labels))?;
    let params_path = match &fused.params {
        Some(p) => {
            write_json(&args.out.join("params.json"), p)?;
            Some("params.json".to_string())
        }
        None => None,
    };
    let mut config = json!(cfg);
    config["annotations"] = json!(args.annotations);
    config["sequences"] = json!(args.sequences);
    config["truth"] = json!(args.truth);
    config["classes"] = json!(args.classes);
    let report = Report {
        method: cfg.method.clone(),
        config,
        metrics: metrics.into(),
        params_path,
        wall_time_ms: timer.elapsed_ms(),
    };
    write_json(&args.out.join("report.json"), &report)
}
