use std::collections::BTreeMap;

use crowdkit::evalkit::prf1;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct LabelMetrics {
    pub error: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_class_f1: Vec<f64>,
    pub evaluated: usize,
}

/// Scores predictions on the items that have ground truth.
pub fn score(pred: &[usize], truth: &BTreeMap<usize, usize>, k: usize) -> Result<LabelMetrics, CliError> {
    let mut p = Vec::with_capacity(truth.len());
    let mut t = Vec::with_capacity(truth.len());
    for (&item, &label) in truth {
        let guess = pred.get(item).ok_or_else(|| {
            CliError::BadInput(format!("truth refers to item {item}, predictions cover {}", pred.len()))
        })?;
        p.push(*guess);
        t.push(label);
    }
    if t.is_empty() {
        return Err(CliError::BadInput("ground truth is empty".into()));
    }
    let k = k.max(p.iter().chain(&t).max().map_or(0, |m| m + 1));
    let m = prf1(&p, &t, k)?;
    let wrong = p.iter().zip(&t).filter(|(a, b)| a != b).count();
    Ok(LabelMetrics {
        error: wrong as f64 / t.len() as f64,
        macro_f1: m.macro_f1,
        macro_precision: m.macro_precision,
        macro_recall: m.macro_recall,
        per_class_f1: m.f1,
        evaluated: t.len(),
    })
}
