//! Evaluation metrics.

use crate::align::align_to_reference;
use crate::domain::DsParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fraction of positions where `pred` and `truth` differ.
pub fn error_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let wrong = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Classes whose precision denominator was zero (reported as 0).
    pub precision_undefined: Vec<usize>,
    /// Classes whose recall denominator was zero (reported as 0).
    pub recall_undefined: Vec<usize>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Per-class precision, recall and F1 with unweighted macro averages.
pub fn prf1(pred: &[usize], truth: &[usize], k: usize) -> Result<ClassMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} out of range for K = {k}")));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut out = ClassMetrics {
        precision: vec![0.0; k],
        recall: vec![0.0; k],
        f1: vec![0.0; k],
        precision_undefined: Vec::new(),
        recall_undefined: Vec::new(),
        macro_precision: 0.0,
        macro_recall: 0.0,
        macro_f1: 0.0,
    };
    for c in 0..k {
        if tp[c] + fp[c] == 0 {
            out.precision_undefined.push(c);
        } else {
            out.precision[c] = tp[c] as f64 / (tp[c] + fp[c]) as f64;
        }
        if tp[c] + fneg[c] == 0 {
            out.recall_undefined.push(c);
        } else {
            out.recall[c] = tp[c] as f64 / (tp[c] + fneg[c]) as f64;
        }
        let (p, r) = (out.precision[c], out.recall[c]);
        out.f1[c] = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    out.macro_precision = mean(&out.precision);
    out.macro_recall = mean(&out.recall);
    out.macro_f1 = mean(&out.f1);
    Ok(out)
}

/// Mean relative Frobenius error `‖Â_m Π − A_m‖ / ‖A_m‖` after aligning
/// the estimate's classes to the truth.
pub fn confusion_error<T: Scalar>(estimated: &DsParams<T>, truth: &DsParams<T>) -> Result<T> {
    if estimated.num_annotators() != truth.num_annotators() || estimated.num_classes() != truth.num_classes() {
        return Err(Error::DimensionMismatch("estimated and true parameters differ in shape".into()));
    }
    if truth.num_annotators() == 0 {
        return Err(Error::EmptyInput);
    }
    let aligned = align_to_reference(estimated, truth)?;
    let total: T = aligned
        .confusions
        .iter()
        .zip(&truth.confusions)
        .map(|(e, t)| {
            let diff = (e.matrix() - t.matrix()).mapv(|v| v * v).sum().sqrt();
            diff / t.matrix().mapv(|v| v * v).sum().sqrt()
        })
        .sum();
    Ok(total / T::count(truth.num_annotators()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    /// Points whose zero error was clipped to `1 / (2 n_trials)`.
    pub clipped: Vec<usize>,
}

/// Least-squares fit of `log P_e = log α − β M`.
///
/// Zero error rates are clipped to `1 / (2 n_trials)` when `n_trials` is
/// given; otherwise they are rejected.
pub fn exponent_fit(points: &[(f64, f64)], n_trials: Option<usize>) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints(points.len()));
    }
    let mut clipped = Vec::new();
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (i, &(m, e)) in points.iter().enumerate() {
        let e = if e > 0.0 {
            e
        } else if e == 0.0 && n_trials.is_some_and(|t| t > 0) {
            clipped.push(i);
            0.5 / n_trials.unwrap() as f64
        } else {
            return Err(Error::NonPositiveError(i));
        };
        xs.push(m);
        ys.push(e.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all points share the same M".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ExponentFit { alpha: intercept.exp(), beta: -slope, r_squared, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ConfusionMatrix, Permutation, Prior};
    use ndarray::array;

    #[test]
    fn error_rate_examples() {
        assert_eq!(error_rate(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(error_rate(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), 1.0);
        assert_eq!(error_rate(&[0, 1, 1, 0], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(error_rate(&[0], &[0, 1]), Err(Error::LengthMismatch(1, 2)));
    }

    #[test]
    fn prf1_perfect_and_missing_class() {
        let m = prf1(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.macro_f1, 1.0);
        let m = prf1(&[0, 0, 1], &[0, 2, 1], 3).unwrap();
        assert_eq!(m.recall[2], 0.0);
        assert_eq!(m.precision_undefined, vec![2]);
    }

    #[test]
    fn prf1_hand_computed() {
        // truth:  0 0 0 1 1 2 2 2 2
        // pred:   0 0 1 1 2 2 2 0 2
        let truth = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let pred = [0, 0, 1, 1, 2, 2, 2, 0, 2];
        let m = prf1(&pred, &truth, 3).unwrap();
        // class 0: tp 2, fp 1, fn 1; class 1: tp 1, fp 1, fn 1; class 2: tp 3, fp 1, fn 1
        assert!((m.precision[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.precision[1] - 0.5).abs() < 1e-15);
        assert!((m.f1[2] - 0.75).abs() < 1e-15);
        let expect = (2.0 / 3.0 + 0.5 + 0.75) / 3.0;
        assert!((m.macro_f1 - expect).abs() < 1e-15);
        assert!(m.macro_f1 <= m.f1.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn confusion_error_examples() {
        let a = ConfusionMatrix::new(array![[0.8, 0.3], [0.2, 0.7]]).unwrap();
        let truth = DsParams::new(vec![a.clone(), a], Prior::uniform(2)).unwrap();
        assert!(confusion_error(&truth, &truth).unwrap() < 1e-15);
        let swapped = truth.permute_classes(&Permutation::new(vec![1, 0]).unwrap());
        assert!(confusion_error(&swapped, &truth).unwrap() < 1e-15);

        let b = ConfusionMatrix::new(array![[0.7, 0.3], [0.3, 0.7]]).unwrap();
        let est = DsParams::new(vec![b.clone(), b], Prior::uniform(2)).unwrap();
        let direct = (0.1f64 * 0.1 * 2.0).sqrt() / (0.64f64 + 0.09 + 0.04 + 0.49).sqrt();
        assert!((confusion_error(&est, &truth).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn exponent_fit_exact() {
        let pts: Vec<(f64, f64)> = (1..8).map(|m| (m as f64, (-0.2 * m as f64).exp())).collect();
        let fit = exponent_fit(&pts, None).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-9);
        assert!((fit.beta - 0.2).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_fit_errors_and_clipping() {
        assert_eq!(exponent_fit(&[(1.0, 0.1), (2.0, 0.05)], None), Err(Error::InsufficientPoints(2)));
        let pts = [(1.0, 0.1), (2.0, 0.05), (3.0, 0.0)];
        assert_eq!(exponent_fit(&pts, None), Err(Error::NonPositiveError(2)));
        let fit = exponent_fit(&pts, Some(100)).unwrap();
        assert_eq!(fit.clipped, vec![2]);
        assert!(fit.beta > 0.0);
    }
}
