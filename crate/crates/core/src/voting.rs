//! Majority and weighted-majority voting.

use ndarray::Array2;

use crate::domain::AnnotationSet;
use crate::error::{Error, Result};
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVote {
    pub labels: Vec<usize>,
    /// `N × K` vote counts.
    pub counts: Array2<u32>,
    /// Items with zero records; they receive label 0.
    pub unvoted: Vec<usize>,
}

pub fn majority_vote(a: &AnnotationSet) -> MajorityVote {
    let (n, k) = (a.num_items(), a.num_classes());
    let mut counts = Array2::<u32>::zeros((n, k));
    for r in a.records() {
        counts[[r.item, r.label]] += 1;
    }
    let labels = counts.rows().into_iter().map(|row| argmax(row.iter().copied())).collect();
    MajorityVote { labels, counts, unvoted: a.empty_items() }
}

/// `argmax_k Σ_m w_m 1[y_n^(m) = k]`, lowest index on ties.
pub fn weighted_majority_vote<T: Scalar>(a: &AnnotationSet, weights: &[T]) -> Result<Vec<usize>> {
    if weights.len() != a.num_annotators() {
        return Err(Error::LengthMismatch(weights.len(), a.num_annotators()));
    }
    if let Some((index, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= T::zero())) {
        return Err(Error::NegativeEntry { index, value: w.as_f64() });
    }
    if weights.iter().all(|&w| w == T::zero()) {
        return Err(Error::AllZeroWeights);
    }
    let k = a.num_classes();
    let mut scores = vec![T::zero(); k];
    Ok((0..a.num_items())
        .map(|n| {
            scores.iter_mut().for_each(|s| *s = T::zero());
            for &(m, label) in a.item_labels(n) {
                scores[label] += weights[m];
            }
            argmax(scores.iter().copied())
        })
        .collect())
}

/// Log-odds weights `log((K−1) p / (1−p))`, optimal for the one-coin model.
/// Annotators at or below chance get weight zero.
pub fn one_coin_log_odds_weights<T: Scalar>(accuracies: &[T], k: usize) -> Vec<T> {
    let km1 = T::count(k - 1);
    accuracies
        .iter()
        .map(|&p| {
            let p = p.min(T::one() - T::of(1e-12));
            let w = (km1 * p / (T::one() - p)).ln();
            if w > T::zero() {
                w
            } else {
                T::zero()
            }
        })
        .collect()
}
