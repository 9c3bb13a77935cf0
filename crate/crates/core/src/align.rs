//! Resolving the latent-class permutation ambiguity.
//!
//! Both modes reduce to a linear assignment problem on a `K × K` score
//! matrix. Small `K` is solved by exhaustive lexicographic enumeration so
//! ties resolve to the lexicographically smallest mapping; larger `K` uses
//! the Hungarian algorithm.

use ndarray::Array2;

use crate::domain::{ConfusionMatrix, DsParams, Permutation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const BRUTE_FORCE_MAX_K: usize = 8;

#[derive(Debug, Clone, Copy)]
pub enum AlignMode<'a, T> {
    /// Maximize the summed diagonal mass `Σ_m trace(A_m Π)`.
    DiagDominant,
    /// Minimize `Σ_m ‖Â_m Π − A_m‖_F²` against reference matrices.
    Reference(&'a [ConfusionMatrix<T>]),
}

/// Column permutation that best aligns `estimates` under `mode`.
///
/// Apply it with [`ConfusionMatrix::permute_columns`] or
/// [`DsParams::permute_classes`].
pub fn align_permutation<T: Scalar>(estimates: &[ConfusionMatrix<T>], mode: AlignMode<'_, T>) -> Result<Permutation> {
    let first = estimates.first().ok_or(Error::EmptyInput)?;
    let k = first.num_classes();
    // gain[j][i]: benefit of placing estimated column i at position j
    let mut gain = Array2::<T>::zeros((k, k));
    match mode {
        AlignMode::DiagDominant => {
            for a in estimates {
                for j in 0..k {
                    for i in 0..k {
                        gain[[j, i]] += a.get(j, i);
                    }
                }
            }
        }
        AlignMode::Reference(reference) => {
            if reference.len() != estimates.len() {
                return Err(Error::LengthMismatch(estimates.len(), reference.len()));
            }
            for (est, truth) in estimates.iter().zip(reference) {
                if truth.num_classes() != k || est.num_classes() != k {
                    return Err(Error::DimensionMismatch("confusion sizes differ".into()));
                }
                for j in 0..k {
                    for i in 0..k {
                        let d2: T = (0..k)
                            .map(|r| {
                                let d = est.get(r, i) - truth.get(r, j);
                                d * d
                            })
                            .sum();
                        gain[[j, i]] -= d2;
                    }
                }
            }
        }
    }
    let mapping = if k <= BRUTE_FORCE_MAX_K { best_assignment_exhaustive(&gain) } else { hungarian_max(&gain) };
    Permutation::new(mapping)
}

/// Aligns `estimate` to be diagonally dominant.
pub fn align_diag_dominant<T: Scalar>(estimate: &DsParams<T>) -> Result<DsParams<T>> {
    let perm = align_permutation(&estimate.confusions, AlignMode::DiagDominant)?;
    Ok(estimate.permute_classes(&perm))
}

/// Aligns `estimate` to a reference parameter set.
pub fn align_to_reference<T: Scalar>(estimate: &DsParams<T>, reference: &DsParams<T>) -> Result<DsParams<T>> {
    let perm = align_permutation(&estimate.confusions, AlignMode::Reference(&reference.confusions))?;
    Ok(estimate.permute_classes(&perm))
}

fn best_assignment_exhaustive<T: Scalar>(gain: &Array2<T>) -> Vec<usize> {
    let k = gain.nrows();
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; k];
    // depth-first in lexicographic order; only strict improvements replace
    fn recurse<T: Scalar>(
        gain: &Array2<T>,
        partial: T,
        current: &mut Vec<usize>,
        used: &mut [bool],
        best: &mut Option<(T, Vec<usize>)>,
    ) {
        let k = gain.nrows();
        let j = current.len();
        if j == k {
            let better = match best {
                None => true,
                Some((b, _)) => partial > *b + (T::one() + b.abs()) * T::epsilon() * T::of(64.0),
            };
            if better {
                *best = Some((partial, current.clone()));
            }
            return;
        }
        for i in 0..k {
            if !used[i] {
                used[i] = true;
                current.push(i);
                recurse(gain, partial + gain[[j, i]], current, used, best);
                current.pop();
                used[i] = false;
            }
        }
    }
    recurse(gain, T::zero(), &mut current, &mut used, &mut best);
    best.map(|(_, m)| m).unwrap_or_default()
}

/// Hungarian algorithm (shortest augmenting path form) maximizing total gain.
fn hungarian_max<T: Scalar>(gain: &Array2<T>) -> Vec<usize> {
    let n = gain.nrows();
    let maxv = gain.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    // cost[j][i] = max - gain, 1-indexed potentials
    let cost = |j: usize, i: usize| maxv - gain[[j, i]];
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        p[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            mapping[p[j] - 1] = j - 1;
        }
    }
    mapping
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assignment_score(gain: &Array2<f64>, mapping: &[usize]) -> f64 {
        mapping.iter().enumerate().map(|(j, &i)| gain[[j, i]]).sum()
    }

    fn random_confusion(rng: &mut ChaCha8Rng, k: usize) -> ConfusionMatrix<f64> {
        let m = Array2::from_shape_fn((k, k), |_| rng.gen::<f64>());
        ConfusionMatrix::from_nonnegative(m, 0.0)
    }

    fn all_permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    fn frob_err(est: &[ConfusionMatrix<f64>], truth: &[ConfusionMatrix<f64>], map: &[usize]) -> f64 {
        est.iter()
            .zip(truth)
            .map(|(e, t)| {
                let p = e.permute_columns(map);
                (p.matrix() - t.matrix()).mapv(|x| x * x).sum()
            })
            .sum()
    }

    #[test]
    fn diag_dominant_gives_identity() {
        let a = ConfusionMatrix::new(array![[0.8, 0.1, 0.2], [0.1, 0.7, 0.1], [0.1, 0.2, 0.7]]).unwrap();
        let p = align_permutation(&[a.clone(), a], AlignMode::DiagDominant).unwrap();
        assert!(p.is_identity());
    }

    #[test]
    fn reference_recovers_planted_swap() {
        let truth = vec![
            ConfusionMatrix::new(array![[0.8, 0.1, 0.2], [0.1, 0.7, 0.1], [0.1, 0.2, 0.7]]).unwrap(),
            ConfusionMatrix::new(array![[0.6, 0.3, 0.2], [0.3, 0.6, 0.1], [0.1, 0.1, 0.7]]).unwrap(),
        ];
        let planted = Permutation::new(vec![2, 0, 1]).unwrap();
        // estimates whose columns are scrambled by the inverse of `planted`
        let est: Vec<_> = truth.iter().map(|t| t.permute_columns(planted.inverse().mapping())).collect();
        let p = align_permutation(&est, AlignMode::Reference(&truth)).unwrap();
        assert_eq!(p, planted);
        assert!(frob_err(&est, &truth, p.mapping()) < 1e-24);
    }

    #[test]
    fn empty_input_errors() {
        let empty: Vec<ConfusionMatrix<f64>> = vec![];
        assert_eq!(align_permutation(&empty, AlignMode::DiagDominant), Err(Error::EmptyInput));
    }

    #[test]
    fn reference_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 2..=6 {
            for _ in 0..10 {
                let truth: Vec<_> = (0..3).map(|_| random_confusion(&mut rng, k)).collect();
                let est: Vec<_> = (0..3).map(|_| random_confusion(&mut rng, k)).collect();
                let p = align_permutation(&est, AlignMode::Reference(&truth)).unwrap();
                let got = frob_err(&est, &truth, p.mapping());
                for perm in all_permutations(k) {
                    assert!(got <= frob_err(&est, &truth, &perm) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn hungarian_agrees_with_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 2..=7 {
            for _ in 0..20 {
                let g = Array2::from_shape_fn((k, k), |_| rng.gen::<f64>());
                let a = best_assignment_exhaustive(&g);
                let b = hungarian_max(&g);
                assert!((assignment_score(&g, &a) - assignment_score(&g, &b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let g = Array2::<f64>::zeros((3, 3));
        assert_eq!(best_assignment_exhaustive(&g), vec![0, 1, 2]);
    }

    #[test]
    fn large_k_uses_hungarian() {
        let k = 10;
        let planted = Permutation::new(vec![3, 1, 4, 0, 5, 9, 2, 6, 8, 7]).unwrap();
        let truth = vec![ConfusionMatrix::<f64>::one_coin(k, 0.9)];
        let est: Vec<_> = truth.iter().map(|t| t.permute_columns(planted.inverse().mapping())).collect();
        let p = align_permutation(&est, AlignMode::Reference(&truth)).unwrap();
        assert_eq!(p, planted);
    }
}
