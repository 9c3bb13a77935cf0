//! Eigenvector-based estimator for the binary one-coin model.
//!
//! Under the one-coin model the expected Gram matrix of the `±1` response
//! matrix is `κ y yᵀ + (M − κ) I`. Zeroing the diagonal of the empirical Gram
//! matrix removes the identity component, and the sign pattern of its top
//! eigenvector recovers `y` up to a global sign.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::AnnotationSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::voting::majority_vote;

/// `N × M` matrix with entries in `{−1, 0, +1}`; zero marks a missing label.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix<T>(Array2<T>);

impl<T: Scalar> ResponseMatrix<T> {
    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }
}

/// Maps labels `{0, 1}` to `{−1, +1}`.
pub fn response_matrix<T: Scalar>(a: &AnnotationSet) -> Result<ResponseMatrix<T>> {
    if a.num_classes() != 2 {
        return Err(Error::NotBinary(a.num_classes()));
    }
    let mut u = Array2::<T>::zeros((a.num_items(), a.num_annotators()));
    for r in a.records() {
        u[[r.item, r.annotator]] = if r.label == 1 { T::one() } else { -T::one() };
    }
    Ok(ResponseMatrix(u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult<T> {
    pub eigvec: Vec<T>,
    pub eigval: T,
    pub iterations: usize,
    /// False when `max_iters` was exhausted; `eigvec` is then the last iterate.
    pub converged: bool,
    /// Set when two independent starts settle on different vectors with the
    /// same eigenvalue, i.e. the dominant eigenvalue is not simple.
    pub degenerate: bool,
}

fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Power iteration on an implicit symmetric operator.
pub(crate) fn power_iterate<T: Scalar>(
    n: usize,
    matvec: impl Fn(&[T], &mut [T]),
    tol: T,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<T>, T, usize, bool) {
    let mut v: Vec<T> = (0..n).map(|_| T::of(StandardNormal.sample(rng))).collect();
    normalize(&mut v);
    let mut w = vec![T::zero(); n];
    for it in 1..=max_iters {
        matvec(&v, &mut w);
        if normalize(&mut w) == T::zero() {
            return (v, T::zero(), it, true);
        }
        // compare up to sign so negative dominant eigenvalues converge too
        let flip = dot(&v, &w) < T::zero();
        let change = v
            .iter()
            .zip(&w)
            .map(|(&a, &b)| {
                let d = if flip { a + b } else { a - b };
                d * d
            })
            .sum::<T>()
            .sqrt();
        std::mem::swap(&mut v, &mut w);
        if change <= tol {
            matvec(&v, &mut w);
            return (v.clone(), dot(&v, &w), it, true);
        }
    }
    matvec(&v, &mut w);
    let lambda = dot(&v, &w);
    (v, lambda, max_iters, false)
}

/// Dominant eigenpair of a symmetric matrix by power iteration.
pub fn power_method<T: Scalar>(s: &Array2<T>, tol: T, max_iters: usize, seed: u64) -> Result<PowerResult<T>> {
    let n = s.nrows();
    if n == 0 || s.ncols() != n {
        return Err(Error::DimensionMismatch("power method needs a nonempty square matrix".into()));
    }
    let sym_tol = T::of(1e-9) * (T::one() + s.iter().fold(T::zero(), |a, &x| a.max(x.abs())));
    for i in 0..n {
        for j in 0..i {
            if (s[[i, j]] - s[[j, i]]).abs() > sym_tol {
                return Err(Error::InvalidParameter("matrix is not symmetric".into()));
            }
        }
    }
    let matvec = |v: &[T], out: &mut [T]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = s.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum();
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v1, l1, iterations, converged) = power_iterate(n, matvec, tol, max_iters, &mut rng);
    let (v2, l2, _, _) = power_iterate(n, matvec, tol, max_iters, &mut rng);
    let scale = T::one() + l1.abs();
    let same_value = (l1 - l2).abs() <= T::of(1e-6) * scale;
    let collinear = dot(&v1, &v2).abs() >= T::one() - T::of(1e-6);
    let degenerate = n > 1 && same_value && !collinear;
    Ok(PowerResult { eigvec: v1, eigval: l1, iterations, converged, degenerate })
}

/// How the global sign of the eigenvector is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignRule {
    /// Maximize agreement with majority vote.
    MajorityVote,
    /// The given annotator is assumed better than chance.
    TrustedAnnotator(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOptions<T> {
    pub sign_rule: SignRule,
    pub tol: T,
    pub max_iters: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for SpectralOptions<T> {
    fn default() -> Self {
        Self { sign_rule: SignRule::MajorityVote, tol: T::of(1e-10), max_iters: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFit<T> {
    /// Recovered labels in `{0, 1}`.
    pub labels: Vec<usize>,
    /// Per-annotator agreement with the recovered labels.
    pub p_hat: Vec<T>,
    /// `Σ_m (2 p̂_m − 1)²`.
    pub kappa_hat: T,
    /// When false, missing entries were zero-filled and the estimate is biased.
    pub fully_observed: bool,
    pub eigval: T,
    pub converged: bool,
}

pub fn fit_one_coin_spectral<T: Scalar>(a: &AnnotationSet) -> Result<SpectralFit<T>> {
    fit_one_coin_spectral_with(a, &SpectralOptions::default())
}

pub fn fit_one_coin_spectral_with<T: Scalar>(a: &AnnotationSet, opts: &SpectralOptions<T>) -> Result<SpectralFit<T>> {
    if a.num_classes() != 2 {
        return Err(Error::NotBinary(a.num_classes()));
    }
    if let Some(&n) = a.empty_items().first() {
        return Err(Error::EmptyItem(n));
    }
    let (n_items, n_annot) = (a.num_items(), a.num_annotators());
    let sign = |label: usize| if label == 1 { T::one() } else { -T::one() };
    // S v = U (Uᵀ v) − diag(U Uᵀ) v, without forming the N × N Gram matrix
    let matvec = |v: &[T], out: &mut [T]| {
        let mut ut_v = vec![T::zero(); n_annot];
        for r in a.records() {
            ut_v[r.annotator] += sign(r.label) * v[r.item];
        }
        for (n, o) in out.iter_mut().enumerate() {
            let labels = a.item_labels(n);
            let s: T = labels.iter().map(|&(m, y)| sign(y) * ut_v[m]).sum();
            *o = s - T::count(labels.len()) * v[n];
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (vec, eigval, _, converged) = power_iterate(n_items, matvec, opts.tol, opts.max_iters, &mut rng);

    let mv = majority_vote(a).labels;
    let mut labels: Vec<usize> = vec
        .iter()
        .zip(&mv)
        .map(|(&x, &fallback)| {
            if x > T::zero() {
                1
            } else if x < T::zero() {
                0
            } else {
                fallback
            }
        })
        .collect();
    let flip = match opts.sign_rule {
        SignRule::MajorityVote => {
            let agree = labels.iter().zip(&mv).filter(|(x, y)| x == y).count();
            2 * agree < n_items
        }
        SignRule::TrustedAnnotator(m) => {
            if m >= n_annot {
                return Err(Error::InvalidParameter(format!("trusted annotator {m} out of range")));
            }
            let recs = a.annotator_labels(m);
            let agree = recs.iter().filter(|&&(n, y)| labels[n] == y).count();
            2 * agree < recs.len()
        }
    };
    if flip {
        labels.iter_mut().for_each(|l| *l = 1 - *l);
    }
    let p_hat: Vec<T> = (0..n_annot)
        .map(|m| {
            let recs = a.annotator_labels(m);
            if recs.is_empty() {
                return T::of(0.5);
            }
            let agree = recs.iter().filter(|&&(n, y)| labels[n] == y).count();
            T::count(agree) / T::count(recs.len())
        })
        .collect();
    let two = T::of(2.0);
    let kappa_hat = p_hat.iter().map(|&p| (two * p - T::one()).powi(2)).sum();
    Ok(SpectralFit { labels, p_hat, kappa_hat, fully_observed: a.is_fully_observed(), eigval, converged })
}
