//! Maximum-likelihood Dawid–Skene estimation by expectation–maximization.
//!
//! All posterior and likelihood arithmetic runs in the log domain. Three
//! parameterizations share the same E-step:
//!
//! * `General`: a free column-stochastic confusion matrix per annotator.
//! * `OneCoin`: a single accuracy `p_m`; errors spread uniformly.
//! * `ConfusionVector`: a per-class accuracy `a_m(k)`; errors spread uniformly.

use ndarray::{Array1, Array2};

use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, LabelPosterior, Prior};
use crate::error::{Error, Result};
use crate::moments::{cnmf_spa, pairwise_stats, Partition, DEFAULT_MIN_COLABELS};
use crate::scalar::{argmax, log_sum_exp, Scalar, PROB_FLOOR};
use crate::simplex::floor_renormalize;
use crate::spectral::fit_one_coin_spectral;
use crate::voting::majority_vote;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmVariant {
    General,
    OneCoin,
    ConfusionVector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmInit<T> {
    /// One-hot majority-vote labels fed to the M-step.
    FromMajorityVote,
    /// Labels from the binary spectral one-coin estimator fed to the M-step.
    FromSpectral,
    /// Parameters from the second-order moment SPA estimator.
    FromCnmfSpa,
    Given(DsParams<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig<T> {
    pub max_iters: usize,
    /// Stop once `|ΔLL| ≤ rel_tol · |LL|`.
    pub rel_tol: T,
    pub variant: EmVariant,
    pub init: EmInit<T>,
    /// Floor applied to M-step outputs before renormalizing.
    pub smoothing_floor: T,
}

impl<T: Scalar> Default for EmConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: T::of(1e-8),
            variant: EmVariant::General,
            init: EmInit::FromMajorityVote,
            smoothing_floor: T::of(PROB_FLOOR),
        }
    }
}

impl<T: Scalar> EmConfig<T> {
    pub fn with_variant(mut self, variant: EmVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_init(mut self, init: EmInit<T>) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > T::zero()) {
            return Err(Error::InvalidParameter("rel_tol must be > 0".into()));
        }
        if !(self.smoothing_floor >= T::zero()) {
            return Err(Error::InvalidParameter("smoothing floor must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult<T> {
    pub params: DsParams<T>,
    pub posterior: LabelPosterior<T>,
    /// Log-likelihood of the initial parameters followed by one entry per iteration.
    pub loglik_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Annotators without records; their confusions are uniform.
    pub empty_annotators: Vec<usize>,
}

/// Per-annotator `log A_m(k', k)` tables with the probability floor applied.
pub(crate) fn log_confusions<T: Scalar>(params: &DsParams<T>) -> Vec<Array2<T>> {
    let floor = T::of(PROB_FLOOR);
    params
        .confusions
        .iter()
        .map(|c| {
            let mut m = c.matrix().clone();
            for mut col in m.columns_mut() {
                let mut v = col.to_vec();
                floor_renormalize(&mut v, floor);
                for (dst, src) in col.iter_mut().zip(v) {
                    *dst = src.ln();
                }
            }
            m
        })
        .collect()
}

pub(crate) fn log_prior<T: Scalar>(prior: &Prior<T>) -> Array1<T> {
    let mut v = prior.vector().to_vec();
    floor_renormalize(&mut v, T::of(PROB_FLOOR));
    Array1::from_iter(v.into_iter().map(|x| x.ln()))
}

/// Posterior and log-likelihood from one pass over the data.
pub(crate) fn posterior_and_loglik<T: Scalar>(
    a: &AnnotationSet,
    params: &DsParams<T>,
) -> Result<(LabelPosterior<T>, T)> {
    params.check_dims(a)?;
    let k = a.num_classes();
    let log_a = log_confusions(params);
    let log_d = log_prior(&params.prior);
    let mut q = Array2::<T>::zeros((a.num_items(), k));
    let mut ll = T::zero();
    let mut joint = vec![T::zero(); k];
    for n in 0..a.num_items() {
        let labels = a.item_labels(n);
        if labels.is_empty() {
            q.row_mut(n).assign(params.prior.vector());
            continue;
        }
        for (c, j) in joint.iter_mut().enumerate() {
            *j = log_d[c] + labels.iter().map(|&(m, y)| log_a[m][[y, c]]).sum::<T>();
        }
        let lse = log_sum_exp(&joint);
        ll += lse;
        for (c, &j) in joint.iter().enumerate() {
            q[[n, c]] = (j - lse).exp();
        }
    }
    Ok((LabelPosterior::new_unchecked(q), ll))
}

/// Observed-data log-likelihood `Σ_n log Σ_k d(k) Π_m A_m(y_n^(m), k)`.
pub fn log_likelihood<T: Scalar>(a: &AnnotationSet, params: &DsParams<T>) -> Result<T> {
    posterior_and_loglik(a, params).map(|(_, ll)| ll)
}

/// Posterior over the true label of every item.
pub fn e_step<T: Scalar>(a: &AnnotationSet, params: &DsParams<T>) -> Result<LabelPosterior<T>> {
    posterior_and_loglik(a, params).map(|(q, _)| q)
}

/// Closed-form parameter update given a posterior.
///
/// Annotators without records receive the uniform confusion matrix.
pub fn m_step<T: Scalar>(
    a: &AnnotationSet,
    q: &LabelPosterior<T>,
    variant: EmVariant,
    floor: T,
) -> Result<DsParams<T>> {
    let k = a.num_classes();
    if q.num_items() != a.num_items() || q.num_classes() != k {
        return Err(Error::DimensionMismatch(format!(
            "posterior {}x{} vs annotations N={} K={k}",
            q.num_items(),
            q.num_classes(),
            a.num_items()
        )));
    }
    let qm = q.matrix();
    let mut confusions = Vec::with_capacity(a.num_annotators());
    for m in 0..a.num_annotators() {
        let recs = a.annotator_labels(m);
        if recs.is_empty() {
            confusions.push(ConfusionMatrix::uniform(k));
            continue;
        }
        let c = match variant {
            EmVariant::General => {
                let mut counts = Array2::<T>::zeros((k, k));
                for &(n, y) in recs {
                    for c in 0..k {
                        counts[[y, c]] += qm[[n, c]];
                    }
                }
                ConfusionMatrix::from_nonnegative(counts, floor)
            }
            EmVariant::OneCoin => {
                let hits: T = recs.iter().map(|&(n, y)| qm[[n, y]]).sum();
                let p = hits / T::count(recs.len());
                ConfusionMatrix::from_nonnegative(ConfusionMatrix::one_coin(k, p).into_matrix(), floor)
            }
            EmVariant::ConfusionVector => {
                let mut hit = vec![T::zero(); k];
                let mut mass = vec![T::zero(); k];
                for &(n, y) in recs {
                    hit[y] += qm[[n, y]];
                    for c in 0..k {
                        mass[c] += qm[[n, c]];
                    }
                }
                let diag: Vec<T> = (0..k)
                    .map(|c| if mass[c] > T::zero() { hit[c] / mass[c] } else { T::one() / T::count(k) })
                    .collect();
                ConfusionMatrix::from_nonnegative(ConfusionMatrix::confusion_vector(&diag).into_matrix(), floor)
            }
        };
        confusions.push(c);
    }
    let mut d: Vec<T> = qm.columns().into_iter().map(|c| c.sum()).collect();
    let total: T = d.iter().copied().sum();
    if total > T::zero() {
        d.iter_mut().for_each(|x| *x /= total);
    } else {
        d = vec![T::one() / T::count(k); k];
    }
    if floor > T::zero() {
        floor_renormalize(&mut d, floor);
    }
    Ok(DsParams { confusions, prior: Prior::new_unchecked(Array1::from(d)) })
}

/// `argmax_k q_n(k)` per item, lowest index on ties.
pub fn map_decode<T: Scalar>(q: &LabelPosterior<T>) -> Vec<usize> {
    q.matrix().rows().into_iter().map(|r| argmax(r.iter().copied())).collect()
}

/// Hard labels as a posterior; items without records get uniform rows.
pub(crate) fn hard_posterior<T: Scalar>(a: &AnnotationSet, labels: &[usize]) -> LabelPosterior<T> {
    let k = a.num_classes();
    let mut q = LabelPosterior::one_hot(labels, k).into_matrix();
    for n in a.empty_items() {
        q.row_mut(n).fill(T::one() / T::count(k));
    }
    LabelPosterior::new_unchecked(q)
}

pub(crate) fn initial_params<T: Scalar>(a: &AnnotationSet, cfg: &EmConfig<T>) -> Result<DsParams<T>> {
    match &cfg.init {
        EmInit::FromMajorityVote => {
            let mv = majority_vote(a);
            m_step(a, &hard_posterior(a, &mv.labels), cfg.variant, cfg.smoothing_floor)
        }
        EmInit::FromSpectral => {
            let fit = fit_one_coin_spectral::<T>(a)?;
            m_step(a, &hard_posterior(a, &fit.labels), cfg.variant, cfg.smoothing_floor)
        }
        EmInit::FromCnmfSpa => {
            let stats = pairwise_stats::<T>(a, DEFAULT_MIN_COLABELS);
            cnmf_spa(&stats, &Partition::Auto)
        }
        EmInit::Given(p) => {
            p.check_dims(a)?;
            Ok(p.clone())
        }
    }
}

/// Alternates E- and M-steps until the relative log-likelihood change drops
/// below `rel_tol` or `max_iters` is reached.
pub fn fit_em<T: Scalar>(a: &AnnotationSet, cfg: &EmConfig<T>) -> Result<EmResult<T>> {
    cfg.validate()?;
    let mut params = initial_params(a, cfg)?;
    let (mut q, mut ll) = posterior_and_loglik(a, &params)?;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=cfg.max_iters {
        params = m_step(a, &q, cfg.variant, cfg.smoothing_floor)?;
        let prev = ll;
        (q, ll) = posterior_and_loglik(a, &params)?;
        trace.push(ll);
        iterations = it;
        if (ll - prev).abs() <= cfg.rel_tol * ll.abs() {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        params,
        posterior: q,
        loglik_trace: trace,
        iterations,
        converged,
        empty_annotators: a.empty_annotators(),
    })
}
