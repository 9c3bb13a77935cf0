//! Dawid–Skene model with a first-order Markov chain over the true labels.
//!
//! Transitions are column-stochastic: `T(k, k')` is the probability of label
//! `k` at position `n` given label `k'` at position `n − 1`. Forward–backward
//! uses per-position normalization, so the log-likelihood is the sum of the
//! log scaling factors.

use ndarray::{Array1, Array2};

use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, LabelPosterior, Prior, Record};
use crate::ds_em::{fit_em, log_confusions, m_step, map_decode, EmConfig};
use crate::error::{Error, Result};
use crate::scalar::{argmax, Scalar, PROB_FLOOR};
use crate::simplex::floor_renormalize;

/// One annotated sequence; positions play the role of items.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence(AnnotationSet);

impl LabeledSequence {
    pub fn new(annotations: AnnotationSet) -> Self {
        Self(annotations)
    }

    pub fn annotations(&self) -> &AnnotationSet {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.num_items()
    }

    pub fn is_empty(&self) -> bool {
        self.0.num_items() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams<T> {
    pub initial: Prior<T>,
    /// Column-stochastic `T(next, prev)`.
    pub transition: ConfusionMatrix<T>,
    pub confusions: Vec<ConfusionMatrix<T>>,
}

impl<T: Scalar> HmmParams<T> {
    pub fn new(initial: Prior<T>, transition: ConfusionMatrix<T>, confusions: Vec<ConfusionMatrix<T>>) -> Result<Self> {
        let k = initial.len();
        if transition.num_classes() != k || confusions.iter().any(|c| c.num_classes() != k) {
            return Err(Error::DimensionMismatch("class counts differ".into()));
        }
        Ok(Self { initial, transition, confusions })
    }

    pub fn num_classes(&self) -> usize {
        self.initial.len()
    }

    pub fn num_annotators(&self) -> usize {
        self.confusions.len()
    }

    /// The annotator part as i.i.d. Dawid–Skene parameters.
    pub fn ds_params(&self) -> DsParams<T> {
        DsParams { confusions: self.confusions.clone(), prior: self.initial.clone() }
    }

    fn check_dims(&self, seq: &LabeledSequence) -> Result<()> {
        self.ds_params().check_dims(seq.annotations())
    }
}

/// `b_n(k) = Π_m A_m(y_n^(m), k)` over annotators labeling position `n`.
pub fn emission_vector<T: Scalar>(seq: &LabeledSequence, n: usize, params: &HmmParams<T>) -> Result<Array1<T>> {
    params.check_dims(seq)?;
    if n >= seq.len() {
        return Err(Error::InvalidParameter(format!("position {n} out of range")));
    }
    let k = params.num_classes();
    let mut b = Array1::from_elem(k, T::one());
    for &(m, y) in seq.annotations().item_labels(n) {
        for c in 0..k {
            b[c] *= params.confusions[m].get(y, c);
        }
    }
    Ok(b)
}

/// Log emissions with the probability floor applied, `N × K`.
fn log_emissions<T: Scalar>(seq: &LabeledSequence, log_a: &[Array2<T>], k: usize) -> Array2<T> {
    let a = seq.annotations();
    let mut out = Array2::<T>::zeros((a.num_items(), k));
    for n in 0..a.num_items() {
        for &(m, y) in a.item_labels(n) {
            for c in 0..k {
                out[[n, c]] += log_a[m][[y, c]];
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward<T> {
    /// `N × K` marginal posteriors.
    pub gamma: Array2<T>,
    /// `xi[n](k, k')` = Pr(y_{n+1} = k, y_n = k' | data), for `n < N − 1`.
    pub xi: Vec<Array2<T>>,
    pub loglik: T,
}

pub fn forward_backward<T: Scalar>(seq: &LabeledSequence, params: &HmmParams<T>) -> Result<ForwardBackward<T>> {
    params.check_dims(seq)?;
    let k = params.num_classes();
    let len = seq.len();
    if len == 0 {
        return Ok(ForwardBackward { gamma: Array2::zeros((0, k)), xi: Vec::new(), loglik: T::zero() });
    }
    let log_a = log_confusions(&params.ds_params());
    let log_b = log_emissions(seq, &log_a, k);
    // scaled emissions: b_n / max_k b_n
    let mut b = Array2::<T>::zeros((len, k));
    let mut loglik = T::zero();
    for n in 0..len {
        let mx = log_b.row(n).iter().copied().fold(T::neg_infinity(), T::max);
        loglik += mx;
        for c in 0..k {
            b[[n, c]] = (log_b[[n, c]] - mx).exp();
        }
    }
    let mut d = params.initial.vector().to_vec();
    floor_renormalize(&mut d, T::of(PROB_FLOOR));
    let t = params.transition.matrix();

    let mut alpha = Array2::<T>::zeros((len, k));
    let mut scale = vec![T::zero(); len];
    for n in 0..len {
        for c in 0..k {
            let pred = if n == 0 { d[c] } else { (0..k).map(|p| t[[c, p]] * alpha[[n - 1, p]]).sum() };
            alpha[[n, c]] = pred * b[[n, c]];
        }
        let s: T = alpha.row(n).sum();
        if !(s > T::zero()) {
            return Err(Error::InvalidParameter(format!("zero probability at position {n}")));
        }
        alpha.row_mut(n).mapv_inplace(|v| v / s);
        scale[n] = s;
        loglik += s.ln();
    }

    let mut beta = Array2::<T>::ones((len, k));
    for n in (0..len - 1).rev() {
        for p in 0..k {
            beta[[n, p]] = (0..k).map(|c| t[[c, p]] * b[[n + 1, c]] * beta[[n + 1, c]]).sum::<T>() / scale[n + 1];
        }
    }

    let mut gamma = &alpha * &beta;
    for mut row in gamma.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    let xi = (0..len.saturating_sub(1))
        .map(|n| {
            let mut x = Array2::from_shape_fn((k, k), |(c, p)| {
                alpha[[n, p]] * t[[c, p]] * b[[n + 1, c]] * beta[[n + 1, c]] / scale[n + 1]
            });
            let s = x.sum();
            x.mapv_inplace(|v| v / s);
            x
        })
        .collect();
    Ok(ForwardBackward { gamma, xi, loglik })
}

/// MAP label path. Ties go to the lowest index at every step.
pub fn viterbi<T: Scalar>(seq: &LabeledSequence, params: &HmmParams<T>) -> Result<Vec<usize>> {
    params.check_dims(seq)?;
    let k = params.num_classes();
    let len = seq.len();
    if len == 0 {
        return Ok(Vec::new());
    }
    let log_a = log_confusions(&params.ds_params());
    let log_b = log_emissions(seq, &log_a, k);
    let log_t = params.transition.matrix().mapv(|v| v.ln());
    let mut delta: Vec<T> = (0..k).map(|c| params.initial.get(c).ln() + log_b[[0, c]]).collect();
    let mut back = vec![vec![0usize; k]; len];
    for n in 1..len {
        let mut next = vec![T::zero(); k];
        for c in 0..k {
            let best = argmax((0..k).map(|p| delta[p] + log_t[[c, p]]));
            back[n][c] = best;
            next[c] = delta[best] + log_t[[c, best]] + log_b[[n, c]];
        }
        delta = next;
    }
    let mut path = vec![0; len];
    path[len - 1] = argmax(delta.iter().copied());
    for n in (1..len).rev() {
        path[n - 1] = back[n][path[n]];
    }
    Ok(path)
}

/// Log-probability of a label path jointly with the observations.
pub fn path_log_prob<T: Scalar>(seq: &LabeledSequence, params: &HmmParams<T>, path: &[usize]) -> Result<T> {
    params.check_dims(seq)?;
    if path.len() != seq.len() {
        return Err(Error::LengthMismatch(path.len(), seq.len()));
    }
    let log_a = log_confusions(&params.ds_params());
    let log_b = log_emissions(seq, &log_a, params.num_classes());
    let t = params.transition.matrix();
    let mut lp = T::zero();
    for (n, &c) in path.iter().enumerate() {
        lp += log_b[[n, c]];
        lp += if n == 0 { params.initial.get(c).ln() } else { t[[c, path[n - 1]]].ln() };
    }
    Ok(lp)
}

#[derive(Debug, Clone, PartialEq)]
pub enum HmmInit<T> {
    /// Pooled i.i.d. Dawid–Skene EM; transitions from decoded label bigrams.
    FromDsEm,
    Given(HmmParams<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmFit<T> {
    pub params: HmmParams<T>,
    /// Log-likelihood of the initial parameters followed by one entry per iteration.
    pub loglik_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// All sequences stacked into one annotation set, positions offset per sequence.
fn pool(seqs: &[LabeledSequence]) -> Result<(AnnotationSet, Vec<usize>)> {
    let first = seqs[0].annotations();
    let (m, k) = (first.num_annotators(), first.num_classes());
    let mut offsets = Vec::with_capacity(seqs.len());
    let mut records = Vec::new();
    let mut total = 0;
    for s in seqs {
        let a = s.annotations();
        if a.num_annotators() != m || a.num_classes() != k {
            return Err(Error::DimensionMismatch("sequences disagree on annotators or classes".into()));
        }
        offsets.push(total);
        records.extend(a.records().iter().map(|r| Record { item: r.item + total, ..*r }));
        total += a.num_items();
    }
    Ok((AnnotationSet::new(total, m, k, records)?, offsets))
}

fn init_from_ds<T: Scalar>(
    seqs: &[LabeledSequence],
    pooled: &AnnotationSet,
    offsets: &[usize],
    cfg: &EmConfig<T>,
) -> Result<HmmParams<T>> {
    let k = pooled.num_classes();
    let fit = fit_em(pooled, cfg)?;
    let labels = map_decode(&fit.posterior);
    let mut counts = Array2::<T>::ones((k, k));
    for (s, &off) in seqs.iter().zip(offsets) {
        for n in 1..s.len() {
            counts[[labels[off + n], labels[off + n - 1]]] += T::one();
        }
    }
    let transition = ConfusionMatrix::from_nonnegative(counts, T::zero());
    HmmParams::new(fit.params.prior, transition, fit.params.confusions)
}

/// Baum–Welch EM over one or more sequences sharing annotators.
pub fn fit_hmm_em<T: Scalar>(seqs: &[LabeledSequence], init: &HmmInit<T>, cfg: &EmConfig<T>) -> Result<HmmFit<T>> {
    if seqs.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate()?;
    let (pooled, offsets) = pool(seqs)?;
    let k = pooled.num_classes();
    let mut params = match init {
        HmmInit::FromDsEm => init_from_ds(seqs, &pooled, &offsets, cfg)?,
        HmmInit::Given(p) => {
            for s in seqs {
                p.check_dims(s)?;
            }
            p.clone()
        }
    };
    let e_step = |params: &HmmParams<T>| -> Result<(Vec<ForwardBackward<T>>, T)> {
        let fbs = seqs.iter().map(|s| forward_backward(s, params)).collect::<Result<Vec<_>>>()?;
        let ll = fbs.iter().map(|f| f.loglik).sum();
        Ok((fbs, ll))
    };
    let (mut fbs, mut ll) = e_step(&params)?;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=cfg.max_iters {
        let mut q = Array2::<T>::zeros((pooled.num_items(), k));
        let mut trans = Array2::<T>::zeros((k, k));
        let mut init_acc = vec![T::zero(); k];
        for (fb, &off) in fbs.iter().zip(&offsets) {
            for (n, row) in fb.gamma.rows().into_iter().enumerate() {
                q.row_mut(off + n).assign(&row);
            }
            if fb.gamma.nrows() > 0 {
                init_acc.iter_mut().zip(fb.gamma.row(0)).for_each(|(a, &g)| *a += g);
            }
            for x in &fb.xi {
                trans += x;
            }
        }
        let ds = m_step(&pooled, &LabelPosterior::new_unchecked(q), cfg.variant, cfg.smoothing_floor)?;
        let transition = ConfusionMatrix::from_nonnegative(trans, cfg.smoothing_floor);
        let s: T = init_acc.iter().copied().sum();
        init_acc.iter_mut().for_each(|v| *v /= s);
        floor_renormalize(&mut init_acc, cfg.smoothing_floor);
        params =
            HmmParams { initial: Prior::new_unchecked(Array1::from(init_acc)), transition, confusions: ds.confusions };

        let prev = ll;
        (fbs, ll) = e_step(&params)?;
        trace.push(ll);
        iterations = it;
        if (ll - prev).abs() <= cfg.rel_tol * ll.abs() {
            converged = true;
            break;
        }
    }
    Ok(HmmFit { params, loglik_trace: trace, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seq_from(labels: &[Option<usize>], k: usize) -> LabeledSequence {
        let table: Vec<Vec<Option<usize>>> = labels.iter().map(|&l| vec![l]).collect();
        LabeledSequence::new(AnnotationSet::from_dense(k, &table).unwrap())
    }

    fn params(k: usize, t: Array2<f64>, d: Array1<f64>, a: Array2<f64>) -> HmmParams<f64> {
        let _ = k;
        HmmParams::new(Prior::new(d).unwrap(), ConfusionMatrix::new(t).unwrap(), vec![ConfusionMatrix::new(a).unwrap()])
            .unwrap()
    }

    #[test]
    fn emission_examples() {
        let s = seq_from(&[Some(1), None], 3);
        let p = params(3, Array2::eye(3), array![1.0, 0.0, 0.0], Array2::eye(3));
        assert_eq!(emission_vector(&s, 0, &p).unwrap(), array![0.0, 1.0, 0.0]);
        assert_eq!(emission_vector(&s, 1, &p).unwrap(), array![1.0, 1.0, 1.0]);
        assert!(emission_vector(&s, 2, &p).is_err());
    }

    #[test]
    fn deterministic_chain() {
        let s = seq_from(&[None, None, None, None], 3);
        let p = params(3, Array2::eye(3), array![0.0, 0.0, 1.0], ConfusionMatrix::uniform(3).into_matrix());
        let fb = forward_backward(&s, &p).unwrap();
        for row in fb.gamma.rows() {
            assert!((row[2] - 1.0).abs() < 1e-9);
        }
        assert_eq!(viterbi(&s, &p).unwrap(), vec![2, 2, 2, 2]);
    }

    #[test]
    fn factorized_chain_follows_perfect_annotator() {
        let obs = [Some(0), Some(2), Some(1), Some(1)];
        let s = seq_from(&obs, 3);
        let u = ConfusionMatrix::<f64>::uniform(3).into_matrix();
        let p = params(3, u, array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], Array2::eye(3));
        let fb = forward_backward(&s, &p).unwrap();
        for (n, o) in obs.iter().enumerate() {
            assert!((fb.gamma[[n, o.unwrap()]] - 1.0).abs() < 1e-9);
        }
        assert_eq!(viterbi(&s, &p).unwrap(), vec![0, 2, 1, 1]);
    }

    #[test]
    fn xi_marginals_match_gamma() {
        let s = seq_from(&[Some(0), Some(1), None, Some(1), Some(0)], 2);
        let p = params(2, array![[0.9, 0.3], [0.1, 0.7]], array![0.6, 0.4], array![[0.8, 0.25], [0.2, 0.75]]);
        let fb = forward_backward(&s, &p).unwrap();
        for (n, x) in fb.xi.iter().enumerate() {
            for c in 0..2 {
                assert!((x.column(c).sum() - fb.gamma[[n, c]]).abs() < 1e-9);
                assert!((x.row(c).sum() - fb.gamma[[n + 1, c]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_sequence() {
        let s = LabeledSequence::new(AnnotationSet::new(0, 1, 2, vec![]).unwrap());
        let p = params(2, Array2::eye(2), array![0.5, 0.5], Array2::eye(2));
        assert_eq!(forward_backward(&s, &p).unwrap().loglik, 0.0);
        assert!(viterbi(&s, &p).unwrap().is_empty());
        assert!(fit_hmm_em::<f64>(&[], &HmmInit::FromDsEm, &EmConfig::default()).is_err());
    }
}
