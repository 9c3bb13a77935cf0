//! End-to-end learning from noisy labels.
//!
//! A linear-softmax classifier `f(x) = softmax(W x + b)` is composed with
//! one confusion layer per annotator, `A_m = colsoftmax(Z_m)`, and trained on
//! the coupled cross-entropy
//!
//! ```text
//! L = −(1/|S|) Σ_{(m,n) ∈ S} log [A_m f(x_n)]_{y_n^(m)} − β log det(H Hᵀ + εI)
//! ```
//!
//! where `H` stacks the predicted distributions. The log-det term pushes the
//! predictions to spread over the simplex, which helps identify the
//! confusions when no annotator is an expert for every class.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, LabelPosterior, Prior};
use crate::ds_em::{log_confusions, m_step, EmVariant};
use crate::error::{Error, Result};
use crate::linalg::spd_logdet_inverse;
use crate::scalar::{log_sum_exp, order_free_sum, Scalar, PROB_FLOOR};
use crate::voting::majority_vote;

/// `N × D` item features, row `n` aligned with item `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T>(Array2<T>);

impl<T: Scalar> FeatureSet<T> {
    pub fn new(features: Array2<T>) -> Result<Self> {
        if let Some(((n, d), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite feature at ({n}, {d})")));
        }
        Ok(Self(features))
    }

    pub fn num_items(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, T> {
        self.0.row(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcemModel<T> {
    /// `K × D` classifier weights.
    pub w: Array2<T>,
    pub b: Array1<T>,
    /// `K × K` confusion logits, one per annotator; columns are softmaxed.
    pub z: Vec<Array2<T>>,
}

fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let mx = v.iter().copied().fold(T::neg_infinity(), T::max);
    v.iter_mut().for_each(|x| *x = (*x - mx).exp());
    let s = order_free_sum(v.to_vec());
    v.iter_mut().for_each(|x| *x /= s);
}

fn column_softmax<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    let mut a = z.clone();
    for mut col in a.columns_mut() {
        let mut v = col.to_vec();
        softmax_in_place(&mut v);
        col.iter_mut().zip(v).for_each(|(d, s)| *d = s);
    }
    a
}

impl<T: Scalar> CcemModel<T> {
    pub fn num_classes(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn num_annotators(&self) -> usize {
        self.z.len()
    }

    fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).chain(self.z.iter().flatten()).all(|v| v.is_finite())
    }

    pub fn confusion(&self, m: usize) -> ConfusionMatrix<T> {
        ConfusionMatrix::new_unchecked(column_softmax(&self.z[m]))
    }

    /// Current confusions with a uniform prior.
    pub fn ds_params(&self) -> DsParams<T> {
        DsParams {
            confusions: (0..self.num_annotators()).map(|m| self.confusion(m)).collect(),
            prior: Prior::uniform(self.num_classes()),
        }
    }

    /// `softmax(W x + b)`.
    pub fn predict(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("feature length {} != {}", x.len(), self.dim())));
        }
        let mut v = (self.w.dot(&x) + &self.b).to_vec();
        softmax_in_place(&mut v);
        Ok(Array1::from(v))
    }

    /// Predicted distributions for every item, `N × K`.
    pub fn predict_all(&self, features: &FeatureSet<T>) -> Result<Array2<T>> {
        if features.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!("feature dim {} != {}", features.dim(), self.dim())));
        }
        let mut f = features.matrix().dot(&self.w.t()) + &self.b;
        for mut row in f.rows_mut() {
            let mut v = row.to_vec();
            softmax_in_place(&mut v);
            row.iter_mut().zip(v).for_each(|(d, s)| *d = s);
        }
        Ok(f)
    }

    pub fn predict_labels(&self, features: &FeatureSet<T>) -> Result<Vec<usize>> {
        let f = self.predict_all(features)?;
        Ok(f.rows().into_iter().map(|r| crate::scalar::argmax(r.iter().copied())).collect())
    }
}

/// Gradients with the same shapes as [`CcemModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CcemGrad<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub z: Vec<Array2<T>>,
}

fn check_alignment<T: Scalar>(model: &CcemModel<T>, features: &FeatureSet<T>, a: &AnnotationSet) -> Result<()> {
    if features.num_items() != a.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} items",
            features.num_items(),
            a.num_items()
        )));
    }
    if model.num_annotators() != a.num_annotators() || model.num_classes() != a.num_classes() {
        return Err(Error::DimensionMismatch("model does not match annotations".into()));
    }
    if features.dim() != model.dim() {
        return Err(Error::DimensionMismatch("model does not match feature dimension".into()));
    }
    Ok(())
}

/// `log det(FᵀF + εI)` for `N × K` predictions `F`.
pub fn volume_logdet<T: Scalar>(f: &Array2<T>, epsilon: T) -> Result<T> {
    let k = f.ncols();
    let gram = f.t().dot(f) + &(Array2::<T>::eye(k) * epsilon);
    spd_logdet_inverse(gram.view())
        .map(|(ld, _)| ld)
        .ok_or_else(|| Error::InvalidParameter("jittered Gram matrix is not positive definite".into()))
}

/// Loss and gradient restricted to `items`.
fn loss_grad_on<T: Scalar>(
    model: &CcemModel<T>,
    features: &FeatureSet<T>,
    a: &AnnotationSet,
    items: &[usize],
    beta: T,
    epsilon: T,
) -> Result<(T, CcemGrad<T>)> {
    let k = model.num_classes();
    let floor = T::of(PROB_FLOOR);
    let confusions: Vec<Array2<T>> = model.z.iter().map(column_softmax).collect();
    let x = features.matrix().select(ndarray::Axis(0), items);
    let mut f = x.dot(&model.w.t()) + &model.b;
    for mut row in f.rows_mut() {
        let mut v = row.to_vec();
        softmax_in_place(&mut v);
        row.iter_mut().zip(v).for_each(|(d, s)| *d = s);
    }
    let s_count: usize = items.iter().map(|&n| a.item_labels(n).len()).sum();
    let mut loss = T::zero();
    let mut g_f = Array2::<T>::zeros(f.dim());
    let mut g_a: Vec<Array2<T>> = vec![Array2::zeros((k, k)); model.num_annotators()];
    if s_count > 0 {
        let scale = T::one() / T::count(s_count);
        for (row, &n) in items.iter().enumerate() {
            for &(m, y) in a.item_labels(n) {
                let p = order_free_sum((0..k).map(|c| confusions[m][[y, c]] * f[[row, c]]).collect());
                loss -= scale * p.max(floor).ln();
                if p > floor {
                    let g = -scale / p;
                    for c in 0..k {
                        g_f[[row, c]] += g * confusions[m][[y, c]];
                        g_a[m][[y, c]] += g * f[[row, c]];
                    }
                }
            }
        }
    }
    if beta > T::zero() {
        let gram = f.t().dot(&f) + &(Array2::<T>::eye(k) * epsilon);
        let (logdet, inv) = spd_logdet_inverse(gram.view())
            .ok_or_else(|| Error::InvalidParameter("jittered Gram matrix is not positive definite".into()))?;
        loss -= beta * logdet;
        g_f = g_f - f.dot(&inv) * (beta * T::of(2.0));
    }
    // softmax backward, row-wise
    let mut g_logits = Array2::<T>::zeros(f.dim());
    for r in 0..f.nrows() {
        let inner: T = (0..k).map(|c| g_f[[r, c]] * f[[r, c]]).sum();
        for c in 0..k {
            g_logits[[r, c]] = f[[r, c]] * (g_f[[r, c]] - inner);
        }
    }
    let gw = g_logits.t().dot(&x);
    let gb = g_logits.sum_axis(ndarray::Axis(0));
    let gz = g_a
        .iter()
        .zip(&confusions)
        .map(|(g, am)| {
            let mut out = Array2::<T>::zeros((k, k));
            for c in 0..k {
                let inner: T = (0..k).map(|j| g[[j, c]] * am[[j, c]]).sum();
                for j in 0..k {
                    out[[j, c]] = am[[j, c]] * (g[[j, c]] - inner);
                }
            }
            out
        })
        .collect();
    Ok((loss, CcemGrad { w: gw, b: gb, z: gz }))
}

/// Coupled cross-entropy loss with optional volume term, and its gradient.
pub fn ccem_loss_grad<T: Scalar>(
    model: &CcemModel<T>,
    features: &FeatureSet<T>,
    a: &AnnotationSet,
    beta: T,
    epsilon: T,
) -> Result<(T, CcemGrad<T>)> {
    check_alignment(model, features, a)?;
    let items: Vec<usize> = (0..a.num_items()).collect();
    loss_grad_on(model, features, a, &items, beta, epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub step_size: T,
    pub iterations: usize,
    /// Weight of the log-det volume term.
    pub beta: T,
    /// Jitter added to the Gram matrix inside the log-det.
    pub epsilon: T,
    pub seed: u64,
    /// Standard deviation of the initial classifier weights.
    pub init_scale: T,
    /// Items per step; `None` uses the full batch.
    pub batch_size: Option<usize>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            step_size: T::of(0.5),
            iterations: 500,
            beta: T::zero(),
            epsilon: T::of(1e-6),
            seed: 0,
            init_scale: T::of(0.01),
            batch_size: None,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > T::zero()) {
            return Err(Error::InvalidParameter("step size must be > 0".into()));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if !(self.beta >= T::zero()) {
            return Err(Error::InvalidParameter("beta must be >= 0".into()));
        }
        if !(self.init_scale >= T::zero()) {
            return Err(Error::InvalidParameter("init scale must be >= 0".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Small random classifier weights, zero bias, confusion logits `2I`.
pub fn init_model<T: Scalar>(k: usize, d: usize, m: usize, init_scale: T, seed: u64) -> CcemModel<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, init_scale.as_f64()).unwrap_or_else(|_| Normal::new(0.0, 0.0).unwrap());
    let w = Array2::from_shape_fn((k, d), |_| T::of(normal.sample(&mut rng)));
    let z = vec![Array2::<T>::eye(k) * T::of(2.0); m];
    CcemModel { w, b: Array1::zeros(k), z }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcemFit<T> {
    pub model: CcemModel<T>,
    /// Loss before every step.
    pub loss_trace: Vec<T>,
}

fn apply_step<T: Scalar>(model: &mut CcemModel<T>, g: &CcemGrad<T>, lr: T) {
    model.w.scaled_add(-lr, &g.w);
    model.b.scaled_add(-lr, &g.b);
    for (z, gz) in model.z.iter_mut().zip(&g.z) {
        z.scaled_add(-lr, gz);
    }
}

/// Gradient descent on the coupled cross-entropy.
pub fn train_ccem<T: Scalar>(features: &FeatureSet<T>, a: &AnnotationSet, cfg: &TrainConfig<T>) -> Result<CcemFit<T>> {
    cfg.validate()?;
    let mut model = init_model(a.num_classes(), features.dim(), a.num_annotators(), cfg.init_scale, cfg.seed);
    check_alignment(&model, features, a)?;
    let all: Vec<usize> = (0..a.num_items()).collect();
    let mut order = all.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch: Vec<usize> = match cfg.batch_size {
            None => all.clone(),
            Some(bs) => {
                if cursor >= order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let end = (cursor + bs).min(order.len());
                let out = order[cursor..end].to_vec();
                cursor = end;
                out
            }
        };
        let (loss, grad) = loss_grad_on(&model, features, a, &batch, cfg.beta, cfg.epsilon)?;
        trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, trace: trace.iter().map(|v| v.as_f64()).collect() });
        }
        apply_step(&mut model, &grad, cfg.step_size);
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, trace: trace.iter().map(|v| v.as_f64()).collect() });
        }
    }
    Ok(CcemFit { model, loss_trace: trace })
}

/// `Σ_n log Σ_k f_k(x_n) Π_m A_m(y_n^(m), k)` and the item posteriors.
pub fn e2e_log_likelihood<T: Scalar>(
    model: &CcemModel<T>,
    features: &FeatureSet<T>,
    a: &AnnotationSet,
) -> Result<(T, LabelPosterior<T>)> {
    check_alignment(model, features, a)?;
    let k = model.num_classes();
    let f = model.predict_all(features)?;
    let log_a = log_confusions(&model.ds_params());
    let mut q = Array2::<T>::zeros((a.num_items(), k));
    let mut ll = T::zero();
    let mut scores = vec![T::zero(); k];
    for n in 0..a.num_items() {
        for c in 0..k {
            scores[c] = f[[n, c]].max(T::min_positive_value()).ln();
        }
        for &(m, y) in a.item_labels(n) {
            for c in 0..k {
                scores[c] += log_a[m][[y, c]];
            }
        }
        let z = log_sum_exp(&scores);
        ll += z;
        for c in 0..k {
            q[[n, c]] = (scores[c] - z).exp();
        }
    }
    Ok((ll, LabelPosterior::new_unchecked(q)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmE2eFit<T> {
    pub model: CcemModel<T>,
    /// End-to-end log-likelihood after every M-step.
    pub loglik_trace: Vec<T>,
}

/// Weighted cross-entropy `−(1/N) Σ_n Σ_k q_nk log f_k(x_n)` and its logit gradient.
fn weighted_ce<T: Scalar>(
    model: &CcemModel<T>,
    features: &FeatureSet<T>,
    q: &Array2<T>,
) -> Result<(T, Array2<T>, Array1<T>)> {
    let f = model.predict_all(features)?;
    let n = T::count(q.nrows().max(1));
    let loss = -q.iter().zip(f.iter()).map(|(&w, &p)| w * p.max(T::min_positive_value()).ln()).sum::<T>() / n;
    let g = (&f - q) / n;
    Ok((loss, g.t().dot(features.matrix()), g.sum_axis(ndarray::Axis(0))))
}

/// Generalized EM for the end-to-end model.
///
/// The E-step computes item posteriors under the current classifier and
/// confusions. The M-step sets the confusions in closed form and takes a
/// fixed number of backtracking gradient steps on the classifier, each of
/// which lowers the weighted cross-entropy, so the likelihood never drops.
pub fn train_em_e2e<T: Scalar>(
    features: &FeatureSet<T>,
    a: &AnnotationSet,
    cfg: &TrainConfig<T>,
    em_iters: usize,
) -> Result<EmE2eFit<T>> {
    cfg.validate()?;
    let k = a.num_classes();
    let mut model = init_model(k, features.dim(), a.num_annotators(), cfg.init_scale, cfg.seed);
    check_alignment(&model, features, a)?;
    let mv = majority_vote(a);
    let mut q = LabelPosterior::<T>::one_hot(&mv.labels, k).into_matrix();
    let floor = T::of(PROB_FLOOR);
    let inner = cfg.iterations.max(1);
    let mut trace = Vec::with_capacity(em_iters);
    for _ in 0..em_iters.max(1) {
        let ds = m_step(a, &LabelPosterior::new_unchecked(q.clone()), EmVariant::General, floor)?;
        model.z = ds.confusions.iter().map(|c| c.matrix().mapv(|v| v.ln())).collect();
        for _ in 0..inner {
            let (loss, gw, gb) = weighted_ce(&model, features, &q)?;
            let mut lr = cfg.step_size;
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = model.clone();
                trial.w.scaled_add(-lr, &gw);
                trial.b.scaled_add(-lr, &gb);
                let (trial_loss, _, _) = weighted_ce(&trial, features, &q)?;
                if trial_loss <= loss {
                    model = trial;
                    accepted = true;
                    break;
                }
                lr /= T::of(2.0);
            }
            if !accepted {
                break;
            }
        }
        let (ll, post) = e2e_log_likelihood(&model, features, a)?;
        if !ll.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: trace.len(),
                trace: trace.iter().map(|v: &T| v.as_f64()).collect(),
            });
        }
        trace.push(ll);
        q = post.into_matrix();
    }
    Ok(EmE2eFit { model, loglik_trace: trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDiagnostics<T> {
    /// Per class: the item whose prediction is closest to the unit vector, and that distance.
    pub nearest_items: Vec<(usize, T)>,
    /// Per class: the annotator whose confusion row is most concentrated on
    /// that class, and the row mass on the class.
    pub expert_margins: Vec<(usize, T)>,
}

/// Reports how close the learned model is to having anchor items and expert rows.
pub fn anchor_diagnostics<T: Scalar>(model: &CcemModel<T>, features: &FeatureSet<T>) -> Result<AnchorDiagnostics<T>> {
    let k = model.num_classes();
    let f = model.predict_all(features)?;
    let nearest_items = (0..k)
        .map(|c| {
            f.rows()
                .into_iter()
                .enumerate()
                .map(|(n, row)| {
                    let d: T = row
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| {
                            let t = if j == c { T::one() } else { T::zero() };
                            (v - t) * (v - t)
                        })
                        .sum();
                    (n, d.sqrt())
                })
                .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect();
    let confusions: Vec<Array2<T>> = model.z.iter().map(column_softmax).collect();
    let expert_margins = (0..k)
        .map(|c| {
            confusions
                .iter()
                .enumerate()
                .map(|(m, am)| {
                    let row_sum = am.row(c).sum();
                    (m, if row_sum > T::zero() { am[[c, c]] / row_sum } else { T::zero() })
                })
                .fold((0, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best })
        })
        .collect();
    Ok(AnchorDiagnostics { nearest_items, expert_margins })
}
