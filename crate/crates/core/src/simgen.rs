//! Seeded synthetic data for every supported noise model.
//!
//! One seed drives several independent ChaCha streams (parameters, labels,
//! observation masks, responses, group labels, features). Every `(n, m)`
//! pair consumes one mask draw and one response draw whether or not it ends
//! up observed, so changing `p_obs` never changes the true labels or the
//! responses of pairs that remain observed.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, Prior, Record};
use crate::e2e_ccem::FeatureSet;
use crate::error::{Error, Result};
use crate::groups::GroupModel;
use crate::scalar::Scalar;
use crate::seqhmm::{HmmParams, LabeledSequence};

const STREAM_PARAMS: u64 = 0;
const STREAM_LABELS: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_RESPONSES: u64 = 3;
const STREAM_GROUPS: u64 = 4;
const STREAM_FEATURES: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec<T> {
    Uniform,
    Given(Prior<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfusionSpec<T> {
    /// Diagonal uniform in `[gamma, 1]`; off-diagonal mass split at random.
    DiagDominant {
        gamma: f64,
    },
    /// One-coin accuracy uniform in `[low, high]`.
    OneCoin {
        low: f64,
        high: f64,
    },
    /// Perfect with probability `q` (accuracy `hammer_accuracy`), otherwise uniform random.
    SpammerHammer {
        q: f64,
        hammer_accuracy: f64,
    },
    /// Per-class accuracies uniform in `[low, high]`; errors spread evenly.
    ConfusionVector {
        low: f64,
        high: f64,
    },
    Given(Vec<ConfusionMatrix<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec<T> {
    pub num_classes: usize,
    pub num_annotators: usize,
    pub num_items: usize,
    pub prior: PriorSpec<T>,
    pub confusions: ConfusionSpec<T>,
    /// Probability that a given annotator labels a given item.
    pub p_obs: f64,
    pub seed: u64,
}

impl<T: Scalar> GenSpec<T> {
    pub fn new(
        num_classes: usize,
        num_annotators: usize,
        num_items: usize,
        confusions: ConfusionSpec<T>,
        seed: u64,
    ) -> Self {
        Self { num_classes, num_annotators, num_items, prior: PriorSpec::Uniform, confusions, p_obs: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if k < 2 {
            return Err(Error::InvalidParameter("need at least two classes".into()));
        }
        if !(0.0..=1.0).contains(&self.p_obs) {
            return Err(Error::InvalidParameter(format!("p_obs = {} outside [0, 1]", self.p_obs)));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
            }
        };
        match &self.confusions {
            ConfusionSpec::DiagDominant { gamma } => {
                if !(*gamma > 1.0 / k as f64 && *gamma <= 1.0) {
                    return Err(Error::InvalidParameter(format!("gamma = {gamma} outside (1/K, 1]")));
                }
            }
            ConfusionSpec::OneCoin { low, high } | ConfusionSpec::ConfusionVector { low, high } => {
                unit("low", *low)?;
                unit("high", *high)?;
                if low > high {
                    return Err(Error::InvalidParameter("low > high".into()));
                }
            }
            ConfusionSpec::SpammerHammer { q, hammer_accuracy } => {
                unit("q", *q)?;
                unit("hammer accuracy", *hammer_accuracy)?;
            }
            ConfusionSpec::Given(list) => {
                if list.len() != self.num_annotators || list.iter().any(|c| c.num_classes() != k) {
                    return Err(Error::DimensionMismatch("given confusions do not match K and M".into()));
                }
            }
        }
        if let PriorSpec::Given(p) = &self.prior {
            if p.len() != k {
                return Err(Error::DimensionMismatch("given prior does not match K".into()));
            }
        }
        Ok(())
    }

    fn prior_vector(&self) -> Prior<T> {
        match &self.prior {
            PriorSpec::Uniform => Prior::uniform(self.num_classes),
            PriorSpec::Given(p) => p.clone(),
        }
    }

    fn draw_confusions(&self, rng: &mut ChaCha8Rng) -> Vec<ConfusionMatrix<T>> {
        let k = self.num_classes;
        let uniform_in = |rng: &mut ChaCha8Rng, low: f64, high: f64| low + (high - low) * rng.gen::<f64>();
        (0..self.num_annotators)
            .map(|_| match &self.confusions {
                ConfusionSpec::DiagDominant { gamma } => {
                    let mut a = Array2::<T>::zeros((k, k));
                    for c in 0..k {
                        let diag = uniform_in(rng, *gamma, 1.0);
                        let weights: Vec<f64> = (0..k - 1).map(|_| rng.gen::<f64>()).collect();
                        let total: f64 = weights.iter().sum();
                        a[[c, c]] = T::of(diag);
                        let mut w = weights.into_iter();
                        for r in (0..k).filter(|&r| r != c) {
                            let share = w.next().unwrap();
                            let v = if total > 0.0 { share / total } else { 1.0 / (k - 1) as f64 };
                            a[[r, c]] = T::of((1.0 - diag) * v);
                        }
                    }
                    ConfusionMatrix::from_nonnegative(a, T::zero())
                }
                ConfusionSpec::OneCoin { low, high } => {
                    ConfusionMatrix::one_coin(k, T::of(uniform_in(rng, *low, *high)))
                }
                ConfusionSpec::SpammerHammer { q, hammer_accuracy } => {
                    if rng.gen::<f64>() < *q {
                        ConfusionMatrix::one_coin(k, T::of(*hammer_accuracy))
                    } else {
                        ConfusionMatrix::uniform(k)
                    }
                }
                ConfusionSpec::ConfusionVector { low, high } => {
                    let diag: Vec<T> = (0..k).map(|_| T::of(uniform_in(rng, *low, *high))).collect();
                    ConfusionMatrix::confusion_vector(&diag)
                }
                ConfusionSpec::Given(_) => unreachable!(),
            })
            .collect()
    }

    fn params(&self) -> DsParams<T> {
        let confusions = match &self.confusions {
            ConfusionSpec::Given(list) => list.clone(),
            _ => self.draw_confusions(&mut stream(self.seed, STREAM_PARAMS)),
        };
        DsParams { confusions, prior: self.prior_vector() }
    }
}

/// Index drawn from a probability vector; `u` uniform in `[0, 1)`.
fn categorical<T: Scalar>(probs: impl Iterator<Item = T>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsData<T> {
    pub annotations: AnnotationSet,
    pub labels: Vec<usize>,
    pub params: DsParams<T>,
}

fn draw_labels<T: Scalar>(prior: &Prior<T>, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| categorical(prior.vector().iter().copied(), rng.gen())).collect()
}

/// Responses for items whose (per-annotator) latent column is `column(n, m)`.
fn draw_responses<T: Scalar>(
    spec: &GenSpec<T>,
    confusions: &[ConfusionMatrix<T>],
    column: impl Fn(usize, usize) -> usize,
) -> Result<AnnotationSet> {
    let mut mask = stream(spec.seed, STREAM_MASK);
    let mut resp = stream(spec.seed, STREAM_RESPONSES);
    let mut records = Vec::new();
    for n in 0..spec.num_items {
        for (m, a) in confusions.iter().enumerate() {
            let observed = mask.gen::<f64>() < spec.p_obs;
            let u: f64 = resp.gen();
            if observed {
                let label = categorical(a.matrix().column(column(n, m)).iter().copied(), u);
                records.push(Record { item: n, annotator: m, label });
            }
        }
    }
    AnnotationSet::new(spec.num_items, spec.num_annotators, spec.num_classes, records)
}

/// Samples i.i.d. labels from the prior and annotator responses from the confusions.
pub fn gen_ds<T: Scalar>(spec: &GenSpec<T>) -> Result<DsData<T>> {
    spec.validate()?;
    let params = spec.params();
    let labels = draw_labels(&params.prior, spec.num_items, &mut stream(spec.seed, STREAM_LABELS));
    let annotations = draw_responses(spec, &params.confusions, |n, _| labels[n])?;
    Ok(DsData { annotations, labels, params })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionSpec<T> {
    /// Diagonal `stay`, remaining mass spread evenly.
    Sticky {
        stay: f64,
    },
    Given(ConfusionMatrix<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmData<T> {
    pub sequences: Vec<LabeledSequence>,
    pub paths: Vec<Vec<usize>>,
    pub params: HmmParams<T>,
}

/// Markov label chains of length `spec.num_items`, one per sequence.
pub fn gen_hmm<T: Scalar>(
    spec: &GenSpec<T>,
    transition: &TransitionSpec<T>,
    num_sequences: usize,
) -> Result<HmmData<T>> {
    spec.validate()?;
    let k = spec.num_classes;
    let t = match transition {
        TransitionSpec::Sticky { stay } => {
            if !(0.0..=1.0).contains(stay) {
                return Err(Error::InvalidParameter(format!("stay = {stay} outside [0, 1]")));
            }
            ConfusionMatrix::one_coin(k, T::of(*stay))
        }
        TransitionSpec::Given(t) => {
            if t.num_classes() != k {
                return Err(Error::DimensionMismatch("transition does not match K".into()));
            }
            t.clone()
        }
    };
    let ds = spec.params();
    let mut label_rng = stream(spec.seed, STREAM_LABELS);
    let mut sequences = Vec::with_capacity(num_sequences);
    let mut paths = Vec::with_capacity(num_sequences);
    for s in 0..num_sequences {
        let mut path = Vec::with_capacity(spec.num_items);
        for n in 0..spec.num_items {
            let u: f64 = label_rng.gen();
            let next = if n == 0 {
                categorical(ds.prior.vector().iter().copied(), u)
            } else {
                categorical(t.matrix().column(path[n - 1]).iter().copied(), u)
            };
            path.push(next);
        }
        // each sequence gets its own mask/response streams
        let sub =
            GenSpec { seed: spec.seed.wrapping_add((s as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)), ..spec.clone() };
        let annotations = draw_responses(&sub, &ds.confusions, |n, _| path[n])?;
        sequences.push(LabeledSequence::new(annotations));
        paths.push(path);
    }
    let params = HmmParams::new(ds.prior, t, ds.confusions)?;
    Ok(HmmData { sequences, paths, params })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData<T> {
    pub annotations: AnnotationSet,
    pub labels: Vec<usize>,
    /// `latent[ℓ][n]`: group `ℓ`'s collective label for item `n`.
    pub latent: Vec<Vec<usize>>,
    pub model: GroupModel<T>,
}

/// Hierarchical responses: `z^(ℓ) ~ Ξ^(ℓ)(:, y)`, then annotator `m` in group
/// `ℓ` responds from `Ã_m(:, z^(ℓ))`. Annotators are assigned to groups in
/// contiguous blocks of the given sizes. `spec.confusions` supplies `Ã_m`.
pub fn gen_grouped<T: Scalar>(
    spec: &GenSpec<T>,
    group_sizes: &[usize],
    group_confusions: &[ConfusionMatrix<T>],
) -> Result<GroupedData<T>> {
    spec.validate()?;
    if group_sizes.len() != group_confusions.len() {
        return Err(Error::LengthMismatch(group_sizes.len(), group_confusions.len()));
    }
    if group_sizes.iter().sum::<usize>() != spec.num_annotators {
        return Err(Error::DimensionMismatch("group sizes must sum to M".into()));
    }
    if let Some(g) = group_sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(g));
    }
    if group_confusions.iter().any(|c| c.num_classes() != spec.num_classes) {
        return Err(Error::DimensionMismatch("group confusion does not match K".into()));
    }
    let assignment: Vec<usize> = group_sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
    let params = spec.params();
    let labels = draw_labels(&params.prior, spec.num_items, &mut stream(spec.seed, STREAM_LABELS));
    let mut zrng = stream(spec.seed, STREAM_GROUPS);
    let mut latent = vec![vec![0; spec.num_items]; group_sizes.len()];
    for n in 0..spec.num_items {
        for (g, xi) in group_confusions.iter().enumerate() {
            latent[g][n] = categorical(xi.matrix().column(labels[n]).iter().copied(), zrng.gen());
        }
    }
    let annotations = draw_responses(spec, &params.confusions, |n, m| latent[assignment[m]][n])?;
    let model = GroupModel {
        assignment,
        group_confusions: group_confusions.to_vec(),
        annotator_confusions: params.confusions,
        prior: params.prior,
    };
    Ok(GroupedData { annotations, labels, latent, model })
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eData<T> {
    pub features: FeatureSet<T>,
    pub annotations: AnnotationSet,
    pub labels: Vec<usize>,
    pub params: DsParams<T>,
}

/// Class means for `k` classes in `dim` dimensions with nearest-pair distance `separation`.
pub fn class_means(k: usize, dim: usize, separation: f64) -> Array2<f64> {
    let mut means = Array2::zeros((k, dim));
    if dim == 1 {
        for c in 0..k {
            means[[c, 0]] = separation * c as f64;
        }
    } else if dim > 1 {
        let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
        for c in 0..k {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            means[[c, 0]] = radius * angle.cos();
            means[[c, 1]] = radius * angle.sin();
        }
    }
    means
}

/// Unit-variance Gaussian class blobs plus annotations from [`gen_ds`].
pub fn gen_e2e<T: Scalar>(spec: &GenSpec<T>, dim: usize, separation: f64) -> Result<E2eData<T>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("feature dimension must be >= 1".into()));
    }
    if !(separation >= 0.0) {
        return Err(Error::InvalidParameter("separation must be >= 0".into()));
    }
    let ds = gen_ds(spec)?;
    let means = class_means(spec.num_classes, dim, separation);
    let mut rng = stream(spec.seed, STREAM_FEATURES);
    let mut x = Array2::<T>::zeros((spec.num_items, dim));
    for (n, &y) in ds.labels.iter().enumerate() {
        for j in 0..dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[[n, j]] = T::of(means[[y, j]] + noise);
        }
    }
    Ok(E2eData { features: FeatureSet::new(x)?, annotations: ds.annotations, labels: ds.labels, params: ds.params })
}

/// Empirical confusion of every annotator against known labels (columns are true classes).
pub fn empirical_confusions(a: &AnnotationSet, labels: &[usize]) -> Vec<Array2<f64>> {
    let k = a.num_classes();
    let mut counts = vec![Array2::<f64>::zeros((k, k)); a.num_annotators()];
    for r in a.records() {
        counts[r.annotator][[r.label, labels[r.item]]] += 1.0;
    }
    for c in counts.iter_mut() {
        for mut col in c.columns_mut() {
            let s = col.sum();
            if s > 0.0 {
                col.mapv_inplace(|v| v / s);
            }
        }
    }
    counts
}

/// Empirical bigram transition frequencies (column-normalized) of label paths.
pub fn empirical_transitions(paths: &[Vec<usize>], k: usize) -> Array2<f64> {
    let mut t = Array2::<f64>::zeros((k, k));
    for p in paths {
        for w in p.windows(2) {
            t[[w[1], w[0]]] += 1.0;
        }
    }
    for mut col in t.columns_mut() {
        let s = col.sum();
        if s > 0.0 {
            col.mapv_inplace(|v| v / s);
        }
    }
    t
}
