//! Correlated annotator groups.
//!
//! Annotators inside a group share a latent group label `z^(ℓ)` drawn from a
//! collective confusion `Ξ^(ℓ)`; each member then reports through its own
//! confusion `Ã_m` applied to `z^(ℓ)`. Groups are found by spectral
//! clustering of the pairwise agreement matrix, and the hierarchy is fit
//! bottom-up with Dawid–Skene EM at both levels.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, Prior, Record};
use crate::ds_em::{fit_em, map_decode, EmConfig, EmResult};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, symmetric_eigen};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel<T> {
    /// Group id of every annotator.
    pub assignment: Vec<usize>,
    /// Collective confusion `Ξ^(ℓ)` of every group.
    pub group_confusions: Vec<ConfusionMatrix<T>>,
    /// Confusion of every annotator with respect to its group's latent label.
    pub annotator_confusions: Vec<ConfusionMatrix<T>>,
    pub prior: Prior<T>,
}

impl<T: Scalar> GroupModel<T> {
    pub fn num_groups(&self) -> usize {
        self.group_confusions.len()
    }

    /// Annotator indices of every group, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        group_members(&self.assignment, self.num_groups())
    }
}

fn group_members(assignment: &[usize], l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); l];
    for (m, &g) in assignment.iter().enumerate() {
        out[g].push(m);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement<T> {
    /// Symmetric `M × M` agreement rates with unit diagonal.
    pub matrix: Array2<T>,
    /// Pairs `(m, i)`, `m < i`, below the co-label threshold; filled with the mean.
    pub filled: Vec<(usize, usize)>,
}

/// Empirical `Pr(y^(m) = y^(i))` over co-labeled items.
pub fn agreement_matrix<T: Scalar>(a: &AnnotationSet, min_colabels: usize) -> Agreement<T> {
    let m_count = a.num_annotators();
    let mut same = Array2::<u32>::zeros((m_count, m_count));
    let mut total = Array2::<u32>::zeros((m_count, m_count));
    for n in 0..a.num_items() {
        let labels = a.item_labels(n);
        for (p, &(m, ym)) in labels.iter().enumerate() {
            for &(i, yi) in &labels[p + 1..] {
                total[[m, i]] += 1;
                if ym == yi {
                    same[[m, i]] += 1;
                }
            }
        }
    }
    let threshold = min_colabels.max(1) as u32;
    let mut matrix = Array2::<T>::eye(m_count);
    let mut filled = Vec::new();
    let (mut sum, mut count) = (T::zero(), 0usize);
    for m in 0..m_count {
        for i in (m + 1)..m_count {
            if total[[m, i]] >= threshold {
                let v = T::of(same[[m, i]] as f64) / T::of(total[[m, i]] as f64);
                matrix[[m, i]] = v;
                matrix[[i, m]] = v;
                sum += v;
                count += 1;
            } else {
                filled.push((m, i));
            }
        }
    }
    let mean = if count > 0 { sum / T::count(count) } else { T::one() / T::count(a.num_classes()) };
    for &(m, i) in &filled {
        matrix[[m, i]] = mean;
        matrix[[i, m]] = mean;
    }
    Agreement { matrix, filled }
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 100;

/// Spectral clustering of annotators into `l` groups.
///
/// The agreement matrix is degree-normalized, annotators are embedded by the
/// row-normalized top-`l` eigenvectors, and k-means (plus-plus seeding, ten
/// restarts) picks the lowest-inertia partition. Group ids are renumbered in
/// order of first appearance.
pub fn cluster_annotators<T: Scalar>(agreement: &Array2<T>, l: usize, seed: u64) -> Result<Vec<usize>> {
    let m_count = agreement.nrows();
    if agreement.ncols() != m_count {
        return Err(Error::DimensionMismatch("agreement matrix must be square".into()));
    }
    if l == 0 || l > m_count {
        return Err(Error::InvalidParameter(format!("need 1 <= L <= M, got L = {l}, M = {m_count}")));
    }
    if l == 1 {
        return Ok(vec![0; m_count]);
    }
    if l == m_count {
        return Ok((0..m_count).collect());
    }
    let degree: Vec<T> = agreement.rows().into_iter().map(|r| r.sum()).collect();
    let inv_sqrt: Vec<T> =
        degree.iter().map(|&d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() }).collect();
    let normalized = Array2::from_shape_fn((m_count, m_count), |(i, j)| inv_sqrt[i] * agreement[[i, j]] * inv_sqrt[j]);
    let (_, vectors) = symmetric_eigen(normalized.view());
    let mut embed = vectors.slice(ndarray::s![.., ..l]).to_owned();
    for mut row in embed.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > T::zero() {
            row.mapv_inplace(|v| v / norm);
        }
    }
    let points: Vec<Vec<f64>> = embed.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        if let Some((inertia, assign)) = kmeans(&points, l, &mut rng) {
            if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-12) {
                best = Some((inertia, assign));
            }
        }
    }
    match best {
        Some((_, assign)) => Ok(relabel_by_first_appearance(&assign)),
        None => Err(Error::EmptyGroup(l)),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One k-means run from plus-plus seeding; `None` if a cluster ends empty.
fn kmeans(points: &[Vec<f64>], l: usize, rng: &mut ChaCha8Rng) -> Option<(f64, Vec<usize>)> {
    let n = points.len();
    let mut centers = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < l {
        let d2: Vec<f64> =
            points.iter().map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[pick].clone());
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = (0..l).min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b]))).unwrap();
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                for (j, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                }
            }
        }
    }
    if (0..l).any(|c| !assign.contains(&c)) {
        return None;
    }
    let inertia = points.iter().zip(&assign).map(|(p, &c)| sq_dist(p, &centers[c])).sum();
    Some((inertia, assign))
}

fn relabel_by_first_appearance(assign: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    assign
        .iter()
        .map(|&g| {
            let next = map.len();
            *map.entry(g).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalFit<T> {
    pub model: GroupModel<T>,
    pub labels: Vec<usize>,
    /// Fit of the second level, whose annotators are the groups.
    pub level2: EmResult<T>,
}

/// Clusters annotators into `l` groups, then fits the two-level hierarchy.
pub fn fit_hierarchical<T: Scalar>(
    a: &AnnotationSet,
    l: usize,
    cfg: &EmConfig<T>,
    seed: u64,
) -> Result<HierarchicalFit<T>> {
    let agreement = agreement_matrix::<T>(a, 1);
    let assignment = cluster_annotators(&agreement.matrix, l, seed)?;
    fit_hierarchical_with_groups(a, &assignment, cfg)
}

/// Two-level fit for a known group assignment.
///
/// Each group is fit with Dawid–Skene EM on its own records and its MAP
/// latent labels become one "group annotator" in a second-level annotation
/// set, which is fit again to give `Ξ`, the prior and the final labels.
/// Items a group never labeled get no second-level record from it.
pub fn fit_hierarchical_with_groups<T: Scalar>(
    a: &AnnotationSet,
    assignment: &[usize],
    cfg: &EmConfig<T>,
) -> Result<HierarchicalFit<T>> {
    if assignment.len() != a.num_annotators() {
        return Err(Error::LengthMismatch(assignment.len(), a.num_annotators()));
    }
    let l = assignment.iter().copied().max().map_or(0, |g| g + 1);
    let members = group_members(assignment, l);
    if let Some(g) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::EmptyGroup(g));
    }
    let k = a.num_classes();
    let mut annotator_confusions = vec![ConfusionMatrix::uniform(k); a.num_annotators()];
    let mut level2_records = Vec::new();
    for (g, group) in members.iter().enumerate() {
        let sub = a.restrict_annotators(group)?;
        let fit = fit_em(&sub, cfg)?;
        let z = map_decode(&fit.posterior);
        for (local, &m) in group.iter().enumerate() {
            annotator_confusions[m] = fit.params.confusions[local].clone();
        }
        for (n, &label) in z.iter().enumerate() {
            if !sub.item_labels(n).is_empty() {
                level2_records.push(Record { item: n, annotator: g, label });
            }
        }
    }
    let level2_set = AnnotationSet::new(a.num_items(), l, k, level2_records)?;
    let level2 = fit_em(&level2_set, cfg)?;
    let labels = map_decode(&level2.posterior);
    let model = GroupModel {
        assignment: assignment.to_vec(),
        group_confusions: level2.params.confusions.clone(),
        annotator_confusions,
        prior: level2.params.prior.clone(),
    };
    Ok(HierarchicalFit { model, labels, level2 })
}

/// Default threshold below which an annotator is flagged as a spammer.
pub const SPAMMER_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SpammerReport<T> {
    /// `σ₂(A_m) / σ₁(A_m)`; zero for a rank-one confusion.
    pub scores: Array1<T>,
    pub flagged: Vec<usize>,
}

/// Distance of every confusion matrix from rank one, measured by its
/// second-to-first singular value ratio.
pub fn spammer_scores<T: Scalar>(params: &DsParams<T>, tau: T) -> SpammerReport<T> {
    let scores = Array1::from_iter(params.confusions.iter().map(|c| {
        let s = singular_values(c.matrix().view());
        if s.len() < 2 || !(s[0] > T::zero()) {
            T::zero()
        } else {
            (s[1] / s[0]).min(T::one())
        }
    }));
    let flagged = scores.iter().enumerate().filter(|(_, &s)| s < tau).map(|(m, _)| m).collect();
    SpammerReport { scores, flagged }
}

/// Mean within-group and cross-group agreement for a given assignment.
pub fn group_agreement<T: Scalar>(agreement: &Array2<T>, assignment: &[usize]) -> (T, T) {
    let (mut within, mut wn, mut cross, mut cn) = (T::zero(), 0usize, T::zero(), 0usize);
    for m in 0..agreement.nrows() {
        for i in (m + 1)..agreement.nrows() {
            if assignment[m] == assignment[i] {
                within += agreement[[m, i]];
                wn += 1;
            } else {
                cross += agreement[[m, i]];
                cn += 1;
            }
        }
    }
    let mean = |s: T, c: usize| if c > 0 { s / T::count(c) } else { T::zero() };
    (mean(within, wn), mean(cross, cn))
}
