//! Second- and third-order co-labeling statistics and the moment-based
//! Dawid–Skene estimators built on them.
//!
//! Under the model, the joint label distribution of two annotators is
//! `S_{m,i} = A_m diag(d) A_iᵀ` and that of three annotators is the rank-`K`
//! tensor `⟦d, A_m, A_i, A_j⟧`. Three estimators are provided:
//!
//! * [`cnmf_spa`]: stacks pairwise blocks into a nonnegative matrix
//!   `X = W H` and finds anchor rows of `W` with the successive projection
//!   algorithm. Exact when every class has an expert annotator whose row
//!   for that class is a scaled unit vector.
//! * [`cnmf_opt`]: minimizes `Σ KL(S_{m,i} ‖ A_m diag(d) A_iᵀ)` with
//!   multiplicative updates that keep every iterate on the simplex.
//! * [`ctd_fit`]: minimizes the coupled tensor least-squares criterion by
//!   cyclic block updates, each block solved over the simplex.
//!
//! All estimators return parameters aligned to diagonal dominance.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3};

use crate::align::align_diag_dominant;
use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, Prior};
use crate::error::{Error, Result};
use crate::linalg::{nnls_gram, spectral_norm_psd, symmetric_eigen};
use crate::scalar::{Scalar, PROB_FLOOR};
use crate::simplex::project_to_simplex;

/// Minimum number of co-labeled items for a moment estimate to be used.
pub const DEFAULT_MIN_COLABELS: usize = 20;

/// Empirical joint label distributions for ordered annotator pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseStats<T> {
    num_annotators: usize,
    num_classes: usize,
    blocks: Vec<Option<Array2<T>>>,
    counts: Vec<usize>,
}

impl<T: Scalar> PairwiseStats<T> {
    /// Exact population moments `A_m diag(d) A_iᵀ` for every pair.
    pub fn from_params(params: &DsParams<T>) -> Self {
        let (m_count, k) = (params.num_annotators(), params.num_classes());
        let d = Array2::from_diag(params.prior.vector());
        let mut blocks = vec![None; m_count * m_count];
        for m in 0..m_count {
            for i in 0..m_count {
                if m != i {
                    let am = params.confusions[m].matrix();
                    let ai = params.confusions[i].matrix();
                    blocks[m * m_count + i] = Some(am.dot(&d).dot(&ai.t()));
                }
            }
        }
        Self { num_annotators: m_count, num_classes: k, blocks, counts: vec![0; m_count * m_count] }
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `Ŝ_{m,i}`, or `None` when the pair is unavailable.
    pub fn get(&self, m: usize, i: usize) -> Option<&Array2<T>> {
        if m == i {
            return None;
        }
        self.blocks[m * self.num_annotators + i].as_ref()
    }

    pub fn is_available(&self, m: usize, i: usize) -> bool {
        self.get(m, i).is_some()
    }

    /// Number of co-labeled items (zero for population moments).
    pub fn count(&self, m: usize, i: usize) -> usize {
        self.counts[m * self.num_annotators + i]
    }

    /// Available unordered pairs `(m, i)` with `m < i`.
    pub fn available_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for m in 0..self.num_annotators {
            for i in (m + 1)..self.num_annotators {
                if self.is_available(m, i) {
                    out.push((m, i));
                }
            }
        }
        out
    }
}

/// `Ŝ_{m,i}(k, k')` = fraction of co-labeled items where `m` said `k` and `i` said `k'`.
pub fn pairwise_stats<T: Scalar>(a: &AnnotationSet, min_colabels: usize) -> PairwiseStats<T> {
    let (m_count, k) = (a.num_annotators(), a.num_classes());
    let mut raw = vec![0u32; m_count * m_count * k * k];
    let mut counts = vec![0usize; m_count * m_count];
    for n in 0..a.num_items() {
        let labels = a.item_labels(n);
        for &(m, ym) in labels {
            for &(i, yi) in labels {
                if m != i {
                    raw[((m * m_count + i) * k + ym) * k + yi] += 1;
                    counts[m * m_count + i] += 1;
                }
            }
        }
    }
    let threshold = min_colabels.max(1);
    let blocks = (0..m_count * m_count)
        .map(|p| {
            let c = counts[p];
            if c < threshold {
                return None;
            }
            let total = T::count(c);
            Some(Array2::from_shape_fn((k, k), |(x, y)| T::of(raw[(p * k + x) * k + y] as f64) / total))
        })
        .collect();
    PairwiseStats { num_annotators: m_count, num_classes: k, blocks, counts }
}

/// Empirical third-order joint label distributions for triples `m < i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleStats<T> {
    num_annotators: usize,
    num_classes: usize,
    tensors: BTreeMap<(usize, usize, usize), (Array3<T>, usize)>,
}

impl<T: Scalar> TripleStats<T> {
    /// Exact population tensors `⟦d, A_m, A_i, A_j⟧` for every triple.
    pub fn from_params(params: &DsParams<T>) -> Self {
        let (m_count, k) = (params.num_annotators(), params.num_classes());
        let mut tensors = BTreeMap::new();
        for m in 0..m_count {
            for i in (m + 1)..m_count {
                for j in (i + 1)..m_count {
                    let t = cp_tensor(params, (m, i, j));
                    tensors.insert((m, i, j), (t, 0));
                }
            }
        }
        Self { num_annotators: m_count, num_classes: k, tensors }
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Tensor for a sorted triple `m < i < j`.
    pub fn get(&self, m: usize, i: usize, j: usize) -> Option<&Array3<T>> {
        self.tensors.get(&(m, i, j)).map(|(t, _)| t)
    }

    pub fn count(&self, m: usize, i: usize, j: usize) -> usize {
        self.tensors.get(&(m, i, j)).map_or(0, |&(_, c)| c)
    }

    pub fn triples(&self) -> impl Iterator<Item = ((usize, usize, usize), &Array3<T>)> {
        self.tensors.iter().map(|(&key, (t, _))| (key, t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

fn cp_tensor<T: Scalar>(params: &DsParams<T>, (m, i, j): (usize, usize, usize)) -> Array3<T> {
    let k = params.num_classes();
    let (am, ai, aj) = (params.confusions[m].matrix(), params.confusions[i].matrix(), params.confusions[j].matrix());
    Array3::from_shape_fn((k, k, k), |(x, y, z)| {
        (0..k).map(|c| params.prior.get(c) * am[[x, c]] * ai[[y, c]] * aj[[z, c]]).sum()
    })
}

pub fn triple_stats<T: Scalar>(a: &AnnotationSet, min_colabels: usize) -> TripleStats<T> {
    let (m_count, k) = (a.num_annotators(), a.num_classes());
    let mut raw: BTreeMap<(usize, usize, usize), (Vec<u32>, usize)> = BTreeMap::new();
    for n in 0..a.num_items() {
        let labels = a.item_labels(n);
        for (p, &(m, ym)) in labels.iter().enumerate() {
            for (q, &(i, yi)) in labels.iter().enumerate().skip(p + 1) {
                for &(j, yj) in labels.iter().skip(q + 1) {
                    let entry = raw.entry((m, i, j)).or_insert_with(|| (vec![0; k * k * k], 0));
                    entry.0[(ym * k + yi) * k + yj] += 1;
                    entry.1 += 1;
                }
            }
        }
    }
    let threshold = min_colabels.max(1);
    let tensors = raw
        .into_iter()
        .filter(|(_, (_, c))| *c >= threshold)
        .map(|(key, (cells, c))| {
            let total = T::count(c);
            let t = Array3::from_shape_fn((k, k, k), |(x, y, z)| T::of(cells[(x * k + y) * k + z] as f64) / total);
            (key, (t, c))
        })
        .collect();
    TripleStats { num_annotators: m_count, num_classes: k, tensors }
}

/// Split of the annotators into row (`ℳ`) and column (`ℐ`) groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partition {
    /// Even-indexed annotators form the rows, odd-indexed the columns.
    Auto,
    Given {
        rows: Vec<usize>,
        cols: Vec<usize>,
    },
}

struct SideFit<T> {
    params: DsParams<T>,
    residual: T,
}

/// SPA-based estimate from pairwise statistics.
///
/// Both orientations of the partition are tried (rows as `W`, or columns as
/// `W`); the one with the smaller moment residual is returned.
pub fn cnmf_spa<T: Scalar>(stats: &PairwiseStats<T>, partition: &Partition) -> Result<DsParams<T>> {
    let m_count = stats.num_annotators();
    let (rows, cols) = match partition {
        Partition::Auto => (
            (0..m_count).filter(|m| m % 2 == 0).collect::<Vec<_>>(),
            (0..m_count).filter(|m| m % 2 == 1).collect::<Vec<_>>(),
        ),
        Partition::Given { rows, cols } => {
            if rows.iter().chain(cols).any(|&m| m >= m_count) {
                return Err(Error::InvalidParameter("partition index out of range".into()));
            }
            if rows.iter().any(|m| cols.contains(m)) {
                return Err(Error::InvalidParameter("partition groups overlap".into()));
            }
            (rows.clone(), cols.clone())
        }
    };
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InsufficientPairs("partition has an empty side".into()));
    }
    if !rows.iter().any(|&m| cols.iter().any(|&i| stats.is_available(m, i))) {
        return Err(Error::InsufficientPairs("no available cross pairs".into()));
    }
    let first = spa_side(stats, &rows, &cols);
    let second = spa_side(stats, &cols, &rows);
    let best = match (first, second) {
        (Ok(a), Ok(b)) => {
            if b.residual < a.residual {
                b
            } else {
                a
            }
        }
        (Ok(a), Err(_)) => a,
        (Err(_), Ok(b)) => b,
        (Err(e), Err(_)) => return Err(e),
    };
    align_diag_dominant(&best.params)
}

/// Sum of squared deviations between the available pairwise statistics and
/// the moments implied by `params`.
pub fn moment_residual<T: Scalar>(stats: &PairwiseStats<T>, params: &DsParams<T>) -> T {
    let d = Array2::from_diag(params.prior.vector());
    stats
        .available_pairs()
        .into_iter()
        .map(|(m, i)| {
            let model = params.confusions[m].matrix().dot(&d).dot(&params.confusions[i].matrix().t());
            (stats.get(m, i).unwrap() - &model).mapv(|x| x * x).sum()
        })
        .sum()
}

fn spa_side<T: Scalar>(stats: &PairwiseStats<T>, rows: &[usize], cols: &[usize]) -> Result<SideFit<T>> {
    let k = stats.num_classes();
    let m_count = stats.num_annotators();
    let (nr, nc) = (rows.len() * k, cols.len() * k);
    let mut x = Array2::<T>::zeros((nr, nc));
    let mut avail = Array2::<bool>::from_elem((rows.len(), cols.len()), false);
    for (ri, &m) in rows.iter().enumerate() {
        for (ci, &i) in cols.iter().enumerate() {
            if let Some(s) = stats.get(m, i) {
                avail[[ri, ci]] = true;
                for a in 0..k {
                    for b in 0..k {
                        x[[ri * k + a, ci * k + b]] = s[[a, b]];
                    }
                }
            }
        }
    }

    // Columns used for anchor search: drop the least-available column
    // annotators until some row annotator co-labels with all remaining ones.
    let mut used: Vec<usize> = (0..cols.len()).filter(|&ci| (0..rows.len()).any(|ri| avail[[ri, ci]])).collect();
    let full_rows = |used: &[usize]| -> Vec<usize> {
        (0..rows.len()).filter(|&ri| used.iter().all(|&ci| avail[[ri, ci]])).collect()
    };
    while full_rows(&used).is_empty() && used.len() > 1 {
        let worst = *used
            .iter()
            .min_by_key(|&&ci| ((0..rows.len()).filter(|&ri| avail[[ri, ci]]).count(), usize::MAX - ci))
            .unwrap();
        used.retain(|&ci| ci != worst);
    }
    let candidates = full_rows(&used);
    if candidates.is_empty() || used.is_empty() {
        return Err(Error::InsufficientPairs("no row annotator co-labels with the column set".into()));
    }
    let used_cols: Vec<usize> = used.iter().flat_map(|&ci| (0..k).map(move |b| ci * k + b)).collect();

    // successive projection on row-normalized candidate rows
    let min_mass = T::of(1e-3) / T::count(k);
    let mut pool: Vec<(usize, Vec<T>)> = Vec::new();
    for &ri in &candidates {
        for a in 0..k {
            let r = ri * k + a;
            let row: Vec<T> = used_cols.iter().map(|&c| x[[r, c]]).collect();
            let mass: T = row.iter().copied().sum::<T>() / T::count(used.len());
            if mass > min_mass {
                let s: T = row.iter().copied().sum();
                pool.push((r, row.into_iter().map(|v| v / s).collect()));
            }
        }
    }
    if pool.len() < k {
        return Err(Error::AnchorDegenerate);
    }
    let initial_norm = pool.iter().map(|(_, v)| v.iter().map(|&t| t * t).sum::<T>()).fold(T::zero(), |a, b| a.max(b));
    let mut anchors = Vec::with_capacity(k);
    for _ in 0..k {
        let (best, best_norm) = pool
            .iter()
            .enumerate()
            .map(|(p, (_, v))| (p, v.iter().map(|&t| t * t).sum::<T>()))
            .fold((usize::MAX, T::neg_infinity()), |acc, (p, n)| if n > acc.1 { (p, n) } else { acc });
        if best == usize::MAX || !(best_norm > initial_norm * T::of(1e-20)) {
            return Err(Error::AnchorDegenerate);
        }
        anchors.push(pool[best].0);
        let norm = best_norm.sqrt();
        let u: Vec<T> = pool[best].1.iter().map(|&t| t / norm).collect();
        for (_, v) in pool.iter_mut() {
            let proj: T = v.iter().zip(&u).map(|(&a, &b)| a * b).sum();
            v.iter_mut().zip(&u).for_each(|(a, &b)| *a -= proj * b);
        }
    }

    // H restricted to the anchor columns, then W, then H on every column
    let mut h = Array2::<T>::zeros((k, nc));
    for (c, &r) in anchors.iter().enumerate() {
        for &col in &used_cols {
            h[[c, col]] = x[[r, col]];
        }
    }
    let gram = h.select(ndarray::Axis(1), &used_cols).dot(&h.select(ndarray::Axis(1), &used_cols).t());
    let (vals, _) = symmetric_eigen(gram.view());
    if !(vals[k - 1] > vals[0] * T::of(1e-12)) {
        return Err(Error::AnchorDegenerate);
    }
    let col_avail = |col: usize| col / k;
    let mut col_known = vec![false; nc];
    for &c in &used_cols {
        col_known[c] = true;
    }
    let mut w = solve_rows(&x, &h, |ri, c| col_known[c] && avail[[ri, col_avail(c)]], k);
    // fix scale: every W block column should sum to one
    for c in 0..k {
        let mut sums = Vec::new();
        for ri in 0..rows.len() {
            if (0..cols.len()).any(|ci| avail[[ri, ci]]) {
                sums.push((0..k).map(|a| w[[ri * k + a, c]]).sum::<T>());
            }
        }
        let s = sums.iter().copied().sum::<T>() / T::count(sums.len().max(1));
        if s > T::zero() {
            w.column_mut(c).mapv_inplace(|v| v / s);
            h.row_mut(c).mapv_inplace(|v| v * s);
        }
    }
    let row_block_known: Vec<bool> = (0..rows.len()).map(|ri| (0..cols.len()).any(|ci| avail[[ri, ci]])).collect();
    // column-normalize each W block before solving for H
    for ri in 0..rows.len() {
        normalize_block_columns(&mut w, ri * k, k);
    }
    let h = solve_cols(&x, &w, |r, ci| row_block_known[r / k] && avail[[r / k, ci]], k);

    let mut confusions: Vec<ConfusionMatrix<T>> = vec![ConfusionMatrix::uniform(k); m_count];
    for (ri, &m) in rows.iter().enumerate() {
        if row_block_known[ri] {
            let block = w.slice(ndarray::s![ri * k..(ri + 1) * k, ..]).to_owned();
            confusions[m] = ConfusionMatrix::from_nonnegative(block, T::zero());
        }
    }
    let mut d_acc = vec![T::zero(); k];
    let mut d_n = 0usize;
    for (ci, &i) in cols.iter().enumerate() {
        if !(0..rows.len()).any(|ri| avail[[ri, ci]]) {
            continue;
        }
        // H block (k, k2) = d(k) A_i(k2, k)
        let block = h.slice(ndarray::s![.., ci * k..(ci + 1) * k]).t().to_owned();
        for (acc, col) in d_acc.iter_mut().zip(block.columns()) {
            *acc += col.sum();
        }
        d_n += 1;
        confusions[i] = ConfusionMatrix::from_nonnegative(block, T::zero());
    }
    if d_n == 0 {
        return Err(Error::InsufficientPairs("no column annotator has available pairs".into()));
    }
    let total: T = d_acc.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::AnchorDegenerate);
    }
    let prior = Prior::new_unchecked(Array1::from_iter(d_acc.into_iter().map(|v| v / total)));
    let params = DsParams { confusions, prior };
    let residual = moment_residual(stats, &params);
    Ok(SideFit { params, residual })
}

fn normalize_block_columns<T: Scalar>(w: &mut Array2<T>, start: usize, k: usize) {
    for c in 0..k {
        let s: T = (0..k).map(|a| w[[start + a, c]]).sum();
        if s > T::zero() {
            for a in 0..k {
                w[[start + a, c]] /= s;
            }
        }
    }
}

/// Row-wise masked NNLS: `x[r, :] ≈ w_r H` over columns where `known(r / k, c)`.
fn solve_rows<T: Scalar>(x: &Array2<T>, h: &Array2<T>, known: impl Fn(usize, usize) -> bool, k: usize) -> Array2<T> {
    let mut w = Array2::<T>::zeros((x.nrows(), k));
    for r in 0..x.nrows() {
        let cs: Vec<usize> = (0..x.ncols()).filter(|&c| known(r / k, c)).collect();
        if cs.is_empty() {
            continue;
        }
        let g = Array2::from_shape_fn((k, k), |(a, b)| cs.iter().map(|&c| h[[a, c]] * h[[b, c]]).sum());
        let rhs: Vec<T> = (0..k).map(|a| cs.iter().map(|&c| h[[a, c]] * x[[r, c]]).sum()).collect();
        for (a, v) in nnls_gram(g.view(), &rhs).into_iter().enumerate() {
            w[[r, a]] = v;
        }
    }
    w
}

/// Column-wise masked NNLS: `x[:, c] ≈ W h_c` over rows where `known(r, c / k)`.
fn solve_cols<T: Scalar>(x: &Array2<T>, w: &Array2<T>, known: impl Fn(usize, usize) -> bool, k: usize) -> Array2<T> {
    let mut h = Array2::<T>::zeros((k, x.ncols()));
    for c in 0..x.ncols() {
        let rs: Vec<usize> = (0..x.nrows()).filter(|&r| known(r, c / k)).collect();
        if rs.is_empty() {
            continue;
        }
        let g = Array2::from_shape_fn((k, k), |(a, b)| rs.iter().map(|&r| w[[r, a]] * w[[r, b]]).sum());
        let rhs: Vec<T> = (0..k).map(|a| rs.iter().map(|&r| w[[r, a]] * x[[r, c]]).sum()).collect();
        for (a, v) in nnls_gram(g.view(), &rhs).into_iter().enumerate() {
            h[[a, c]] = v;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentFit<T> {
    pub params: DsParams<T>,
    /// Objective at the initial point followed by one entry per sweep.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
}

/// Coupled KL objective `Σ_{m<i} KL(Ŝ_{m,i} ‖ A_m diag(d) A_iᵀ)` over available pairs.
pub fn cnmf_objective<T: Scalar>(stats: &PairwiseStats<T>, params: &DsParams<T>) -> T {
    let floor = T::of(PROB_FLOOR);
    let d = Array2::from_diag(params.prior.vector());
    stats
        .available_pairs()
        .into_iter()
        .map(|(m, i)| {
            let s = stats.get(m, i).unwrap();
            let model = params.confusions[m].matrix().dot(&d).dot(&params.confusions[i].matrix().t());
            s.iter()
                .zip(model.iter())
                .filter(|(&p, _)| p > T::zero())
                .map(|(&p, &q)| p * (p / q.max(floor)).ln())
                .sum::<T>()
        })
        .sum()
}

/// Block-coordinate minimization of the coupled KL objective.
///
/// Each block update is the closed-form majorize–minimize step for one
/// confusion matrix (or the prior) with the others fixed, so the objective
/// never increases.
pub fn cnmf_opt<T: Scalar>(stats: &PairwiseStats<T>, init: &DsParams<T>, iters: usize, tol: T) -> Result<MomentFit<T>> {
    let (m_count, k) = (stats.num_annotators(), stats.num_classes());
    if init.num_annotators() != m_count || init.num_classes() != k {
        return Err(Error::DimensionMismatch("init does not match statistics".into()));
    }
    for c in &init.confusions {
        ConfusionMatrix::new(c.matrix().clone())?;
    }
    Prior::new(init.prior.vector().clone())?;
    let floor = T::of(PROB_FLOOR);
    let mut a: Vec<Array2<T>> = init.confusions.iter().map(|c| c.matrix().clone()).collect();
    let mut d = init.prior.vector().clone();
    let partners: Vec<Vec<usize>> =
        (0..m_count).map(|m| (0..m_count).filter(|&i| stats.is_available(m, i)).collect()).collect();
    let current = |a: &[Array2<T>], d: &Array1<T>| {
        let params = DsParams {
            confusions: a.iter().map(|x| ConfusionMatrix::new_unchecked(x.clone())).collect(),
            prior: Prior::new_unchecked(d.clone()),
        };
        cnmf_objective(stats, &params)
    };
    let mut obj = current(&a, &d);
    let mut trace = vec![obj];
    let mut iterations = 0;
    for it in 1..=iters {
        for m in 0..m_count {
            if partners[m].is_empty() {
                continue;
            }
            let mut acc = Array2::<T>::zeros((k, k));
            for &i in &partners[m] {
                let s = stats.get(m, i).unwrap();
                let model = model_pair(&a[m], &d, &a[i]);
                for x in 0..k {
                    for y in 0..k {
                        if s[[x, y]] > T::zero() {
                            let ratio = s[[x, y]] / model[[x, y]].max(floor);
                            for c in 0..k {
                                acc[[x, c]] += ratio * a[i][[y, c]];
                            }
                        }
                    }
                }
            }
            let mut next = Array2::from_shape_fn((k, k), |(x, c)| a[m][[x, c]] * d[c] * acc[[x, c]]);
            for c in 0..k {
                let s: T = next.column(c).sum();
                if s > T::zero() {
                    next.column_mut(c).mapv_inplace(|v| v / s);
                } else {
                    next.column_mut(c).assign(&a[m].column(c));
                }
            }
            a[m] = next;
        }
        let mut acc = Array1::<T>::zeros(k);
        for (m, i) in stats.available_pairs() {
            let s = stats.get(m, i).unwrap();
            let model = model_pair(&a[m], &d, &a[i]);
            for x in 0..k {
                for y in 0..k {
                    if s[[x, y]] > T::zero() {
                        let ratio = s[[x, y]] / model[[x, y]].max(floor);
                        for c in 0..k {
                            acc[c] += ratio * a[m][[x, c]] * a[i][[y, c]];
                        }
                    }
                }
            }
        }
        let next = Array1::from_shape_fn(k, |c| d[c] * acc[c]);
        let s = next.sum();
        if s > T::zero() {
            d = next / s;
        }
        let prev = obj;
        obj = current(&a, &d);
        trace.push(obj);
        iterations = it;
        if (prev - obj).abs() <= tol * prev.abs().max(T::min_positive_value()) || obj <= T::zero() {
            break;
        }
    }
    let params = DsParams {
        confusions: a.into_iter().map(ConfusionMatrix::new_unchecked).collect(),
        prior: Prior::new_unchecked(d),
    };
    Ok(MomentFit { params: align_diag_dominant(&params)?, objective_trace: trace, iterations })
}

fn model_pair<T: Scalar>(am: &Array2<T>, d: &Array1<T>, ai: &Array2<T>) -> Array2<T> {
    let k = d.len();
    Array2::from_shape_fn((k, k), |(x, y)| (0..k).map(|c| am[[x, c]] * d[c] * ai[[y, c]]).sum())
}

/// Coupled tensor objective `Σ ‖T̂_{m,i,j} − ⟦d, A_m, A_i, A_j⟧‖_F²`.
pub fn ctd_objective<T: Scalar>(stats: &TripleStats<T>, params: &DsParams<T>) -> T {
    stats.triples().map(|(key, t)| (t - &cp_tensor(params, key)).mapv(|v| v * v).sum()).sum()
}

/// Monotone projected gradient on a convex quadratic
/// `f(x) = xᵀ-form` supplied through closures, with Nesterov momentum that
/// is dropped whenever it would increase the objective.
fn projected_gradient<T: Scalar>(
    x0: Vec<T>,
    f: impl Fn(&[T]) -> T,
    grad: impl Fn(&[T]) -> Vec<T>,
    project: impl Fn(&[T]) -> Vec<T>,
    lipschitz: T,
    max_iters: usize,
) -> Vec<T> {
    if !(lipschitz > T::zero()) {
        return x0;
    }
    let step = T::one() / lipschitz;
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut y = x0;
    let mut t = T::one();
    for _ in 0..max_iters {
        let g = grad(&y);
        let cand: Vec<T> = y.iter().zip(&g).map(|(&yi, &gi)| yi - step * gi).collect();
        let mut next = project(&cand);
        let mut fnext = f(&next);
        if fnext > fx {
            // restart from x with a plain projected step, which cannot increase f
            let g = grad(&x);
            let cand: Vec<T> = x.iter().zip(&g).map(|(&xi, &gi)| xi - step * gi).collect();
            next = project(&cand);
            fnext = f(&next);
            t = T::one();
            if fnext > fx {
                break;
            }
        }
        let t_next = (T::one() + (T::one() + T::of(4.0) * t * t).sqrt()) / T::of(2.0);
        let beta = (t - T::one()) / t_next;
        let change: T = next.iter().zip(&x).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
        y = next.iter().zip(&x).map(|(&a, &b)| a + beta * (a - b)).collect();
        let decrease = fx - fnext;
        x = next;
        fx = fnext;
        t = t_next;
        if change <= T::of(1e-15) || decrease <= T::epsilon() * fx.abs() * T::of(1e-2) && change <= T::of(1e-12) {
            break;
        }
    }
    x
}

/// Cyclic block minimization of the coupled tensor objective. Each confusion
/// matrix and the prior are updated by solving their simplex-constrained
/// least-squares subproblem, so the objective never increases.
pub fn ctd_fit<T: Scalar>(stats: &TripleStats<T>, init: &DsParams<T>, iters: usize, tol: T) -> Result<MomentFit<T>> {
    let (m_count, k) = (stats.num_annotators(), stats.num_classes());
    if init.num_annotators() != m_count || init.num_classes() != k {
        return Err(Error::DimensionMismatch("init does not match statistics".into()));
    }
    if stats.is_empty() {
        return Err(Error::InsufficientPairs("no available triples".into()));
    }
    let mut covered = vec![false; m_count];
    for ((m, i, j), _) in stats.triples() {
        covered[m] = true;
        covered[i] = true;
        covered[j] = true;
    }
    if let Some(m) = covered.iter().position(|&c| !c) {
        return Err(Error::UncoveredAnnotator(m));
    }
    let mut params = init.clone();
    let mut obj = ctd_objective(stats, &params);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let inner = 500;
    for it in 1..=iters {
        for m in 0..m_count {
            // normal equations: minimize tr(A G Aᵀ) − 2 tr(A Cᵀ)
            let mut g = Array2::<T>::zeros((k, k));
            let mut c = Array2::<T>::zeros((k, k));
            for ((a0, a1, a2), t) in stats.triples() {
                let (pos, q, r) = if a0 == m {
                    (0, a1, a2)
                } else if a1 == m {
                    (1, a0, a2)
                } else if a2 == m {
                    (2, a0, a1)
                } else {
                    continue;
                };
                let aq = params.confusions[q].matrix();
                let ar = params.confusions[r].matrix();
                let d = params.prior.vector();
                for u in 0..k {
                    for v in 0..k {
                        g[[u, v]] += d[u] * d[v] * aq.column(u).dot(&aq.column(v)) * ar.column(u).dot(&ar.column(v));
                    }
                }
                for x in 0..k {
                    for y in 0..k {
                        for z in 0..k {
                            let val = match pos {
                                0 => t[[x, y, z]],
                                1 => t[[y, x, z]],
                                _ => t[[y, z, x]],
                            };
                            if val == T::zero() {
                                continue;
                            }
                            for u in 0..k {
                                c[[x, u]] += val * d[u] * aq[[y, u]] * ar[[z, u]];
                            }
                        }
                    }
                }
            }
            let lip = T::of(2.0) * spectral_norm_psd(g.view());
            let f = |flat: &[T]| {
                let a = Array2::from_shape_vec((k, k), flat.to_vec()).unwrap();
                (a.dot(&g) * &a).sum() - T::of(2.0) * (&a * &c).sum()
            };
            let grad = |flat: &[T]| {
                let a = Array2::from_shape_vec((k, k), flat.to_vec()).unwrap();
                ((a.dot(&g) - &c) * T::of(2.0)).into_raw_vec_and_offset().0
            };
            let project = |flat: &[T]| project_columns(flat, k);
            let x0 = params.confusions[m].matrix().as_standard_layout().to_owned().into_raw_vec_and_offset().0;
            let sol = projected_gradient(x0, f, grad, project, lip, inner);
            params.confusions[m] = ConfusionMatrix::new_unchecked(Array2::from_shape_vec((k, k), sol).unwrap());
        }
        // prior: minimize dᵀ G d − 2 cᵀ d over the simplex
        let mut g = Array2::<T>::zeros((k, k));
        let mut c = Array1::<T>::zeros(k);
        for ((a0, a1, a2), t) in stats.triples() {
            let (x0, x1, x2) =
                (params.confusions[a0].matrix(), params.confusions[a1].matrix(), params.confusions[a2].matrix());
            for u in 0..k {
                for v in 0..k {
                    g[[u, v]] += x0.column(u).dot(&x0.column(v))
                        * x1.column(u).dot(&x1.column(v))
                        * x2.column(u).dot(&x2.column(v));
                }
                let mut s = T::zero();
                for ((x, y, z), &val) in t.indexed_iter() {
                    s += val * x0[[x, u]] * x1[[y, u]] * x2[[z, u]];
                }
                c[u] += s;
            }
        }
        let lip = T::of(2.0) * spectral_norm_psd(g.view());
        let f = |d: &[T]| {
            let d = Array1::from(d.to_vec());
            d.dot(&g.dot(&d)) - T::of(2.0) * c.dot(&d)
        };
        let grad = |d: &[T]| {
            let d = Array1::from(d.to_vec());
            ((g.dot(&d) - &c) * T::of(2.0)).to_vec()
        };
        let sol = projected_gradient(params.prior.vector().to_vec(), f, grad, |v| project_to_simplex(v), lip, inner);
        params.prior = Prior::new_unchecked(Array1::from(sol));

        let prev = obj;
        obj = ctd_objective(stats, &params);
        trace.push(obj);
        iterations = it;
        if (prev - obj).abs() <= tol * prev.abs().max(T::min_positive_value()) || obj <= T::zero() {
            break;
        }
    }
    Ok(MomentFit { params: align_diag_dominant(&params)?, objective_trace: trace, iterations })
}

/// Projects each column of a row-major `k × k` matrix onto the simplex.
fn project_columns<T: Scalar>(flat: &[T], k: usize) -> Vec<T> {
    let mut out = flat.to_vec();
    for c in 0..k {
        let col: Vec<T> = (0..k).map(|r| flat[r * k + c]).collect();
        for (r, v) in project_to_simplex(&col).into_iter().enumerate() {
            out[r * k + c] = v;
        }
    }
    out
}
