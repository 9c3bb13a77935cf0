//! Shared domain types: sparse annotations, confusion matrices, priors and
//! label posteriors.
//!
//! Confusion matrices are column-stochastic: entry `(k', k)` is the
//! probability that an annotator reports `k'` when the true class is `k`.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One observed label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Record {
    pub item: usize,
    pub annotator: usize,
    pub label: usize,
}

/// Sparse collection of `(item, annotator, label)` observations.
///
/// At most one record exists per `(item, annotator)` pair. Items without any
/// record are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    num_items: usize,
    num_annotators: usize,
    num_classes: usize,
    records: Vec<Record>,
    by_item: Vec<Vec<(usize, usize)>>,
    by_annotator: Vec<Vec<(usize, usize)>>,
}

impl AnnotationSet {
    pub fn new(num_items: usize, num_annotators: usize, num_classes: usize, mut records: Vec<Record>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidAnnotations(format!("need at least 2 classes, got {num_classes}")));
        }
        records.sort_by_key(|r| (r.item, r.annotator));
        for w in records.windows(2) {
            if w[0].item == w[1].item && w[0].annotator == w[1].annotator {
                return Err(Error::InvalidAnnotations(format!(
                    "duplicate record for item {} annotator {}",
                    w[0].item, w[0].annotator
                )));
            }
        }
        let mut by_item = vec![Vec::new(); num_items];
        let mut by_annotator = vec![Vec::new(); num_annotators];
        for r in &records {
            if r.item >= num_items || r.annotator >= num_annotators || r.label >= num_classes {
                return Err(Error::InvalidAnnotations(format!(
                    "record out of range: item {} annotator {} label {} (N={num_items}, M={num_annotators}, K={num_classes})",
                    r.item, r.annotator, r.label
                )));
            }
            by_item[r.item].push((r.annotator, r.label));
            by_annotator[r.annotator].push((r.item, r.label));
        }
        Ok(Self { num_items, num_annotators, num_classes, records, by_item, by_annotator })
    }

    /// Builds a set from a dense `N × M` table where `None` marks a missing label.
    pub fn from_dense(num_classes: usize, table: &[Vec<Option<usize>>]) -> Result<Self> {
        let n = table.len();
        let m = table.first().map_or(0, Vec::len);
        let mut records = Vec::new();
        for (item, row) in table.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch("ragged dense table".into()));
            }
            for (annotator, label) in row.iter().enumerate() {
                if let Some(label) = *label {
                    records.push(Record { item, annotator, label });
                }
            }
        }
        Self::new(n, m, num_classes, records)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Records sorted by `(item, annotator)`.
    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(annotator, label)` pairs for one item, sorted by annotator.
    pub fn item_labels(&self, item: usize) -> &[(usize, usize)] {
        &self.by_item[item]
    }

    /// `(item, label)` pairs for one annotator, sorted by item.
    pub fn annotator_labels(&self, annotator: usize) -> &[(usize, usize)] {
        &self.by_annotator[annotator]
    }

    /// Label given by `annotator` to `item`, if any.
    pub fn label(&self, item: usize, annotator: usize) -> Option<usize> {
        let row = &self.by_item[item];
        row.binary_search_by_key(&annotator, |&(a, _)| a).ok().map(|i| row[i].1)
    }

    /// Annotators with zero records.
    pub fn empty_annotators(&self) -> Vec<usize> {
        (0..self.num_annotators).filter(|&m| self.by_annotator[m].is_empty()).collect()
    }

    /// Items with zero records.
    pub fn empty_items(&self) -> Vec<usize> {
        (0..self.num_items).filter(|&n| self.by_item[n].is_empty()).collect()
    }

    /// True when every annotator labeled every item.
    pub fn is_fully_observed(&self) -> bool {
        self.records.len() == self.num_items * self.num_annotators
    }

    /// Restricts to a subset of annotators, re-indexed in the given order.
    /// Item indices are preserved.
    pub fn restrict_annotators(&self, annotators: &[usize]) -> Result<Self> {
        let mut records = Vec::new();
        for (new_m, &m) in annotators.iter().enumerate() {
            if m >= self.num_annotators {
                return Err(Error::DimensionMismatch(format!("annotator {m} out of range")));
            }
            records.extend(self.by_annotator[m].iter().map(|&(item, label)| Record { item, annotator: new_m, label }));
        }
        Self::new(self.num_items, annotators.len(), self.num_classes, records)
    }

    /// Applies `perm` to every label: label `k` becomes `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let records = self.records.iter().map(|r| Record { label: perm[r.label], ..*r }).collect();
        Self::new(self.num_items, self.num_annotators, self.num_classes, records)
    }
}

fn check_simplex<T: Scalar>(v: ArrayView1<'_, T>, what: &str) -> Result<()> {
    let tol = T::simplex_tol();
    for (i, &x) in v.iter().enumerate() {
        if !(x >= T::zero()) || x > T::one() + tol {
            return Err(Error::InvalidParameter(format!("{what}: entry {i} = {x} outside [0,1]")));
        }
    }
    let s: T = v.iter().copied().sum();
    if (s - T::one()).abs() > tol {
        return Err(Error::InvalidParameter(format!("{what}: sums to {s}")));
    }
    Ok(())
}

/// Column-stochastic `K × K` annotator confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix<T>(Array2<T>);

impl<T: Scalar> ConfusionMatrix<T> {
    pub fn new(entries: Array2<T>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch("confusion matrix must be square".into()));
        }
        for (k, col) in entries.columns().into_iter().enumerate() {
            check_simplex(col, &format!("confusion column {k}"))?;
        }
        Ok(Self(entries))
    }

    /// Wraps entries the caller guarantees to be column-stochastic.
    pub(crate) fn new_unchecked(entries: Array2<T>) -> Self {
        debug_assert!(Self::new(entries.clone()).is_ok());
        Self(entries)
    }

    /// Normalizes every column to unit sum after flooring entries at `floor`.
    /// All-zero columns become uniform.
    pub fn from_nonnegative(mut entries: Array2<T>, floor: T) -> Self {
        let k = entries.nrows();
        for mut col in entries.columns_mut() {
            col.mapv_inplace(|x| if x > T::zero() { x } else { T::zero() });
            let s: T = col.sum();
            if s > T::zero() {
                col.mapv_inplace(|x| x / s);
            } else {
                col.fill(T::one() / T::count(k));
            }
            if floor > T::zero() {
                col.mapv_inplace(|x| if x < floor { floor } else { x });
                let s: T = col.sum();
                col.mapv_inplace(|x| x / s);
            }
        }
        Self(entries)
    }

    pub fn identity(k: usize) -> Self {
        Self(Array2::eye(k))
    }

    pub fn uniform(k: usize) -> Self {
        Self(Array2::from_elem((k, k), T::one() / T::count(k)))
    }

    /// One-coin confusion: `p` on the diagonal, `(1-p)/(K-1)` elsewhere.
    pub fn one_coin(k: usize, p: T) -> Self {
        let off = (T::one() - p) / T::count(k - 1);
        Self(Array2::from_shape_fn((k, k), |(i, j)| if i == j { p } else { off }))
    }

    /// Confusion-vector model: per-class diagonal with uniform error spread.
    pub fn confusion_vector(diag: &[T]) -> Self {
        let k = diag.len();
        Self(Array2::from_shape_fn(
            (k, k),
            |(i, j)| {
                if i == j {
                    diag[j]
                } else {
                    (T::one() - diag[j]) / T::count(k - 1)
                }
            },
        ))
    }

    pub fn num_classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<T> {
        self.0
    }

    #[inline]
    pub fn get(&self, reported: usize, truth: usize) -> T {
        self.0[[reported, truth]]
    }

    /// Reorders columns: new column `j` is old column `mapping[j]`.
    pub fn permute_columns(&self, mapping: &[usize]) -> Self {
        let k = self.num_classes();
        Self(Array2::from_shape_fn((k, k), |(i, j)| self.0[[i, mapping[j]]]))
    }
}

/// Class prior on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior<T>(Array1<T>);

impl<T: Scalar> Prior<T> {
    pub fn new(entries: Array1<T>) -> Result<Self> {
        check_simplex(entries.view(), "prior")?;
        Ok(Self(entries))
    }

    pub(crate) fn new_unchecked(entries: Array1<T>) -> Self {
        debug_assert!(Self::new(entries.clone()).is_ok());
        Self(entries)
    }

    pub fn uniform(k: usize) -> Self {
        Self(Array1::from_elem(k, T::one() / T::count(k)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vector(&self) -> &Array1<T> {
        &self.0
    }

    pub fn into_vector(self) -> Array1<T> {
        self.0
    }

    #[inline]
    pub fn get(&self, k: usize) -> T {
        self.0[k]
    }

    pub fn permute(&self, mapping: &[usize]) -> Self {
        Self(Array1::from_shape_fn(self.len(), |j| self.0[mapping[j]]))
    }
}

/// Dawid–Skene parameters: one confusion matrix per annotator plus the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DsParams<T> {
    pub confusions: Vec<ConfusionMatrix<T>>,
    pub prior: Prior<T>,
}

impl<T: Scalar> DsParams<T> {
    pub fn new(confusions: Vec<ConfusionMatrix<T>>, prior: Prior<T>) -> Result<Self> {
        let k = prior.len();
        if confusions.iter().any(|c| c.num_classes() != k) {
            return Err(Error::DimensionMismatch("confusion size differs from prior".into()));
        }
        Ok(Self { confusions, prior })
    }

    /// Every annotator gets `diag` on the diagonal and uniform off-diagonal mass.
    pub fn diagonal(num_annotators: usize, k: usize, diag: T) -> Self {
        Self { confusions: vec![ConfusionMatrix::one_coin(k, diag); num_annotators], prior: Prior::uniform(k) }
    }

    pub fn num_annotators(&self) -> usize {
        self.confusions.len()
    }

    pub fn num_classes(&self) -> usize {
        self.prior.len()
    }

    /// Relabels the latent class: new class `j` is old class `mapping[j]`.
    pub fn permute_classes(&self, perm: &Permutation) -> Self {
        Self {
            confusions: self.confusions.iter().map(|c| c.permute_columns(perm.mapping())).collect(),
            prior: self.prior.permute(perm.mapping()),
        }
    }

    pub(crate) fn check_dims(&self, a: &AnnotationSet) -> Result<()> {
        if self.num_annotators() != a.num_annotators() || self.num_classes() != a.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "params (M={}, K={}) vs annotations (M={}, K={})",
                self.num_annotators(),
                self.num_classes(),
                a.num_annotators(),
                a.num_classes()
            )));
        }
        Ok(())
    }
}

/// Row-stochastic `N × K` posterior over the true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPosterior<T>(Array2<T>);

impl<T: Scalar> LabelPosterior<T> {
    pub fn new(rows: Array2<T>) -> Result<Self> {
        for (n, row) in rows.rows().into_iter().enumerate() {
            check_simplex(row, &format!("posterior row {n}"))?;
        }
        Ok(Self(rows))
    }

    pub(crate) fn new_unchecked(rows: Array2<T>) -> Self {
        Self(rows)
    }

    /// One-hot rows at the given labels.
    pub fn one_hot(labels: &[usize], k: usize) -> Self {
        let mut q = Array2::zeros((labels.len(), k));
        for (n, &l) in labels.iter().enumerate() {
            q[[n, l]] = T::one();
        }
        Self(q)
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self(Array2::from_elem((n, k), T::one() / T::count(k)))
    }

    pub fn num_items(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<T> {
        self.0
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, T> {
        self.0.row(n)
    }
}

/// Bijection on `0..K`. Applied to a confusion matrix, column `j` of the
/// result is column `mapping[j]` of the input.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &i in &mapping {
            if i >= mapping.len() || seen[i] {
                return Err(Error::InvalidParameter(format!("not a permutation: {mapping:?}")));
            }
            seen[i] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity(k: usize) -> Self {
        Self((0..k).collect())
    }

    pub fn mapping(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (j, &i) in self.0.iter().enumerate() {
            inv[i] = j;
        }
        Self(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(j, &i)| i == j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn annotation_set_rejects_duplicates_and_out_of_range() {
        let r = |item, annotator, label| Record { item, annotator, label };
        assert!(AnnotationSet::new(2, 2, 2, vec![r(0, 0, 1), r(0, 0, 0)]).is_err());
        assert!(AnnotationSet::new(2, 2, 2, vec![r(2, 0, 1)]).is_err());
        assert!(AnnotationSet::new(2, 2, 2, vec![r(0, 0, 2)]).is_err());
        assert!(AnnotationSet::new(2, 2, 1, vec![]).is_err());
        let a = AnnotationSet::new(3, 2, 2, vec![r(1, 1, 1), r(0, 0, 0)]).unwrap();
        assert_eq!(a.label(1, 1), Some(1));
        assert_eq!(a.label(1, 0), None);
        assert_eq!(a.empty_items(), vec![2]);
        assert!(a.empty_annotators().is_empty());
    }

    #[test]
    fn confusion_validation() {
        assert!(ConfusionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).is_ok());
        assert!(ConfusionMatrix::new(array![[0.9, 0.2], [0.2, 0.8]]).is_err());
        assert!(ConfusionMatrix::new(array![[1.1, 0.2], [-0.1, 0.8]]).is_err());
        let c = ConfusionMatrix::<f64>::from_nonnegative(array![[0.0, 3.0], [0.0, 1.0]], 0.0);
        assert_eq!(c.matrix(), &array![[0.5, 0.75], [0.5, 0.25]]);
    }

    #[test]
    fn permutation_roundtrip() {
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        let c = ConfusionMatrix::<f64>::new(array![[0.8, 0.1, 0.0], [0.1, 0.7, 0.3], [0.1, 0.2, 0.7]]).unwrap();
        let back = c.permute_columns(p.mapping()).permute_columns(p.inverse().mapping());
        assert_eq!(back, c);
        assert!(Permutation::new(vec![0, 0]).is_err());
    }
}
