//! CSV and JSON file formats.
//!
//! * annotations: `item,annotator,label` (0-based ids, one row per label)
//! * sequences: `sequence,item,annotator,label`
//! * features: `item,f0,...,f{D-1}`
//! * labels / ground truth: `item,label`
//! * parameters: JSON with `num_classes`, `num_annotators`, `prior` and
//!   row-major `confusions[m][reported][truth]`

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::domain::{AnnotationSet, ConfusionMatrix, DsParams, Prior, Record};
use crate::e2e_ccem::FeatureSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seqhmm::LabeledSequence;

/// Optional overrides for sizes that would otherwise be inferred from the ids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Shape {
    pub num_items: Option<usize>,
    pub num_annotators: Option<usize>,
    pub num_classes: Option<usize>,
}

fn resolve(given: Option<usize>, inferred: usize, what: &str) -> Result<usize> {
    match given {
        Some(g) if g < inferred => Err(Error::InvalidAnnotations(format!("{what} = {g} but ids reach {inferred}"))),
        Some(g) => Ok(g),
        None => Ok(inferred),
    }
}

fn build_set(records: Vec<Record>, shape: Shape) -> Result<AnnotationSet> {
    let n = resolve(shape.num_items, records.iter().map(|r| r.item + 1).max().unwrap_or(0), "num_items")?;
    let m =
        resolve(shape.num_annotators, records.iter().map(|r| r.annotator + 1).max().unwrap_or(0), "num_annotators")?;
    let k = resolve(shape.num_classes, records.iter().map(|r| r.label + 1).max().unwrap_or(0).max(2), "num_classes")?;
    AnnotationSet::new(n, m, k, records)
}

pub fn read_annotations<R: Read>(reader: R, shape: Shape) -> Result<AnnotationSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let records = rdr.deserialize::<Record>().collect::<std::result::Result<Vec<_>, _>>()?;
    build_set(records, shape)
}

pub fn write_annotations<W: Write>(writer: W, a: &AnnotationSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in a.records() {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SequenceRow {
    sequence: usize,
    item: usize,
    annotator: usize,
    label: usize,
}

/// Reads sequences; each sequence's length is its largest position id plus one.
pub fn read_sequences<R: Read>(
    reader: R,
    num_annotators: Option<usize>,
    num_classes: Option<usize>,
) -> Result<Vec<LabeledSequence>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = rdr.deserialize::<SequenceRow>().collect::<std::result::Result<Vec<_>, _>>()?;
    let m = resolve(num_annotators, rows.iter().map(|r| r.annotator + 1).max().unwrap_or(0), "num_annotators")?;
    let k = resolve(num_classes, rows.iter().map(|r| r.label + 1).max().unwrap_or(0).max(2), "num_classes")?;
    let count = rows.iter().map(|r| r.sequence + 1).max().unwrap_or(0);
    let mut grouped: Vec<Vec<Record>> = vec![Vec::new(); count];
    for r in rows {
        grouped[r.sequence].push(Record { item: r.item, annotator: r.annotator, label: r.label });
    }
    grouped
        .into_iter()
        .map(|records| {
            let shape = Shape { num_items: None, num_annotators: Some(m), num_classes: Some(k) };
            build_set(records, shape).map(LabeledSequence::new)
        })
        .collect()
}

pub fn write_sequences<W: Write>(writer: W, seqs: &[LabeledSequence]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (s, seq) in seqs.iter().enumerate() {
        for r in seq.annotations().records() {
            w.serialize(SequenceRow { sequence: s, item: r.item, annotator: r.annotator, label: r.label })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads features; every item id in `0..N` must appear exactly once.
pub fn read_features<T: Scalar, R: Read>(reader: R) -> Result<FeatureSet<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let dim = rdr.headers()?.len().checked_sub(1).ok_or_else(|| Error::Parse("missing header".into()))?;
    let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let item: usize = rec.get(0).unwrap_or("").parse().map_err(|e| Error::Parse(format!("item id: {e}")))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("feature value {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(Error::Parse(format!("item {item} has {} features, expected {dim}", values.len())));
        }
        if rows.insert(item, values).is_some() {
            return Err(Error::Parse(format!("duplicate feature row for item {item}")));
        }
    }
    let n = rows.len();
    if rows.keys().next_back().is_some_and(|&last| last + 1 != n) {
        return Err(Error::Parse("feature item ids must cover 0..N".into()));
    }
    let mut x = Array2::<T>::zeros((n, dim));
    for (item, values) in rows {
        for (j, v) in values.into_iter().enumerate() {
            x[[item, j]] = T::of(v);
        }
    }
    FeatureSet::new(x)
}

pub fn write_features<T: Scalar, W: Write>(writer: W, features: &FeatureSet<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["item".to_string()];
    header.extend((0..features.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for n in 0..features.num_items() {
        let mut row = vec![n.to_string()];
        row.extend(features.row(n).iter().map(|v| v.as_f64().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    item: usize,
    label: usize,
}

/// Reads `item,label` rows; item ids must cover `0..N` exactly once.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut map = BTreeMap::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row?;
        if map.insert(row.item, row.label).is_some() {
            return Err(Error::Parse(format!("duplicate label for item {}", row.item)));
        }
    }
    if map.keys().next_back().is_some_and(|&last| last + 1 != map.len()) {
        return Err(Error::Parse("label item ids must cover 0..N".into()));
    }
    Ok(map.into_values().collect())
}

/// Reads `item,label` rows into a sparse map (items may be missing).
pub fn read_sparse_labels<R: Read>(reader: R) -> Result<BTreeMap<usize, usize>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut map = BTreeMap::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row?;
        if map.insert(row.item, row.label).is_some() {
            return Err(Error::Parse(format!("duplicate label for item {}", row.item)));
        }
    }
    Ok(map)
}

pub fn write_labels<W: Write>(writer: W, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (item, &label) in labels.iter().enumerate() {
        w.serialize(LabelRow { item, label })?;
    }
    w.flush()?;
    Ok(())
}

/// Serialized form of [`DsParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub num_classes: usize,
    pub num_annotators: usize,
    pub prior: Vec<f64>,
    /// `confusions[m][reported][truth]`.
    pub confusions: Vec<Vec<Vec<f64>>>,
}

impl ParamsFile {
    pub fn from_params<T: Scalar>(p: &DsParams<T>) -> Self {
        Self {
            num_classes: p.num_classes(),
            num_annotators: p.num_annotators(),
            prior: p.prior.vector().iter().map(|v| v.as_f64()).collect(),
            confusions: p
                .confusions
                .iter()
                .map(|c| c.matrix().rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect())
                .collect(),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<DsParams<T>> {
        let k = self.num_classes;
        if self.prior.len() != k || self.confusions.len() != self.num_annotators {
            return Err(Error::DimensionMismatch("parameter file sizes are inconsistent".into()));
        }
        let confusions = self
            .confusions
            .iter()
            .map(|rows| {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::DimensionMismatch("confusion matrix is not K x K".into()));
                }
                ConfusionMatrix::new(Array2::from_shape_fn((k, k), |(i, j)| T::of(rows[i][j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let prior = Prior::new(Array1::from_iter(self.prior.iter().map(|&v| T::of(v))))?;
        DsParams::new(confusions, prior)
    }
}

pub fn write_params<T: Scalar, W: Write>(writer: W, p: &DsParams<T>) -> Result<()> {
    serde_json::to_writer_pretty(writer, &ParamsFile::from_params(p)).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_params<T: Scalar, R: Read>(reader: R) -> Result<DsParams<T>> {
    let file: ParamsFile = serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotations_round_trip() {
        let text = "item,annotator,label\n0,0,1\n0,1,0\n2,1,2\n";
        let a = read_annotations(text.as_bytes(), Shape::default()).unwrap();
        assert_eq!((a.num_items(), a.num_annotators(), a.num_classes()), (3, 2, 3));
        let mut out = Vec::new();
        write_annotations(&mut out, &a).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(read_annotations("item,annotator,label\n0,x,1\n".as_bytes(), Shape::default()).is_err());
        assert!(read_annotations("item,annotator,label\n0,0,1\n0,0,0\n".as_bytes(), Shape::default()).is_err());
        let shape = Shape { num_classes: Some(2), ..Default::default() };
        assert!(read_annotations("item,annotator,label\n0,0,5\n".as_bytes(), shape).is_err());
    }

    #[test]
    fn sequences_round_trip() {
        let text = "sequence,item,annotator,label\n0,0,0,1\n0,1,0,0\n1,0,1,1\n";
        let seqs = read_sequences(text.as_bytes(), None, None).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].len(), 2);
        let mut out = Vec::new();
        write_sequences(&mut out, &seqs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn features_and_labels() {
        let f: FeatureSet<f64> = read_features("item,f0,f1\n1,3.0,4.0\n0,1.0,2.0\n".as_bytes()).unwrap();
        assert_eq!(f.matrix()[[1, 0]], 3.0);
        assert!(read_features::<f64, _>("item,f0\n0,1\n2,1\n".as_bytes()).is_err());
        let l = read_labels("item,label\n1,0\n0,1\n".as_bytes()).unwrap();
        assert_eq!(l, vec![1, 0]);
    }

    #[test]
    fn params_round_trip() {
        let p = DsParams::<f64>::diagonal(3, 2, 0.75);
        let mut out = Vec::new();
        write_params(&mut out, &p).unwrap();
        let back: DsParams<f64> = read_params(out.as_slice()).unwrap();
        assert_eq!(back, p);
    }
}
