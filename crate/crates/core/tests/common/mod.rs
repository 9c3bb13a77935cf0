//! Brute-force oracles and instance builders shared by the integration tests.
#![allow(dead_code)]

use crowdkit::seqhmm::{HmmParams, LabeledSequence};
use crowdkit::simgen::{gen_ds, ConfusionSpec};
use crowdkit::{AnnotationSet, ConfusionMatrix, DsParams, GenSpec64, Prior, Record};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random simplex point with every entry at least `floor`.
pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| floor + rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_confusion(rng: &mut ChaCha8Rng, k: usize) -> ConfusionMatrix<f64> {
    let mut a = Array2::zeros((k, k));
    for c in 0..k {
        for (r, v) in random_simplex(rng, k, 0.05).into_iter().enumerate() {
            a[[r, c]] = v;
        }
    }
    ConfusionMatrix::new(a).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, k: usize, m: usize) -> DsParams<f64> {
    let confusions = (0..m).map(|_| random_confusion(rng, k)).collect();
    let prior = Prior::new(Array1::from(random_simplex(rng, k, 0.05))).unwrap();
    DsParams::new(confusions, prior).unwrap()
}

pub fn random_annotations(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize, p_obs: f64) -> AnnotationSet {
    let mut recs = Vec::new();
    for item in 0..n {
        for annotator in 0..m {
            if rng.gen::<f64>() < p_obs {
                recs.push(Record { item, annotator, label: rng.gen_range(0..k) });
            }
        }
    }
    AnnotationSet::new(n, m, k, recs).unwrap()
}

/// Joint enumeration over all `K^N` label vectors: item marginals and log evidence.
pub fn brute_ds(a: &AnnotationSet, p: &DsParams<f64>) -> (Array2<f64>, f64) {
    let (n, k) = (a.num_items(), a.num_classes());
    let mut marg = Array2::<f64>::zeros((n, k));
    let mut z = 0.0;
    let total = k.pow(n as u32);
    for code in 0..total {
        let labels: Vec<usize> = (0..n).map(|i| (code / k.pow(i as u32)) % k).collect();
        let mut joint = 1.0;
        for (i, &y) in labels.iter().enumerate() {
            joint *= p.prior.get(y);
            for &(m, obs) in a.item_labels(i) {
                joint *= p.confusions[m].get(obs, y);
            }
        }
        z += joint;
        for (i, &y) in labels.iter().enumerate() {
            marg[[i, y]] += joint;
        }
    }
    (marg / z, z.ln())
}

pub struct HmmOracle {
    pub gamma: Array2<f64>,
    pub xi: Vec<Array2<f64>>,
    pub loglik: f64,
    pub best_path: Vec<usize>,
}

/// Enumeration over all `K^N` label paths.
pub fn brute_hmm(seq: &LabeledSequence, p: &HmmParams<f64>) -> HmmOracle {
    let a = seq.annotations();
    let (n, k) = (a.num_items(), p.num_classes());
    let t = p.transition.matrix();
    let mut gamma = Array2::<f64>::zeros((n, k));
    let mut xi = vec![Array2::<f64>::zeros((k, k)); n.saturating_sub(1)];
    let mut z = 0.0;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for code in 0..k.pow(n as u32) {
        // most significant digit first, so codes run in lexicographic path order
        let path: Vec<usize> = (0..n).map(|i| (code / k.pow((n - 1 - i) as u32)) % k).collect();
        let mut joint = p.initial.get(path[0]);
        for i in 0..n {
            if i > 0 {
                joint *= t[[path[i], path[i - 1]]];
            }
            for &(m, obs) in a.item_labels(i) {
                joint *= p.confusions[m].get(obs, path[i]);
            }
        }
        z += joint;
        for i in 0..n {
            gamma[[i, path[i]]] += joint;
            if i + 1 < n {
                xi[i][[path[i + 1], path[i]]] += joint;
            }
        }
        if joint.ln() > best.0 {
            best = (joint.ln(), path);
        }
    }
    HmmOracle { gamma: gamma / z, xi: xi.into_iter().map(|x| x / z).collect(), loglik: z.ln(), best_path: best.1 }
}

/// Diagonally dominant confusions where annotators `2c` and `2c + 1` are
/// experts for class `c` (row `c` is a multiple of `e_c`).
pub fn separable_params(k: usize, m: usize, seed: u64, both_parities: bool) -> DsParams<f64> {
    let spec = GenSpec64::new(k, m, 1, ConfusionSpec::DiagDominant { gamma: 0.6 }, seed);
    let mut p = gen_ds(&spec).unwrap().params;
    for c in 0..k {
        let experts: Vec<usize> = if both_parities { vec![2 * c, 2 * c + 1] } else { vec![2 * c] };
        for idx in experts {
            let mut a = p.confusions[idx].matrix().clone();
            for j in 0..k {
                if j != c {
                    a[[c, j]] = 0.0;
                }
            }
            p.confusions[idx] = ConfusionMatrix::from_nonnegative(a, 0.0);
        }
    }
    p
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
