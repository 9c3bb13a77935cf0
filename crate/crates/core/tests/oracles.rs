//! Exact inference against brute-force enumeration.

mod common;

use common::*;
use crowdkit::seqhmm::{forward_backward, path_log_prob, viterbi, HmmParams, LabeledSequence};
use crowdkit::{e_step, log_likelihood, map_decode, AnnotationSet, ConfusionMatrix, DsParams, Prior};
use ndarray::array;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ds_posterior_matches_enumeration(seed in any::<u64>(), k in 2usize..=4, m in 1usize..=5, n in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, k, m);
        let a = random_annotations(&mut rng, n, m, k, 0.7);
        let (marg, ll) = brute_ds(&a, &params);
        let q = e_step(&a, &params).unwrap();
        prop_assert!(max_abs_diff(q.matrix(), &marg) < 1e-10);
        prop_assert!((log_likelihood(&a, &params).unwrap() - ll).abs() < 1e-10);
        for (i, label) in map_decode(&q).into_iter().enumerate() {
            let best = marg.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(marg[[i, label]] >= best - 1e-12);
        }
    }

    #[test]
    fn hmm_marginals_match_enumeration(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 3;
        let ds = random_params(&mut rng, k, m);
        let params = HmmParams::new(ds.prior.clone(), random_confusion(&mut rng, k), ds.confusions).unwrap();
        let p_obs = rng.gen_range(0.0..1.0);
        let seq = LabeledSequence::new(random_annotations(&mut rng, n, m, k, p_obs));
        let oracle = brute_hmm(&seq, &params);
        let fb = forward_backward(&seq, &params).unwrap();
        prop_assert!(max_abs_diff(&fb.gamma, &oracle.gamma) < 1e-10);
        prop_assert_eq!(fb.xi.len(), oracle.xi.len());
        for (x, y) in fb.xi.iter().zip(&oracle.xi) {
            prop_assert!(max_abs_diff(x, y) < 1e-10);
        }
        prop_assert!((fb.loglik - oracle.loglik).abs() < 1e-10);
        let path = viterbi(&seq, &params).unwrap();
        prop_assert_eq!(&path, &oracle.best_path);
        let lp = path_log_prob(&seq, &params, &path).unwrap();
        let best_lp = path_log_prob(&seq, &params, &oracle.best_path).unwrap();
        prop_assert!((lp - best_lp).abs() < 1e-12);
    }
}

#[test]
fn two_annotator_hand_example() {
    // K = 2, one item labeled 0 by both annotators
    let a = AnnotationSet::from_dense(2, &[vec![Some(0), Some(0)]]).unwrap();
    let c0 = ConfusionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
    let c1 = ConfusionMatrix::new(array![[0.7, 0.4], [0.3, 0.6]]).unwrap();
    let params = DsParams::new(vec![c0, c1], Prior::new(array![0.3, 0.7]).unwrap()).unwrap();
    let joint0: f64 = 0.3 * 0.9 * 0.7;
    let joint1: f64 = 0.7 * 0.2 * 0.4;
    let q = e_step(&a, &params).unwrap();
    assert!((q.matrix()[[0, 0]] - joint0 / (joint0 + joint1)).abs() < 1e-15);
    assert!((log_likelihood(&a, &params).unwrap() - (joint0 + joint1).ln()).abs() < 1e-15);
    assert_eq!(map_decode(&q), vec![0]);
}

#[test]
fn viterbi_ties_pick_lowest_path() {
    // uninformative everything: every path is equally likely
    let k = 3;
    let params =
        HmmParams::new(Prior::uniform(k), ConfusionMatrix::uniform(k), vec![ConfusionMatrix::uniform(k)]).unwrap();
    let seq = LabeledSequence::new(AnnotationSet::from_dense(k, &vec![vec![Some(1)]; 4]).unwrap());
    assert_eq!(viterbi(&seq, &params).unwrap(), vec![0; 4]);
    assert_eq!(brute_hmm(&seq, &params).best_path, vec![0; 4]);
}
