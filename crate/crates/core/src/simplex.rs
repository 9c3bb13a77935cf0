//! Simplex utilities and divergences.

use ndarray::Array1;

use crate::domain::Prior;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scales a nonnegative vector to unit sum. The all-zero vector maps to the
/// uniform distribution.
pub fn simplex_normalize<T: Scalar>(v: &[T]) -> Result<Prior<T>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x >= T::zero())) {
        return Err(Error::NegativeEntry { index, value: value.as_f64() });
    }
    let s: T = v.iter().copied().sum();
    let out = if s > T::zero() {
        v.iter().map(|&x| x / s).collect()
    } else {
        Array1::from_elem(v.len(), T::one() / T::count(v.len()))
    };
    Ok(Prior::new_unchecked(out))
}

/// `KL(p || q) = Σ p_i log(p_i / q_i)` with `0 log 0 = 0`.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let mut acc = T::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > T::zero() {
            if !(qi > T::zero()) {
                return Err(Error::SupportMismatch(i));
            }
            acc += pi * (pi / qi).ln();
        }
    }
    // rounding can leave a tiny negative value for p ≈ q
    Ok(if acc < T::zero() { T::zero() } else { acc })
}

/// Clamps entries below `floor` and renormalizes to unit sum, in place.
pub fn floor_renormalize<T: Scalar>(v: &mut [T], floor: T) {
    for x in v.iter_mut() {
        if !(*x >= floor) {
            *x = floor;
        }
    }
    let s: T = v.iter().copied().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut sorted: Vec<T> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - T::one()) / T::count(i + 1);
        if u - t > T::zero() {
            theta = t;
        }
    }
    v.iter().map(|&x| if x - theta > T::zero() { x - theta } else { T::zero() }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(simplex_normalize(&[1.0, 1.0]).unwrap().vector().to_vec(), vec![0.5, 0.5]);
        let u = simplex_normalize(&[0.0f64, 0.0, 0.0]).unwrap();
        assert!(u.vector().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let same = simplex_normalize(&[0.2, 0.6, 0.2]).unwrap();
        for (a, b) in same.vector().iter().zip([0.2f64, 0.6, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(simplex_normalize(&[0.5, -0.1]), Err(Error::NegativeEntry { index: 1, .. })));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::SupportMismatch(1)));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_to_simplex(&[0.0f64, 0.0, 0.0]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    fn simplex_point(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_equal(p in simplex_point(4), q in simplex_point(4)) {
            let d = kl_divergence(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            let differs = p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6);
            if differs {
                prop_assert!(d > 0.0);
            }
        }

        #[test]
        fn normalize_outputs_simplex(v in prop::collection::vec(0.0f64..10.0, 1..8)) {
            let p = simplex_normalize(&v).unwrap();
            let s: f64 = p.vector().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.vector().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-3.0f64..3.0, 1..7)) {
            let p = project_to_simplex(&v);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
