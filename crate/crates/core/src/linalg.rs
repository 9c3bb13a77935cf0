//! Small dense linear-algebra kernels used by the estimators.
//!
//! Everything here operates on matrices of size `K` or `M`, so simple
//! cubic-time routines are adequate.

use ndarray::{Array1, Array2, ArrayView2};

use crate::scalar::Scalar;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns.
pub fn symmetric_eigen<T: Scalar>(a: ArrayView2<'_, T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let two = T::of(2.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let x = m[[i, j]] * m[[i, j]];
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off <= total * T::epsilon() * T::epsilon() || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = Array1::from_shape_fn(n, |i| m[[order[i], order[i]]]);
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Singular values in descending order, via the eigenvalues of `AᵀA`.
pub fn singular_values<T: Scalar>(a: ArrayView2<'_, T>) -> Array1<T> {
    let gram = a.t().dot(&a);
    let (vals, _) = symmetric_eigen(gram.view());
    vals.mapv(|x| if x > T::zero() { x.sqrt() } else { T::zero() })
}

/// Cholesky factor `L` with `A = L Lᵀ`, or `None` if `A` is not positive definite.
pub fn cholesky<T: Scalar>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// `log det A` and `A⁻¹` for a symmetric positive definite matrix.
pub fn spd_logdet_inverse<T: Scalar>(a: ArrayView2<'_, T>) -> Option<(T, Array2<T>)> {
    let n = a.nrows();
    let l = cholesky(a)?;
    let logdet = (0..n).map(|i| l[[i, i]].ln()).sum::<T>() * T::of(2.0);
    // solve L Y = I, then Lᵀ X = Y
    let mut inv = Array2::<T>::eye(n);
    for c in 0..n {
        for i in 0..n {
            let mut s = inv[[i, c]];
            for k in 0..i {
                s -= l[[i, k]] * inv[[k, c]];
            }
            inv[[i, c]] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = inv[[i, c]];
            for k in (i + 1)..n {
                s -= l[[k, i]] * inv[[k, c]];
            }
            inv[[i, c]] = s / l[[i, i]];
        }
    }
    Some((logdet, inv))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(a: ArrayView2<'_, T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut x = b.to_vec();
    let scale = m.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::count(n.max(1)) * T::of(16.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().partial_cmp(&m[[j, col]].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        if !(m[[pivot, col]].abs() > tiny) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
            }
            x.swap(pivot, col);
        }
        for r in (col + 1)..n {
            let f = m[[r, col]] / m[[col, col]];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[[col, k]];
                m[[r, k]] -= f * v;
            }
            let v = x[col];
            x[r] -= f * v;
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for k in (r + 1)..n {
            s -= m[[r, k]] * x[k];
        }
        x[r] = s / m[[r, r]];
    }
    Some(x)
}

/// Nonnegative least squares in Gram form: minimizes `½ xᵀ G x − bᵀ x`
/// subject to `x ≥ 0` (Lawson–Hanson active set).
///
/// For a design matrix `B` and target `y`, pass `G = BᵀB` and `b = Bᵀy`.
pub fn nnls_gram<T: Scalar>(g: ArrayView2<'_, T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut passive = vec![false; n];
    let scale = g.iter().fold(T::zero(), |acc, &v| acc.max(v.abs())).max(T::min_positive_value());
    let tol = scale * T::epsilon() * T::of(1e3);
    let ridge = scale * T::epsilon() * T::of(10.0);
    let grad = |x: &[T]| -> Vec<T> { (0..n).map(|i| b[i] - (0..n).map(|j| g[[i, j]] * x[j]).sum::<T>()).collect() };
    let solve_passive = |passive: &[bool]| -> Vec<T> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let sub = Array2::from_shape_fn((idx.len(), idx.len()), |(r, c)| {
            g[[idx[r], idx[c]]] + if r == c { ridge } else { T::zero() }
        });
        let rhs: Vec<T> = idx.iter().map(|&i| b[i]).collect();
        let sol = solve(sub.view(), &rhs).unwrap_or_else(|| vec![T::zero(); idx.len()]);
        let mut z = vec![T::zero(); n];
        for (k, &i) in idx.iter().enumerate() {
            z[i] = sol[k];
        }
        z
    };
    for _outer in 0..(3 * n + 10) {
        let w = grad(&x);
        let candidate = (0..n)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap_or(std::cmp::Ordering::Equal));
        let Some(j) = candidate else { break };
        passive[j] = true;
        for _inner in 0..(3 * n + 10) {
            let z = solve_passive(&passive);
            let infeasible: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= T::zero()).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let mut alpha = T::one();
            for &i in &infeasible {
                let denom = x[i] - z[i];
                if denom > T::zero() {
                    let a = x[i] / denom;
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for i in 0..n {
                if passive[i] {
                    x[i] = x[i] + alpha * (z[i] - x[i]);
                    if x[i] <= tol {
                        x[i] = T::zero();
                        passive[i] = false;
                    }
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix (upper
/// bound used for projected-gradient step sizes).
pub fn spectral_norm_psd<T: Scalar>(g: ArrayView2<'_, T>) -> T {
    let (vals, _) = symmetric_eigen(g);
    vals.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
}
