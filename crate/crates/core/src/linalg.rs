//! Small dense kernels: Cholesky solves and a Jacobi symmetric eigensolver.
//! Sizes here are tiny (metric counts, active sets), so clarity wins over
//! blocking.

use ndarray::Array2;

use crate::scalar::{dot, Scalar};

/// Solves `a x = b` for symmetric positive definite `a`. Returns `None` when
/// the factorization meets a non-positive pivot.
pub(crate) fn cholesky_solve<F: Scalar>(a: &Array2<F>, b: &[F]) -> Option<Vec<F>> {
    let n = b.len();
    debug_assert_eq!(a.dim(), (n, n));
    let mut flat: Vec<F> = a.iter().copied().collect();
    let mut x = b.to_vec();
    cholesky_solve_in_place(&mut flat, &mut x).then_some(x)
}

/// [`cholesky_solve`] on a row-major `n x n` buffer. The lower triangle of
/// `a` is overwritten by the factor and `b` by the solution; returns false
/// on a non-positive pivot.
pub(crate) fn cholesky_solve_in_place<F: Scalar>(a: &mut [F], b: &mut [F]) -> bool {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let (done, rest) = a.split_at_mut(j * n);
        let row_j = &mut rest[..n];
        for k in 0..j {
            let s = dot(&done[k * n..k * n + k], &row_j[..k]);
            row_j[k] = (row_j[k] - s) / done[k * n + k];
        }
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > F::zero()) || !d.is_finite() {
            return false;
        }
        row_j[j] = d.sqrt();
    }
    for i in 0..n {
        let s = dot(&a[i * n..i * n + i], &b[..i]);
        b[i] = (b[i] - s) / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = F::zero();
        for k in i + 1..n {
            s += a[k * n + i] * b[k];
        }
        b[i] = (b[i] - s) / a[i * n + i];
    }
    true
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the columns of the second value.
pub(crate) fn symmetric_eigen<F: Scalar>(input: &Array2<F>) -> (Vec<F>, Array2<F>) {
    let n = input.nrows();
    debug_assert_eq!(input.ncols(), n);
    let mut a = input.clone();
    let mut v = Array2::<F>::eye(n);
    let scale: F = a.iter().map(|x| *x * *x).sum();
    let two = F::of(2.0);

    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off <= F::epsilon() * F::epsilon() * scale || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (two * apq);
                let t = if theta.abs() > F::of(1e150) {
                    F::one() / (two * theta)
                } else {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::<F>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}
