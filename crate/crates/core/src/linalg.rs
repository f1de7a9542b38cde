//! Small dense linear algebra on row-major slices. Sizes here never exceed ~10.

use crate::scalar::Scalar;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is n x n row-major; on success `b` holds `x`. Returns false if a pivot
/// vanishes.
pub fn solve_in_place<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if !(a[pivot * n + col].abs() > tiny) {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                a[row * n + k] = a[row * n + k] - f * a[col * n + k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s = s - a[row * n + k] * b[k];
        }
        b[row] = s / a[row * n + row];
    }
    true
}

/// Inverse of an n x n matrix, or `None` if singular.
pub fn invert<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut inv = vec![T::zero(); n * n];
    for j in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        if !solve_in_place(&mut m, &mut e, n) {
            return None;
        }
        for i in 0..n {
            inv[i * n + j] = e[i];
        }
    }
    Some(inv)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    let mut m = a.to_vec();
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= T::min_positive_value() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Gram matrix `WᵀW` of a set of 3-vectors.
pub fn gram<T: Scalar>(cols: &[[T; 3]]) -> Vec<T> {
    let r = cols.len();
    let mut g = vec![T::zero(); r * r];
    for i in 0..r {
        for j in 0..r {
            g[i * r + j] = dot3(&cols[i], &cols[j]);
        }
    }
    g
}

/// 2-norm condition number of the 3 x r matrix with the given columns.
pub fn condition_number<T: Scalar>(cols: &[[T; 3]]) -> T {
    let ev = symmetric_eigenvalues(&gram(cols), cols.len());
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo <= T::zero() {
        T::infinity()
    } else {
        (hi / lo).sqrt()
    }
}

#[inline]
pub fn dot3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cosine<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let d = (dot3(a, a) * dot3(b, b)).sqrt();
    if d == T::zero() {
        T::zero()
    } else {
        dot3(a, b) / d
    }
}
