//! Small dense helpers on top of `nalgebra::DMatrix`.

use nalgebra::DMatrix;

use crate::Real;

/// Frobenius inner product `tr(AᵀB)`.
pub fn inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

pub fn norm_sq<T: Real>(a: &DMatrix<T>) -> T {
    a.iter().map(|&x| x * x).sum()
}

pub fn norm<T: Real>(a: &DMatrix<T>) -> T {
    norm_sq(a).sqrt()
}

pub fn max_abs<T: Real>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `a += alpha * b`
pub fn axpy<T: Real>(a: &mut DMatrix<T>, alpha: T, b: &DMatrix<T>) {
    debug_assert_eq!(a.shape(), b.shape());
    for (x, &y) in a.iter_mut().zip(b.iter()) {
        *x += alpha * y;
    }
}

pub fn scaled<T: Real>(a: &DMatrix<T>, alpha: T) -> DMatrix<T> {
    a.map(|x| x * alpha)
}

/// `(M + Mᵀ) / 2` for a square matrix.
pub fn sym<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| half * (m[(i, j)] + m[(j, i)]))
}

/// Determinant of a small square matrix via Gaussian elimination with partial pivoting.
pub fn det<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    match n {
        0 => T::one(),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => {
            let mut a = m.clone();
            let mut d = T::one();
            for k in 0..n {
                let p = (k..n)
                    .max_by(|&i, &j| a[(i, k)].abs().partial_cmp(&a[(j, k)].abs()).unwrap())
                    .unwrap();
                if a[(p, k)] == T::zero() {
                    return T::zero();
                }
                if p != k {
                    a.swap_rows(p, k);
                    d = -d;
                }
                d *= a[(k, k)];
                for i in k + 1..n {
                    let f = a[(i, k)] / a[(k, k)];
                    for j in k..n {
                        let v = a[(k, j)];
                        a[(i, j)] -= f * v;
                    }
                }
            }
            d
        }
    }
}

/// Q factor of the column-wise QR decomposition of a square matrix, with the
/// sign convention that R has a positive diagonal (modified Gram-Schmidt).
///
/// Returns `None` when the input is numerically rank deficient.
pub fn qr_q<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let (rows, cols) = m.shape();
    let mut q = m.clone();
    for j in 0..cols {
        for k in 0..j {
            let mut r = T::zero();
            for i in 0..rows {
                r += q[(i, k)] * q[(i, j)];
            }
            for i in 0..rows {
                let v = q[(i, k)];
                q[(i, j)] -= r * v;
            }
        }
        let mut nrm = T::zero();
        for i in 0..rows {
            nrm += q[(i, j)] * q[(i, j)];
        }
        let nrm = nrm.sqrt();
        if !(nrm > T::epsilon()) {
            return None;
        }
        for i in 0..rows {
            q[(i, j)] /= nrm;
        }
    }
    Some(q)
}

/// Rows `start..start + len` as an owned matrix.
pub fn rows<T: Real>(m: &DMatrix<T>, start: usize, len: usize) -> DMatrix<T> {
    m.rows(start, len).into_owned()
}

/// Stacks `top` over `bottom`.
pub fn vstack<T: Real>(top: &DMatrix<T>, bottom: &DMatrix<T>) -> DMatrix<T> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Casts a dense matrix between scalar types.
pub fn cast<S: Real, T: Real>(m: &DMatrix<S>) -> DMatrix<T> {
    m.map(|x| T::lit(x.as_f64()))
}

/// Relative error `‖a − b‖_F / max(‖b‖_F, floor)`.
pub fn rel_err<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, floor: T) -> T {
    norm(&(a - b)) / norm(b).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_matches_cofactor_expansion() {
        let m =
            DMatrix::<f64>::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 0.3, 4.0, 1.0, -2.0, 0.0, 3.0]);
        let expected = 2.0 * (12.0 - 0.0) + 1.0 * (0.9 + 2.0) + 0.5 * (0.0 + 8.0);
        assert!((det(&m) - expected).abs() < 1e-12);
        let m4 = DMatrix::<f64>::identity(4, 4) * 2.0;
        assert!((det(&m4) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn qr_q_is_orthonormal_with_positive_r_diagonal() {
        let m =
            DMatrix::<f64>::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 3.0, 2.0, 0.1, 1.0]);
        let q = qr_q(&m).unwrap();
        let qtq = q.transpose() * &q;
        assert!(norm(&(qtq - DMatrix::identity(3, 3))) < 1e-12);
        let r = q.transpose() * &m;
        for i in 0..3 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert!(r[(i, j)].abs() < 1e-12);
            }
        }
        assert!(qr_q(&DMatrix::<f64>::zeros(2, 2)).is_none());
    }
}
