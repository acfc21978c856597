//! Small dense linear algebra generic over [`Real`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// `max_i |v_i|`.
pub fn amax<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Euclidean norm.
pub fn norm<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    let mut l = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::CholeskyFailure(format!("pivot {j} is {d}")));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Cholesky factor, adding `τI` with `τ` doubling from `start_rel·scale`
/// until the factorisation succeeds, where `scale = max(|trace|, ‖M‖_F)`
/// bounds every eigenvalue. Returns the factor and the jitter used.
pub fn cholesky_jitter<T: Real>(m: &DMatrix<T>, start_rel: T, max_tries: usize) -> Result<(DMatrix<T>, T)> {
    if let Ok(l) = cholesky(m) {
        return Ok((l, T::zero()));
    }
    let n = m.nrows();
    let frob = m.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    let scale = m.trace().abs().max(frob).max(T::min_positive_value());
    let mut tau = start_rel * scale;
    for _ in 0..max_tries {
        let shifted = m + DMatrix::<T>::identity(n, n) * tau;
        if let Ok(l) = cholesky(&shifted) {
            return Ok((l, tau));
        }
        tau *= lit(2.0);
    }
    Err(Error::CholeskyFailure(format!(
        "matrix not positive definite after jitter {tau}"
    )))
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve<T: Real>(l: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    let n = l.nrows();
    let mut z = b.clone();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    z
}

/// Solves `L Lᵀ X = B` column by column.
pub fn cholesky_solve_matrix<T: Real>(l: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::<T>::zeros(b.nrows(), b.ncols());
    for j in 0..b.ncols() {
        let col = cholesky_solve(l, &b.column(j).into_owned());
        out.set_column(j, &col);
    }
    out
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let l = cholesky(m)?;
    Ok(cholesky_solve_matrix(&l, &DMatrix::identity(m.nrows(), m.nrows())))
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Square-root factor `L` with `L Lᵀ ≈ M` for a positive semi-definite `M`.
///
/// Zero rows/columns (e.g. a noise-free component) are allowed.
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.iter().all(|v| *v == T::zero()) {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut l = DMatrix::<T>::zeros(n, n);
    let tol = lit::<T>(1e-14) * m.diagonal().iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::CholeskyFailure(format!("matrix is not positive semi-definite (pivot {j} is {d})")));
        }
        if d <= tol {
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi sweeps).
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut a = symmetrize(m);
    for _ in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= T::epsilon() * T::epsilon() * a.iter().fold(T::zero(), |acc, &v| acc + v * v) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).fold(T::infinity(), T::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = spd();
        let l = cholesky(&m).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-14);
        let nl = m.clone().cholesky().unwrap().l();
        assert_relative_eq!(l, nl, epsilon = 1e-14);
    }

    #[test]
    fn solve_and_inverse() {
        let m = spd();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = cholesky_solve(&cholesky(&m).unwrap(), &b);
        assert_relative_eq!(&m * x, b, epsilon = 1e-13);
        let inv = spd_inverse(&m).unwrap();
        assert_relative_eq!(&m * inv, DMatrix::identity(3, 3), epsilon = 1e-13);
    }

    #[test]
    fn indefinite_needs_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0f64, 1.0, 1.0, 1.0]);
        assert!(cholesky(&m).is_err());
        let (l, tau) = cholesky_jitter(&m, 1e-12, 60).unwrap();
        assert!(tau > 0.0);
        assert!(l.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn psd_sqrt_handles_zero_block() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let l = psd_sqrt(&m).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-14);
    }

    #[test]
    fn jacobi_min_eigenvalue() {
        let m = spd();
        let want = m.clone().symmetric_eigen().eigenvalues.min();
        assert_relative_eq!(min_eigenvalue(&m), want, epsilon = 1e-12);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_relative_eq!(min_eigenvalue(&m), -1.0, epsilon = 1e-13);
    }
}
