//! BFGS minimisation with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{amax, norm};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone)]
pub struct BfgsOptions<T> {
    pub max_iter: usize,
    /// Stop once `‖∇f‖∞ <= grad_tol·(1 + |f|)`.
    pub grad_tol: T,
    /// Starting inverse-Hessian approximation (identity if absent).
    pub initial_inverse_hessian: Option<DMatrix<T>>,
}

impl<T: Real> Default for BfgsOptions<T> {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 200,
            grad_tol: lit(1e-8),
            initial_inverse_hessian: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult<T> {
    pub x: DVector<T>,
    pub value: T,
    pub grad: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn usable<T: Real>(r: &Result<(T, DVector<T>)>) -> bool {
    matches!(r, Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()))
}

/// Minimises `f`, which returns the objective value and gradient. Points
/// where `f` fails or is non-finite are treated as infeasible and the line
/// search backs off from them.
pub fn minimize<T: Real, F>(mut f: F, x0: DVector<T>, opts: &BfgsOptions<T>) -> Result<BfgsResult<T>>
where
    F: FnMut(&DVector<T>) -> Result<(T, DVector<T>)>,
{
    let n = x0.len();
    let h0 = match &opts.initial_inverse_hessian {
        Some(h) if h.nrows() == n && h.ncols() == n => h.clone(),
        Some(h) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: h.nrows(),
            })
        }
        None => DMatrix::identity(n, n),
    };
    let scale_first = opts.initial_inverse_hessian.is_none();
    let start = f(&x0);
    if !usable(&start) {
        return Err(start.err().unwrap_or_else(|| Error::NonFinite("objective at the initial point".into())));
    }
    let (mut fx, mut g) = start?;
    let mut x = x0;
    let mut h = h0.clone();
    let mut fresh = true;
    let converged = |fx: T, g: &DVector<T>| amax(g) <= opts.grad_tol * (T::one() + fx.abs());
    for iter in 0..opts.max_iter {
        if converged(fx, &g) {
            return Ok(BfgsResult {
                x,
                value: fx,
                grad: g,
                iterations: iter,
                converged: true,
            });
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if !(slope < T::zero()) {
            h = h0.clone();
            fresh = true;
            p = -(&h * &g);
            slope = g.dot(&p);
        }
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xn = &x + &p * step;
            let r = f(&xn);
            if usable(&r) {
                let (fnew, gnew) = r?;
                if fnew <= fx + lit::<T>(ARMIJO_C1) * step * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= lit(0.5);
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if !fresh {
                // stale curvature: restart from the initial metric
                h = h0.clone();
                fresh = true;
                continue;
            }
            return Ok(BfgsResult {
                x,
                value: fx,
                grad: g,
                iterations: iter,
                converged: false,
            });
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > T::epsilon() * norm(&s) * norm(&y) {
            if fresh && scale_first {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = T::one() / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho
                + (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        x = xn;
        fx = fnew;
        g = gnew;
    }
    let ok = converged(fx, &g);
    Ok(BfgsResult {
        x,
        value: fx,
        grad: g,
        iterations: opts.max_iter,
        converged: ok,
    })
}
