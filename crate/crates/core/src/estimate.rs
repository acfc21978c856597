//! Maximum-likelihood estimates of the kernel scale `σ²` and length-scales
//! `λ` from derivative data at one point.
//!
//! With a Taylor kernel the data covariance is diagonal with entries
//! `σ²c_αλ^α + ε_α²`, so the negative log-likelihood is
//! `ℓ = ½ Σ_α [r_α² / (σ²c_αλ^α + ε_α²) + ln(σ²c_αλ^α + ε_α²)] + (N/2) ln 2π`
//! with residuals `r_α = y_α - D^α m(a)`.

use crate::cubic::{solve_cubic_real, CubicCoefficients};
use crate::error::{Error, Result};
use crate::gp::{DerivativeData, PriorMean};
use crate::kernels::KernelSpec;
use crate::multiindex::MultiIndex;
use crate::scalar::{from_usize, lit, Real};

/// Relative floor on `|f_m(a)|` (and on the Hessian for `n = 2`) below which
/// the length-scale estimates are refused.
pub const INSTABILITY_FLOOR: f64 = 1e-8;
/// Sweep cap of the anisotropic fixed point.
pub const ANISO_MAX_SWEEPS: usize = 200;
/// Relative-change tolerance of the anisotropic fixed point.
pub const ANISO_TOL: f64 = 1e-10;

/// Exact negative log-likelihood of `data` under `spec` and `prior`.
pub fn neg_log_likelihood<T: Real>(spec: &KernelSpec<T>, prior: &PriorMean<T>, data: &DerivativeData<T>) -> Result<T> {
    spec.check_dim(data.dim())?;
    let resid = data.residuals(prior);
    let half = lit::<T>(0.5);
    let mut out = half * from_usize::<T>(data.len()) * lit::<T>((2.0 * std::f64::consts::PI).ln());
    for (i, alpha) in data.indices().iter().enumerate() {
        let eps2 = data.noise().map(|e| e[i]).unwrap_or_else(T::zero);
        let v = spec.sigma2() * spec.coefficient(alpha) * alpha.power_of(spec.lambda()) + eps2;
        if !(v > T::zero()) {
            return Err(Error::SingularModel(alpha.to_string()));
        }
        out += half * (resid[i] * resid[i] / v + v.ln());
    }
    Ok(out)
}

fn require_noiseless<T: Real>(data: &DerivativeData<T>) -> Result<()> {
    if data.noise().is_some_and(|e| e.iter().any(|v| *v != T::zero())) {
        return Err(Error::InvalidData("this estimator needs noiseless data".into()));
    }
    Ok(())
}

fn data_scale<T: Real>(data: &DerivativeData<T>) -> T {
    data.values().iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

fn positive_coefficient<T: Real>(spec: &KernelSpec<T>, alpha: &MultiIndex) -> Result<T> {
    let c = spec.coefficient(alpha);
    if c > T::zero() {
        Ok(c)
    } else {
        Err(Error::SingularModel(alpha.to_string()))
    }
}

/// `σ²_ML = (1/N) Σ_α r_α² / (c_α λ^α)` for noiseless data.
pub fn sigma_ml<T: Real>(spec: &KernelSpec<T>, prior: &PriorMean<T>, data: &DerivativeData<T>) -> Result<T> {
    spec.check_dim(data.dim())?;
    require_noiseless(data)?;
    let resid = data.residuals(prior);
    if resid.iter().all(|r| *r == T::zero()) {
        return Err(Error::DegenerateData);
    }
    let mut sum = T::zero();
    for (alpha, r) in data.indices().iter().zip(&resid) {
        sum += *r * *r / (positive_coefficient(spec, alpha)? * alpha.power_of(spec.lambda()));
    }
    Ok(sum / from_usize(data.len()))
}

/// Joint MLE `(σ², λ)` from first-order data:
/// `σ² = f_m(a)² / c_0`, `λ_i = (c_0 / c_{e_i}) (∂_i f_m(a) / f_m(a))²`.
pub fn lambda_ml_n1<T: Real>(
    spec: &KernelSpec<T>,
    prior: &PriorMean<T>,
    data: &DerivativeData<T>,
) -> Result<(T, Vec<T>)> {
    spec.check_dim(data.dim())?;
    require_noiseless(data)?;
    if data.order() != 1 {
        return Err(Error::InvalidParameter(format!("expected order 1 data, got {}", data.order())));
    }
    let d = data.dim();
    let resid = data.residuals(prior);
    let f = resid[0];
    let floor = lit::<T>(INSTABILITY_FLOOR) * (T::one() + data_scale(data));
    if f.abs() < floor {
        return Err(Error::Unstable(format!("|f_m(a)| = {} is below the floor {floor}", f.abs())));
    }
    let c0 = positive_coefficient(spec, &MultiIndex::zeros(d))?;
    let mut lambda = Vec::with_capacity(d);
    for i in 0..d {
        let ci = positive_coefficient(spec, &MultiIndex::unit(d, i))?;
        // data index 1 + i is e_i in enumeration order
        let g = resid[1 + i];
        let l = c0 / ci * (g / f) * (g / f);
        if !(l > T::zero()) {
            return Err(Error::Unstable(format!("length-scale {i} estimate is zero (vanishing gradient)")));
        }
        lambda.push(l);
    }
    Ok((f * f / c0, lambda))
}

/// Positive root `u` of `a u² + b u + c = 0` with `a > 0`, `c <= 0`.
fn positive_quadratic_root<T: Real>(a: T, b: T, c: T) -> T {
    let disc = (b * b - lit::<T>(4.0) * a * c).max(T::zero()).sqrt();
    if b <= T::zero() {
        (-b + disc) / (lit::<T>(2.0) * a)
    } else {
        // cancellation-free form of the same root
        lit::<T>(-2.0) * c / (b + disc)
    }
}

fn check_n2<T: Real>(spec: &KernelSpec<T>, prior: &PriorMean<T>, data: &DerivativeData<T>) -> Result<Vec<T>> {
    spec.check_dim(data.dim())?;
    require_noiseless(data)?;
    if data.order() != 2 {
        return Err(Error::InvalidParameter(format!("expected order 2 data, got {}", data.order())));
    }
    let resid = data.residuals(prior);
    let floor = lit::<T>(INSTABILITY_FLOOR) * (T::one() + data_scale(data));
    if resid[0].abs() < floor {
        return Err(Error::Unstable(format!("|f_m(a)| = {} is below the floor {floor}", resid[0].abs())));
    }
    let hess_max = data
        .indices()
        .iter()
        .zip(&resid)
        .filter(|(a, _)| a.order() == 2)
        .fold(T::zero(), |acc, (_, r)| acc.max(r.abs()));
    if hess_max < floor {
        return Err(Error::Unstable(format!("Hessian of f_m at a is below the floor {floor}")));
    }
    Ok(resid)
}

/// Joint MLE `(σ², λ)` from second-order data under a uniform length-scale.
pub fn lambda_ml_n2_uniform<T: Real>(
    spec: &KernelSpec<T>,
    prior: &PriorMean<T>,
    data: &DerivativeData<T>,
) -> Result<(T, T)> {
    let resid = check_n2(spec, prior, data)?;
    let d = from_usize::<T>(data.dim());
    let mut s = [T::zero(); 3];
    for (alpha, r) in data.indices().iter().zip(&resid) {
        s[alpha.order()] += *r * *r / positive_coefficient(spec, alpha)?;
    }
    let m = lit::<T>(2.0) * d / (d + T::one());
    let a = (lit::<T>(2.0) - m) * s[2];
    let b = (T::one() - m) * s[1];
    let c = -m * s[0];
    let u = positive_quadratic_root(a, b, c);
    if !(u > T::zero()) || !u.is_finite() {
        return Err(Error::Unstable("degenerate length-scale quadratic".into()));
    }
    let lambda = T::one() / u;
    let sigma2 = (s[0] + s[1] * u + s[2] * u * u) / from_usize(data.len());
    Ok((sigma2, lambda))
}

/// Joint MLE `(σ², λ)` from second-order data with one length-scale per
/// coordinate, by cyclic coordinate updates from `λ = 1`.
pub fn lambda_ml_n2_aniso<T: Real>(
    spec: &KernelSpec<T>,
    prior: &PriorMean<T>,
    data: &DerivativeData<T>,
) -> Result<(T, Vec<T>)> {
    let resid = check_n2(spec, prior, data)?;
    let dim = data.dim();
    let weights: Vec<T> = data
        .indices()
        .iter()
        .zip(&resid)
        .map(|(alpha, r)| Ok(*r * *r / positive_coefficient(spec, alpha)?))
        .collect::<Result<_>>()?;
    let m = lit::<T>(2.0) / from_usize::<T>(dim + 1);
    let mut lambda = vec![T::one(); dim];
    let tol = lit::<T>(ANISO_TOL);
    for _ in 0..ANISO_MAX_SWEEPS {
        let mut change = T::zero();
        for i in 0..dim {
            let mut t = [T::zero(); 3];
            for (alpha, &w) in data.indices().iter().zip(&weights) {
                let rest = alpha
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .fold(T::one(), |acc, (j, &k)| acc * lambda[j].powi(k as i32));
                t[alpha.get(i) as usize] += w / rest;
            }
            let a = (lit::<T>(2.0) - m) * t[2];
            let b = (T::one() - m) * t[1];
            let c = -m * t[0];
            if !(a > T::zero()) {
                return Err(Error::Unstable(format!("no curvature information for coordinate {i}")));
            }
            let u = positive_quadratic_root(a, b, c);
            if !(u > T::zero()) || !u.is_finite() {
                return Err(Error::Unstable(format!("degenerate length-scale quadratic for coordinate {i}")));
            }
            let next = T::one() / u;
            change = change.max(((next - lambda[i]) / lambda[i]).abs());
            lambda[i] = next;
        }
        if change < tol {
            let q = data
                .indices()
                .iter()
                .zip(&weights)
                .fold(T::zero(), |acc, (alpha, &w)| acc + w / alpha.power_of(&lambda));
            return Ok((q / from_usize(data.len()), lambda));
        }
    }
    Err(Error::NoConvergence {
        sweeps: ANISO_MAX_SWEEPS,
    })
}

/// Negative log-likelihood (without the `2π` constant) of noisy value and
/// first-derivative data in one dimension, as a function of `σ²`.
#[allow(clippy::too_many_arguments)]
pub fn noisy_n1_neg_log_likelihood<T: Real>(s: T, c0: T, c1: T, lambda: T, y0: T, y1: T, eps0sq: T, eps1sq: T) -> T {
    let va = c0 * s + eps0sq;
    let vb = c1 * lambda * s + eps1sq;
    lit::<T>(0.5) * (y0 * y0 / va + y1 * y1 / vb + va.ln() + vb.ln())
}

/// The cubic whose positive roots are the stationary points of
/// [`noisy_n1_neg_log_likelihood`] in `σ²`.
pub fn noisy_n1_cubic<T: Real>(c0: T, c1: T, lambda: T, y0: T, y1: T, e0: T, e1: T) -> CubicCoefficients<T> {
    let u = c1 * lambda;
    let two = lit::<T>(2.0);
    let three = lit::<T>(3.0);
    let four = lit::<T>(4.0);
    let (q0, q1) = (y0 * y0, y1 * y1);
    CubicCoefficients::new(
        two * c0 * c0 * u * u,
        -q0 * c0 * u * u - q1 * c0 * c0 * u + three * c0 * u * u * e0 + three * c0 * c0 * u * e1,
        -two * q0 * c0 * u * e1 - two * q1 * c0 * u * e0 + four * c0 * u * e0 * e1 + c0 * c0 * e1 * e1 + u * u * e0 * e0,
        -q0 * c0 * e1 * e1 - q1 * u * e0 * e0 + c0 * e0 * e1 * e1 + u * e0 * e0 * e1,
    )
}

/// MLE of `σ²` from noisy value `y0` and derivative `y1` (noise variances
/// `eps0sq`, `eps1sq`): the positive root of the stationarity cubic with the
/// smallest negative log-likelihood, or `sigma_min²` if there is none.
#[allow(clippy::too_many_arguments)]
pub fn sigma_ml_noisy_n1<T: Real>(
    c0: T,
    c1: T,
    lambda: T,
    y0: T,
    y1: T,
    eps0sq: T,
    eps1sq: T,
    sigma_min: T,
) -> Result<T> {
    if !(c0 > T::zero() && c1 > T::zero() && lambda > T::zero()) {
        return Err(Error::InvalidParameter("c0, c1 and lambda must be positive".into()));
    }
    if !(eps0sq >= T::zero() && eps1sq >= T::zero()) {
        return Err(Error::InvalidParameter("noise variances must be non-negative".into()));
    }
    if !(sigma_min > T::zero()) {
        return Err(Error::InvalidParameter("sigma_min must be positive".into()));
    }
    if !(y0.is_finite() && y1.is_finite() && eps0sq.is_finite() && eps1sq.is_finite()) {
        return Err(Error::NonFinite("noisy-MLE inputs".into()));
    }
    let floor = sigma_min * sigma_min;
    if eps0sq == T::zero() && eps1sq == T::zero() {
        let s = lit::<T>(0.5) * (y0 * y0 / c0 + y1 * y1 / (c1 * lambda));
        return Ok(if s > T::zero() { s } else { floor });
    }
    let cubic = noisy_n1_cubic(c0, c1, lambda, y0, y1, eps0sq, eps1sq);
    let nll = |s: T| noisy_n1_neg_log_likelihood(s, c0, c1, lambda, y0, y1, eps0sq, eps1sq);
    let best = solve_cubic_real(&cubic)
        .into_iter()
        .filter(|s| *s > T::zero() && nll(*s).is_finite())
        .min_by(|a, b| nll(*a).partial_cmp(&nll(*b)).expect("finite likelihood"));
    Ok(best.unwrap_or(floor))
}
