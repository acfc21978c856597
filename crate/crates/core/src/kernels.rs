//! Taylor (power-series) kernels.
//!
//! A Taylor kernel centred at `a` is
//! `K_a(x, y) = σ² Σ_α c_α λ^α / (α!)² (x - a)^α (y - a)^α`.
//! Inner-product families depend on `x, y` only through
//! `s = <x - a, y - a>_λ = Σ λ_i (x_i - a_i)(y_i - a_i)` and are evaluated
//! through the profile `φ(s) = Σ_p g_p s^p` with `g_p = c_p / (p!)²`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{enumerate_order, factorial_multi, factorial_real, monomial, MultiIndex};
use crate::scalar::{lit, to_f64, Real};

/// Relative size below which a series term counts as negligible.
pub const SERIES_REL_TOL: f64 = 1e-15;
/// Term budget for adaptive series of generic families.
pub const GENERIC_SERIES_TERMS: usize = 60;
/// Term budget for series of built-in families without a closed form.
const BUILTIN_SERIES_TERMS: usize = 400;

pub type ScalarCoeffFn<T> = Arc<dyn Fn(usize) -> T + Send + Sync>;
pub type MultiCoeffFn<T> = Arc<dyn Fn(&MultiIndex) -> T + Send + Sync>;

/// Coefficient family of a Taylor kernel.
#[derive(Clone)]
pub enum KernelFamily<T> {
    /// `c_p = p!`, `K = σ² exp(<x, y>_λ)` on all of `R^d`.
    Exponential,
    /// `c_p = (p!)²`, `K = σ² / (1 - <x, y>_λ)` on the unit ball.
    Szego,
    /// `c_{2p} = (p!)²`, odd coefficients zero, on the unit ball.
    Bergman,
    /// Inner-product kernel with caller-supplied `c_p`.
    GenericInnerProduct { coeff: ScalarCoeffFn<T>, radius: T },
    /// General power-series kernel with caller-supplied `c_α`.
    GenericPowerSeries { coeff: MultiCoeffFn<T>, radius: T },
}

impl<T> fmt::Debug for KernelFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl<T> KernelFamily<T> {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exponential",
            KernelFamily::Szego => "szego",
            KernelFamily::Bergman => "bergman",
            KernelFamily::GenericInnerProduct { .. } => "generic-inner-product",
            KernelFamily::GenericPowerSeries { .. } => "generic-power-series",
        }
    }

    pub fn is_inner_product(&self) -> bool {
        !matches!(self, KernelFamily::GenericPowerSeries { .. })
    }
}

impl<T: Real> KernelFamily<T> {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(KernelFamily::Exponential),
            "szego" | "szegő" => Ok(KernelFamily::Szego),
            "bergman" => Ok(KernelFamily::Bergman),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel family '{other}' (expected exponential, szego or bergman)"
            ))),
        }
    }
}

/// How the summability condition on `(c, λ, r)` is known to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Summability {
    /// Built-in family with a domain chosen so the series converges.
    ByConstruction,
    /// Generic family; the caller vouches for convergence.
    CallerAsserted,
}

/// A fully parameterised Taylor kernel.
#[derive(Debug, Clone)]
pub struct KernelSpec<T> {
    family: KernelFamily<T>,
    sigma2: T,
    lambda: Vec<T>,
    radius: T,
    summability: Summability,
}

/// The centre `a` of a kernel expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint<T>(Vec<T>);

impl<T: Real> ExpansionPoint<T> {
    pub fn new(spec: &KernelSpec<T>, a: Vec<T>) -> Result<Self> {
        spec.check_dim(a.len())?;
        Ok(ExpansionPoint(a))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for ExpansionPoint<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Real> KernelSpec<T> {
    /// Kernel with per-coordinate length-scales `lambda`.
    pub fn new(family: KernelFamily<T>, sigma2: T, lambda: Vec<T>) -> Result<Self> {
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if lambda.is_empty() {
            return Err(Error::InvalidParameter("lambda must have at least one entry".into()));
        }
        if let Some(bad) = lambda.iter().find(|l| !(**l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda entries must be positive, got {bad}")));
        }
        let lambda_max = lambda.iter().copied().fold(T::zero(), T::max);
        let (radius, summability) = match &family {
            KernelFamily::Exponential => (T::infinity(), Summability::ByConstruction),
            KernelFamily::Szego | KernelFamily::Bergman => {
                (T::one() / lambda_max.sqrt(), Summability::ByConstruction)
            }
            KernelFamily::GenericInnerProduct { radius, .. }
            | KernelFamily::GenericPowerSeries { radius, .. } => {
                if !(*radius > T::zero()) {
                    return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
                }
                (*radius, Summability::CallerAsserted)
            }
        };
        Ok(KernelSpec {
            family,
            sigma2,
            lambda,
            radius,
            summability,
        })
    }

    /// Kernel with the same length-scale in each of `dim` coordinates.
    pub fn isotropic(family: KernelFamily<T>, sigma2: T, lambda: T, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Self::new(family, sigma2, vec![lambda; dim])
    }

    /// `σ² exp(λ <x, y>)` in `dim` dimensions.
    pub fn exponential(sigma2: T, lambda: T, dim: usize) -> Result<Self> {
        Self::isotropic(KernelFamily::Exponential, sigma2, lambda, dim)
    }

    pub fn szego(sigma2: T, lambda: T, dim: usize) -> Result<Self> {
        Self::isotropic(KernelFamily::Szego, sigma2, lambda, dim)
    }

    pub fn bergman(sigma2: T, lambda: T, dim: usize) -> Result<Self> {
        Self::isotropic(KernelFamily::Bergman, sigma2, lambda, dim)
    }

    /// Restricts the domain to a ball of radius `radius <=` the natural one.
    pub fn with_radius(mut self, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || radius > self.radius {
            return Err(Error::InvalidParameter(format!(
                "radius {radius} must lie in (0, {}]",
                self.radius
            )));
        }
        self.radius = radius;
        Ok(self)
    }

    pub fn with_sigma2(&self, sigma2: T) -> Result<Self> {
        let mut out = Self::new(self.family.clone(), sigma2, self.lambda.clone())?;
        out.radius = self.radius.min(out.radius);
        Ok(out)
    }

    pub fn with_lambda(&self, lambda: Vec<T>) -> Result<Self> {
        Self::new(self.family.clone(), self.sigma2, lambda)
    }

    pub fn family(&self) -> &KernelFamily<T> {
        &self.family
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn summability(&self) -> Summability {
        self.summability
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_inner_product(&self) -> bool {
        self.family.is_inner_product()
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Fails unless `‖x - a‖₂ < r`.
    pub fn check_domain(&self, a: &[T], x: &[T]) -> Result<()> {
        self.check_dim(a.len())?;
        self.check_dim(x.len())?;
        if self.radius.is_finite() {
            let dist = x
                .iter()
                .zip(a)
                .fold(T::zero(), |acc, (&xi, &ai)| acc + (xi - ai) * (xi - ai))
                .sqrt();
            if !(dist < self.radius) {
                return Err(Error::Domain {
                    distance: to_f64(dist),
                    radius: to_f64(self.radius),
                });
            }
        }
        Ok(())
    }

    /// `c_p` of an inner-product family.
    pub fn scalar_coefficient(&self, p: usize) -> Option<T> {
        Some(match &self.family {
            KernelFamily::Exponential => factorial_real(p as u32),
            KernelFamily::Szego => {
                let f: T = factorial_real(p as u32);
                f * f
            }
            KernelFamily::Bergman => {
                if p % 2 == 1 {
                    T::zero()
                } else {
                    let f: T = factorial_real((p / 2) as u32);
                    f * f
                }
            }
            KernelFamily::GenericInnerProduct { coeff, .. } => coeff(p),
            KernelFamily::GenericPowerSeries { .. } => return None,
        })
    }

    /// Profile coefficient `g_p = c_p / (p!)²` of an inner-product family.
    pub fn profile_coefficient(&self, p: usize) -> T {
        match &self.family {
            KernelFamily::Exponential => T::one() / factorial_real::<T>(p as u32),
            KernelFamily::Szego => T::one(),
            KernelFamily::Bergman => {
                if p % 2 == 1 {
                    T::zero()
                } else {
                    // (k! / (2k)!)²
                    let k = p / 2;
                    let mut ratio = T::one();
                    for j in (k + 1)..=p {
                        ratio /= lit::<T>(j as f64);
                    }
                    ratio * ratio
                }
            }
            KernelFamily::GenericInnerProduct { coeff, .. } => {
                let f: T = factorial_real(p as u32);
                coeff(p) / (f * f)
            }
            KernelFamily::GenericPowerSeries { coeff, .. } => {
                // only meaningful in one dimension
                let alpha = MultiIndex::new(vec![p as u32]);
                let f: T = factorial_real(p as u32);
                coeff(&alpha) / (f * f)
            }
        }
    }

    /// `c_α`; inner-product families use `c_{|α|} α! / |α|!`.
    pub fn coefficient(&self, alpha: &MultiIndex) -> T {
        match &self.family {
            KernelFamily::Exponential => factorial_multi(alpha).to_real(),
            KernelFamily::GenericPowerSeries { coeff, .. } => coeff(alpha),
            _ => {
                let p = alpha.order();
                let cp = self.scalar_coefficient(p).unwrap_or_else(T::zero);
                if cp == T::zero() {
                    return T::zero();
                }
                cp * factorial_multi(alpha).to_real::<T>() / factorial_real::<T>(p as u32)
            }
        }
    }

    /// Series weight `c_α λ^α / (α!)²` (without `σ²`).
    pub fn term_weight(&self, alpha: &MultiIndex) -> T {
        let fa: T = factorial_multi(alpha).to_real();
        if self.is_inner_product() {
            let p = alpha.order();
            // c_p α!/p! · λ^α / (α!)² = g_p p! λ^α / α!
            self.profile_coefficient(p) * factorial_real::<T>(p as u32) * alpha.power_of(&self.lambda) / fa
        } else {
            self.coefficient(alpha) * alpha.power_of(&self.lambda) / (fa * fa)
        }
    }

    /// `<z, w>_λ`.
    pub fn weighted_inner(&self, z: &[T], w: &[T]) -> T {
        self.lambda
            .iter()
            .zip(z.iter().zip(w))
            .fold(T::zero(), |acc, (&l, (&zi, &wi))| acc + l * zi * wi)
    }

    /// Profile `φ(s)` of an inner-product family.
    pub fn profile(&self, s: T) -> T {
        match &self.family {
            KernelFamily::Exponential => s.exp(),
            KernelFamily::Szego => {
                if s < T::one() {
                    T::one() / (T::one() - s)
                } else {
                    T::infinity()
                }
            }
            _ => self.profile_tail(-1, s),
        }
    }

    /// `Σ_{p > n} g_p s^p`; `n = -1` gives the whole profile.
    pub fn profile_tail(&self, n: isize, s: T) -> T {
        self.profile_tail_derivatives(n, s)[0]
    }

    /// Profile tail and its first two derivatives in `s`.
    pub fn profile_tail_derivatives(&self, n: isize, s: T) -> [T; 3] {
        match &self.family {
            KernelFamily::Exponential => [exp_tail(n, s), exp_tail(n - 1, s), exp_tail(n - 2, s)],
            KernelFamily::Szego => szego_tail(n, s),
            _ => {
                let budget = match self.family {
                    KernelFamily::Bergman => BUILTIN_SERIES_TERMS,
                    _ => GENERIC_SERIES_TERMS,
                };
                let start = (n + 1).max(0) as usize;
                let mut out = [T::zero(); 3];
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = sum_series(start, budget, |p| {
                        if p < k {
                            return T::zero();
                        }
                        let fall = (0..k).fold(T::one(), |acc, j| acc * lit::<T>((p - j) as f64));
                        fall * self.profile_coefficient(p) * s.powi((p - k) as i32)
                    });
                }
                out
            }
        }
    }

    /// `K_a(x, y)`.
    pub fn eval(&self, a: &[T], x: &[T], y: &[T]) -> Result<T> {
        self.check_domain(a, x)?;
        self.check_domain(a, y)?;
        let z = diff(x, a);
        let w = diff(y, a);
        if self.is_inner_product() {
            Ok(self.sigma2 * self.profile(self.weighted_inner(&z, &w)))
        } else {
            Ok(self.sigma2 * self.power_series_sum(&z, &w, 0))
        }
    }

    /// `Σ_{|α| >= from} w_α z^α w^α` by degree blocks (power-series family).
    pub(crate) fn power_series_sum(&self, z: &[T], w: &[T], from: usize) -> T {
        let zero = vec![T::zero(); z.len()];
        let mut sum = T::zero();
        let mut quiet = 0;
        for p in from..from + GENERIC_SERIES_TERMS {
            let block = enumerate_order(self.dim(), p)
                .iter()
                .fold(T::zero(), |acc, alpha| {
                    acc + self.term_weight(alpha) * monomial(z, &zero, alpha) * monomial(w, &zero, alpha)
                });
            sum += block;
            if block.abs() <= lit::<T>(SERIES_REL_TOL) * sum.abs() {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        sum
    }

    /// `D_y^β D_x^γ K_a(x, y)`.
    pub fn eval_mixed_derivative(
        &self,
        a: &[T],
        beta: &MultiIndex,
        gamma: &MultiIndex,
        x: &[T],
        y: &[T],
    ) -> Result<T> {
        self.check_domain(a, x)?;
        self.check_domain(a, y)?;
        self.check_dim(beta.dim())?;
        self.check_dim(gamma.dim())?;
        if beta.is_zero() && gamma.is_zero() {
            return self.eval(a, x, y);
        }
        let z = diff(x, a);
        let w = diff(y, a);
        let zero = vec![T::zero(); self.dim()];
        let base = beta.max(gamma);
        let budget = match self.family {
            KernelFamily::GenericInnerProduct { .. } | KernelFamily::GenericPowerSeries { .. } => {
                GENERIC_SERIES_TERMS
            }
            _ => BUILTIN_SERIES_TERMS,
        };
        let mut sum = T::zero();
        let mut quiet = 0;
        for k in 0..budget {
            let block = enumerate_order(self.dim(), k).iter().fold(T::zero(), |acc, delta| {
                let alpha = base.add(delta);
                let ag = alpha.checked_sub(gamma).expect("alpha dominates gamma");
                let ab = alpha.checked_sub(beta).expect("alpha dominates beta");
                let c = self.coefficient(&alpha);
                if c == T::zero() {
                    return acc;
                }
                let term = c * alpha.power_of(&self.lambda) * monomial(&z, &zero, &ag)
                    / factorial_multi(&ag).to_real::<T>()
                    * monomial(&w, &zero, &ab)
                    / factorial_multi(&ab).to_real::<T>();
                acc + term
            });
            sum += block;
            if block.abs() <= lit::<T>(SERIES_REL_TOL) * sum.abs() {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        Ok(self.sigma2 * sum)
    }

    /// `Σ_{p > n} c_p λ^p h^{2p} / (p!)²` for a univariate kernel.
    pub fn series_tail(&self, h: T, n: usize) -> Result<T> {
        self.check_dim(1)?;
        if h < T::zero() {
            return Err(Error::InvalidParameter(format!("h must be non-negative, got {h}")));
        }
        if !(h < self.radius) {
            return Err(Error::Domain {
                distance: to_f64(h),
                radius: to_f64(self.radius),
            });
        }
        let s = self.lambda[0] * h * h;
        Ok(self.profile_tail(n as isize, s))
    }
}

fn diff<T: Real>(x: &[T], a: &[T]) -> Vec<T> {
    x.iter().zip(a).map(|(&xi, &ai)| xi - ai).collect()
}

/// Adaptive partial sum from term `start`: stops after two consecutive
/// negligible terms or `budget` terms.
pub(crate) fn sum_series<T: Real>(start: usize, budget: usize, mut term: impl FnMut(usize) -> T) -> T {
    let tol = lit::<T>(SERIES_REL_TOL);
    let mut sum = T::zero();
    let mut quiet = 0;
    for p in start..start + budget {
        let t = term(p);
        sum += t;
        if t.abs() <= tol * sum.abs() {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    sum
}

/// `e^s - Σ_{p <= n} s^p / p!`.
///
/// Summed term by term where that is cancellation-free (`0 <= s <= 64`) or
/// short (`|s| <= 1`); elsewhere the closed form, unless it is within `1e3·ε`
/// of the size of the summands.
pub(crate) fn exp_tail<T: Real>(n: isize, s: T) -> T {
    if n < 0 {
        return s.exp();
    }
    let n = n as usize;
    let mut partial = T::zero();
    let mut term = T::one();
    for p in 0..=n {
        if p > 0 {
            term = term * s / lit::<T>(p as f64);
        }
        partial += term;
    }
    let direct = || {
        let mut t = term;
        sum_series(n + 1, BUILTIN_SERIES_TERMS, |p| {
            t = t * s / lit::<T>(p as f64);
            t
        })
    };
    if (s >= T::zero() && s <= lit(64.0)) || s.abs() <= T::one() {
        return direct();
    }
    let closed = s.exp() - partial;
    if closed.abs() > lit::<T>(1e3) * T::epsilon() * s.abs().exp() {
        closed
    } else {
        direct()
    }
}

/// Szegő tail `s^{n+1} / (1 - s)` and its first two derivatives.
fn szego_tail<T: Real>(n: isize, s: T) -> [T; 3] {
    if !(s < T::one()) {
        return [T::infinity(); 3];
    }
    let u = T::one() - s;
    if n < 0 {
        return [T::one() / u, T::one() / (u * u), lit::<T>(2.0) / (u * u * u)];
    }
    let m = lit::<T>((n + 1) as f64);
    let pow = |k: isize| if k < 0 { T::zero() } else { s.powi(k as i32) };
    let t0 = pow(n + 1) / u;
    let t1 = m * pow(n) / u + pow(n + 1) / (u * u);
    let t2 = m * (m - T::one()) * pow(n - 1) / u
        + lit::<T>(2.0) * m * pow(n) / (u * u)
        + lit::<T>(2.0) * pow(n + 1) / (u * u * u);
    [t0, t1, t2]
}

/// Plain-text kernel configuration, e.g.
///
/// ```toml
/// family = "exponential"
/// sigma2 = 1.0
/// lambda = [1.0, 0.5]   # or a scalar together with `dim`
/// radius = inf          # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub sigma2: f64,
    pub lambda: LambdaConfig,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaConfig {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl KernelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn build<T: Real>(&self) -> Result<KernelSpec<T>> {
        let family = KernelFamily::from_name(&self.family)?;
        let conv = |v: f64| T::from_f64(v).ok_or_else(|| Error::InvalidParameter(format!("{v}")));
        let lambda: Vec<T> = match &self.lambda {
            LambdaConfig::Scalar(l) => vec![conv(*l)?; self.dim.unwrap_or(1)],
            LambdaConfig::Vector(v) => {
                if let Some(d) = self.dim {
                    if d != v.len() {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: v.len(),
                        });
                    }
                }
                v.iter().map(|&l| conv(l)).collect::<Result<_>>()?
            }
        };
        let spec = KernelSpec::new(family, conv(self.sigma2)?, lambda)?;
        match self.radius {
            Some(r) if r.is_finite() || spec.radius().is_finite() => spec.with_radius(conv(r)?),
            _ => Ok(spec),
        }
    }
}
