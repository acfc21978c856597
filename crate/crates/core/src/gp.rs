//! GP regression on derivative data at a single point: the probabilistic
//! Taylor expansion.
//!
//! Under a Taylor-kernel prior the Gram matrix of derivative data at `a` is
//! diagonal, so the posterior is available without a linear solve:
//!
//! * mean `s(x) = m(x) + Σ_{|α|<=n} w_α (y_α - D^α m(a)) / α! (x - a)^α`
//!   with `w_α = σ²c_αλ^α / (σ²c_αλ^α + ε_α²)` (`w_α = 1` without noise);
//! * covariance `P(x, y) = σ² Σ_{|α|>n} c_αλ^α/(α!)² (x-a)^α (y-a)^α`
//!   `+ Σ_{|α|<=n} σ²c_αλ^α ε_α² / ((α!)² (σ²c_αλ^α + ε_α²)) (x-a)^α (y-a)^α`.
//!
//! [`condition_generic`] builds the same posterior through the explicit
//! Gram-matrix solve and serves as an independent check.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::Dual2;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{cholesky_jitter, cholesky_solve};
use crate::multiindex::{count_upto, enumerate_order, enumerate_upto, factorial_multi, monomial, MultiIndex};
use crate::scalar::{lit, to_f64, Real};

/// Polynomial prior mean `m(x) = Σ m_α x^α` (the zero polynomial by default).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMean<T> {
    terms: BTreeMap<MultiIndex, T>,
}

impl<T: Real> Default for PriorMean<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Real> PriorMean<T> {
    pub fn zero() -> Self {
        PriorMean {
            terms: BTreeMap::new(),
        }
    }

    /// Polynomial from `(exponent, coefficient)` pairs; repeated exponents add up.
    pub fn from_terms(terms: impl IntoIterator<Item = (MultiIndex, T)>) -> Result<Self> {
        let mut map: BTreeMap<MultiIndex, T> = BTreeMap::new();
        let mut dim = None;
        for (alpha, c) in terms {
            match dim {
                None => dim = Some(alpha.dim()),
                Some(d) if d != alpha.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: alpha.dim(),
                    })
                }
                _ => {}
            }
            *map.entry(alpha).or_insert_with(T::zero) += c;
        }
        Ok(PriorMean { terms: map })
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| **c != T::zero())
            .map(|(a, _)| a.order())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, T> {
        &self.terms
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self.terms.keys().next() {
            Some(a) if a.dim() != d => Err(Error::DimensionMismatch {
                expected: d,
                got: a.dim(),
            }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.derivative(&MultiIndex::zeros(x.len()), x)
    }

    /// `D^β m(x)`.
    pub fn derivative(&self, beta: &MultiIndex, x: &[T]) -> T {
        let zero = vec![T::zero(); x.len()];
        self.terms.iter().fold(T::zero(), |acc, (alpha, &c)| match alpha.checked_sub(beta) {
            Some(rest) => {
                let falling: T = factorial_multi(alpha).to_real::<T>() / factorial_multi(&rest).to_real::<T>();
                acc + c * falling * monomial(x, &zero, &rest)
            }
            None => acc,
        })
    }
}

/// Derivative data `y_α ≈ D^α f(a)` for every `|α| <= n`, optionally with
/// independent Gaussian noise of variance `ε_α²` per index.
///
/// Values are stored in [`enumerate_upto`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeData<T> {
    a: Vec<T>,
    order: usize,
    indices: Vec<MultiIndex>,
    values: Vec<T>,
    noise: Option<Vec<T>>,
}

impl<T: Real> DerivativeData<T> {
    /// Noiseless data; `values` follows [`enumerate_upto`] order.
    pub fn new(a: Vec<T>, order: usize, values: Vec<T>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidData("expansion point must have dimension >= 1".into()));
        }
        let indices = enumerate_upto(a.len(), order);
        if values.len() != indices.len() {
            return Err(Error::InvalidData(format!(
                "expected {} values for d={}, n={order}, got {}",
                indices.len(),
                a.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("derivative values must be finite".into()));
        }
        Ok(DerivativeData {
            a,
            order,
            indices,
            values,
            noise: None,
        })
    }

    /// Data generated from `value(α)` for each index.
    pub fn from_fn(a: Vec<T>, order: usize, mut value: impl FnMut(&MultiIndex) -> T) -> Result<Self> {
        let values = enumerate_upto(a.len(), order).iter().map(&mut value).collect();
        Self::new(a, order, values)
    }

    /// Attaches per-index noise variances (same order as the values).
    pub fn with_noise(mut self, noise: Vec<T>) -> Result<Self> {
        if noise.len() != self.values.len() {
            return Err(Error::InvalidData(format!(
                "expected {} noise variances, got {}",
                self.values.len(),
                noise.len()
            )));
        }
        if noise.iter().any(|e| !(*e >= T::zero()) || !e.is_finite()) {
            return Err(Error::InvalidData("noise variances must be finite and non-negative".into()));
        }
        self.noise = Some(noise);
        Ok(self)
    }

    /// The same noise variance at every index.
    pub fn with_uniform_noise(self, eps2: T) -> Result<Self> {
        let n = self.values.len();
        self.with_noise(vec![eps2; n])
    }

    pub fn a(&self) -> &[T] {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn noise(&self) -> Option<&[T]> {
        self.noise.as_deref()
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.is_some()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, alpha: &MultiIndex) -> Option<T> {
        self.indices.iter().position(|b| b == alpha).map(|i| self.values[i])
    }

    /// Residual data `y_α - D^α m(a)` in storage order.
    pub fn residuals(&self, prior: &PriorMean<T>) -> Vec<T> {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(alpha, &v)| v - prior.derivative(alpha, &self.a))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DataJson {
            a: self.a.iter().map(|&v| to_f64(v)).collect(),
            n: self.order,
            values: self
                .indices
                .iter()
                .enumerate()
                .map(|(i, alpha)| EntryJson {
                    alpha: alpha.as_slice().to_vec(),
                    value: to_f64(self.values[i]),
                    noise_var: self.noise.as_ref().map(|e| to_f64(e[i])),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses `{a: [...], n: int, values: [{alpha: [...], value, noise_var?}]}`.
    /// Entries may come in any order but must cover every `|α| <= n` once.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DataJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let conv = |v: f64| T::from_f64(v).ok_or_else(|| Error::InvalidData(format!("{v}")));
        let a: Vec<T> = doc.a.iter().map(|&v| conv(v)).collect::<Result<_>>()?;
        let d = a.len();
        let mut values: BTreeMap<MultiIndex, (f64, Option<f64>)> = BTreeMap::new();
        for entry in &doc.values {
            if entry.alpha.len() != d {
                return Err(Error::InvalidData(format!(
                    "multi-index {:?} has dimension {}, expected {d}",
                    entry.alpha,
                    entry.alpha.len()
                )));
            }
            let alpha = MultiIndex::new(entry.alpha.clone());
            if alpha.order() > doc.n {
                return Err(Error::InvalidData(format!("multi-index {alpha} exceeds order {}", doc.n)));
            }
            if values.insert(alpha.clone(), (entry.value, entry.noise_var)).is_some() {
                return Err(Error::InvalidData(format!("duplicate multi-index {alpha}")));
            }
        }
        let expected = count_upto(d, doc.n);
        if values.len() != expected {
            return Err(Error::InvalidData(format!(
                "expected {expected} derivative values, got {}",
                values.len()
            )));
        }
        let indices = enumerate_upto(d, doc.n);
        let vals = indices
            .iter()
            .map(|alpha| conv(values[alpha].0))
            .collect::<Result<Vec<T>>>()?;
        let noisy = values.values().filter(|(_, e)| e.is_some()).count();
        let data = Self::new(a, doc.n, vals)?;
        if noisy == 0 {
            return Ok(data);
        }
        if noisy != expected {
            return Err(Error::InvalidData(
                "noise_var must be given for every entry or for none".into(),
            ));
        }
        let noise = indices
            .iter()
            .map(|alpha| conv(values[alpha].1.unwrap_or(0.0)))
            .collect::<Result<Vec<T>>>()?;
        data.with_noise(noise)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DataJson {
    a: Vec<f64>,
    n: usize,
    values: Vec<EntryJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryJson {
    alpha: Vec<u32>,
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_var: Option<f64>,
}

#[derive(Debug, Clone)]
enum Solution<T> {
    /// Diagonal closed form: mean coefficients and covariance inflation per index.
    Closed { mean_coeff: Vec<T>, inflation: Vec<T> },
    /// Explicit solve: Cholesky factor of `R + E` and `(R + E)^{-1}(y - Dm)`.
    Generic { chol: DMatrix<T>, weights: DVector<T> },
}

/// GP posterior given derivative data at one expansion point.
#[derive(Debug, Clone)]
pub struct TaylorPosterior<T> {
    spec: KernelSpec<T>,
    prior: PriorMean<T>,
    data: DerivativeData<T>,
    solution: Solution<T>,
}

fn validate<T: Real>(spec: &KernelSpec<T>, prior: &PriorMean<T>, data: &DerivativeData<T>) -> Result<()> {
    spec.check_dim(data.dim())?;
    prior.check_dim(data.dim())?;
    if prior.degree() > data.order() {
        return Err(Error::InvalidParameter(format!(
            "prior mean has degree {} above the data order {}",
            prior.degree(),
            data.order()
        )));
    }
    for (i, alpha) in data.indices().iter().enumerate() {
        let noiseless = data.noise().map(|e| e[i] == T::zero()).unwrap_or(true);
        if noiseless && !(spec.coefficient(alpha) > T::zero()) {
            return Err(Error::SingularModel(alpha.to_string()));
        }
    }
    Ok(())
}

/// Closed-form posterior (no linear solve).
pub fn condition<T: Real>(
    spec: &KernelSpec<T>,
    prior: &PriorMean<T>,
    data: &DerivativeData<T>,
) -> Result<TaylorPosterior<T>> {
    validate(spec, prior, data)?;
    let sigma2 = spec.sigma2();
    let resid = data.residuals(prior);
    let mut mean_coeff = Vec::with_capacity(data.len());
    let mut inflation = Vec::with_capacity(data.len());
    for (i, alpha) in data.indices().iter().enumerate() {
        let fa: T = factorial_multi(alpha).to_real();
        let prior_var = sigma2 * spec.coefficient(alpha) * alpha.power_of(spec.lambda());
        let eps2 = data.noise().map(|e| e[i]).unwrap_or_else(T::zero);
        if eps2 == T::zero() {
            mean_coeff.push(resid[i] / fa);
            inflation.push(T::zero());
        } else {
            let w = prior_var / (prior_var + eps2);
            mean_coeff.push(w * resid[i] / fa);
            inflation.push(prior_var * eps2 / (fa * fa * (prior_var + eps2)));
        }
    }
    Ok(TaylorPosterior {
        spec: spec.clone(),
        prior: prior.clone(),
        data: data.clone(),
        solution: Solution::Closed { mean_coeff, inflation },
    })
}

/// Posterior via the explicit Gram matrix `R_a` of mixed kernel derivatives
/// at `a` and a symmetric positive-definite solve.
pub fn condition_generic<T: Real>(
    spec: &KernelSpec<T>,
    prior: &PriorMean<T>,
    data: &DerivativeData<T>,
) -> Result<TaylorPosterior<T>> {
    validate(spec, prior, data)?;
    let a = data.a();
    let idx = data.indices();
    let m = idx.len();
    let mut gram = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            gram[(i, j)] = spec.eval_mixed_derivative(a, &idx[j], &idx[i], a, a)?;
        }
    }
    if let Some(noise) = data.noise() {
        for i in 0..m {
            gram[(i, i)] += noise[i];
        }
    }
    let (chol, _) = cholesky_jitter(&gram, lit(1e-12), 40).map_err(|e| Error::IllConditioned(e.to_string()))?;
    let weights = cholesky_solve(&chol, &DVector::from_vec(data.residuals(prior)));
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::IllConditioned("non-finite solution of the Gram system".into()));
    }
    Ok(TaylorPosterior {
        spec: spec.clone(),
        prior: prior.clone(),
        data: data.clone(),
        solution: Solution::Generic { chol, weights },
    })
}

impl<T: Real> TaylorPosterior<T> {
    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn data(&self) -> &DerivativeData<T> {
        &self.data
    }

    pub fn prior(&self) -> &PriorMean<T> {
        &self.prior
    }

    /// `r_a(x)_i = D_y^{α_i} K_a(x, y)|_{y=a}`.
    fn cross_vector(&self, x: &[T]) -> Result<DVector<T>> {
        let a = self.data.a();
        let zero = MultiIndex::zeros(a.len());
        let mut r = DVector::zeros(self.data.len());
        for (i, alpha) in self.data.indices().iter().enumerate() {
            r[i] = self.spec.eval_mixed_derivative(a, alpha, &zero, x, a)?;
        }
        Ok(r)
    }

    /// Posterior mean at `x`.
    pub fn mean(&self, x: &[T]) -> Result<T> {
        let a = self.data.a();
        self.spec.check_domain(a, x)?;
        let base = self.prior.eval(x);
        match &self.solution {
            Solution::Closed { mean_coeff, .. } => Ok(self
                .data
                .indices()
                .iter()
                .zip(mean_coeff)
                .fold(base, |acc, (alpha, &c)| acc + c * monomial(x, a, alpha))),
            Solution::Generic { weights, .. } => Ok(base + self.cross_vector(x)?.dot(weights)),
        }
    }

    /// Posterior covariance between `x` and `y`.
    pub fn cov(&self, x: &[T], y: &[T]) -> Result<T> {
        let a = self.data.a();
        self.spec.check_domain(a, x)?;
        self.spec.check_domain(a, y)?;
        match &self.solution {
            Solution::Closed { inflation, .. } => {
                let n = self.data.order();
                let z: Vec<T> = x.iter().zip(a).map(|(&xi, &ai)| xi - ai).collect();
                let w: Vec<T> = y.iter().zip(a).map(|(&yi, &ai)| yi - ai).collect();
                let tail = if self.spec.is_inner_product() {
                    self.spec.profile_tail(n as isize, self.spec.weighted_inner(&z, &w))
                } else {
                    self.spec.power_series_sum(&z, &w, n + 1)
                };
                let noise = self
                    .data
                    .indices()
                    .iter()
                    .zip(inflation)
                    .filter(|(_, &c)| c != T::zero())
                    .fold(T::zero(), |acc, (alpha, &c)| {
                        acc + c * monomial(x, a, alpha) * monomial(y, a, alpha)
                    });
                Ok(self.spec.sigma2() * tail + noise)
            }
            Solution::Generic { chol, .. } => {
                let rx = self.cross_vector(x)?;
                let ry = self.cross_vector(y)?;
                let k = self.spec.eval(a, x, y)?;
                Ok(k - rx.dot(&cholesky_solve(chol, &ry)))
            }
        }
    }

    /// Posterior variance `P(x, x)`, clamped at zero against rounding.
    pub fn var(&self, x: &[T]) -> Result<T> {
        Ok(self.cov(x, x)?.max(T::zero()))
    }

    /// Posterior variance at a point carrying derivative tangents, for use
    /// inside differentiated objectives. Inner-product kernels only.
    pub fn var_dual(&self, x: &[Dual2<T>]) -> Result<Dual2<T>> {
        let a = self.data.a();
        let xv: Vec<T> = x.iter().map(|v| v.value()).collect();
        self.spec.check_domain(a, &xv)?;
        if !self.spec.is_inner_product() {
            return Err(Error::Unsupported(
                "differentiable posterior variance needs an inner-product kernel".into(),
            ));
        }
        let Solution::Closed { inflation, .. } = &self.solution else {
            return Err(Error::Unsupported("differentiable variance needs the closed-form posterior".into()));
        };
        let z: Vec<Dual2<T>> = x.iter().zip(a).map(|(xi, &ai)| xi - ai).collect();
        let s = z
            .iter()
            .zip(self.spec.lambda())
            .fold(Dual2::constant(T::zero()), |acc, (zi, &l)| acc + zi * zi * l);
        let [t0, t1, t2] = self.spec.profile_tail_derivatives(self.data.order() as isize, s.value());
        let mut out = s.chain(t0, t1, t2) * self.spec.sigma2();
        for (alpha, &c) in self.data.indices().iter().zip(inflation) {
            if c == T::zero() {
                continue;
            }
            let mono = alpha
                .as_slice()
                .iter()
                .zip(&z)
                .fold(Dual2::constant(T::one()), |acc, (&k, zi)| acc * zi.powi(2 * k as i32));
            out = out + mono * c;
        }
        Ok(out)
    }
}

/// Closed-form posterior mean at `x`; convenience over [`TaylorPosterior::mean`].
pub fn posterior_mean<T: Real>(post: &TaylorPosterior<T>, x: &[T]) -> Result<T> {
    post.mean(x)
}

pub fn posterior_cov<T: Real>(post: &TaylorPosterior<T>, x: &[T], y: &[T]) -> Result<T> {
    post.cov(x, y)
}

/// Constant `C_{n,r}` of the error bound `P(x, x) <= σ² C_{n,r} ‖x - a‖^{2(n+1)}`
/// for `‖x - a‖ <= r`:
/// `C_{n,r} = Σ_{|α|=n+1} c_αλ^α/(α!)² + Σ_{|α|>n+1} c_αλ^α r^{2(|α|-n-1)}/(α!)²`.
///
/// `radius` overrides the kernel's domain radius and is required when the
/// latter is infinite.
pub fn variance_bound_constant<T: Real>(spec: &KernelSpec<T>, n: usize, radius: Option<T>) -> Result<T> {
    const TERMS: usize = 200;
    let r = radius.unwrap_or_else(|| spec.radius());
    if !r.is_finite() || !(r > T::zero()) {
        return Err(Error::InvalidParameter(
            "variance bound needs a finite positive evaluation radius".into(),
        ));
    }
    let lambda_sum = spec.lambda().iter().fold(T::zero(), |acc, &l| acc + l);
    let block = |p: usize| -> T {
        if spec.is_inner_product() {
            // multinomial theorem: Σ_{|α|=p} p!/α! λ^α = (Σλ)^p
            spec.profile_coefficient(p) * lambda_sum.powi(p as i32)
        } else {
            enumerate_order(spec.dim(), p)
                .iter()
                .fold(T::zero(), |acc, alpha| acc + spec.term_weight(alpha))
        }
    };
    let r2 = r * r;
    let mut sum = T::zero();
    let mut last = T::zero();
    for k in 0..TERMS {
        let t = block(n + 1 + k) * r2.powi(k as i32);
        if !t.is_finite() {
            return Err(Error::Diverges { terms: k });
        }
        sum += t;
        last = t;
    }
    if !sum.is_finite() || last.abs() > lit::<T>(1e-12) * sum.abs() {
        return Err(Error::Diverges { terms: TERMS });
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp1() -> KernelSpec<f64> {
        KernelSpec::exponential(1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn constant_data_gives_constant_mean() {
        let data = DerivativeData::new(vec![0.3], 0, vec![2.5]).unwrap();
        let post = condition(&exp1(), &PriorMean::zero(), &data).unwrap();
        for &x in &[-1.0, 0.0, 0.3, 2.0] {
            assert_eq!(post.mean(&[x]).unwrap(), 2.5);
        }
    }

    #[test]
    fn sine_second_order_mean() {
        let a = 0.5f64;
        let data = DerivativeData::new(
            vec![a],
            2,
            vec![(3.0 * a).sin(), 3.0 * (3.0 * a).cos(), -9.0 * (3.0 * a).sin()],
        )
        .unwrap();
        let post = condition(&exp1(), &PriorMean::zero(), &data).unwrap();
        for &x in &[-1.0, 0.2, 0.5, 1.7] {
            let dx = x - a;
            let want = 1.5f64.sin() + 3.0 * 1.5f64.cos() * dx - 4.5 * 1.5f64.sin() * dx * dx;
            assert_relative_eq!(post.mean(&[x]).unwrap(), want, max_relative = 1e-14);
        }
        assert_eq!(post.mean(&[a]).unwrap(), 1.5f64.sin());
        let zero_noise = data.clone().with_uniform_noise(0.0).unwrap();
        let post0 = condition(&exp1(), &PriorMean::zero(), &zero_noise).unwrap();
        for &x in &[-1.0, 0.2, 1.7] {
            assert!((post0.mean(&[x]).unwrap() - post.mean(&[x]).unwrap()).abs() <= 1e-12);
            assert!((post0.cov(&[x], &[0.1]).unwrap() - post.cov(&[x], &[0.1]).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn noisy_shrinkage_halves() {
        let data = DerivativeData::new(vec![0.0], 1, vec![2.0, 0.0])
            .unwrap()
            .with_noise(vec![1.0, 1.0])
            .unwrap();
        let post = condition(&exp1(), &PriorMean::zero(), &data).unwrap();
        assert_relative_eq!(post.mean(&[0.0]).unwrap(), 1.0, max_relative = 1e-15);
        let generic = condition_generic(&exp1(), &PriorMean::zero(), &data).unwrap();
        assert_relative_eq!(generic.mean(&[0.0]).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn linear_prior_reproduces_linear_function() {
        let prior = PriorMean::from_terms([(MultiIndex::from([1]), 1.0)]).unwrap();
        let data = DerivativeData::new(vec![0.2], 2, vec![0.2, 1.0, 0.0]).unwrap();
        let post = condition(&exp1(), &prior, &data).unwrap();
        for &x in &[-2.0, 0.0, 0.7, 3.0] {
            assert_relative_eq!(post.mean(&[x]).unwrap(), x, max_relative = 1e-14, epsilon = 1e-15);
        }
    }

    #[test]
    fn covariance_examples() {
        let data = DerivativeData::new(vec![0.0], 1, vec![1.0, 1.0]).unwrap();
        let post = condition(&exp1(), &PriorMean::zero(), &data).unwrap();
        assert_eq!(post.cov(&[0.0], &[0.7]).unwrap(), 0.0);
        assert_eq!(post.cov(&[1.2], &[0.0]).unwrap(), 0.0);
        for &h in &[0.01f64, 0.3, 1.0, 2.0] {
            let want = (h * h).exp() - 1.0 - h * h;
            let got = post.cov(&[h], &[h]).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-10);
            assert_relative_eq!(got, exp1().series_tail(h, 1).unwrap(), max_relative = 1e-15);
        }
        let noisy = DerivativeData::new(vec![0.0], 0, vec![0.4])
            .unwrap()
            .with_noise(vec![1.0])
            .unwrap();
        let post = condition(&exp1(), &PriorMean::zero(), &noisy).unwrap();
        assert_relative_eq!(post.cov(&[0.0], &[0.0]).unwrap(), 0.5, max_relative = 1e-15);
        let generic = condition_generic(&exp1(), &PriorMean::zero(), &noisy).unwrap();
        assert_relative_eq!(generic.cov(&[0.0], &[0.0]).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn bergman_odd_order_is_singular() {
        let k = KernelSpec::<f64>::bergman(1.0, 1.0, 1).unwrap();
        let data = DerivativeData::new(vec![0.0], 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            condition(&k, &PriorMean::zero(), &data),
            Err(Error::SingularModel(_))
        ));
        let noisy = data.with_noise(vec![0.0, 0.1]).unwrap();
        let post = condition(&k, &PriorMean::zero(), &noisy).unwrap();
        // the odd-order observation carries no information
        assert_eq!(post.mean(&[0.5]).unwrap(), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let data = DerivativeData::new(vec![0.5, -1.0], 1, vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_noise(vec![0.0, 0.1, 0.2])
            .unwrap();
        let text = data.to_json().unwrap();
        let back = DerivativeData::<f64>::from_json(&text).unwrap();
        assert_eq!(back, data);
        let shuffled = r#"{"a":[0.0],"n":1,"values":[{"alpha":[1],"value":4.0},{"alpha":[0],"value":2.0}]}"#;
        let d = DerivativeData::<f64>::from_json(shuffled).unwrap();
        assert_eq!(d.values(), &[2.0, 4.0]);
        assert!(!d.is_noisy());
        let missing = r#"{"a":[0.0],"n":1,"values":[{"alpha":[0],"value":2.0}]}"#;
        assert!(DerivativeData::<f64>::from_json(missing).is_err());
        let partial_noise = r#"{"a":[0.0],"n":1,"values":[{"alpha":[1],"value":4.0,"noise_var":1.0},{"alpha":[0],"value":2.0}]}"#;
        assert!(DerivativeData::<f64>::from_json(partial_noise).is_err());
    }

    #[test]
    fn bound_constants() {
        let s = KernelSpec::<f64>::szego(1.0, 1.0, 1).unwrap();
        let c0 = variance_bound_constant(&s, 0, Some(0.9)).unwrap();
        assert_relative_eq!(c0, 1.0 / (1.0 - 0.81), max_relative = 1e-12);
        let e = exp1();
        assert!(variance_bound_constant(&e, 3, None).is_err());
        let c = variance_bound_constant(&e, 3, Some(1.0)).unwrap();
        let oracle: f64 = (4..44).map(|p| 1.0 / crate::multiindex::factorial_real::<f64>(p)).sum();
        assert_relative_eq!(c, oracle, max_relative = 1e-14);
        assert!(matches!(
            variance_bound_constant(&s, 0, Some(1.5)),
            Err(Error::Diverges { .. })
        ));
    }

    #[test]
    fn dual_variance_matches_plain() {
        let k = KernelSpec::<f64>::new(crate::kernels::KernelFamily::Exponential, 1.7, vec![0.5, 2.0]).unwrap();
        let data = DerivativeData::new(vec![0.1, -0.2], 1, vec![1.0, 0.5, -0.3])
            .unwrap()
            .with_noise(vec![0.1, 0.0, 0.2])
            .unwrap();
        let post = condition(&k, &PriorMean::zero(), &data).unwrap();
        let x = [0.4, 0.3];
        let (v, g, _) = crate::autodiff::value_grad_hess(|xd| post.var_dual(xd).unwrap(), &x).unwrap();
        assert_relative_eq!(v, post.var(&x).unwrap(), max_relative = 1e-14);
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (post.var(&xp).unwrap() - post.var(&xm).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[i], fd, max_relative = 1e-6);
        }
    }
}
