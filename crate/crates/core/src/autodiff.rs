//! Forward-mode second-order automatic differentiation.
//!
//! [`Dual2`] carries a value, its gradient and its (dense, row-major)
//! Hessian with respect to `d` seed variables. Constants carry empty
//! gradient/Hessian vectors, which every operation treats as zeros.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Scalar function of a point, written against [`Dual2`].
pub type ScalarFn<T> = Arc<dyn Fn(&[Dual2<T>]) -> Dual2<T> + Send + Sync>;
/// Vector function of a point, written against [`Dual2`].
pub type VectorFn<T> = Arc<dyn Fn(&[Dual2<T>]) -> Vec<Dual2<T>> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dual2<T> {
    value: T,
    grad: Vec<T>,
    hess: Vec<T>,
}

impl<T: Real> Dual2<T> {
    pub fn constant(value: T) -> Self {
        Dual2 {
            value,
            grad: Vec::new(),
            hess: Vec::new(),
        }
    }

    /// The `i`-th of `dim` seed variables.
    pub fn variable(value: T, i: usize, dim: usize) -> Self {
        let mut grad = vec![T::zero(); dim];
        grad[i] = T::one();
        Dual2 {
            value,
            grad,
            hess: vec![T::zero(); dim * dim],
        }
    }

    /// Seeds every coordinate of `x`.
    pub fn variables(x: &[T]) -> Vec<Self> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| Self::variable(v, i, x.len()))
            .collect()
    }

    pub fn value(&self) -> T {
        self.value
    }

    /// Number of seed variables (0 for constants).
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    pub fn grad_vector(&self, dim: usize) -> DVector<T> {
        if self.grad.is_empty() {
            DVector::zeros(dim)
        } else {
            DVector::from_column_slice(&self.grad)
        }
    }

    pub fn hessian_matrix(&self, dim: usize) -> DMatrix<T> {
        if self.hess.is_empty() {
            DMatrix::zeros(dim, dim)
        } else {
            DMatrix::from_row_slice(dim, dim, &self.hess)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|v| v.is_finite())
            && self.hess.iter().all(|v| v.is_finite())
    }

    /// `f(self)` given `f(v), f'(v), f''(v)`.
    pub fn chain(&self, f0: T, f1: T, f2: T) -> Self {
        let d = self.dim();
        let grad: Vec<T> = self.grad.iter().map(|&g| f1 * g).collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        for i in 0..d {
            for j in 0..d {
                hess.push(f1 * self.hess[i * d + j] + f2 * self.grad[i] * self.grad[j]);
            }
        }
        Dual2 {
            value: f0,
            grad,
            hess,
        }
    }

    pub fn recip(&self) -> Self {
        let v = self.value;
        let r = T::one() / v;
        self.chain(r, -r * r, lit::<T>(2.0) * r * r * r)
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    /// Natural logarithm; NaN outside `(0, ∞)`.
    pub fn ln(&self) -> Self {
        let v = self.value;
        self.chain(v.ln(), T::one() / v, -T::one() / (v * v))
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        let half = lit::<T>(0.5);
        self.chain(s, half / s, -half * half / (s * self.value))
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(&self) -> Self {
        let t = self.value.tan();
        let sec2 = T::one() + t * t;
        self.chain(t, sec2, lit::<T>(2.0) * t * sec2)
    }

    pub fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let d = T::one() - t * t;
        self.chain(t, d, lit::<T>(-2.0) * t * d)
    }

    pub fn atan(&self) -> Self {
        let v = self.value;
        let q = T::one() / (T::one() + v * v);
        self.chain(v.atan(), q, lit::<T>(-2.0) * v * q * q)
    }

    pub fn powi(&self, n: i32) -> Self {
        let v = self.value;
        match n {
            0 => Dual2::constant(T::one()).lift_like(self),
            1 => self.clone(),
            _ => {
                let nf = lit::<T>(n as f64);
                self.chain(
                    v.powi(n),
                    nf * v.powi(n - 1),
                    nf * (nf - T::one()) * v.powi(n - 2),
                )
            }
        }
    }

    pub fn powf(&self, p: T) -> Self {
        let v = self.value;
        self.chain(v.powf(p), p * v.powf(p - T::one()), p * (p - T::one()) * v.powf(p - lit(2.0)))
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Four-quadrant `atan2(self, x)` (`self` is the ordinate).
    pub fn atan2(&self, x: &Dual2<T>) -> Self {
        let (yv, xv) = (self.value, x.value);
        let r2 = xv * xv + yv * yv;
        let r4 = r2 * r2;
        let two = lit::<T>(2.0);
        // partials of atan2(y, x)
        let fy = xv / r2;
        let fx = -yv / r2;
        let fyy = -two * xv * yv / r4;
        let fxx = two * xv * yv / r4;
        let fxy = (yv * yv - xv * xv) / r4;
        let d = self.dim().max(x.dim());
        let gy = |i: usize| if self.grad.is_empty() { T::zero() } else { self.grad[i] };
        let gx = |i: usize| if x.grad.is_empty() { T::zero() } else { x.grad[i] };
        let hy = |k: usize| if self.hess.is_empty() { T::zero() } else { self.hess[k] };
        let hx = |k: usize| if x.hess.is_empty() { T::zero() } else { x.hess[k] };
        let grad = (0..d).map(|i| fy * gy(i) + fx * gx(i)).collect();
        let mut hess = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                hess.push(
                    fy * hy(i * d + j)
                        + fx * hx(i * d + j)
                        + fyy * gy(i) * gy(j)
                        + fxx * gx(i) * gx(j)
                        + fxy * (gy(i) * gx(j) + gx(i) * gy(j)),
                );
            }
        }
        Dual2 {
            value: yv.atan2(xv),
            grad,
            hess,
        }
    }

    /// Constant with zero tangents of the same dimension as `like`.
    fn lift_like(mut self, like: &Dual2<T>) -> Self {
        self.grad = vec![T::zero(); like.grad.len()];
        self.hess = vec![T::zero(); like.hess.len()];
        self
    }

    fn add_ref(&self, other: &Dual2<T>) -> Self {
        Dual2 {
            value: self.value + other.value,
            grad: zip_tangent(&self.grad, &other.grad, |a, b| a + b),
            hess: zip_tangent(&self.hess, &other.hess, |a, b| a + b),
        }
    }

    fn sub_ref(&self, other: &Dual2<T>) -> Self {
        Dual2 {
            value: self.value - other.value,
            grad: zip_tangent(&self.grad, &other.grad, |a, b| a - b),
            hess: zip_tangent(&self.hess, &other.hess, |a, b| a - b),
        }
    }

    fn mul_ref(&self, other: &Dual2<T>) -> Self {
        let (a, b) = (self.value, other.value);
        let d = self.dim().max(other.dim());
        let ga = |i: usize| if self.grad.is_empty() { T::zero() } else { self.grad[i] };
        let gb = |i: usize| if other.grad.is_empty() { T::zero() } else { other.grad[i] };
        let ha = |k: usize| if self.hess.is_empty() { T::zero() } else { self.hess[k] };
        let hb = |k: usize| if other.hess.is_empty() { T::zero() } else { other.hess[k] };
        let grad = (0..d).map(|i| a * gb(i) + b * ga(i)).collect();
        let mut hess = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                hess.push(a * hb(i * d + j) + b * ha(i * d + j) + ga(i) * gb(j) + gb(i) * ga(j));
            }
        }
        Dual2 {
            value: a * b,
            grad,
            hess,
        }
    }

    fn scale(&self, k: T) -> Self {
        Dual2 {
            value: self.value * k,
            grad: self.grad.iter().map(|&g| g * k).collect(),
            hess: self.hess.iter().map(|&h| h * k).collect(),
        }
    }

    fn shift(&self, k: T) -> Self {
        Dual2 {
            value: self.value + k,
            grad: self.grad.clone(),
            hess: self.hess.clone(),
        }
    }
}

fn zip_tangent<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Vec::new(),
        (true, false) => b.iter().map(|&y| f(T::zero(), y)).collect(),
        (false, true) => a.iter().map(|&x| f(x, T::zero())).collect(),
        (false, false) => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
    }
}

impl<T: Real> Neg for Dual2<T> {
    type Output = Dual2<T>;
    fn neg(self) -> Dual2<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> Neg for &Dual2<T> {
    type Output = Dual2<T>;
    fn neg(self) -> Dual2<T> {
        self.scale(-T::one())
    }
}

macro_rules! dual_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl<T: Real> $trait<&Dual2<T>> for &Dual2<T> {
            type Output = Dual2<T>;
            fn $method(self, rhs: &Dual2<T>) -> Dual2<T> {
                let f: fn(&Dual2<T>, &Dual2<T>) -> Dual2<T> = $body;
                f(self, rhs)
            }
        }
        impl<T: Real> $trait<Dual2<T>> for Dual2<T> {
            type Output = Dual2<T>;
            fn $method(self, rhs: Dual2<T>) -> Dual2<T> {
                (&self).$method(&rhs)
            }
        }
        impl<T: Real> $trait<&Dual2<T>> for Dual2<T> {
            type Output = Dual2<T>;
            fn $method(self, rhs: &Dual2<T>) -> Dual2<T> {
                (&self).$method(rhs)
            }
        }
        impl<T: Real> $trait<Dual2<T>> for &Dual2<T> {
            type Output = Dual2<T>;
            fn $method(self, rhs: Dual2<T>) -> Dual2<T> {
                self.$method(&rhs)
            }
        }
    };
}

dual_binop!(Add, add, |a, b| a.add_ref(b));
dual_binop!(Sub, sub, |a, b| a.sub_ref(b));
dual_binop!(Mul, mul, |a, b| a.mul_ref(b));
dual_binop!(Div, div, |a, b| a.mul_ref(&b.recip()));

macro_rules! dual_scalar_ops {
    ($t:ty) => {
        impl Add<Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn add(self, rhs: Dual2<$t>) -> Dual2<$t> {
                rhs.shift(self)
            }
        }
        impl Add<&Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn add(self, rhs: &Dual2<$t>) -> Dual2<$t> {
                rhs.shift(self)
            }
        }
        impl Sub<Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn sub(self, rhs: Dual2<$t>) -> Dual2<$t> {
                rhs.scale(-1.0).shift(self)
            }
        }
        impl Sub<&Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn sub(self, rhs: &Dual2<$t>) -> Dual2<$t> {
                rhs.scale(-1.0).shift(self)
            }
        }
        impl Mul<Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn mul(self, rhs: Dual2<$t>) -> Dual2<$t> {
                rhs.scale(self)
            }
        }
        impl Mul<&Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn mul(self, rhs: &Dual2<$t>) -> Dual2<$t> {
                rhs.scale(self)
            }
        }
        impl Div<Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn div(self, rhs: Dual2<$t>) -> Dual2<$t> {
                rhs.recip().scale(self)
            }
        }
        impl Div<&Dual2<$t>> for $t {
            type Output = Dual2<$t>;
            fn div(self, rhs: &Dual2<$t>) -> Dual2<$t> {
                rhs.recip().scale(self)
            }
        }
    };
}

dual_scalar_ops!(f32);
dual_scalar_ops!(f64);

impl<T: Real> Add<T> for Dual2<T> {
    type Output = Dual2<T>;
    fn add(self, rhs: T) -> Dual2<T> {
        self.shift(rhs)
    }
}

impl<T: Real> Add<T> for &Dual2<T> {
    type Output = Dual2<T>;
    fn add(self, rhs: T) -> Dual2<T> {
        self.shift(rhs)
    }
}

impl<T: Real> Sub<T> for Dual2<T> {
    type Output = Dual2<T>;
    fn sub(self, rhs: T) -> Dual2<T> {
        self.shift(-rhs)
    }
}

impl<T: Real> Sub<T> for &Dual2<T> {
    type Output = Dual2<T>;
    fn sub(self, rhs: T) -> Dual2<T> {
        self.shift(-rhs)
    }
}

impl<T: Real> Mul<T> for Dual2<T> {
    type Output = Dual2<T>;
    fn mul(self, rhs: T) -> Dual2<T> {
        self.scale(rhs)
    }
}

impl<T: Real> Mul<T> for &Dual2<T> {
    type Output = Dual2<T>;
    fn mul(self, rhs: T) -> Dual2<T> {
        self.scale(rhs)
    }
}

impl<T: Real> Div<T> for Dual2<T> {
    type Output = Dual2<T>;
    fn div(self, rhs: T) -> Dual2<T> {
        self.scale(T::one() / rhs)
    }
}

impl<T: Real> Div<T> for &Dual2<T> {
    type Output = Dual2<T>;
    fn div(self, rhs: T) -> Dual2<T> {
        self.scale(T::one() / rhs)
    }
}

fn check_finite<T: Real>(out: &Dual2<T>, what: &str) -> Result<()> {
    if out.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} produced a non-finite value or derivative")))
    }
}

/// Value, gradient and Hessian of a scalar function at `x`.
pub fn value_grad_hess<T: Real, F>(f: F, x: &[T]) -> Result<(T, DVector<T>, DMatrix<T>)>
where
    F: Fn(&[Dual2<T>]) -> Dual2<T>,
{
    let out = f(&Dual2::variables(x));
    check_finite(&out, "function")?;
    let d = x.len();
    let h = out.hessian_matrix(d);
    // exact symmetry regardless of accumulated rounding
    let h = (&h + h.transpose()) * lit::<T>(0.5);
    Ok((out.value, out.grad_vector(d), h))
}

pub fn gradient<T: Real, F>(f: F, x: &[T]) -> Result<DVector<T>>
where
    F: Fn(&[Dual2<T>]) -> Dual2<T>,
{
    value_grad_hess(f, x).map(|(_, g, _)| g)
}

pub fn hessian<T: Real, F>(f: F, x: &[T]) -> Result<DMatrix<T>>
where
    F: Fn(&[Dual2<T>]) -> Dual2<T>,
{
    value_grad_hess(f, x).map(|(_, _, h)| h)
}

/// Values and `q × d` Jacobian of a vector function at `x`.
pub fn value_jacobian<T: Real, F>(f: F, x: &[T]) -> Result<(DVector<T>, DMatrix<T>)>
where
    F: Fn(&[Dual2<T>]) -> Vec<Dual2<T>>,
{
    let out = f(&Dual2::variables(x));
    let d = x.len();
    let mut jac = DMatrix::zeros(out.len(), d);
    let mut vals = DVector::zeros(out.len());
    for (i, comp) in out.iter().enumerate() {
        check_finite(comp, "function component")?;
        vals[i] = comp.value;
        if !comp.grad.is_empty() {
            for j in 0..d {
                jac[(i, j)] = comp.grad[j];
            }
        }
    }
    Ok((vals, jac))
}

pub fn jacobian<T: Real, F>(f: F, x: &[T]) -> Result<DMatrix<T>>
where
    F: Fn(&[Dual2<T>]) -> Vec<Dual2<T>>,
{
    value_jacobian(f, x).map(|(_, j)| j)
}

/// Evaluates a [`Dual2`] function at plain scalars.
pub fn eval_plain<T: Real, F>(f: F, x: &[T]) -> Vec<T>
where
    F: Fn(&[Dual2<T>]) -> Vec<Dual2<T>>,
{
    let args: Vec<Dual2<T>> = x.iter().map(|&v| Dual2::constant(v)).collect();
    f(&args).iter().map(|v| v.value).collect()
}
