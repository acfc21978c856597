//! Multi-indices: enumeration, factorials and centred monomials.
//!
//! Every derivative-data vector in the crate is laid out in the order
//! produced by [`enumerate_upto`]: graded by total order, and within one
//! order lexicographically descending in the leading coordinates, e.g.
//! `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)` for `d = 2, n = 2`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// A `d`-dimensional multi-index of non-negative integers.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(indices: Vec<u32>) -> Self {
        MultiIndex(indices)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit index `e_i` in `dim` dimensions.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = vec![0; dim];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total order `|α|`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| *a.max(b)).collect())
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Componentwise difference; `None` unless `self >= other`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// `λ^α = Π λ_i^{α(i)}`.
    pub fn power_of<T: Real>(&self, base: &[T]) -> T {
        self.0
            .iter()
            .zip(base)
            .fold(T::one(), |acc, (&k, &b)| acc * b.powi(k as i32))
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

impl<const N: usize> From<[u32; N]> for MultiIndex {
    fn from(v: [u32; N]) -> Self {
        MultiIndex(v.to_vec())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of dimension `dim` with total order exactly `order`.
pub fn enumerate_order(dim: usize, order: usize) -> Vec<MultiIndex> {
    fn fill(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == dim {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for k in (0..=remaining).rev() {
            prefix.push(k);
            fill(dim, remaining - k, prefix, out);
            prefix.pop();
        }
    }
    assert!(dim >= 1, "multi-index dimension must be positive");
    let mut out = Vec::new();
    fill(dim, order as u32, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Every multi-index with `|α| <= n`, graded lexicographic order.
pub fn enumerate_upto(dim: usize, n: usize) -> Vec<MultiIndex> {
    (0..=n).flat_map(|p| enumerate_order(dim, p)).collect()
}

/// `N_n^d = binomial(n + d, d)`.
pub fn count_upto(dim: usize, n: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=dim as u128 {
        acc = acc * (n as u128 + i) / i;
    }
    acc as usize
}

/// A factorial product, exact while it fits in `u128`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factorial {
    Exact(u128),
    Float(f64),
}

impl Factorial {
    pub fn to_real<T: Real>(self) -> T {
        match self {
            Factorial::Exact(v) => T::from_u128(v).unwrap_or_else(T::infinity),
            Factorial::Float(v) => T::from_f64(v).unwrap_or_else(T::infinity),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Factorial::Exact(v) => v as f64,
            Factorial::Float(v) => v,
        }
    }
}

/// `k!`, exact up to `34!`.
pub fn factorial(k: u32) -> Factorial {
    let mut acc: u128 = 1;
    for i in 2..=k as u128 {
        match acc.checked_mul(i) {
            Some(v) => acc = v,
            None => {
                let mut f = acc as f64;
                for j in i..=k as u128 {
                    f *= j as f64;
                }
                return Factorial::Float(f);
            }
        }
    }
    Factorial::Exact(acc)
}

/// `α! = Π α(j)!`.
pub fn factorial_multi(alpha: &MultiIndex) -> Factorial {
    let mut exact: Option<u128> = Some(1);
    let mut float = 1.0f64;
    for &k in alpha.as_slice() {
        let f = factorial(k);
        float *= f.as_f64();
        exact = match (exact, f) {
            (Some(acc), Factorial::Exact(v)) => acc.checked_mul(v),
            _ => None,
        };
    }
    match exact {
        Some(v) => Factorial::Exact(v),
        None => Factorial::Float(float),
    }
}

/// `k!` as a scalar.
pub fn factorial_real<T: Real>(k: u32) -> T {
    factorial(k).to_real()
}

/// `(x - a)^α`, with `0^0 = 1`.
pub fn monomial<T: Real>(x: &[T], a: &[T], alpha: &MultiIndex) -> T {
    debug_assert_eq!(x.len(), alpha.dim());
    debug_assert_eq!(a.len(), alpha.dim());
    alpha
        .as_slice()
        .iter()
        .zip(x.iter().zip(a))
        .fold(T::one(), |acc, (&k, (&xi, &ai))| acc * (xi - ai).powi(k as i32))
}
