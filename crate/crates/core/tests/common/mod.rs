#![allow(dead_code)]

use probtaylor::multiindex::enumerate_upto;
use probtaylor::MultiIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Polynomial `Σ c_α x^α` about the origin, evaluated and differentiated
/// without the library.
#[derive(Debug, Clone)]
pub struct Poly {
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl Poly {
    pub fn random(rng: &mut ChaCha8Rng, dim: usize, degree: usize) -> Self {
        let terms = enumerate_upto(dim, degree)
            .into_iter()
            .map(|a| (a.as_slice().to_vec(), rng.random_range(-2.0..2.0)))
            .collect();
        Poly { terms }
    }

    pub fn derivative(&self, beta: &[u32], x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (alpha, c) in &self.terms {
            let mut term = *c;
            for i in 0..x.len() {
                if alpha[i] < beta[i] {
                    term = 0.0;
                    break;
                }
                for k in 0..beta[i] {
                    term *= (alpha[i] - k) as f64;
                }
                term *= x[i].powi((alpha[i] - beta[i]) as i32);
            }
            total += term;
        }
        total
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.derivative(&vec![0; x.len()], x)
    }

    pub fn derivative_at(&self, beta: &MultiIndex, x: &[f64]) -> f64 {
        self.derivative(beta.as_slice(), x)
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
