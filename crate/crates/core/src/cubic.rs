//! Real roots of cubic polynomials.

use crate::scalar::{lit, Real};

/// `a3·s³ + a2·s² + a1·s + a0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoefficients<T> {
    pub a3: T,
    pub a2: T,
    pub a1: T,
    pub a0: T,
}

impl<T: Real> CubicCoefficients<T> {
    pub fn new(a3: T, a2: T, a1: T, a0: T) -> Self {
        CubicCoefficients { a3, a2, a1, a0 }
    }

    pub fn eval(&self, s: T) -> T {
        ((self.a3 * s + self.a2) * s + self.a1) * s + self.a0
    }

    pub fn derivative(&self, s: T) -> T {
        (lit::<T>(3.0) * self.a3 * s + lit::<T>(2.0) * self.a2) * s + self.a1
    }

    /// `18abcd - 4b³d + b²c² - 4ac³ - 27a²d²`; positive iff three distinct real roots.
    pub fn discriminant(&self) -> T {
        let (a, b, c, d) = (self.a3, self.a2, self.a1, self.a0);
        lit::<T>(18.0) * a * b * c * d - lit::<T>(4.0) * b * b * b * d + b * b * c * c
            - lit::<T>(4.0) * a * c * c * c
            - lit::<T>(27.0) * a * a * d * d
    }

    pub fn max_abs_coefficient(&self) -> T {
        self.a3.abs().max(self.a2.abs()).max(self.a1.abs()).max(self.a0.abs())
    }
}

/// Sorted real roots of a cubic with `a3 != 0`, each polished by two Newton
/// steps; roots closer than `1e-9` relative are merged.
pub fn solve_cubic_real<T: Real>(c: &CubicCoefficients<T>) -> Vec<T> {
    assert!(c.a3 != T::zero(), "leading cubic coefficient must be non-zero");
    let three = lit::<T>(3.0);
    let two = lit::<T>(2.0);
    let b = c.a2 / c.a3;
    let cc = c.a1 / c.a3;
    let d = c.a0 / c.a3;
    // depressed cubic t³ + p t + q with s = t - b/3
    let shift = b / three;
    let p = cc - b * b / three;
    let q = two * b * b * b / lit(27.0) - b * cc / three + d;
    let half_q = q / two;
    let third_p = p / three;
    let delta = half_q * half_q + third_p * third_p * third_p;

    let mut roots: Vec<T> = if p == T::zero() {
        vec![(-q).cbrt()]
    } else if delta > T::zero() {
        // one real root; pick the non-cancelling branch
        let big = -half_q.signum() * (half_q.abs() + delta.sqrt()).cbrt();
        let small = if big == T::zero() { T::zero() } else { -third_p / big };
        vec![big + small]
    } else {
        let r = two * (-third_p).sqrt();
        let arg = (lit::<T>(1.5) * q / p * (-three / p).sqrt()).max(-T::one()).min(T::one());
        let phi = arg.acos() / three;
        let tau = lit::<T>(2.0 * std::f64::consts::PI / 3.0);
        (0..3).map(|k| r * (phi - tau * lit::<T>(k as f64)).cos()).collect()
    };
    for s in roots.iter_mut() {
        *s -= shift;
        for _ in 0..2 {
            let dp = c.derivative(*s);
            if dp == T::zero() {
                break;
            }
            let next = *s - c.eval(*s) / dp;
            if next.is_finite() && c.eval(next).abs() <= c.eval(*s).abs() {
                *s = next;
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    let tol = lit::<T>(1e-9);
    let mut out: Vec<T> = Vec::with_capacity(3);
    for s in roots {
        match out.last() {
            Some(&prev) if (s - prev).abs() <= tol * prev.abs().max(s.abs()).max(T::one()) => {}
            _ => out.push(s),
        }
    }
    out
}
