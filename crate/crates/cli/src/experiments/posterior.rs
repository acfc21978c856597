//! Posterior of `f(x) = sin(ωx)` given its first `n` derivatives at `a`.

use probtaylor::gp::{condition, DerivativeData, PriorMean, TaylorPosterior};
use probtaylor::kernels::{KernelFamily, KernelSpec};

use crate::error::{CliError, CliResult};
use crate::output::{OutputDir, Table};
use crate::overrides::Overrides;
use crate::ExperimentReport;

/// Half-width multiplier of the 95% credible band.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone)]
pub struct PosteriorSettings {
    pub kernel: String,
    pub sigma2: f64,
    pub lambda: f64,
    pub a: f64,
    pub omega: f64,
    pub max_order: usize,
    pub points: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for PosteriorSettings {
    fn default() -> Self {
        PosteriorSettings {
            kernel: "exponential".into(),
            sigma2: 1.0,
            lambda: 1.0,
            a: 0.5,
            omega: 3.0,
            max_order: 3,
            points: 400,
            x_min: -1.5,
            x_max: 2.5,
        }
    }
}

impl PosteriorSettings {
    pub fn from_overrides(ov: &mut Overrides) -> CliResult<Self> {
        let d = PosteriorSettings::default();
        let s = PosteriorSettings {
            kernel: ov.get("kernel", d.kernel)?,
            sigma2: ov.get_positive("sigma2", d.sigma2)?,
            lambda: ov.get_positive("lambda", d.lambda)?,
            a: ov.get_f64("a", d.a)?,
            omega: ov.get_f64("omega", d.omega)?,
            max_order: ov.get("max_order", d.max_order)?,
            points: ov.get("points", d.points)?,
            x_min: ov.get_f64("x_min", d.x_min)?,
            x_max: ov.get_f64("x_max", d.x_max)?,
        };
        if s.points < 2 {
            return Err(CliError::Validation("points must be at least 2".into()));
        }
        if !(s.x_max > s.x_min) {
            return Err(CliError::Validation("x_max must exceed x_min".into()));
        }
        s.spec()?;
        Ok(s)
    }

    pub fn spec(&self) -> CliResult<KernelSpec<f64>> {
        let family = KernelFamily::from_name(&self.kernel).map_err(|e| CliError::from_core("kernel", e))?;
        KernelSpec::isotropic(family, self.sigma2, self.lambda, 1).map_err(|e| CliError::from_core("kernel", e))
    }

    /// `f^{(k)}(a) = ω^k sin(ωa + kπ/2)`.
    pub fn derivative(&self, k: usize) -> f64 {
        self.omega.powi(k as i32) * (self.omega * self.a + k as f64 * std::f64::consts::FRAC_PI_2).sin()
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.x_max - self.x_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.x_min + step * i as f64).collect()
    }

    pub fn posterior(&self, n: usize) -> CliResult<TaylorPosterior<f64>> {
        let ctx = format!("posterior of order {n}");
        let data = DerivativeData::from_fn(vec![self.a], n, |alpha| self.derivative(alpha.order()))
            .map_err(|e| CliError::from_core(&ctx, e))?;
        condition(&self.spec()?, &PriorMean::zero(), &data).map_err(|e| CliError::from_core(&ctx, e))
    }
}

/// `(mean, lower95, upper95)` at `x`.
pub fn band(post: &TaylorPosterior<f64>, x: f64) -> probtaylor::Result<(f64, f64, f64)> {
    let m = post.mean(&[x])?;
    let half = Z95 * post.var(&[x])?.max(0.0).sqrt();
    Ok((m, m - half, m + half))
}

pub fn run(s: &PosteriorSettings, out: &mut OutputDir) -> CliResult<ExperimentReport> {
    let grid = s.grid();
    let mut summary = Vec::new();
    for n in 0..=s.max_order {
        let post = s.posterior(n)?;
        let mut t = Table::new(["x", "mean", "lower95", "upper95"]);
        let mut widest = 0.0f64;
        for &x in &grid {
            let (m, lo, hi) = band(&post, x).map_err(|e| CliError::from_core(format!("order {n} at x = {x}"), e))?;
            widest = widest.max(hi - lo);
            t.push(vec![x.into(), m.into(), lo.into(), hi.into()]);
        }
        out.write_table(format!("posterior_n{n}.csv"), &t)?;
        summary.push(format!("n = {n}: widest 95% band {widest:.4}"));
    }
    Ok(ExperimentReport { summary, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_point_is_exact() {
        let s = PosteriorSettings::default();
        for n in 0..=3 {
            let (m, lo, hi) = band(&s.posterior(n).unwrap(), 0.5).unwrap();
            assert!((m - 1.5f64.sin()).abs() < 1e-14);
            assert!(hi - lo < 1e-6);
        }
    }

    #[test]
    fn first_order_mean_is_tangent_line() {
        let s = PosteriorSettings::default();
        let (m, _, _) = band(&s.posterior(1).unwrap(), 1.0).unwrap();
        let expect = 1.5f64.sin() + 3.0 * 1.5f64.cos() * 0.5;
        assert!((m - expect).abs() < 1e-12);
    }

    #[test]
    fn band_widens_away_from_expansion_point() {
        let s = PosteriorSettings::default();
        for n in 0..=3 {
            let post = s.posterior(n).unwrap();
            for side in [-1.0, 1.0] {
                let mut last = 0.0;
                for i in 0..=40 {
                    let (_, lo, hi) = band(&post, 0.5 + side * 0.05 * i as f64).unwrap();
                    assert!(hi - lo >= last - 1e-12);
                    last = hi - lo;
                }
            }
        }
    }
}
