use nalgebra::{DMatrix, DVector};

use super::ekf::update as ekf_update;
use super::{check_obs, predict_linearised, GaussianBelief, StateSpaceModel, StepDiagnostics};
use crate::autodiff::Dual2;
use crate::error::{Error, Result};
use crate::estimate::sigma_ml;
use crate::gp::{condition, DerivativeData, PriorMean, TaylorPosterior};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg::{cholesky_jitter, cholesky_solve_matrix, symmetrize};
use crate::optim::{minimize, BfgsOptions};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone)]
pub struct TaylorEkfConfig<T> {
    pub family: KernelFamily<T>,
    pub lambda: T,
    pub max_iter: usize,
    pub grad_tol: T,
}

impl<T: Real> Default for TaylorEkfConfig<T> {
    fn default() -> Self {
        TaylorEkfConfig {
            family: KernelFamily::Exponential,
            lambda: T::one(),
            max_iter: 200,
            grad_tol: lit(1e-8),
        }
    }
}

struct Component<T> {
    value: T,
    grad: DVector<T>,
    gamma: T,
    y: T,
    posterior: TaylorPosterior<T>,
}

/// Per-component first-order posterior of the observation map around `μ⁻`.
fn components<T: Real>(
    model: &StateSpaceModel<T>,
    j: usize,
    pred: &GaussianBelief<T>,
    y: &DVector<T>,
    cfg: &TaylorEkfConfig<T>,
) -> Result<(Vec<Component<T>>, Vec<usize>)> {
    let gamma = model.obs_noise_floored(j);
    for r in 0..gamma.nrows() {
        for c in 0..gamma.ncols() {
            if r != c && gamma[(r, c)] != T::zero() {
                return Err(Error::Unsupported(
                    "the Taylor filter needs a diagonal observation-noise covariance".into(),
                ));
            }
        }
    }
    let (fx, jac) = model.observe(j, &pred.mean)?;
    let d = pred.dim();
    let a: Vec<T> = pred.mean.iter().copied().collect();
    let mut out = Vec::with_capacity(fx.len());
    let mut degenerate = Vec::new();
    for l in 0..fx.len() {
        let grad: DVector<T> = jac.row(l).transpose();
        let data = DerivativeData::from_fn(a.clone(), 1, |alpha| match alpha.as_slice().iter().position(|&k| k == 1) {
            Some(i) => grad[i],
            None => fx[l],
        })?;
        let unit = KernelSpec::isotropic(cfg.family.clone(), T::one(), cfg.lambda, d)?;
        let sigma2 = match sigma_ml(&unit, &PriorMean::zero(), &data) {
            Ok(s) if s.is_finite() && s > T::zero() => s,
            _ => {
                degenerate.push(l);
                T::one()
            }
        };
        let posterior = condition(&unit.with_sigma2(sigma2)?, &PriorMean::zero(), &data)?;
        out.push(Component {
            value: fx[l],
            grad,
            gamma: gamma[(l, l)],
            y: y[l],
            posterior,
        });
    }
    Ok((out, degenerate))
}

/// `J(x) = ½ zᵀ Σ⁻⁻¹ z + Σ_ℓ ½ [ln(γ_ℓ + k_ℓ(x)) + r_ℓ(x)² / (γ_ℓ + k_ℓ(x))]`
/// with `z = x - μ⁻` and `r_ℓ(x) = y_ℓ - f_ℓ(μ⁻) - ∇f_ℓ(μ⁻)ᵀ z`.
fn objective<T: Real>(
    x: &[Dual2<T>],
    mu: &DVector<T>,
    prec: &DMatrix<T>,
    comps: &[Component<T>],
) -> Result<Dual2<T>> {
    let half = lit::<T>(0.5);
    let z: Vec<Dual2<T>> = x.iter().zip(mu.iter()).map(|(xi, &m)| xi - m).collect();
    let mut j = Dual2::constant(T::zero());
    for (r, zr) in z.iter().enumerate() {
        for (c, zc) in z.iter().enumerate() {
            j = j + zr * zc * (prec[(r, c)] * half);
        }
    }
    for comp in comps {
        let k = comp.posterior.var_dual(x)?;
        let var = k + comp.gamma;
        let lin = z
            .iter()
            .zip(comp.grad.iter())
            .fold(Dual2::constant(T::zero()), |acc, (zi, &g)| acc + zi * g);
        let resid = lin + (comp.value - comp.y);
        j = j + (var.ln() + resid.square() / var) * half;
    }
    if !j.is_finite() {
        return Err(Error::NonFinite("Taylor filter objective".into()));
    }
    Ok(j)
}

/// Taylor-kernel extended Kalman filter step. The update is the Laplace
/// approximation of the posterior under a Gaussian-process model of each
/// observation component around the predicted mean: the mode is found with
/// BFGS and the covariance is the inverse Hessian there. Falls back to the
/// EKF update (flagged in the diagnostics) if the mode search fails.
pub fn taylor_ekf_step<T: Real>(
    model: &StateSpaceModel<T>,
    j: usize,
    belief: &GaussianBelief<T>,
    y: &DVector<T>,
    cfg: &TaylorEkfConfig<T>,
) -> Result<(GaussianBelief<T>, StepDiagnostics)> {
    if j == 0 {
        return Err(Error::InvalidParameter("filter steps start at j = 1".into()));
    }
    check_obs(model, y)?;
    let pred = predict_linearised(model, j, belief)?;
    let (comps, degenerate) = components(model, j, &pred, y, cfg)?;
    let (lp, _) = cholesky_jitter(&pred.cov, lit(1e-12), 60)
        .map_err(|e| Error::IllConditioned(format!("predicted covariance: {e}")))?;
    let prec = symmetrize(&cholesky_solve_matrix(&lp, &DMatrix::identity(pred.dim(), pred.dim())));
    let d = pred.dim();
    let eval = |x: &DVector<T>| -> Result<(T, DVector<T>)> {
        let v = objective(&Dual2::variables(x.as_slice()), &pred.mean, &prec, &comps)?;
        Ok((v.value(), v.grad_vector(d)))
    };
    let opts = BfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        initial_inverse_hessian: Some(pred.cov.clone()),
    };
    let fallback = |iterations: usize| -> Result<(GaussianBelief<T>, StepDiagnostics)> {
        let b = ekf_update(model, j, &pred, y)?;
        Ok((
            b,
            StepDiagnostics {
                iterations,
                converged: false,
                hessian_jitter: 0.0,
                degenerate_components: degenerate.clone(),
            },
        ))
    };
    let res = match minimize(eval, pred.mean.clone(), &opts) {
        Ok(r) if r.converged => r,
        Ok(r) => return fallback(r.iterations),
        Err(_) => return fallback(0),
    };
    let h = objective(&Dual2::variables(res.x.as_slice()), &pred.mean, &prec, &comps)?.hessian_matrix(d);
    let h = symmetrize(&h);
    let (l, tau) = cholesky_jitter(&h, lit(1e-10), 60)?;
    let cov = cholesky_solve_matrix(&l, &DMatrix::identity(d, d));
    let belief = GaussianBelief::new(res.x, cov)?;
    Ok((
        belief,
        StepDiagnostics {
            iterations: res.iterations,
            converged: true,
            hessian_jitter: to_f64(tau),
            degenerate_components: degenerate,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::tracking::TrackingConfig;
    use crate::filters::simulate;
    use crate::linalg::spd_inverse;

    fn setup() -> (StateSpaceModel<f64>, GaussianBelief<f64>, Vec<DVector<f64>>) {
        let cfg = TrackingConfig::<f64>::default();
        let model = cfg.model().unwrap();
        let (_, ys) = simulate(&model, &cfg.initial_state(), 3, 7).unwrap();
        (model, cfg.initial_belief().unwrap(), ys)
    }

    #[test]
    fn mean_is_stationary_point_of_objective() {
        let (model, b0, ys) = setup();
        let cfg = TaylorEkfConfig::default();
        let (b1, diag) = taylor_ekf_step(&model, 1, &b0, &ys[0], &cfg).unwrap();
        assert!(diag.converged);
        let pred = predict_linearised(&model, 1, &b0).unwrap();
        let (comps, _) = components(&model, 1, &pred, &ys[0], &cfg).unwrap();
        let prec = spd_inverse(&pred.cov).unwrap();
        let obj = |x: &DVector<f64>| objective(&Dual2::variables(x.as_slice()), &pred.mean, &prec, &comps).unwrap();
        let at = obj(&b1.mean);
        assert!(at.grad_vector(4).amax() <= 1e-6 * (1.0 + at.value().abs()));
        // no nearby point does better
        for i in 0..4 {
            for s in [-1e-3, 1e-3] {
                let mut x = b1.mean.clone();
                x[i] += s;
                assert!(obj(&x).value() >= at.value() - 1e-12);
            }
        }
        // covariance is the inverse Hessian at the mode
        let h = at.hessian_matrix(4);
        let prod = &h * &b1.cov;
        assert!((prod - DMatrix::identity(4, 4)).amax() < 1e-8);
    }

    #[test]
    fn variance_vanishes_at_predicted_mean() {
        let (model, b0, ys) = setup();
        let cfg = TaylorEkfConfig::default();
        let pred = predict_linearised(&model, 1, &b0).unwrap();
        let (comps, degenerate) = components(&model, 1, &pred, &ys[0], &cfg).unwrap();
        assert!(degenerate.is_empty());
        let xs: Vec<Dual2<f64>> = pred.mean.iter().map(|&v| Dual2::constant(v)).collect();
        for c in &comps {
            assert!(c.posterior.var_dual(&xs).unwrap().value().abs() < 1e-14);
        }
    }

    #[test]
    fn zero_iteration_budget_falls_back_to_ekf() {
        let (model, b0, ys) = setup();
        let cfg = TaylorEkfConfig {
            max_iter: 0,
            ..TaylorEkfConfig::default()
        };
        let (b1, diag) = taylor_ekf_step(&model, 1, &b0, &ys[0], &cfg).unwrap();
        assert!(!diag.converged);
        let ekf = crate::filters::ekf_step(&model, 1, &b0, &ys[0]).unwrap();
        assert_eq!(b1, ekf);
    }
}
