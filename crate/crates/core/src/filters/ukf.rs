use nalgebra::{DMatrix, DVector};

use super::{check_belief, check_obs, GaussianBelief, StateSpaceModel, Transition};
use crate::error::{Error, Result};
use super::ekf::INNOVATION_JITTER;
use crate::linalg::{cholesky_jitter, cholesky_solve_matrix};
use crate::scalar::{from_usize, lit, Real};

pub const UKF_ALPHA: f64 = 1.0;
pub const UKF_BETA: f64 = 0.0;

struct SigmaPoints<T> {
    points: Vec<DVector<T>>,
    wm: Vec<T>,
    wc: Vec<T>,
}

/// Sigma points with `α = 1`, `β = 0`, `κ = 3 - d`.
fn sigma_points<T: Real>(b: &GaussianBelief<T>) -> Result<SigmaPoints<T>> {
    let d = b.dim();
    let df: T = from_usize(d);
    let kappa = lit::<T>(3.0) - df;
    let alpha = lit::<T>(UKF_ALPHA);
    let lam = alpha * alpha * (df + kappa) - df;
    let scale = df + lam;
    let (l, _) = cholesky_jitter(&(&b.cov * scale), lit(1e-12), 60)?;
    let mut points = Vec::with_capacity(2 * d + 1);
    points.push(b.mean.clone());
    for i in 0..d {
        points.push(&b.mean + l.column(i));
    }
    for i in 0..d {
        points.push(&b.mean - l.column(i));
    }
    let w = T::one() / (lit::<T>(2.0) * scale);
    let mut wm = vec![w; 2 * d + 1];
    let mut wc = wm.clone();
    wm[0] = lam / scale;
    wc[0] = lam / scale + (T::one() - alpha * alpha + lit(UKF_BETA));
    Ok(SigmaPoints { points, wm, wc })
}

fn weighted_mean<T: Real>(vals: &[DVector<T>], w: &[T]) -> DVector<T> {
    let mut m = DVector::zeros(vals[0].len());
    for (v, &wi) in vals.iter().zip(w) {
        m += v * wi;
    }
    m
}

fn weighted_cross<T: Real>(a: &[DVector<T>], ma: &DVector<T>, b: &[DVector<T>], mb: &DVector<T>, w: &[T]) -> DMatrix<T> {
    let mut c = DMatrix::zeros(ma.len(), mb.len());
    for ((ai, bi), &wi) in a.iter().zip(b).zip(w) {
        c += (ai - ma) * (bi - mb).transpose() * wi;
    }
    c
}

/// Unscented Kalman filter step. Linear transitions are propagated exactly;
/// nonlinear ones through sigma points.
pub fn ukf_step<T: Real>(
    model: &StateSpaceModel<T>,
    j: usize,
    belief: &GaussianBelief<T>,
    y: &DVector<T>,
) -> Result<GaussianBelief<T>> {
    if j == 0 {
        return Err(Error::InvalidParameter("filter steps start at j = 1".into()));
    }
    check_belief(model, belief)?;
    check_obs(model, y)?;
    let lam = model.process_noise(j - 1);
    let pred = match model.transition() {
        Transition::Linear(a) => {
            let a = a(j - 1);
            GaussianBelief::new(&a * &belief.mean, &a * &belief.cov * a.transpose() + lam)?
        }
        Transition::Nonlinear(_) => {
            let sp = sigma_points(belief)?;
            let moved = sp
                .points
                .iter()
                .map(|p| model.propagate_value(j - 1, p))
                .collect::<Result<Vec<_>>>()?;
            let m = weighted_mean(&moved, &sp.wm);
            let c = weighted_cross(&moved, &m, &moved, &m, &sp.wc) + lam;
            GaussianBelief::new(m, c)?
        }
    };
    let sp = sigma_points(&pred)?;
    let ys = sp
        .points
        .iter()
        .map(|p| model.observe_value(j, p))
        .collect::<Result<Vec<_>>>()?;
    let ybar = weighted_mean(&ys, &sp.wm);
    let s = weighted_cross(&ys, &ybar, &ys, &ybar, &sp.wc) + model.obs_noise_floored(j);
    let c = weighted_cross(&sp.points, &pred.mean, &ys, &ybar, &sp.wc);
    let (ls, _) = cholesky_jitter(&s, lit(INNOVATION_JITTER), 60)
        .map_err(|e| Error::IllConditioned(format!("innovation covariance: {e}")))?;
    let k = cholesky_solve_matrix(&ls, &c.transpose()).transpose();
    let mean = &pred.mean + &k * (y - ybar);
    let cov = &pred.cov - &k * &s * k.transpose();
    GaussianBelief::new(mean, cov)
}
