//! Gaussian filters for `x_j = Φ_{j-1}(x_{j-1}) + η_{j-1}`, `y_j = f_j(x_j) + ξ_j`
//! with `η_j ~ N(0, Λ_j)` and `ξ_j ~ N(0, Γ_j)`.
//!
//! Step `j >= 1` predicts with `Φ_{j-1}`, `Λ_{j-1}` and conditions on `y_j`
//! through `f_j`, `Γ_j`.

mod ekf;
mod taylor_ekf;
pub mod tracking;
mod ukf;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use ekf::ekf_step;
pub use taylor_ekf::{taylor_ekf_step, TaylorEkfConfig};
pub use ukf::{ukf_step, UKF_ALPHA, UKF_BETA};

use crate::autodiff::{value_jacobian, Dual2};
use crate::error::{Error, Result};
use crate::io::format_real;
use crate::linalg::{psd_sqrt, symmetrize};
use crate::scalar::{lit, to_f64, Real};

/// Floor on observation-noise variances inside the filter updates.
pub const OBS_NOISE_FLOOR: f64 = 1e-12;

/// Per-step matrix, e.g. `Λ_j` or `Γ_j`.
pub type MatrixFn<T> = Arc<dyn Fn(usize) -> DMatrix<T> + Send + Sync>;
/// Per-step vector map written against [`Dual2`], e.g. `f_j`.
pub type StepFn<T> = Arc<dyn Fn(usize, &[Dual2<T>]) -> Vec<Dual2<T>> + Send + Sync>;

#[derive(Clone)]
pub enum Transition<T> {
    /// `Φ_j(x) = A_j x`.
    Linear(MatrixFn<T>),
    Nonlinear(StepFn<T>),
}

/// A state-space model with Gaussian noise.
#[derive(Clone)]
pub struct StateSpaceModel<T> {
    dim_state: usize,
    dim_obs: usize,
    transition: Transition<T>,
    process_noise: MatrixFn<T>,
    observation: StepFn<T>,
    obs_noise: MatrixFn<T>,
}

impl<T> fmt::Debug for StateSpaceModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateSpaceModel")
            .field("dim_state", &self.dim_state)
            .field("dim_obs", &self.dim_obs)
            .field(
                "transition",
                &match self.transition {
                    Transition::Linear(_) => "linear",
                    Transition::Nonlinear(_) => "nonlinear",
                },
            )
            .finish()
    }
}

/// Wraps a fixed matrix as a per-step function.
pub fn constant_matrix<T: Real>(m: DMatrix<T>) -> MatrixFn<T> {
    Arc::new(move |_| m.clone())
}

impl<T: Real> StateSpaceModel<T> {
    pub fn new(
        dim_state: usize,
        dim_obs: usize,
        transition: Transition<T>,
        process_noise: MatrixFn<T>,
        observation: StepFn<T>,
        obs_noise: MatrixFn<T>,
    ) -> Result<Self> {
        if dim_state == 0 || dim_obs == 0 {
            return Err(Error::InvalidParameter("state and observation dimensions must be positive".into()));
        }
        Ok(StateSpaceModel {
            dim_state,
            dim_obs,
            transition,
            process_noise,
            observation,
            obs_noise,
        })
    }

    /// Time-invariant model with linear dynamics `A`.
    pub fn linear_time_invariant(
        a: DMatrix<T>,
        process_noise: DMatrix<T>,
        dim_obs: usize,
        observation: StepFn<T>,
        obs_noise: DMatrix<T>,
    ) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || process_noise.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.ncols(),
            });
        }
        if obs_noise.shape() != (dim_obs, dim_obs) {
            return Err(Error::DimensionMismatch {
                expected: dim_obs,
                got: obs_noise.nrows(),
            });
        }
        Self::new(
            d,
            dim_obs,
            Transition::Linear(constant_matrix(a)),
            constant_matrix(process_noise),
            observation,
            constant_matrix(obs_noise),
        )
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_obs(&self) -> usize {
        self.dim_obs
    }

    pub fn transition(&self) -> &Transition<T> {
        &self.transition
    }

    pub fn process_noise(&self, j: usize) -> DMatrix<T> {
        (self.process_noise)(j)
    }

    pub fn obs_noise(&self, j: usize) -> DMatrix<T> {
        (self.obs_noise)(j)
    }

    /// `Γ_j` with its diagonal floored at [`OBS_NOISE_FLOOR`], as used by the
    /// filter updates so that exact observations stay well-posed.
    pub fn obs_noise_floored(&self, j: usize) -> DMatrix<T> {
        let mut g = self.obs_noise(j);
        for i in 0..g.nrows().min(g.ncols()) {
            g[(i, i)] = g[(i, i)].max(lit(OBS_NOISE_FLOOR));
        }
        g
    }

    pub fn observation_fn(&self) -> &StepFn<T> {
        &self.observation
    }

    /// `Φ_j(x)` and its Jacobian.
    pub fn propagate(&self, j: usize, x: &DVector<T>) -> Result<(DVector<T>, DMatrix<T>)> {
        match &self.transition {
            Transition::Linear(a) => {
                let a = a(j);
                Ok((&a * x, a))
            }
            Transition::Nonlinear(phi) => value_jacobian(|v| phi(j, v), x.as_slice()),
        }
    }

    /// `f_j(x)` and its Jacobian.
    pub fn observe(&self, j: usize, x: &DVector<T>) -> Result<(DVector<T>, DMatrix<T>)> {
        let (v, jac) = value_jacobian(|v| (self.observation)(j, v), x.as_slice())?;
        if v.len() != self.dim_obs {
            return Err(Error::DimensionMismatch {
                expected: self.dim_obs,
                got: v.len(),
            });
        }
        Ok((v, jac))
    }

    /// `f_j(x)` without derivatives.
    pub fn observe_value(&self, j: usize, x: &DVector<T>) -> Result<DVector<T>> {
        let args: Vec<Dual2<T>> = x.iter().map(|&v| Dual2::constant(v)).collect();
        let out: Vec<T> = (self.observation)(j, &args).iter().map(|v| v.value()).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observation function at step {j}")));
        }
        Ok(DVector::from_vec(out))
    }

    /// `Φ_j(x)` without derivatives.
    pub fn propagate_value(&self, j: usize, x: &DVector<T>) -> Result<DVector<T>> {
        match &self.transition {
            Transition::Linear(a) => Ok(a(j) * x),
            Transition::Nonlinear(phi) => {
                let args: Vec<Dual2<T>> = x.iter().map(|&v| Dual2::constant(v)).collect();
                let out: Vec<T> = phi(j, &args).iter().map(|v| v.value()).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("transition function at step {j}")));
                }
                Ok(DVector::from_vec(out))
            }
        }
    }
}

/// Gaussian belief `N(mean, cov)`; the covariance is kept symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief<T> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> GaussianBelief<T> {
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("belief mean or covariance".into()));
        }
        Ok(GaussianBelief {
            mean,
            cov: symmetrize(&cov),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Linear-Gaussian prediction through `(μ⁻, P)` with process noise `Λ`.
pub(crate) fn predict_linearised<T: Real>(
    model: &StateSpaceModel<T>,
    j: usize,
    belief: &GaussianBelief<T>,
) -> Result<GaussianBelief<T>> {
    check_belief(model, belief)?;
    let (mean, p) = model.propagate(j - 1, &belief.mean)?;
    let cov = &p * &belief.cov * p.transpose() + model.process_noise(j - 1);
    GaussianBelief::new(mean, cov)
}

pub(crate) fn check_belief<T: Real>(model: &StateSpaceModel<T>, belief: &GaussianBelief<T>) -> Result<()> {
    if belief.dim() != model.dim_state() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_state(),
            got: belief.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_obs<T: Real>(model: &StateSpaceModel<T>, y: &DVector<T>) -> Result<()> {
    if y.len() != model.dim_obs() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_obs(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Which filter [`run_filter`] applies.
#[derive(Debug, Clone)]
pub enum Filter<T> {
    Ekf,
    Ukf,
    TaylorEkf(TaylorEkfConfig<T>),
}

impl<T> Filter<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Filter::Ekf => "ekf",
            Filter::Ukf => "ukf",
            Filter::TaylorEkf(_) => "taylor_ekf",
        }
    }
}

/// Per-step optimiser diagnostics (trivial for the EKF and UKF).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: usize,
    /// False when the MAP search failed and the EKF update was used instead.
    pub converged: bool,
    /// Jitter `τ` added to make the Laplace precision positive definite.
    pub hessian_jitter: f64,
    /// Observation components whose `σ²` estimate was degenerate.
    pub degenerate_components: Vec<usize>,
}

impl StepDiagnostics {
    pub(crate) fn trivial() -> Self {
        StepDiagnostics {
            converged: true,
            ..Default::default()
        }
    }
}

/// Beliefs from a filter run. `beliefs[0]` is the initial belief and
/// `beliefs[j]` conditions on `y_1, ..., y_j`.
#[derive(Debug, Clone)]
pub struct FilterTrace<T> {
    pub filter: String,
    pub beliefs: Vec<GaussianBelief<T>>,
    pub predicted: Vec<GaussianBelief<T>>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl<T: Real> FilterTrace<T> {
    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// `sqrt(mean_j ‖μ_j[c] - x_j[c]‖²)` over steps `j >= 1` and the given components.
    pub fn rmse(&self, truth: &[DVector<T>], components: &[usize]) -> f64 {
        let n = self.beliefs.len().min(truth.len());
        if n <= 1 {
            return 0.0;
        }
        let sum: f64 = (1..n)
            .map(|j| {
                components
                    .iter()
                    .map(|&c| {
                        let e = to_f64(self.beliefs[j].mean[c] - truth[j][c]);
                        e * e
                    })
                    .sum::<f64>()
            })
            .sum();
        (sum / (n - 1) as f64).sqrt()
    }

    /// Largest covariance trace along the run.
    pub fn max_cov_trace(&self) -> f64 {
        self.beliefs
            .iter()
            .map(|b| to_f64(b.cov.trace()))
            .fold(0.0, f64::max)
    }

    /// Writes `t, true_state.., mean.., cov_diag.., filter_kind, converged`,
    /// one row per belief. `truth` supplies the true states, if known.
    pub fn write_csv<W: Write>(&self, truth: Option<&[DVector<T>]>, out: W) -> Result<()> {
        let d = self.beliefs.first().map(|b| b.dim()).unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("true_state_{i}")));
        header.extend((0..d).map(|i| format!("mean_{i}")));
        header.extend((0..d).map(|i| format!("cov_{i}{i}")));
        header.push("filter_kind".into());
        header.push("converged".into());
        w.write_record(&header).map_err(io_err)?;
        for (j, b) in self.beliefs.iter().enumerate() {
            let mut row = vec![j.to_string()];
            for i in 0..d {
                row.push(match truth.and_then(|t| t.get(j)) {
                    Some(x) => format_real(to_f64(x[i])),
                    None => String::new(),
                });
            }
            row.extend(b.mean.iter().map(|&v| format_real(to_f64(v))));
            row.extend((0..d).map(|i| format_real(to_f64(b.cov[(i, i)]))));
            row.push(self.filter.clone());
            let converged = j == 0 || self.diagnostics[j - 1].converged;
            row.push(converged.to_string());
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Runs `filter` over `observations` (`observations[j-1]` is `y_j`).
pub fn run_filter<T: Real>(
    model: &StateSpaceModel<T>,
    filter: &Filter<T>,
    observations: &[DVector<T>],
    initial: GaussianBelief<T>,
) -> Result<FilterTrace<T>> {
    check_belief(model, &initial)?;
    let mut beliefs = Vec::with_capacity(observations.len() + 1);
    let mut predicted = Vec::with_capacity(observations.len());
    let mut diagnostics = Vec::with_capacity(observations.len());
    beliefs.push(initial);
    for (k, y) in observations.iter().enumerate() {
        let j = k + 1;
        let prev = beliefs.last().expect("initial belief present");
        let pred = predict_linearised(model, j, prev).map_err(|e| e.at_step(j))?;
        let (next, diag) = match filter {
            Filter::Ekf => (ekf_step(model, j, prev, y), StepDiagnostics::trivial()),
            Filter::Ukf => (ukf_step(model, j, prev, y), StepDiagnostics::trivial()),
            Filter::TaylorEkf(cfg) => match taylor_ekf_step(model, j, prev, y, cfg) {
                Ok((b, d)) => (Ok(b), d),
                Err(e) => (Err(e), StepDiagnostics::default()),
            },
        };
        beliefs.push(next.map_err(|e| e.at_step(j))?);
        predicted.push(pred);
        diagnostics.push(diag);
    }
    Ok(FilterTrace {
        filter: filter.name().to_string(),
        beliefs,
        predicted,
        diagnostics,
    })
}

fn gaussian_vector<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    DVector::from_iterator(
        n,
        (0..n).map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            lit::<T>(z)
        }),
    )
}

/// States `x_0, ..., x_n` and observations `y_1, ..., y_n`.
pub type Simulation<T> = (Vec<DVector<T>>, Vec<DVector<T>>);

/// Simulates `steps` transitions from `x0`. Returns the states
/// `x_0, ..., x_steps` and the observations `y_1, ..., y_steps`.
///
/// Randomness: ChaCha8 seeded with `seed`; each step draws `d` standard
/// normals for the process noise, then `q` for the observation noise.
pub fn simulate<T: Real>(
    model: &StateSpaceModel<T>,
    x0: &DVector<T>,
    steps: usize,
    seed: u64,
) -> Result<Simulation<T>> {
    if x0.len() != model.dim_state() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_state(),
            got: x0.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(steps + 1);
    let mut obs = Vec::with_capacity(steps);
    states.push(x0.clone());
    for j in 1..=steps {
        let prev = states.last().expect("initial state present");
        let lp = psd_sqrt(&model.process_noise(j - 1)).map_err(|e| e.at_step(j))?;
        let lo = psd_sqrt(&model.obs_noise(j)).map_err(|e| e.at_step(j))?;
        let eta = gaussian_vector::<T>(&mut rng, model.dim_state());
        let xi = gaussian_vector::<T>(&mut rng, model.dim_obs());
        let x = model.propagate_value(j - 1, prev).map_err(|e| e.at_step(j))? + lp * eta;
        let y = model.observe_value(j, &x).map_err(|e| e.at_step(j))? + lo * xi;
        states.push(x);
        obs.push(y);
    }
    Ok((states, obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spd_inverse;
    use approx::assert_relative_eq;

    fn linear_model(gamma: f64) -> StateSpaceModel<f64> {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let lam = DMatrix::from_row_slice(2, 2, &[0.02, 0.01, 0.01, 0.05]);
        let h = [[1.0, 0.0], [0.3, -0.7]];
        let obs: StepFn<f64> = Arc::new(move |_, x| h.iter().map(|r| &x[0] * r[0] + &x[1] * r[1]).collect());
        StateSpaceModel::linear_time_invariant(a, lam, 2, obs, DMatrix::identity(2, 2) * gamma).unwrap()
    }

    /// Textbook Kalman filter, written independently of the library steps.
    fn kalman(model_gamma: f64, ys: &[DVector<f64>], init: &GaussianBelief<f64>) -> Vec<GaussianBelief<f64>> {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let lam = DMatrix::from_row_slice(2, 2, &[0.02, 0.01, 0.01, 0.05]);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, -0.7]);
        let r = DMatrix::<f64>::identity(2, 2) * model_gamma;
        let mut out = vec![init.clone()];
        let (mut m, mut p) = (init.mean.clone(), init.cov.clone());
        for y in ys {
            m = &a * &m;
            p = &a * &p * a.transpose() + &lam;
            let s = &h * &p * h.transpose() + &r;
            let k = &p * h.transpose() * s.clone().try_inverse().unwrap();
            m = &m + &k * (y - &h * &m);
            p = &p - &k * &s * k.transpose();
            out.push(GaussianBelief::new(m.clone(), p.clone()).unwrap());
        }
        out
    }

    fn init() -> GaussianBelief<f64> {
        GaussianBelief::new(DVector::from_vec(vec![0.1, -0.2]), DMatrix::identity(2, 2) * 0.5).unwrap()
    }

    #[test]
    fn ekf_and_ukf_equal_kalman_on_linear_model() {
        let model = linear_model(0.1);
        let (_, ys) = simulate(&model, &DVector::from_vec(vec![0.0, 1.0]), 20, 3).unwrap();
        let want = kalman(0.1, &ys, &init());
        let ekf = run_filter(&model, &Filter::Ekf, &ys, init()).unwrap();
        let ukf = run_filter(&model, &Filter::Ukf, &ys, init()).unwrap();
        for j in 0..want.len() {
            assert_relative_eq!(ekf.beliefs[j].mean, want[j].mean, epsilon = 1e-10);
            assert_relative_eq!(ekf.beliefs[j].cov, want[j].cov, epsilon = 1e-10);
            assert_relative_eq!(ukf.beliefs[j].mean, want[j].mean, epsilon = 1e-8);
            assert_relative_eq!(ukf.beliefs[j].cov, want[j].cov, epsilon = 1e-8);
        }
    }

    #[test]
    fn huge_observation_noise_keeps_prediction() {
        let model = linear_model(1e12);
        let ys = vec![DVector::from_vec(vec![3.0, -4.0])];
        let ekf = run_filter(&model, &Filter::Ekf, &ys, init()).unwrap();
        let shift = (&ekf.beliefs[1].mean - &ekf.predicted[0].mean).amax();
        assert!(shift < 1e-4);
    }

    #[test]
    fn empty_sequence_keeps_initial_belief() {
        let model = linear_model(0.1);
        let trace = run_filter(&model, &Filter::Ekf, &[], init()).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.beliefs[0], init());
    }

    #[test]
    fn noise_free_simulation_is_deterministic_trajectory() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let obs: StepFn<f64> = Arc::new(|_, x| vec![x[0].clone()]);
        let model =
            StateSpaceModel::linear_time_invariant(a.clone(), DMatrix::zeros(2, 2), 1, obs, DMatrix::zeros(1, 1))
                .unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.5]);
        let (xs, ys) = simulate(&model, &x0, 5, 11).unwrap();
        let mut x = x0;
        for j in 1..=5 {
            x = &a * &x;
            assert_eq!(xs[j], x);
            assert_eq!(ys[j - 1][0], x[0]);
        }
        let again = simulate(&model, &xs[0], 5, 11).unwrap();
        assert_eq!(again.0, xs);
    }

    #[test]
    fn covariances_stay_symmetric_psd() {
        let model = linear_model(0.1);
        let (_, ys) = simulate(&model, &DVector::from_vec(vec![0.0, 1.0]), 30, 5).unwrap();
        for f in [Filter::Ekf, Filter::Ukf, Filter::TaylorEkf(TaylorEkfConfig::default())] {
            let trace = run_filter(&model, &f, &ys, init()).unwrap();
            for b in &trace.beliefs {
                assert_eq!(b.cov, b.cov.transpose());
                let tr = b.cov.trace();
                assert!(crate::linalg::min_eigenvalue(&b.cov) >= -1e-8 * tr);
                assert!(spd_inverse(&b.cov).is_ok());
            }
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let model = linear_model(0.1);
        let (xs, ys) = simulate(&model, &DVector::from_vec(vec![0.0, 1.0]), 3, 5).unwrap();
        let trace = run_filter(&model, &Filter::Ekf, &ys, init()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(Some(&xs), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,true_state_0,true_state_1,mean_0,mean_1,cov_00,cov_11,filter_kind,converged"
        );
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(",ekf,true"));
    }
}
