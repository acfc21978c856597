//! Constant-velocity target in the plane observed through bearings from
//! fixed sensors. State `(p1, p2, v1, v2)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{GaussianBelief, StateSpaceModel, StepFn};
use crate::autodiff::Dual2;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingConfig<T> {
    pub dt: T,
    /// Spectral densities of the white-noise accelerations per axis.
    pub q: [T; 2],
    /// Observation-noise variance of every bearing.
    pub obs_var: T,
    pub sensors: Vec<[T; 2]>,
    pub x0: [T; 4],
    pub init_var: T,
    pub steps: usize,
}

impl<T: Real> Default for TrackingConfig<T> {
    fn default() -> Self {
        TrackingConfig {
            dt: T::one(),
            q: [lit(0.1), lit(0.1)],
            obs_var: lit(0.05 * 0.05),
            sensors: vec![[T::zero(), lit(5.0)], [T::zero(), lit(-5.0)]],
            x0: [T::zero(), T::zero(), lit(0.1), lit(0.1)],
            init_var: lit(0.1),
            steps: 50,
        }
    }
}

impl<T: Real> TrackingConfig<T> {
    pub fn transition_matrix(&self) -> DMatrix<T> {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = self.dt;
        a[(1, 3)] = self.dt;
        a
    }

    /// Discretised white-noise-acceleration covariance.
    pub fn process_noise(&self) -> DMatrix<T> {
        let dt = self.dt;
        let mut m = DMatrix::zeros(4, 4);
        for (i, &q) in self.q.iter().enumerate() {
            m[(i, i)] = q * dt * dt * dt / lit(3.0);
            m[(i + 2, i + 2)] = q * dt;
            m[(i, i + 2)] = q * dt * dt / lit(2.0);
            m[(i + 2, i)] = m[(i, i + 2)];
        }
        m
    }

    pub fn initial_state(&self) -> DVector<T> {
        DVector::from_row_slice(&self.x0)
    }

    /// `N(x0, init_var · I)`.
    pub fn initial_belief(&self) -> Result<GaussianBelief<T>> {
        GaussianBelief::new(self.initial_state(), DMatrix::identity(4, 4) * self.init_var)
    }

    pub fn model(&self) -> Result<StateSpaceModel<T>> {
        if !(self.dt > T::zero()) || self.q.iter().any(|q| *q < T::zero()) || self.obs_var < T::zero() {
            return Err(Error::InvalidParameter(
                "tracking needs dt > 0 and non-negative noise levels".into(),
            ));
        }
        if self.sensors.is_empty() {
            return Err(Error::InvalidParameter("tracking needs at least one sensor".into()));
        }
        let sensors = self.sensors.clone();
        let obs: StepFn<T> = Arc::new(move |_, x: &[Dual2<T>]| {
            sensors
                .iter()
                .map(|s| ((&x[1] - s[1]) / (&x[0] - s[0])).atan())
                .collect()
        });
        let q = self.sensors.len();
        StateSpaceModel::linear_time_invariant(
            self.transition_matrix(),
            self.process_noise(),
            q,
            obs,
            DMatrix::identity(q, q) * self.obs_var,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn process_noise_matches_integrated_form() {
        let cfg = TrackingConfig::<f64>::default();
        let m = cfg.process_noise();
        // ∫_0^dt F(s) q Fᵀ(s) ds with F(s) = [s, 1]ᵀ
        let q = 0.1;
        assert!((m[(0, 0)] - q / 3.0).abs() < 1e-15);
        assert!((m[(0, 2)] - q / 2.0).abs() < 1e-15);
        assert!((m[(2, 2)] - q).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn bearings_match_plain_atan() {
        let model = TrackingConfig::<f64>::default().model().unwrap();
        let x = DVector::from_vec(vec![1.5, 0.7, 0.0, 0.0]);
        let y = model.observe_value(1, &x).unwrap();
        assert!((y[0] - ((0.7f64 - 5.0) / 1.5).atan()).abs() < 1e-15);
        assert!((y[1] - ((0.7f64 + 5.0) / 1.5).atan()).abs() < 1e-15);
    }
}
