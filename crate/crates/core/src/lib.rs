//! Gaussian-process regression with Taylor kernels conditioned on derivative
//! data at a single point (the probabilistic Taylor expansion), with two
//! downstream algorithms: a Taylor extended Kalman filter and a
//! probabilistic Euler method for ODEs.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cubic;
pub mod error;
pub mod estimate;
pub mod filters;
pub mod gp;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod multiindex;
pub mod odesolve;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use multiindex::MultiIndex;
pub use scalar::Real;

pub type KernelSpec64 = kernels::KernelSpec<f64>;
pub type KernelSpec32 = kernels::KernelSpec<f32>;
pub type DerivativeData64 = gp::DerivativeData<f64>;
pub type PriorMean64 = gp::PriorMean<f64>;
pub type TaylorPosterior64 = gp::TaylorPosterior<f64>;
pub type Dual64 = autodiff::Dual2<f64>;
pub type Dual32 = autodiff::Dual2<f32>;
pub type GaussianBelief64 = filters::GaussianBelief<f64>;
pub type StateSpaceModel64 = filters::StateSpaceModel<f64>;
pub type OdeProblem64 = odesolve::OdeProblem<f64>;
pub type EulerState64 = odesolve::EulerState<f64>;
