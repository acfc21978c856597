pub mod ode;
pub mod posterior;
pub mod tracking;

use crate::error::CliResult;
use crate::output::OutputDir;
use crate::overrides::Overrides;
use crate::{Experiment, ExperimentReport};

/// A fully parsed experiment, ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    PosteriorDemo(posterior::PosteriorSettings),
    Tracking(tracking::TrackingSettings),
    Logistic(ode::LogisticSettings),
    FitzhughNagumo(ode::FhnSettings),
    Convergence(ode::ConvergenceSettings),
}

pub fn plan(experiment: Experiment, ov: &mut Overrides) -> CliResult<Plan> {
    Ok(match experiment {
        Experiment::PosteriorDemo => Plan::PosteriorDemo(posterior::PosteriorSettings::from_overrides(ov)?),
        Experiment::Tracking => Plan::Tracking(tracking::TrackingSettings::from_overrides(ov)?),
        Experiment::Logistic => Plan::Logistic(ode::LogisticSettings::from_overrides(ov)?),
        Experiment::FitzhughNagumo => Plan::FitzhughNagumo(ode::FhnSettings::from_overrides(ov)?),
        Experiment::Convergence => Plan::Convergence(ode::ConvergenceSettings::from_overrides(ov)?),
    })
}

impl Plan {
    pub fn execute(&self, seed: u64, out: &mut OutputDir) -> CliResult<ExperimentReport> {
        match self {
            Plan::PosteriorDemo(s) => posterior::run(s, out),
            Plan::Tracking(s) => tracking::run(s, seed, out),
            Plan::Logistic(s) => ode::run_logistic(s, out),
            Plan::FitzhughNagumo(s) => ode::run_fhn(s, out),
            Plan::Convergence(s) => ode::run_convergence(s, out),
        }
    }
}
