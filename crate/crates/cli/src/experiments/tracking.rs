//! Bearings-only tracking with EKF, UKF and the Taylor EKF.

use nalgebra::DVector;
use probtaylor::filters::tracking::TrackingConfig;
use probtaylor::filters::{run_filter, simulate, Filter, FilterTrace, TaylorEkfConfig};
use probtaylor::kernels::KernelFamily;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::output::{OutputDir, Table};
use crate::overrides::Overrides;
use crate::ExperimentReport;

/// Covariance traces at or above this count as a blow-up.
pub const BLOWUP_TRACE: f64 = 1e6;

pub const POSITION: [usize; 2] = [0, 1];

#[derive(Debug, Clone)]
pub struct TrackingSettings {
    pub system: TrackingConfig<f64>,
    pub kernel: String,
    pub lambda: f64,
    pub max_iter: usize,
    /// Number of consecutive seeds, starting at the run seed.
    pub seeds: u64,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        TrackingSettings {
            system: TrackingConfig::default(),
            kernel: "exponential".into(),
            lambda: 1.0,
            max_iter: TaylorEkfConfig::<f64>::default().max_iter,
            seeds: 1,
        }
    }
}

impl TrackingSettings {
    pub fn from_overrides(ov: &mut Overrides) -> CliResult<Self> {
        let d = TrackingSettings::default();
        let mut system = d.system.clone();
        system.steps = ov.get("steps", system.steps)?;
        system.dt = ov.get_positive("dt", system.dt)?;
        system.q = [
            ov.get_nonnegative("q1", system.q[0])?,
            ov.get_nonnegative("q2", system.q[1])?,
        ];
        system.obs_var = ov.get_nonnegative("obs_var", system.obs_var)?;
        system.init_var = ov.get_positive("init_var", system.init_var)?;
        let s = TrackingSettings {
            system,
            kernel: ov.get("kernel", d.kernel)?,
            lambda: ov.get_positive("lambda", d.lambda)?,
            max_iter: ov.get("max_iter", d.max_iter)?,
            seeds: ov.get("seeds", d.seeds)?,
        };
        if s.seeds == 0 {
            return Err(CliError::Validation("seeds must be at least 1".into()));
        }
        if s.system.steps == 0 {
            return Err(CliError::Validation("steps must be at least 1".into()));
        }
        s.filters()?;
        s.system.model().map_err(|e| CliError::from_core("tracking model", e))?;
        Ok(s)
    }

    pub fn filters(&self) -> CliResult<Vec<Filter<f64>>> {
        let family = KernelFamily::from_name(&self.kernel).map_err(|e| CliError::from_core("kernel", e))?;
        Ok(vec![
            Filter::Ekf,
            Filter::Ukf,
            Filter::TaylorEkf(TaylorEkfConfig {
                family,
                lambda: self.lambda,
                max_iter: self.max_iter,
                ..TaylorEkfConfig::default()
            }),
        ])
    }
}

/// One simulated trajectory and the filters run on it.
#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub seed: u64,
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    pub traces: Vec<FilterTrace<f64>>,
}

impl TrackingRun {
    pub fn trace(&self, name: &str) -> Option<&FilterTrace<f64>> {
        self.traces.iter().find(|t| t.filter == name)
    }

    pub fn position_rmse(&self, name: &str) -> Option<f64> {
        self.trace(name).map(|t| t.rmse(&self.states, &POSITION))
    }
}

pub fn run_seed(s: &TrackingSettings, seed: u64) -> CliResult<TrackingRun> {
    let ctx = |what: &str| format!("seed {seed}: {what}");
    let model = s.system.model().map_err(|e| CliError::from_core(ctx("model"), e))?;
    let (states, observations) = simulate(&model, &s.system.initial_state(), s.system.steps, seed)
        .map_err(|e| CliError::from_core(ctx("simulation"), e))?;
    let init = s.system.initial_belief().map_err(|e| CliError::from_core(ctx("initial belief"), e))?;
    let traces = s
        .filters()?
        .iter()
        .map(|f| run_filter(&model, f, &observations, init.clone()).map_err(|e| CliError::from_core(ctx(f.name()), e)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(TrackingRun {
        seed,
        states,
        observations,
        traces,
    })
}

/// Runs `seeds` consecutive seeds from `first` in parallel; results are in seed order.
pub fn run_seeds(s: &TrackingSettings, first: u64, seeds: u64) -> CliResult<Vec<TrackingRun>> {
    let list: Vec<u64> = (0..seeds).map(|i| first.wrapping_add(i)).collect();
    list.par_iter().map(|&seed| run_seed(s, seed)).collect()
}

fn rmse_table(run: &TrackingRun) -> Table {
    let mut t = Table::new([
        "filter",
        "rmse_p1",
        "rmse_p2",
        "rmse_v1",
        "rmse_v2",
        "rmse_position",
        "max_cov_trace",
        "converged_steps",
    ]);
    for tr in &run.traces {
        let mut row = vec![tr.filter.as_str().into()];
        row.extend((0..4).map(|c| tr.rmse(&run.states, &[c]).into()));
        row.push(tr.rmse(&run.states, &POSITION).into());
        row.push(tr.max_cov_trace().into());
        row.push(tr.diagnostics.iter().filter(|d| d.converged).count().into());
        t.push(row);
    }
    t
}

fn write_run(run: &TrackingRun, prefix: &str, out: &mut OutputDir) -> CliResult<()> {
    for tr in &run.traces {
        let mut bytes = Vec::new();
        tr.write_csv(Some(&run.states), &mut bytes)
            .map_err(|e| CliError::from_core(format!("writing {} trace", tr.filter), e))?;
        out.write(format!("{prefix}trace_{}.csv", tr.filter), &bytes)?;
    }
    out.write_table(format!("{prefix}rmse.csv"), &rmse_table(run))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per filter: `(name, median position RMSE, blow-up count)`.
pub fn aggregate(runs: &[TrackingRun]) -> Vec<(String, f64, usize)> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .traces
        .iter()
        .map(|t| {
            let name = t.filter.clone();
            let rmse: Vec<f64> = runs.iter().filter_map(|r| r.position_rmse(&name)).collect();
            let blowups = runs
                .iter()
                .filter_map(|r| r.trace(&name))
                .filter(|t| !(t.max_cov_trace() < BLOWUP_TRACE))
                .count();
            (name, median(&rmse), blowups)
        })
        .collect()
}

pub fn run(s: &TrackingSettings, seed: u64, out: &mut OutputDir) -> CliResult<ExperimentReport> {
    let runs = run_seeds(s, seed, s.seeds)?;
    let mut summary = Vec::new();
    if let [single] = runs.as_slice() {
        write_run(single, "", out)?;
        for tr in &single.traces {
            summary.push(format!(
                "{}: position RMSE {:.4}, max trace {:.3e}",
                tr.filter,
                tr.rmse(&single.states, &POSITION),
                tr.max_cov_trace()
            ));
        }
        return Ok(ExperimentReport { summary, failure: None });
    }
    let mut by_seed = Table::new(["seed", "filter", "rmse_position", "max_cov_trace", "blowup"]);
    for r in &runs {
        write_run(r, &format!("seeds/seed_{}/", r.seed), out)?;
        for tr in &r.traces {
            let trace = tr.max_cov_trace();
            by_seed.push(vec![
                r.seed.into(),
                tr.filter.as_str().into(),
                tr.rmse(&r.states, &POSITION).into(),
                trace.into(),
                (!(trace < BLOWUP_TRACE)).into(),
            ]);
        }
    }
    out.write_table("rmse_by_seed.csv", &by_seed)?;
    let mut agg = Table::new(["filter", "seeds", "median_rmse_position", "blowups"]);
    for (name, med, blowups) in aggregate(&runs) {
        summary.push(format!("{name}: median position RMSE {med:.4}, blow-ups {blowups}/{}", runs.len()));
        agg.push(vec![name.into(), runs.len().into(), med.into(), blowups.into()]);
    }
    out.write_table("rmse_aggregate.csv", &agg)?;
    Ok(ExperimentReport { summary, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn zero_seeds_is_rejected() {
        let map = Overrides::parse(&["seeds=0"]).unwrap();
        assert!(TrackingSettings::from_overrides(&mut Overrides::new(map)).is_err());
    }
}
