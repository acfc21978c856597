//! Classical and probabilistic Euler on the logistic and FitzHugh-Nagumo equations.

use nalgebra::DVector;
use probtaylor::kernels::{KernelFamily, KernelSpec};
use probtaylor::odesolve::{
    convergence_study, solve, write_trajectory_csv, ConvergenceStudy, EulerState, Mode, OdeProblem, SolverConfig,
    DEFAULT_SIGMA_MIN,
};

use crate::error::{CliError, CliResult};
use crate::output::{OutputDir, Table};
use crate::overrides::Overrides;
use crate::ExperimentReport;

/// Kernel and floor shared by every probabilistic solve.
#[derive(Debug, Clone)]
pub struct EulerSettings {
    pub kernel: String,
    pub lambda: f64,
    pub sigma_min: f64,
}

impl Default for EulerSettings {
    fn default() -> Self {
        EulerSettings {
            kernel: "exponential".into(),
            lambda: 1.0,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }
}

impl EulerSettings {
    fn from_overrides(ov: &mut Overrides) -> CliResult<Self> {
        let d = EulerSettings::default();
        let s = EulerSettings {
            kernel: ov.get("kernel", d.kernel)?,
            lambda: ov.get_positive("lambda", d.lambda)?,
            sigma_min: ov.get_positive("sigma_min", d.sigma_min)?,
        };
        s.config(1, Mode::Probabilistic)?;
        Ok(s)
    }

    pub fn config(&self, steps: usize, mode: Mode) -> CliResult<SolverConfig<f64>> {
        let family = KernelFamily::from_name(&self.kernel).map_err(|e| CliError::from_core("kernel", e))?;
        let cfg = SolverConfig {
            steps,
            kernel: KernelSpec::isotropic(family, 1.0, self.lambda, 1).map_err(|e| CliError::from_core("kernel", e))?,
            sigma_min: self.sigma_min,
            mode,
        };
        cfg.validate().map_err(|e| CliError::from_core("solver", e))?;
        Ok(cfg)
    }
}

fn check_steps(key: &str, steps: &[usize], min_len: usize) -> CliResult<()> {
    if steps.len() < min_len {
        return Err(CliError::Validation(format!("{key} needs at least {min_len} entries")));
    }
    if steps.contains(&0) {
        return Err(CliError::Validation(format!("{key} entries must be positive")));
    }
    Ok(())
}

fn solve_with(problem: &OdeProblem<f64>, cfg: &SolverConfig<f64>) -> CliResult<Vec<EulerState<f64>>> {
    solve(problem, cfg).map_err(|e| CliError::from_core(format!("{} Euler with N = {}", cfg.mode.name(), cfg.steps), e))
}

fn write_states(out: &mut OutputDir, name: String, states: &[EulerState<f64>], mode: Mode) -> CliResult<()> {
    let mut bytes = Vec::new();
    write_trajectory_csv(states, mode, &mut bytes).map_err(|e| CliError::from_core(format!("writing {name}"), e))?;
    out.write(name, &bytes)
}

/// Number of grid points where `reference` lies within `y ± k·ε`, over all components.
pub fn containment(states: &[EulerState<f64>], reference: impl Fn(f64) -> DVector<f64>, k: f64) -> usize {
    states
        .iter()
        .map(|s| {
            let exact = reference(s.t);
            (0..s.y.len())
                .filter(|&i| (exact[i] - s.y[i]).abs() <= k * s.eps2[i].max(0.0).sqrt())
                .count()
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct LogisticSettings {
    pub r: f64,
    pub y0: f64,
    pub t_end: f64,
    pub steps: Vec<usize>,
    pub euler: EulerSettings,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        LogisticSettings {
            r: 3.0,
            y0: 0.1,
            t_end: 3.0,
            steps: vec![10],
            euler: EulerSettings::default(),
        }
    }
}

impl LogisticSettings {
    pub fn from_overrides(ov: &mut Overrides) -> CliResult<Self> {
        let d = LogisticSettings::default();
        let s = LogisticSettings {
            r: ov.get_f64("r", d.r)?,
            y0: ov.get_f64("y0", d.y0)?,
            t_end: ov.get_positive("t_end", d.t_end)?,
            steps: ov.get_list("steps", &d.steps)?,
            euler: EulerSettings::from_overrides(ov)?,
        };
        check_steps("steps", &s.steps, 1)?;
        s.problem()?;
        Ok(s)
    }

    pub fn problem(&self) -> CliResult<OdeProblem<f64>> {
        OdeProblem::logistic(self.r, self.y0, self.t_end).map_err(|e| CliError::from_core("logistic problem", e))
    }

    pub fn reference(&self, t: f64) -> DVector<f64> {
        DVector::from_element(1, OdeProblem::logistic_solution(self.r, self.y0, t))
    }
}

pub fn run_logistic(s: &LogisticSettings, out: &mut OutputDir) -> CliResult<ExperimentReport> {
    let problem = s.problem()?;
    let mut summary = Vec::new();
    for &n in &s.steps {
        let classical = solve_with(&problem, &s.euler.config(n, Mode::Classical)?)?;
        let prob = solve_with(&problem, &s.euler.config(n, Mode::Probabilistic)?)?;
        let reference: Vec<EulerState<f64>> = prob
            .iter()
            .map(|st| EulerState::initial(st.t, s.reference(st.t)))
            .collect();
        write_states(out, format!("classical_N{n}.csv"), &classical, Mode::Classical)?;
        write_states(out, format!("probabilistic_N{n}.csv"), &prob, Mode::Probabilistic)?;
        let mut t = Table::new(["t", "y_0"]);
        for st in &reference {
            t.push(vec![st.t.into(), st.y[0].into()]);
        }
        out.write_table(format!("reference_N{n}.csv"), &t)?;
        let last = prob.last().expect("trajectory is non-empty");
        summary.push(format!(
            "N = {n}: y(T) = {:.6}, classical {:.6}, probabilistic {:.6} ± {:.6}, inside 95% band at {}/{} points",
            s.reference(s.t_end)[0],
            classical.last().expect("trajectory is non-empty").y[0],
            last.y[0],
            last.eps2[0].sqrt(),
            containment(&prob, |t| s.reference(t), crate::experiments::posterior::Z95),
            prob.len()
        ));
    }
    Ok(ExperimentReport { summary, failure: None })
}

#[derive(Debug, Clone)]
pub struct FhnSettings {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub y0: [f64; 2],
    pub t_end: f64,
    pub steps: Vec<usize>,
    pub reference_steps: usize,
    pub euler: EulerSettings,
}

impl Default for FhnSettings {
    fn default() -> Self {
        FhnSettings {
            a: 0.2,
            b: 0.2,
            c: 3.0,
            y0: [-1.0, 1.0],
            t_end: 20.0,
            steps: vec![100, 1000],
            reference_steps: 100_000,
            euler: EulerSettings::default(),
        }
    }
}

impl FhnSettings {
    pub fn from_overrides(ov: &mut Overrides) -> CliResult<Self> {
        let d = FhnSettings::default();
        let y0: Vec<f64> = ov.get_list("y0", &d.y0)?;
        let s = FhnSettings {
            a: ov.get_f64("a", d.a)?,
            b: ov.get_f64("b", d.b)?,
            c: ov.get_f64("c", d.c)?,
            y0: y0
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Validation("y0 needs exactly two entries".into()))?,
            t_end: ov.get_positive("t_end", d.t_end)?,
            steps: ov.get_list("steps", &d.steps)?,
            reference_steps: ov.get("reference_steps", d.reference_steps)?,
            euler: EulerSettings::from_overrides(ov)?,
        };
        check_steps("steps", &s.steps, 1)?;
        check_steps("reference_steps", &[s.reference_steps], 1)?;
        if let Some(n) = s.steps.iter().find(|&&n| !s.reference_steps.is_multiple_of(n)) {
            return Err(CliError::Validation(format!(
                "reference_steps = {} is not a multiple of N = {n}",
                s.reference_steps
            )));
        }
        s.problem()?;
        Ok(s)
    }

    pub fn problem(&self) -> CliResult<OdeProblem<f64>> {
        OdeProblem::fitzhugh_nagumo(self.a, self.b, self.c, self.y0, self.t_end)
            .map_err(|e| CliError::from_core("FitzHugh-Nagumo problem", e))
    }
}

/// Every `stride`-th state of `fine`.
pub fn subsample(fine: &[EulerState<f64>], stride: usize) -> Vec<EulerState<f64>> {
    fine.iter().step_by(stride).cloned().collect()
}

/// `max_n |a_n[i] - b_n[i]|` over matching grid points.
pub fn sup_error(a: &[EulerState<f64>], b: &[EulerState<f64>], i: usize) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.y[i] - y.y[i]).abs()).fold(0.0, f64::max)
}

pub fn run_fhn(s: &FhnSettings, out: &mut OutputDir) -> CliResult<ExperimentReport> {
    let problem = s.problem()?;
    let fine = solve_with(&problem, &s.euler.config(s.reference_steps, Mode::Classical)?)?;
    let mut summary = Vec::new();
    for &n in &s.steps {
        let classical = solve_with(&problem, &s.euler.config(n, Mode::Classical)?)?;
        let prob = solve_with(&problem, &s.euler.config(n, Mode::Probabilistic)?)?;
        let reference = subsample(&fine, s.reference_steps / n);
        write_states(out, format!("classical_N{n}.csv"), &classical, Mode::Classical)?;
        write_states(out, format!("probabilistic_N{n}.csv"), &prob, Mode::Probabilistic)?;
        write_states(out, format!("reference_N{n}.csv"), &reference, Mode::Classical)?;
        summary.push(format!(
            "N = {n}: sup error of component 0 against N = {} classical, classical {:.4}, probabilistic {:.4}",
            s.reference_steps,
            sup_error(&classical, &reference, 0),
            sup_error(&prob, &reference, 0)
        ));
    }
    Ok(ExperimentReport { summary, failure: None })
}

#[derive(Debug, Clone)]
pub struct ConvergenceSettings {
    pub logistic: LogisticSettings,
    pub error_order: (f64, f64),
    pub eps_order: (f64, f64),
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            logistic: LogisticSettings {
                steps: vec![20, 40, 80, 160, 320],
                ..LogisticSettings::default()
            },
            error_order: (0.8, 1.2),
            eps_order: (1.8, 2.2),
        }
    }
}

impl ConvergenceSettings {
    pub fn from_overrides(ov: &mut Overrides) -> CliResult<Self> {
        let d = ConvergenceSettings::default();
        let logistic = LogisticSettings {
            r: ov.get_f64("r", d.logistic.r)?,
            y0: ov.get_f64("y0", d.logistic.y0)?,
            t_end: ov.get_positive("t_end", d.logistic.t_end)?,
            steps: ov.get_list("steps", &d.logistic.steps)?,
            euler: EulerSettings::from_overrides(ov)?,
        };
        check_steps("steps", &logistic.steps, 2)?;
        logistic.problem()?;
        Ok(ConvergenceSettings {
            logistic,
            error_order: (
                ov.get_f64("error_order_min", d.error_order.0)?,
                ov.get_f64("error_order_max", d.error_order.1)?,
            ),
            eps_order: (
                ov.get_f64("eps_order_min", d.eps_order.0)?,
                ov.get_f64("eps_order_max", d.eps_order.1)?,
            ),
        })
    }

    pub fn study(&self) -> CliResult<ConvergenceStudy> {
        let l = &self.logistic;
        let cfg = l.euler.config(l.steps[0], Mode::Probabilistic)?;
        convergence_study(&l.problem()?, |t| l.reference(t), &l.steps, &cfg)
            .map_err(|e| CliError::from_core("convergence study", e))
    }
}

fn within((lo, hi): (f64, f64), v: f64) -> bool {
    v >= lo && v <= hi
}

pub fn run_convergence(s: &ConvergenceSettings, out: &mut OutputDir) -> CliResult<ExperimentReport> {
    let study = s.study()?;
    let mut t = Table::new(["steps", "h", "max_error", "max_eps", "error_order", "eps_order"]);
    for (k, row) in study.rows.iter().enumerate() {
        let order = |v: &[f64]| if k == 0 { f64::NAN } else { v[k - 1] };
        t.push(vec![
            row.steps.into(),
            row.h.into(),
            row.max_error.into(),
            row.max_eps.into(),
            order(&study.error_orders).into(),
            order(&study.eps_orders).into(),
        ]);
    }
    out.write_table("convergence.csv", &t)?;
    let checks = [
        ("max_error", study.fitted_error_order, s.error_order),
        ("max_eps", study.fitted_eps_order, s.eps_order),
    ];
    let mut orders = Table::new(["quantity", "fitted_order", "lower", "upper", "within"]);
    let mut summary = Vec::new();
    let mut outside = Vec::new();
    for (name, v, bracket) in checks {
        let ok = within(bracket, v);
        orders.push(vec![name.into(), v.into(), bracket.0.into(), bracket.1.into(), ok.into()]);
        summary.push(format!("{name}: fitted order {v:.4} (expected [{}, {}])", bracket.0, bracket.1));
        if !ok {
            outside.push(format!("{name} order {v:.4} outside [{}, {}]", bracket.0, bracket.1));
        }
    }
    out.write_table("orders.csv", &orders)?;
    let failure = (!outside.is_empty()).then(|| CliError::Check(outside.join("; ")));
    Ok(ExperimentReport { summary, failure })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_error_halves_when_steps_double() {
        let s = LogisticSettings::default();
        let p = s.problem().unwrap();
        let err = |n| {
            let traj = solve_with(&p, &s.euler.config(n, Mode::Classical).unwrap()).unwrap();
            (traj.last().unwrap().y[0] - s.reference(s.t_end)[0]).abs()
        };
        let ratio = err(200) / err(400);
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn single_step_count_is_rejected() {
        let map = Overrides::parse(&["steps=10"]).unwrap();
        assert!(ConvergenceSettings::from_overrides(&mut Overrides::new(map)).is_err());
    }

    #[test]
    fn reference_grid_must_nest() {
        let map = Overrides::parse(&["steps=7", "reference_steps=100"]).unwrap();
        assert!(FhnSettings::from_overrides(&mut Overrides::new(map)).is_err());
    }

    #[test]
    fn subsample_keeps_endpoints() {
        let s = FhnSettings::default();
        let fine = solve_with(&s.problem().unwrap(), &s.euler.config(1000, Mode::Classical).unwrap()).unwrap();
        let coarse = subsample(&fine, 10);
        assert_eq!(coarse.len(), 101);
        assert!((coarse.last().unwrap().t - 20.0).abs() < 1e-12);
    }
}
