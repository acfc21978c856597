//! Classical and probabilistic Euler methods for `y'(t) = f(t, y(t))` on `[0, T]`.
//!
//! The probabilistic method treats `y_n` and `f(t_n, y_n)` as noisy
//! observations of `y(t_n)` and `y'(t_n)` under a first-order Taylor kernel
//! and propagates a Gaussian `N(y_n, ε_n²)` per coordinate.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;

use crate::autodiff::{value_jacobian, Dual2};
use crate::error::{Error, Result};
use crate::estimate::sigma_ml_noisy_n1;
use crate::io::format_real;
use crate::kernels::KernelSpec;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Right-hand side `f(t, y)` written against [`Dual2`].
pub type RhsFn<T> = Arc<dyn Fn(T, &[Dual2<T>]) -> Vec<Dual2<T>> + Send + Sync>;

/// Default lower bound on `σ_n`.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-6;

#[derive(Clone)]
pub struct OdeProblem<T> {
    dim: usize,
    f: RhsFn<T>,
    t_end: T,
    y0: DVector<T>,
}

impl<T> fmt::Debug for OdeProblem<T>
where
    T: fmt::Debug + nalgebra::Scalar,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("dim", &self.dim)
            .field("t_end", &self.t_end)
            .field("y0", &self.y0.as_slice())
            .finish()
    }
}

impl<T: Real> OdeProblem<T> {
    pub fn new(f: RhsFn<T>, t_end: T, y0: DVector<T>) -> Result<Self> {
        if !(t_end > T::zero() && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive and finite, got {t_end}")));
        }
        if y0.is_empty() {
            return Err(Error::InvalidParameter("initial value must have dimension >= 1".into()));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial value".into()));
        }
        Ok(OdeProblem {
            dim: y0.len(),
            f,
            t_end,
            y0,
        })
    }

    /// `y' = r y (1 - y)`.
    pub fn logistic(r: T, y0: T, t_end: T) -> Result<Self> {
        let f: RhsFn<T> = Arc::new(move |_, y| vec![&y[0] * (-&y[0] + T::one()) * r]);
        Self::new(f, t_end, DVector::from_vec(vec![y0]))
    }

    /// `y(t) = y0 e^{rt} / (1 + y0 (e^{rt} - 1))`.
    pub fn logistic_solution(r: T, y0: T, t: T) -> T {
        let e = (r * t).exp();
        y0 * e / (T::one() + y0 * (e - T::one()))
    }

    /// `y1' = c (y1 - y1³/3 + y2)`, `y2' = -(y1 - a + b y2) / c`.
    pub fn fitzhugh_nagumo(a: T, b: T, c: T, y0: [T; 2], t_end: T) -> Result<Self> {
        if c == T::zero() {
            return Err(Error::InvalidParameter("FitzHugh-Nagumo needs c != 0".into()));
        }
        let third = T::one() / lit::<T>(3.0);
        let f: RhsFn<T> = Arc::new(move |_, y| {
            vec![
                (&y[0] - y[0].powi(3) * third + &y[1]) * c,
                -(&y[0] - a + &y[1] * b) / c,
            ]
        });
        Self::new(f, t_end, DVector::from_vec(y0.to_vec()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn y0(&self) -> &DVector<T> {
        &self.y0
    }

    /// `f(t, y)`.
    pub fn eval(&self, t: T, y: &DVector<T>) -> Result<DVector<T>> {
        let args: Vec<Dual2<T>> = y.iter().map(|&v| Dual2::constant(v)).collect();
        let out = DVector::from_vec((self.f)(t, &args).iter().map(|v| v.value()).collect());
        self.check_output(&out)?;
        Ok(out)
    }

    /// `f(t, y)` and the diagonal `∂f_i/∂y_i`.
    pub fn eval_with_diagonal(&self, t: T, y: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        let (v, jac) = value_jacobian(|args| (self.f)(t, args), y.as_slice())?;
        self.check_output(&v)?;
        Ok((v, jac.diagonal()))
    }

    fn check_output(&self, out: &DVector<T>) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: out.len(),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ODE right-hand side".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Classical,
    Probabilistic,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Probabilistic => "probabilistic",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Mode::Classical),
            "probabilistic" => Ok(Mode::Probabilistic),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode '{other}' (expected classical or probabilistic)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    pub steps: usize,
    /// Univariate inner-product kernel applied to every coordinate; its
    /// `σ²` is ignored because `σ_n²` is estimated on every step.
    pub kernel: KernelSpec<T>,
    pub sigma_min: T,
    pub mode: Mode,
}

impl<T: Real> SolverConfig<T> {
    /// Exponential kernel with `λ = 1` and the default `σ_min`.
    pub fn new(steps: usize, mode: Mode) -> Result<Self> {
        Ok(SolverConfig {
            steps,
            kernel: KernelSpec::exponential(T::one(), T::one(), 1)?,
            sigma_min: lit(DEFAULT_SIGMA_MIN),
            mode,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("need at least one step".into()));
        }
        if !(self.sigma_min > T::zero() && self.sigma_min.is_finite()) {
            return Err(Error::InvalidParameter("sigma_min must be positive".into()));
        }
        self.kernel.check_dim(1)?;
        self.coefficients().map(|_| ())
    }

    /// `(c_0, c_1, λ)`.
    fn coefficients(&self) -> Result<(T, T, T)> {
        let c0 = self.kernel.scalar_coefficient(0);
        let c1 = self.kernel.scalar_coefficient(1);
        match (c0, c1) {
            (Some(c0), Some(c1)) if c0 > T::zero() && c1 > T::zero() => Ok((c0, c1, self.kernel.lambda()[0])),
            _ => Err(Error::InvalidParameter(
                "the Euler kernel must be an inner-product kernel with c0, c1 > 0".into(),
            )),
        }
    }
}

/// State at `t_n`. `sigma2`, `a` and `b` are the values used on the step
/// that produced this state; the initial state carries `σ² = 0`, `a = b = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerState<T> {
    pub t: T,
    pub y: DVector<T>,
    pub eps2: DVector<T>,
    pub sigma2: DVector<T>,
    pub a: DVector<T>,
    pub b: DVector<T>,
}

impl<T: Real> EulerState<T> {
    /// Exact initial value: `ε_0 = 0`.
    pub fn initial(t: T, y: DVector<T>) -> Self {
        let d = y.len();
        EulerState {
            t,
            y,
            eps2: DVector::zeros(d),
            sigma2: DVector::zeros(d),
            a: DVector::from_element(d, T::one()),
            b: DVector::from_element(d, T::one()),
        }
    }
}

fn check_step<T: Real>(h: T) -> Result<()> {
    if h > T::zero() && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("step size must be positive, got {h}")))
    }
}

/// `y_n + h f(t_n, y_n)`.
pub fn euler_step<T: Real>(problem: &OdeProblem<T>, t: T, y: &DVector<T>, h: T) -> Result<DVector<T>> {
    check_step(h)?;
    Ok(y + problem.eval(t, y)? * h)
}

/// One probabilistic Euler step, coordinate by coordinate.
pub fn prob_euler_step<T: Real>(
    problem: &OdeProblem<T>,
    state: &EulerState<T>,
    h: T,
    config: &SolverConfig<T>,
) -> Result<EulerState<T>> {
    check_step(h)?;
    let (c0, c1, lambda) = config.coefficients()?;
    let rh = config.kernel.series_tail(h, 1)?;
    let (fy, dfy) = problem.eval_with_diagonal(state.t, &state.y)?;
    let d = problem.dim();
    let mut next = EulerState::initial(state.t + h, DVector::zeros(d));
    for i in 0..d {
        let eps2 = state.eps2[i];
        let deps2 = dfy[i] * dfy[i] * eps2;
        let s2 = sigma_ml_noisy_n1(c0, c1, lambda, state.y[i], fy[i], eps2, deps2, config.sigma_min)?
            .max(config.sigma_min * config.sigma_min);
        let a = s2 * c0 / (s2 * c0 + eps2);
        let b = s2 * c1 * lambda / (s2 * c1 * lambda + deps2);
        next.y[i] = a * state.y[i] + b * h * fy[i];
        next.eps2[i] = s2 * (c0 * (T::one() - a) + c1 * lambda * (T::one() - b) * h * h + rh);
        next.sigma2[i] = s2;
        next.a[i] = a;
        next.b[i] = b;
    }
    if next.y.iter().chain(next.eps2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probabilistic Euler state".into()));
    }
    Ok(next)
}

/// Trajectory on `t_n = nT/N`, `n = 0, ..., N`.
pub fn solve<T: Real>(problem: &OdeProblem<T>, config: &SolverConfig<T>) -> Result<Vec<EulerState<T>>> {
    config.validate()?;
    let n = config.steps;
    let nf: T = from_usize(n);
    let h = problem.t_end() / nf;
    let mut out = Vec::with_capacity(n + 1);
    out.push(EulerState::initial(T::zero(), problem.y0().clone()));
    for k in 0..n {
        let prev = out.last().expect("initial state present");
        let t_next = problem.t_end() * from_usize::<T>(k + 1) / nf;
        let mut next = match config.mode {
            Mode::Classical => {
                let y = euler_step(problem, prev.t, &prev.y, h).map_err(|e| e.at_step(k + 1))?;
                EulerState::initial(t_next, y)
            }
            Mode::Probabilistic => prob_euler_step(problem, prev, h, config).map_err(|e| e.at_step(k + 1))?,
        };
        next.t = t_next;
        out.push(next);
    }
    Ok(out)
}

/// Writes `t, y.., eps.., sigma2.., mode` with `eps` the standard deviation.
pub fn write_trajectory_csv<T: Real, W: Write>(states: &[EulerState<T>], mode: Mode, out: W) -> Result<()> {
    let d = states.first().map(|s| s.y.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("y_{i}")));
    header.extend((0..d).map(|i| format!("eps_{i}")));
    header.extend((0..d).map(|i| format!("sigma2_{i}")));
    header.push("mode".into());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(err)?;
    for s in states {
        let mut row = vec![format_real(to_f64(s.t))];
        row.extend(s.y.iter().map(|&v| format_real(to_f64(v))));
        row.extend(s.eps2.iter().map(|&v| format_real(to_f64(v).sqrt())));
        row.extend(s.sigma2.iter().map(|&v| format_real(to_f64(v))));
        row.push(mode.name().into());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub h: f64,
    /// `max_n ‖y(t_n) - y_n‖∞`.
    pub max_error: f64,
    /// `max_n max_i ε_{n,i}`.
    pub max_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Orders between successive rows, `log(e_k / e_{k+1}) / log(h_k / h_{k+1})`;
    /// NaN where an error is zero.
    pub error_orders: Vec<f64>,
    pub eps_orders: Vec<f64>,
    /// Least-squares slopes of `log e` against `log h` over all rows.
    pub fitted_error_order: f64,
    pub fitted_eps_order: f64,
}

fn successive_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    (1..h.len())
        .map(|k| {
            if e[k - 1] > 0.0 && e[k] > 0.0 {
                (e[k - 1] / e[k]).ln() / (h[k - 1] / h[k]).ln()
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    if e.iter().any(|v| !(*v > 0.0)) {
        return f64::NAN;
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Solves with each step count in `steps` and measures errors against `reference`.
pub fn convergence_study<T: Real>(
    problem: &OdeProblem<T>,
    reference: impl Fn(T) -> DVector<T>,
    steps: &[usize],
    config: &SolverConfig<T>,
) -> Result<ConvergenceStudy> {
    if steps.len() < 2 {
        return Err(Error::InvalidParameter(
            "a convergence study needs at least two step counts".into(),
        ));
    }
    let mut rows = Vec::with_capacity(steps.len());
    for &n in steps {
        let cfg = SolverConfig {
            steps: n,
            ..config.clone()
        };
        let traj = solve(problem, &cfg)?;
        let mut max_error = 0.0f64;
        let mut max_eps = 0.0f64;
        for s in &traj {
            let exact = reference(s.t);
            for i in 0..s.y.len() {
                max_error = max_error.max(to_f64(exact[i] - s.y[i]).abs());
                max_eps = max_eps.max(to_f64(s.eps2[i]).sqrt());
            }
        }
        rows.push(ConvergenceRow {
            steps: n,
            h: to_f64(problem.t_end()) / n as f64,
            max_error,
            max_eps,
        });
    }
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.max_error).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.max_eps).collect();
    Ok(ConvergenceStudy {
        error_orders: successive_orders(&h, &err),
        eps_orders: successive_orders(&h, &eps),
        fitted_error_order: fitted_order(&h, &err),
        fitted_eps_order: fitted_order(&h, &eps),
        rows,
    })
}
