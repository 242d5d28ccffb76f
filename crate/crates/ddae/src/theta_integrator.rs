//! Fixed-step Theta-method integration of delay DAE systems.
//!
//! One step from `t_n` to `t_{n+1} = t_n + h` solves
//!
//! ```text
//! x_{n+1} = x_n + h theta f(x_n, y_n, lag@n) + h (1-theta) f(x_{n+1}, y_{n+1}, lag@n+1)
//! 0       = g(x_{n+1}, y_{n+1}, lag@n+1)
//! ```
//!
//! by Newton iteration. Delayed arguments are linearly interpolated
//! between the two bracketing grid values; a delay shorter than one step
//! (`k = 0`) references the unknown `v_{n+1}` itself, which therefore
//! enters the Newton Jacobian.

use crate::ddae_core::{interpolation_split, DdaeError, DdaeSystem, Lagged};
use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] DdaeError),
    #[error("step Newton did not converge at t = {t} (residual {residual:.3e})")]
    StepNoConvergence { t: f64, residual: f64 },
    #[error("singular step Jacobian at t = {t}")]
    SingularStepJacobian { t: f64 },
}

/// State norm above which a trajectory is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1e12;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 20;

/// An instantaneous disturbance: at time `t` the state `x` receives the
/// increment `dx`, after which the algebraic equations are re-solved
/// for `y`.
#[derive(Debug, Clone)]
pub struct Event {
    pub t: f64,
    pub dx: DVector<f64>,
}

/// Outcome of a time-domain run.
#[derive(Debug, Clone, PartialEq)]
pub enum SimStatus {
    Completed,
    /// The state norm exceeded the divergence limit; the trajectory is
    /// truncated at the reported time.
    Diverged { t: f64 },
}

/// Trajectory produced by [`simulate`]: grid times with the differential
/// and algebraic states at each.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub status: SimStatus,
}

/// One-step Theta integrator holding the grid history ring buffer.
pub struct ThetaStepper<'a> {
    sys: &'a DdaeSystem,
    theta: f64,
    h: f64,
    /// `(k_i, c_i)` interpolation split per delay.
    splits: Vec<(usize, f64)>,
    /// `buffer[j]` is the state at `t - j h`; front is the current state.
    buffer: VecDeque<(DVector<f64>, DVector<f64>)>,
    t: f64,
}

impl<'a> ThetaStepper<'a> {
    /// Initialize at `t = 0` from the system's history function, sampled
    /// at grid multiples. The algebraic variables at `t = 0` are
    /// re-solved so that the constraint holds exactly at the start.
    pub fn new(sys: &'a DdaeSystem, theta: f64, h: f64) -> Result<Self, IntegratorError> {
        if !(0.0..=1.0).contains(&theta) || !theta.is_finite() {
            return Err(IntegratorError::Config(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(IntegratorError::Config(format!(
                "step size h must be positive and finite, got {h}"
            )));
        }
        sys.validate()?;
        let splits: Vec<(usize, f64)> = sys
            .delays
            .iter()
            .map(|d| interpolation_split(d.tau, h))
            .collect();
        let k_max = splits.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let depth = k_max + 2;
        let mut buffer = VecDeque::with_capacity(depth + 1);
        for j in 0..depth {
            buffer.push_back((sys.history)(-(j as f64) * h));
        }
        let mut stepper = Self {
            sys,
            theta,
            h,
            splits,
            buffer,
            t: 0.0,
        };
        if sys.mu > 0 {
            let (x0, y_guess) = stepper.buffer[0].clone();
            let y0 = stepper.resolve_algebraic(&x0, &y_guess)?;
            stepper.buffer[0].1 = y0;
        }
        Ok(stepper)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> (&DVector<f64>, &DVector<f64>) {
        let (x, y) = &self.buffer[0];
        (x, y)
    }

    /// Lagged values as seen from the current grid point.
    fn lags_at_current(&self) -> Vec<Lagged> {
        self.splits
            .iter()
            .map(|&(k, c)| {
                let (xa, ya) = &self.buffer[k];
                let (xb, yb) = &self.buffer[k + 1];
                Lagged {
                    x: c * xa + (1.0 - c) * xb,
                    y: c * ya + (1.0 - c) * yb,
                }
            })
            .collect()
    }

    /// Lagged values as seen from the next grid point, with `next` the
    /// current Newton iterate for `v_{n+1}`.
    fn lags_at_next(&self, next: &(DVector<f64>, DVector<f64>)) -> Vec<Lagged> {
        self.splits
            .iter()
            .map(|&(k, c)| {
                if k == 0 {
                    let (xb, yb) = &self.buffer[0];
                    Lagged {
                        x: c * &next.0 + (1.0 - c) * xb,
                        y: c * &next.1 + (1.0 - c) * yb,
                    }
                } else {
                    let (xa, ya) = &self.buffer[k - 1];
                    let (xb, yb) = &self.buffer[k];
                    Lagged {
                        x: c * xa + (1.0 - c) * xb,
                        y: c * ya + (1.0 - c) * yb,
                    }
                }
            })
            .collect()
    }

    /// Advance one step. `h` is taken from the stepper; `signed_scale`
    /// lets the reversibility test run a mirrored step.
    fn step_with(&mut self, h: f64) -> Result<(), IntegratorError> {
        let nu = self.sys.nu;
        let mu = self.sys.mu;
        let d = nu + mu;
        let theta = self.theta;

        let (x_cur, y_cur) = self.buffer[0].clone();
        let lags_cur = self.lags_at_current();
        let f_exp = (self.sys.f)(&x_cur, &y_cur, &lags_cur);

        // predictor: explicit Euler in x, hold y
        let mut x_next = &x_cur + h * &f_exp;
        let mut y_next = y_cur.clone();

        // the residual floor scales with the state: near the divergence
        // limit an absolute 1e-10 would be below rounding error
        let tol = NEWTON_TOL * (1.0 + x_cur.amax());
        let mut residual = f64::INFINITY;
        for _iter in 0..NEWTON_MAX_ITERS {
            let next = (x_next.clone(), y_next.clone());
            let lags_next = self.lags_at_next(&next);
            let f_imp = (self.sys.f)(&x_next, &y_next, &lags_next);
            let g_val = (self.sys.g)(&x_next, &y_next, &lags_next);

            let rx = &x_next - &x_cur - h * theta * &f_exp - h * (1.0 - theta) * &f_imp;
            residual = rx.amax().max(if mu > 0 { g_val.amax() } else { 0.0 });
            if residual <= tol {
                break;
            }

            let jac = self.sys.jacobians_at(&x_next, &y_next, &lags_next);
            // sub-step delays (k = 0) make lag@n+1 depend on the unknown
            // with weight c, which augments the instantaneous blocks
            let mut fx = jac.fx.clone();
            let mut fy = jac.fy.clone();
            let mut gx = jac.gx.clone();
            let mut gy = jac.gy.clone();
            for (&(k, c), dj) in self.splits.iter().zip(&jac.delayed) {
                if k == 0 {
                    fx += c * &dj.fx;
                    fy += c * &dj.fy;
                    gx += c * &dj.gx;
                    gy += c * &dj.gy;
                }
            }

            let mut j = DMatrix::zeros(d, d);
            for i in 0..nu {
                j[(i, i)] = 1.0;
            }
            {
                let mut b = j.view_mut((0, 0), (nu, nu));
                b -= h * (1.0 - theta) * &fx;
            }
            {
                let mut b = j.view_mut((0, nu), (nu, mu));
                b -= h * (1.0 - theta) * &fy;
            }
            j.view_mut((nu, 0), (mu, nu)).copy_from(&gx);
            j.view_mut((nu, nu), (mu, mu)).copy_from(&gy);

            let mut r = DVector::zeros(d);
            r.rows_mut(0, nu).copy_from(&rx);
            r.rows_mut(nu, mu).copy_from(&g_val);

            let delta = j
                .lu()
                .solve(&r)
                .ok_or(IntegratorError::SingularStepJacobian { t: self.t })?;
            x_next -= delta.rows(0, nu);
            y_next -= delta.rows(nu, mu);
        }
        if residual > tol {
            return Err(IntegratorError::StepNoConvergence {
                t: self.t,
                residual,
            });
        }

        self.buffer.push_front((x_next, y_next));
        let depth = self.splits.iter().map(|&(k, _)| k).max().unwrap_or(0) + 2;
        self.buffer.truncate(depth);
        self.t += h;
        Ok(())
    }

    /// Advance by one forward step of size `h`.
    pub fn step(&mut self) -> Result<(), IntegratorError> {
        self.step_with(self.h)
    }

    /// Mirrored step of size `-h`, used to probe time reversibility of
    /// the trapezoidal method on delay-free systems.
    #[cfg(test)]
    pub(crate) fn step_backward(&mut self) -> Result<(), IntegratorError> {
        self.step_with(-self.h)
    }

    /// Solve `g(x, y, lag@current) = 0` for `y` with `x` held fixed.
    pub fn resolve_algebraic(
        &self,
        x: &DVector<f64>,
        y_guess: &DVector<f64>,
    ) -> Result<DVector<f64>, IntegratorError> {
        let mu = self.sys.mu;
        if mu == 0 {
            return Ok(y_guess.clone());
        }
        let mut y = y_guess.clone();
        let lags = self.lags_at_current();
        for _ in 0..NEWTON_MAX_ITERS {
            let g_val = (self.sys.g)(x, &y, &lags);
            if g_val.amax() <= NEWTON_TOL {
                return Ok(y);
            }
            let jac = self.sys.jacobians_at(x, &y, &lags);
            let delta =
                jac.gy
                    .clone()
                    .lu()
                    .solve(&g_val)
                    .ok_or(IntegratorError::SingularStepJacobian { t: self.t })?;
            y -= delta;
        }
        let g_val = (self.sys.g)(x, &y, &lags);
        if g_val.amax() <= 1e-8 {
            return Ok(y);
        }
        Err(IntegratorError::StepNoConvergence {
            t: self.t,
            residual: g_val.amax(),
        })
    }

    /// Apply an instantaneous state disturbance at the current grid point.
    pub fn apply_event(&mut self, dx: &DVector<f64>) -> Result<(), IntegratorError> {
        if dx.len() != self.sys.nu {
            return Err(IntegratorError::Config(format!(
                "event disturbance has length {}, expected nu = {}",
                dx.len(),
                self.sys.nu
            )));
        }
        let (x, y) = self.buffer[0].clone();
        let x_kicked = x + dx;
        let y_new = self.resolve_algebraic(&x_kicked, &y)?;
        self.buffer[0] = (x_kicked, y_new);
        Ok(())
    }
}

/// Integrate from `t = 0` to `t_end`, applying `events` at the grid
/// point nearest each event time. Divergence is reported as a normal
/// outcome in [`SimStatus`], not as an error.
pub fn simulate(
    sys: &DdaeSystem,
    theta: f64,
    h: f64,
    t_end: f64,
    events: &[Event],
) -> Result<SimulationResult, IntegratorError> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(IntegratorError::Config(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    let mut stepper = ThetaStepper::new(sys, theta, h)?;
    let n_steps = (t_end / h).round().max(1.0) as usize;

    let mut sorted_events: Vec<&Event> = events.iter().collect();
    sorted_events.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut next_event = 0usize;

    let mut out = SimulationResult {
        t: Vec::with_capacity(n_steps + 1),
        x: Vec::with_capacity(n_steps + 1),
        y: Vec::with_capacity(n_steps + 1),
        status: SimStatus::Completed,
    };
    let record = |out: &mut SimulationResult, stepper: &ThetaStepper| {
        let (x, y) = stepper.state();
        out.t.push(stepper.t());
        out.x.push(x.clone());
        out.y.push(y.clone());
    };

    // events scheduled at or before t = 0 fire before the first step
    while next_event < sorted_events.len() && sorted_events[next_event].t <= h / 2.0 {
        stepper.apply_event(&sorted_events[next_event].dx)?;
        next_event += 1;
    }
    record(&mut out, &stepper);

    for _ in 0..n_steps {
        stepper.step()?;
        while next_event < sorted_events.len()
            && sorted_events[next_event].t <= stepper.t() + h / 2.0
        {
            stepper.apply_event(&sorted_events[next_event].dx)?;
            next_event += 1;
        }
        record(&mut out, &stepper);
        let (x, _) = stepper.state();
        if x.amax() > DIVERGENCE_LIMIT {
            out.status = SimStatus::Diverged { t: stepper.t() };
            break;
        }
    }
    Ok(out)
}

/// Estimate the exponential growth rate of a trajectory tail by a
/// least-squares fit of `ln ||x||` against time.
///
/// The fit runs over the last `tail_fraction` of the samples and, when
/// the signal oscillates, uses only the local maxima of the norm so the
/// zero crossings of individual components do not bias the slope.
pub fn growth_rate(result: &SimulationResult, tail_fraction: f64) -> Option<f64> {
    let n = result.t.len();
    if n < 4 {
        return None;
    }
    let frac = tail_fraction.clamp(0.05, 1.0);
    let start = ((n as f64) * (1.0 - frac)) as usize;
    let norms: Vec<f64> = result.x[start..].iter().map(|x| x.norm()).collect();
    let times = &result.t[start..];

    let mut pts: Vec<(f64, f64)> = Vec::new();
    for i in 1..norms.len().saturating_sub(1) {
        if norms[i] >= norms[i - 1] && norms[i] >= norms[i + 1] && norms[i] > 0.0 {
            pts.push((times[i], norms[i].ln()));
        }
    }
    if pts.len() < 3 {
        pts = times
            .iter()
            .zip(&norms)
            .filter(|(_, &nrm)| nrm > 0.0)
            .map(|(&t, &nrm)| (t, nrm.ln()))
            .collect();
    }
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (st, sl): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, l)| (a + t, b + l));
    let (stt, stl): (f64, f64) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, l)| (a + t * t, b + t * l));
    let denom = m * stt - st * st;
    if denom.abs() < 1e-30 {
        return None;
    }
    Some((m * stl - st * sl) / denom)
}
