//! Nonlinear delay differential-algebraic systems and their linearization.
//!
//! Systems are given in semi-explicit (Hessenberg index-1) form
//!
//! ```text
//! x' = f(x, y, lagged variables)
//! 0  = g(x, y, lagged variables)
//! ```
//!
//! with a finite set of constant delays. Each delayed occurrence refers to
//! the full variable vector `(x, y)` evaluated `tau_i` in the past.
//! Linearization about an equilibrium produces the matrix family
//! `(E, A0, A1, ..., Ar)` on a step grid of width `h`, where a delay that
//! is not a whole multiple of `h` is split linearly between the two
//! bracketing grid lags.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdaeError {
    #[error("invalid system configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("singular Jacobian encountered in {context}")]
    SingularJacobian { context: String },
}

/// A single constant delay, with a label for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    pub tau: f64,
    pub label: String,
}

impl DelaySpec {
    pub fn new(tau: f64, label: impl Into<String>) -> Result<Self, DdaeError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(DdaeError::Config(format!(
                "delay must be positive and finite, got {tau}"
            )));
        }
        Ok(Self {
            tau,
            label: label.into(),
        })
    }
}

/// Delayed variable values `(x(t - tau_i), y(t - tau_i))` passed to the
/// right-hand-side functions, one entry per declared delay.
#[derive(Debug, Clone)]
pub struct Lagged {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

pub type RhsFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>, &[Lagged]) -> DVector<f64> + Send + Sync>;
pub type HistoryFn = Box<dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync>;
pub type JacobianFn =
    Box<dyn Fn(&DVector<f64>, &DVector<f64>, &[Lagged]) -> JacobianSet + Send + Sync>;

/// Partial derivatives of one delayed argument: `d f / d x(t-tau)` etc.
#[derive(Debug, Clone)]
pub struct DelayJacobian {
    pub fx: DMatrix<f64>,
    pub fy: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
}

/// Full first-order derivative information of `(f, g)` at a point:
/// delay-free blocks plus one [`DelayJacobian`] per declared delay.
#[derive(Debug, Clone)]
pub struct JacobianSet {
    pub fx: DMatrix<f64>,
    pub fy: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
    pub delayed: Vec<DelayJacobian>,
}

/// A delay differential-algebraic system in semi-explicit form.
pub struct DdaeSystem {
    pub nu: usize,
    pub mu: usize,
    pub delays: Vec<DelaySpec>,
    pub f: RhsFn,
    pub g: RhsFn,
    pub history: HistoryFn,
    /// Analytic Jacobians; when absent, central finite differences are used.
    pub jacobians: Option<JacobianFn>,
}

impl DdaeSystem {
    /// Validate dimensions by probing the right-hand sides at the history
    /// value at `t = 0`.
    pub fn validate(&self) -> Result<(), DdaeError> {
        let (x0, y0) = (self.history)(0.0);
        if x0.len() != self.nu || y0.len() != self.mu {
            return Err(DdaeError::Dimension(format!(
                "history returned ({}, {}) but system is nu = {}, mu = {}",
                x0.len(),
                y0.len(),
                self.nu,
                self.mu
            )));
        }
        let lags: Vec<Lagged> = self
            .delays
            .iter()
            .map(|_| Lagged {
                x: x0.clone(),
                y: y0.clone(),
            })
            .collect();
        let fv = (self.f)(&x0, &y0, &lags);
        if fv.len() != self.nu {
            return Err(DdaeError::Dimension(format!(
                "f returned length {} but nu = {}",
                fv.len(),
                self.nu
            )));
        }
        let gv = (self.g)(&x0, &y0, &lags);
        if gv.len() != self.mu {
            return Err(DdaeError::Dimension(format!(
                "g returned length {} but mu = {}",
                gv.len(),
                self.mu
            )));
        }
        Ok(())
    }

    pub fn tau_max(&self) -> f64 {
        self.delays.iter().map(|d| d.tau).fold(0.0, f64::max)
    }

    /// Jacobians at a point: analytic if provided, otherwise central
    /// finite differences.
    pub fn jacobians_at(&self, x: &DVector<f64>, y: &DVector<f64>, lags: &[Lagged]) -> JacobianSet {
        match &self.jacobians {
            Some(j) => j(x, y, lags),
            None => numeric_jacobians(self, x, y, lags),
        }
    }
}

fn fd_step(v: f64) -> f64 {
    1e-6f64.max(1e-6 * v.abs())
}

/// Central finite-difference Jacobians of `(f, g)` with respect to the
/// instantaneous and every delayed argument.
pub fn numeric_jacobians(
    sys: &DdaeSystem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lags: &[Lagged],
) -> JacobianSet {
    let nu = sys.nu;
    let mu = sys.mu;
    let eval = |x: &DVector<f64>, y: &DVector<f64>, lags: &[Lagged]| {
        ((sys.f)(x, y, lags), (sys.g)(x, y, lags))
    };

    let diff = |perturb: &mut dyn FnMut(f64) -> (DVector<f64>, DVector<f64>, Vec<Lagged>),
                    base: f64|
     -> (DVector<f64>, DVector<f64>) {
        let e = fd_step(base);
        let (xp, yp, lp) = perturb(e);
        let (fp, gp) = eval(&xp, &yp, &lp);
        let (xm, ym, lm) = perturb(-e);
        let (fm, gm) = eval(&xm, &ym, &lm);
        ((fp - fm) / (2.0 * e), (gp - gm) / (2.0 * e))
    };

    let mut fx = DMatrix::zeros(nu, nu);
    let mut gx = DMatrix::zeros(mu, nu);
    for j in 0..nu {
        let (df, dg) = diff(
            &mut |e| {
                let mut xe = x.clone();
                xe[j] += e;
                (xe, y.clone(), lags.to_vec())
            },
            x[j],
        );
        fx.set_column(j, &df);
        gx.set_column(j, &dg);
    }

    let mut fy = DMatrix::zeros(nu, mu);
    let mut gy = DMatrix::zeros(mu, mu);
    for j in 0..mu {
        let (df, dg) = diff(
            &mut |e| {
                let mut ye = y.clone();
                ye[j] += e;
                (x.clone(), ye, lags.to_vec())
            },
            y[j],
        );
        fy.set_column(j, &df);
        gy.set_column(j, &dg);
    }

    let mut delayed = Vec::with_capacity(lags.len());
    for i in 0..lags.len() {
        let mut dfx = DMatrix::zeros(nu, nu);
        let mut dgx = DMatrix::zeros(mu, nu);
        for j in 0..nu {
            let (df, dg) = diff(
                &mut |e| {
                    let mut le = lags.to_vec();
                    le[i].x[j] += e;
                    (x.clone(), y.clone(), le)
                },
                lags[i].x[j],
            );
            dfx.set_column(j, &df);
            dgx.set_column(j, &dg);
        }
        let mut dfy = DMatrix::zeros(nu, mu);
        let mut dgy = DMatrix::zeros(mu, mu);
        for j in 0..mu {
            let (df, dg) = diff(
                &mut |e| {
                    let mut le = lags.to_vec();
                    le[i].y[j] += e;
                    (x.clone(), y.clone(), le)
                },
                lags[i].y[j],
            );
            dfy.set_column(j, &df);
            dgy.set_column(j, &dg);
        }
        delayed.push(DelayJacobian {
            fx: dfx,
            fy: dfy,
            gx: dgx,
            gy: dgy,
        });
    }

    JacobianSet {
        fx,
        fy,
        gx,
        gy,
        delayed,
    }
}

/// Split a delay into `(k, c)` on a grid of step `h`: the lagged value is
/// interpolated as `c * v_{n-k} + (1 - c) * v_{n-k-1}` with `kh <= tau`
/// and `c = (k + 1) - tau / h` in `(0, 1]`. `c = 1` means the delay is an
/// exact grid multiple and only lag `k` is referenced.
pub fn interpolation_split(tau: f64, h: f64) -> (usize, f64) {
    debug_assert!(tau > 0.0 && h > 0.0);
    let ratio = tau / h;
    // rounding guard so that exact multiples land on c = 1, not c -> 0+
    let k = (ratio + 1e-9).floor() as usize;
    let c = ((k + 1) as f64 - ratio).min(1.0);
    (k, c)
}

/// An equilibrium `(x*, y*)` of the frozen-delay system, where every
/// lagged argument equals the instantaneous value.
#[derive(Debug, Clone)]
pub struct EquilibriumPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub residual: f64,
}

/// Damped Newton search for an equilibrium from an initial guess.
pub fn find_equilibrium(
    sys: &DdaeSystem,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<EquilibriumPoint, DdaeError> {
    const TOL: f64 = 1e-12;
    const MAX_ITERS: usize = 50;
    let nu = sys.nu;
    let mu = sys.mu;
    if x0.len() != nu || y0.len() != mu {
        return Err(DdaeError::Dimension(format!(
            "initial guess has lengths ({}, {}), expected ({nu}, {mu})",
            x0.len(),
            y0.len()
        )));
    }
    let mut x = x0.clone();
    let mut y = y0.clone();

    let residual = |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let lags: Vec<Lagged> = sys
            .delays
            .iter()
            .map(|_| Lagged {
                x: x.clone(),
                y: y.clone(),
            })
            .collect();
        let fv = (sys.f)(x, y, &lags);
        let gv = (sys.g)(x, y, &lags);
        let mut r = DVector::zeros(nu + mu);
        r.rows_mut(0, nu).copy_from(&fv);
        r.rows_mut(nu, mu).copy_from(&gv);
        r
    };

    let mut r = residual(&x, &y);
    let mut rnorm = r.amax();
    for iter in 0..MAX_ITERS {
        if rnorm <= TOL {
            return Ok(EquilibriumPoint {
                x,
                y,
                residual: rnorm,
            });
        }
        let lags: Vec<Lagged> = sys
            .delays
            .iter()
            .map(|_| Lagged {
                x: x.clone(),
                y: y.clone(),
            })
            .collect();
        let jac = sys.jacobians_at(&x, &y, &lags);
        // frozen delays: lagged arguments move with the state, so the
        // delayed Jacobians fold into the instantaneous blocks
        let mut j = DMatrix::zeros(nu + mu, nu + mu);
        let mut fx = jac.fx.clone();
        let mut fy = jac.fy.clone();
        let mut gx = jac.gx.clone();
        let mut gy = jac.gy.clone();
        for d in &jac.delayed {
            fx += &d.fx;
            fy += &d.fy;
            gx += &d.gx;
            gy += &d.gy;
        }
        j.view_mut((0, 0), (nu, nu)).copy_from(&fx);
        j.view_mut((0, nu), (nu, mu)).copy_from(&fy);
        j.view_mut((nu, 0), (mu, nu)).copy_from(&gx);
        j.view_mut((nu, nu), (mu, mu)).copy_from(&gy);

        let lu = j.lu();
        let delta = lu.solve(&r).ok_or_else(|| DdaeError::SingularJacobian {
            context: format!("equilibrium Newton, iteration {iter}"),
        })?;

        // damped update: halve the step until the residual does not grow
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let xt = &x - alpha * delta.rows(0, nu);
            let yt = &y - alpha * delta.rows(nu, mu);
            let rt = residual(&xt, &yt);
            let rtn = rt.amax();
            if rtn < rnorm || rtn <= TOL {
                x = xt;
                y = yt;
                r = rt;
                rnorm = rtn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // accept the smallest damped step and let the next iteration
            // decide; aborting here would reject shallow residual plateaus
            let xt = &x - alpha * delta.rows(0, nu);
            let yt = &y - alpha * delta.rows(nu, mu);
            x = xt;
            y = yt;
            r = residual(&x, &y);
            rnorm = r.amax();
        }
    }
    if rnorm <= TOL {
        return Ok(EquilibriumPoint {
            x,
            y,
            residual: rnorm,
        });
    }
    Err(DdaeError::NoConvergence {
        iters: MAX_ITERS,
        residual: rnorm,
    })
}

/// Linearized delay system `E v' = A0 v + sum_k Ak v(t - k h)` on a grid
/// of step `h`, with `v = (x, y)` of dimension `d = nu + mu`.
#[derive(Debug, Clone)]
pub struct LinearDelayModel {
    pub nu: usize,
    pub mu: usize,
    /// Delay-free coefficient, `d x d`.
    pub a0: DMatrix<f64>,
    /// `delayed[j]` multiplies `v(t - (j + 1) h)`; length `r`.
    pub delayed: Vec<DMatrix<f64>>,
    pub h: f64,
}

impl LinearDelayModel {
    pub fn dim(&self) -> usize {
        self.nu + self.mu
    }

    pub fn r(&self) -> usize {
        self.delayed.len()
    }

    /// Singular mass matrix `diag(I_nu, 0_mu)`.
    pub fn e_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut e = DMatrix::zeros(d, d);
        for i in 0..self.nu {
            e[(i, i)] = 1.0;
        }
        e
    }

    /// Index-1 check: the algebraic block `g_y` (bottom-right `mu x mu`
    /// block of `A0`) must be nonsingular.
    pub fn is_index1(&self) -> bool {
        if self.mu == 0 {
            return true;
        }
        let gy = self.a0.view((self.nu, self.nu), (self.mu, self.mu));
        gy.clone_owned().lu().is_invertible()
    }

    /// Realize the linear model as a [`DdaeSystem`] with delays at exact
    /// grid multiples and analytic Jacobians.
    pub fn to_system(&self) -> DdaeSystem {
        let nu = self.nu;
        let mu = self.mu;
        let d = self.dim();
        let a0 = self.a0.clone();
        let delayed = self.delayed.clone();
        let h = self.h;
        let delays: Vec<DelaySpec> = (1..=delayed.len())
            .map(|k| DelaySpec {
                tau: k as f64 * h,
                label: format!("grid-lag-{k}"),
            })
            .collect();

        let apply = move |a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
            let mut v = DVector::zeros(d);
            v.rows_mut(0, nu).copy_from(x);
            v.rows_mut(nu, mu).copy_from(y);
            a * v
        };

        let a0_f = a0.clone();
        let delayed_f = delayed.clone();
        let f: RhsFn = Box::new(move |x, y, lags| {
            let mut total = apply(&a0_f, x, y);
            for (a, l) in delayed_f.iter().zip(lags) {
                total += apply(a, &l.x, &l.y);
            }
            total.rows(0, nu).clone_owned()
        });

        let a0_g = a0.clone();
        let delayed_g = delayed.clone();
        let g: RhsFn = Box::new(move |x, y, lags| {
            let mut total = apply(&a0_g, x, y);
            for (a, l) in delayed_g.iter().zip(lags) {
                total += apply(a, &l.x, &l.y);
            }
            total.rows(nu, mu).clone_owned()
        });

        let a0_j = a0.clone();
        let delayed_j = delayed.clone();
        let jac: JacobianFn = Box::new(move |_x, _y, _lags| JacobianSet {
            fx: a0_j.view((0, 0), (nu, nu)).clone_owned(),
            fy: a0_j.view((0, nu), (nu, mu)).clone_owned(),
            gx: a0_j.view((nu, 0), (mu, nu)).clone_owned(),
            gy: a0_j.view((nu, nu), (mu, mu)).clone_owned(),
            delayed: delayed_j
                .iter()
                .map(|a| DelayJacobian {
                    fx: a.view((0, 0), (nu, nu)).clone_owned(),
                    fy: a.view((0, nu), (nu, mu)).clone_owned(),
                    gx: a.view((nu, 0), (mu, nu)).clone_owned(),
                    gy: a.view((nu, nu), (mu, mu)).clone_owned(),
                })
                .collect(),
        });

        DdaeSystem {
            nu,
            mu,
            delays,
            f,
            g,
            history: Box::new(move |_t| (DVector::zeros(nu), DVector::zeros(mu))),
            jacobians: Some(jac),
        }
    }
}

fn stack_delay_jacobian(d: &DelayJacobian, nu: usize, mu: usize) -> DMatrix<f64> {
    let dim = nu + mu;
    let mut j = DMatrix::zeros(dim, dim);
    j.view_mut((0, 0), (nu, nu)).copy_from(&d.fx);
    j.view_mut((0, nu), (nu, mu)).copy_from(&d.fy);
    j.view_mut((nu, 0), (mu, nu)).copy_from(&d.gx);
    j.view_mut((nu, nu), (mu, mu)).copy_from(&d.gy);
    j
}

/// Linearize a system about an equilibrium on a grid of step `h`.
///
/// Each delay is split per [`interpolation_split`]: weight `c` of its
/// Jacobian goes to lag `k` and weight `1 - c` to lag `k + 1`. A split
/// with `k = 0` folds the weight-`c` part into the delay-free `A0`.
pub fn linearize(
    sys: &DdaeSystem,
    eq: &EquilibriumPoint,
    h: f64,
) -> Result<LinearDelayModel, DdaeError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(DdaeError::Config(format!(
            "step size h must be positive and finite, got {h}"
        )));
    }
    let nu = sys.nu;
    let mu = sys.mu;
    let d = nu + mu;
    let lags: Vec<Lagged> = sys
        .delays
        .iter()
        .map(|_| Lagged {
            x: eq.x.clone(),
            y: eq.y.clone(),
        })
        .collect();
    let jac = sys.jacobians_at(&eq.x, &eq.y, &lags);

    let mut a0 = DMatrix::zeros(d, d);
    a0.view_mut((0, 0), (nu, nu)).copy_from(&jac.fx);
    a0.view_mut((0, nu), (nu, mu)).copy_from(&jac.fy);
    a0.view_mut((nu, 0), (mu, nu)).copy_from(&jac.gx);
    a0.view_mut((nu, nu), (mu, mu)).copy_from(&jac.gy);

    let mut r = 0usize;
    for spec in &sys.delays {
        let (k, c) = interpolation_split(spec.tau, h);
        let hi = if c >= 1.0 { k.max(1) } else { k + 1 };
        r = r.max(hi);
    }
    r = r.max(1);

    let mut delayed = vec![DMatrix::zeros(d, d); r];
    for (spec, dj) in sys.delays.iter().zip(&jac.delayed) {
        let j = stack_delay_jacobian(dj, nu, mu);
        let (k, c) = interpolation_split(spec.tau, h);
        if c >= 1.0 {
            if k == 0 {
                // zero-delay degenerate case: fully instantaneous
                a0 += &j;
            } else {
                delayed[k - 1] += c * &j;
            }
        } else {
            if k == 0 {
                a0 += c * &j;
            } else {
                delayed[k - 1] += c * &j;
            }
            delayed[k] += (1.0 - c) * &j;
        }
        let _ = spec;
    }

    Ok(LinearDelayModel {
        nu,
        mu,
        a0,
        delayed,
        h,
    })
}
