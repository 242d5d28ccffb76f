//! Stability of the Theta method on the scalar test equations.
//!
//! For the test ODE `x' = a x` the method's amplification per step is the
//! rational growth function `R(ah)`. Introducing a delayed term with lag
//! equal to the step size, `x' = a x(t) + b x(t-h)`, turns the one-step map
//! into a 2x2 companion matrix acting on `[x_n, x_{n-1}]`; the method is
//! stable where the spectral radius of that matrix is below one.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

/// Relative threshold below which the growth-function denominator is
/// treated as a pole.
const POLE_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum ScalarError {
    /// The growth-function denominator `1 - ah (1-theta)` vanished.
    #[error("growth function pole at ah = {ah} (theta = {theta})")]
    Pole { ah: Complex64, theta: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Damping parameter and step size of the Theta method.
///
/// Convention: `theta = 0.5` is the trapezoidal method, `theta = 0` the
/// backward Euler method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaParams {
    theta: f64,
    h: f64,
}

impl ThetaParams {
    pub fn new(theta: f64, h: f64) -> Result<Self, ScalarError> {
        if !(0.0..=1.0).contains(&theta) || !theta.is_finite() {
            return Err(ScalarError::Config(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(ScalarError::Config(format!(
                "step size h must be positive and finite, got {h}"
            )));
        }
        Ok(Self { theta, h })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

/// Scalar test delay differential equation `x' = a x(t) + b x(t-h)`.
///
/// The delay is fixed at one step size; `a` weighs the delay-free term and
/// `b` the delayed one.
#[derive(Debug, Clone, Copy)]
pub struct ScalarTestDde {
    pub a: Complex64,
    pub b: Complex64,
}

impl ScalarTestDde {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self, ScalarError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(ScalarError::Config(
                "coefficients a, b must be finite".into(),
            ));
        }
        Ok(Self { a, b })
    }
}

/// 2x2 amplification matrix of the Theta method on [`ScalarTestDde`].
///
/// Only the top row is stored; the second row is the companion shift
/// `[1, 0]` by construction.
#[derive(Debug, Clone, Copy)]
pub struct GrowthMatrix {
    top: [Complex64; 2],
}

impl GrowthMatrix {
    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        [
            self.top,
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        ]
    }

    pub fn top_row(&self) -> [Complex64; 2] {
        self.top
    }

    /// Eigenvalues from the characteristic quadratic `l^2 - p l - q = 0`
    /// with `p`, `q` the top-row entries.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let [p, q] = self.top;
        let disc = (p * p + 4.0 * q).sqrt();
        [(p + disc) / 2.0, (p - disc) / 2.0]
    }
}

/// Growth function `R(ah) = (1 + theta ah) / (1 - (1-theta) ah)` of the
/// Theta method on the test ODE, evaluated at the combined argument `ah`.
pub fn growth_function(p: &ThetaParams, ah: Complex64) -> Result<Complex64, ScalarError> {
    let den = Complex64::new(1.0, 0.0) - (1.0 - p.theta) * ah;
    if den.norm() <= POLE_TOL * (1.0 + ah.norm()) {
        return Err(ScalarError::Pole { ah, theta: p.theta });
    }
    Ok((Complex64::new(1.0, 0.0) + p.theta * ah) / den)
}

/// One-step companion matrix of the Theta method on the scalar test DDE.
pub fn growth_matrix(p: &ThetaParams, eq: &ScalarTestDde) -> Result<GrowthMatrix, ScalarError> {
    let ah = eq.a * p.h;
    let bh = eq.b * p.h;
    let den = Complex64::new(1.0, 0.0) - (1.0 - p.theta) * ah;
    if den.norm() <= POLE_TOL * (1.0 + ah.norm()) {
        return Err(ScalarError::Pole { ah, theta: p.theta });
    }
    let t11 = (Complex64::new(1.0, 0.0) + p.theta * ah + (1.0 - p.theta) * bh) / den;
    let t12 = p.theta * bh / den;
    Ok(GrowthMatrix { top: [t11, t12] })
}

/// Spectral radius of the companion matrix, from the closed-form quadratic.
pub fn spectral_radius(m: &GrowthMatrix) -> f64 {
    let [l1, l2] = m.eigenvalues();
    l1.norm().max(l2.norm())
}

/// Companion matrix of the Theta method on `x' = a x(t) + b x(t - k h)`.
///
/// Generalization of [`growth_matrix`] to a delay of `k` whole steps; the
/// companion order is `k + 1` and `k = 1` reproduces the 2x2 case.
pub fn growth_companion(
    p: &ThetaParams,
    eq: &ScalarTestDde,
    k: usize,
) -> Result<nalgebra::DMatrix<Complex64>, ScalarError> {
    if k == 0 {
        return Err(ScalarError::Config("delay multiple k must be >= 1".into()));
    }
    let ah = eq.a * p.h;
    let bh = eq.b * p.h;
    let den = Complex64::new(1.0, 0.0) - (1.0 - p.theta) * ah;
    if den.norm() <= POLE_TOL * (1.0 + ah.norm()) {
        return Err(ScalarError::Pole { ah, theta: p.theta });
    }
    let n = k + 1;
    let mut m = nalgebra::DMatrix::<Complex64>::zeros(n, n);
    m[(0, 0)] = (Complex64::new(1.0, 0.0) + p.theta * ah) / den;
    // delayed term: implicit part references lag k-1, explicit part lag k
    m[(0, k - 1)] += (1.0 - p.theta) * bh / den;
    m[(0, k)] += p.theta * bh / den;
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Spectral radius of a dense complex companion matrix (general `k`).
pub fn companion_spectral_radius(m: &nalgebra::DMatrix<Complex64>) -> f64 {
    match m.clone().schur().eigenvalues() {
        Some(eigs) => eigs.iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

/// Which scalar parameter a raster sweeps, and how the other is derived.
///
/// The swept quantity is always the step-scaled product (`a h` or `b h`);
/// the other coefficient follows the linear rule with factor `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanTarget {
    /// Sweep `a h`, set `b = alpha * a`.
    DelayedFromFree { alpha: f64 },
    /// Sweep `b h`, set `a = alpha * b`.
    FreeFromDelayed { alpha: f64 },
}

impl ScanTarget {
    /// Named presets matching the usual region plots.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "b-eq-0" => Some(Self::DelayedFromFree { alpha: 0.0 }),
            "a-eq-0" => Some(Self::FreeFromDelayed { alpha: 0.0 }),
            "b-eq-a" => Some(Self::DelayedFromFree { alpha: 1.0 }),
            "a-eq-1.1b" => Some(Self::FreeFromDelayed { alpha: 1.1 }),
            "b-eq-0.15a" => Some(Self::DelayedFromFree { alpha: 0.15 }),
            "a-eq-0.85b" => Some(Self::FreeFromDelayed { alpha: 0.85 }),
            _ => None,
        }
    }

    /// Parse a generic rule of the form `b=0.15a` or `a=1.1b`.
    pub fn parse_rule(rule: &str) -> Result<Self, ScalarError> {
        let bad = || ScalarError::Config(format!("cannot parse scan rule '{rule}'"));
        let s = rule.replace(' ', "");
        let (lhs, rhs) = s.split_once('=').ok_or_else(bad)?;
        let parse_alpha = |txt: &str, var: char| -> Result<f64, ScalarError> {
            let body = txt.strip_suffix(var).ok_or_else(bad)?;
            if body.is_empty() || body == "+" {
                Ok(1.0)
            } else if body == "-" {
                Ok(-1.0)
            } else {
                body.parse::<f64>().map_err(|_| bad())
            }
        };
        match lhs {
            "b" => {
                if rhs == "0" {
                    Ok(Self::DelayedFromFree { alpha: 0.0 })
                } else {
                    Ok(Self::DelayedFromFree {
                        alpha: parse_alpha(rhs, 'a')?,
                    })
                }
            }
            "a" => {
                if rhs == "0" {
                    Ok(Self::FreeFromDelayed { alpha: 0.0 })
                } else {
                    Ok(Self::FreeFromDelayed {
                        alpha: parse_alpha(rhs, 'b')?,
                    })
                }
            }
            _ => Err(bad()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::DelayedFromFree { alpha } => format!("scan ah, b = {alpha} * a"),
            Self::FreeFromDelayed { alpha } => format!("scan bh, a = {alpha} * b"),
        }
    }
}

/// Rectangular window of the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterBounds {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl RasterBounds {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self, ScalarError> {
        let vals = [re_min, re_max, im_min, im_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ScalarError::Config("raster bounds must be finite".into()));
        }
        if re_min >= re_max || im_min >= im_max {
            return Err(ScalarError::Config(format!(
                "inverted raster bounds: [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
        })
    }
}

/// Per-cell spectral radius of the growth matrix over a window of the
/// swept parameter, with the strict stability mask `rho < 1`.
///
/// Pole cells carry `rho = +inf` and are unstable. Cells are stored
/// row-major with the imaginary axis as the slow index.
#[derive(Debug, Clone)]
pub struct StabilityRaster {
    pub bounds: RasterBounds,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub stable_mask: Vec<bool>,
    pub scan: ScanTarget,
    pub theta: f64,
}

impl StabilityRaster {
    pub fn coord(&self, ix: usize, iy: usize) -> (f64, f64) {
        let re = self.bounds.re_min
            + ix as f64 * (self.bounds.re_max - self.bounds.re_min) / (self.nx - 1) as f64;
        let im = self.bounds.im_min
            + iy as f64 * (self.bounds.im_max - self.bounds.im_min) / (self.ny - 1) as f64;
        (re, im)
    }

    pub fn at(&self, ix: usize, iy: usize) -> (f64, bool) {
        let idx = iy * self.nx + ix;
        (self.values[idx], self.stable_mask[idx])
    }
}

/// Spectral radius of the method at a single swept point.
///
/// `swept` is `a h` or `b h` depending on the scan target; `delay_steps`
/// generalizes the lag to `k` whole steps (default 1).
pub fn point_radius(theta: f64, scan: &ScanTarget, swept: Complex64, delay_steps: usize) -> f64 {
    // products ah, bh are what matters; fold h = 1 into the coefficients
    let p = ThetaParams { theta, h: 1.0 };
    let (ah, bh) = match scan {
        ScanTarget::DelayedFromFree { alpha } => (swept, swept * *alpha),
        ScanTarget::FreeFromDelayed { alpha } => (swept * *alpha, swept),
    };
    let eq = ScalarTestDde { a: ah, b: bh };
    if delay_steps == 1 {
        match growth_matrix(&p, &eq) {
            Ok(m) => spectral_radius(&m),
            Err(_) => f64::INFINITY,
        }
    } else {
        match growth_companion(&p, &eq, delay_steps) {
            Ok(m) => companion_spectral_radius(&m),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Rasterize the stability region of the Theta method for a scan rule.
pub fn stability_raster(
    bounds: RasterBounds,
    nx: usize,
    ny: usize,
    theta: f64,
    scan: ScanTarget,
) -> Result<StabilityRaster, ScalarError> {
    stability_raster_k(bounds, nx, ny, theta, scan, 1)
}

/// [`stability_raster`] with the delay generalized to `k` whole steps.
pub fn stability_raster_k(
    bounds: RasterBounds,
    nx: usize,
    ny: usize,
    theta: f64,
    scan: ScanTarget,
    delay_steps: usize,
) -> Result<StabilityRaster, ScalarError> {
    if nx < 2 || ny < 2 {
        return Err(ScalarError::Config(format!(
            "raster resolution must be at least 2x2, got {nx}x{ny}"
        )));
    }
    ThetaParams::new(theta, 1.0)?;
    if delay_steps == 0 {
        return Err(ScalarError::Config("delay_steps must be >= 1".into()));
    }
    let mut raster = StabilityRaster {
        bounds,
        nx,
        ny,
        values: vec![0.0; nx * ny],
        stable_mask: vec![false; nx * ny],
        scan,
        theta,
    };
    let coords: Vec<(usize, usize)> = (0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
        .collect();
    let values: Vec<f64> = coords
        .par_iter()
        .map(|&(ix, iy)| {
            let (re, im) = raster.coord(ix, iy);
            point_radius(theta, &scan, Complex64::new(re, im), delay_steps)
        })
        .collect();
    for (idx, v) in values.into_iter().enumerate() {
        raster.stable_mask[idx] = v < 1.0;
        raster.values[idx] = v;
    }
    Ok(raster)
}
