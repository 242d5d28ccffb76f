//! Spectral analysis of linearized delay systems.
//!
//! Two spectra are computed for a [`LinearDelayModel`]:
//!
//! - the **exact** characteristic roots of
//!   `det(s E - A0 - sum_k Ak e^{-s k h}) = 0`, found by Chebyshev
//!   collocation of the associated infinitesimal generator followed by a
//!   bordered Newton refinement of each candidate, and
//! - the **deformed** roots seen by the Theta method with step `h`:
//!   eigenvalues `z` of the block pencil of the one-step recurrence,
//!   mapped back to the `s` plane through `s = ln(z) / h`.
//!
//! Comparing the two quantifies how the method deforms the spectrum,
//! in particular the numerical damping of the rightmost modes.

use crate::ddae_core::LinearDelayModel;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PencilError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix in {context}")]
    SingularMatrix { context: String },
    #[error("eigenvalue computation failed in {context}")]
    EigenFailure { context: String },
    #[error("spectrum is degenerate: {0}")]
    DegenerateSpectrum(String),
    #[error(
        "damping mismatch does not change sign over the bracket \
         (phi({theta_lo}) = {phi_lo:.3e}, phi({theta_hi}) = {phi_hi:.3e})"
    )]
    NoSignChange {
        theta_lo: f64,
        theta_hi: f64,
        phi_lo: f64,
        phi_hi: f64,
    },
    #[error("lost track of the target root during the theta sweep at theta = {theta}")]
    TrackingLost { theta: f64 },
}

/// Which plane a spectrum was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumDomain {
    Exact,
    Deformed,
}

impl SpectrumDomain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Deformed => "deformed",
        }
    }
}

/// One characteristic root in the `s` plane with its backward-error
/// residual (smallest singular value of the characteristic matrix,
/// normalized by the coefficient magnitudes).
#[derive(Debug, Clone, Copy)]
pub struct EigenRoot {
    pub s: Complex64,
    pub residual: f64,
}

/// A set of characteristic roots in canonical order (descending real
/// part, then descending imaginary part).
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub domain: SpectrumDomain,
    pub roots: Vec<EigenRoot>,
}

impl EigenSpectrum {
    fn new(domain: SpectrumDomain, mut roots: Vec<EigenRoot>) -> Self {
        roots.sort_by(|a, b| {
            b.s.re
                .total_cmp(&a.s.re)
                .then(b.s.im.total_cmp(&a.s.im))
        });
        Self { domain, roots }
    }

    /// Root with the largest real part.
    pub fn rightmost(&self) -> Option<&EigenRoot> {
        self.roots
            .iter()
            .max_by(|a, b| a.s.re.total_cmp(&b.s.re).then(a.s.im.total_cmp(&b.s.im)))
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

/// Damping ratio `zeta = -Re(s) / |s|` of a mode; 0 for the zero root.
pub fn damping_ratio(s: Complex64) -> f64 {
    let m = s.norm();
    if m == 0.0 {
        0.0
    } else {
        -s.re / m
    }
}

/// Ratio of the largest to the smallest root magnitude in a spectrum.
pub fn stiffness_ratio(spectrum: &EigenSpectrum) -> Result<f64, PencilError> {
    let mags: Vec<f64> = spectrum
        .roots
        .iter()
        .map(|r| r.s.norm())
        .filter(|&m| m > 1e-12)
        .collect();
    if mags.len() < 2 {
        return Err(PencilError::DegenerateSpectrum(format!(
            "need at least two nonzero-magnitude roots, have {}",
            mags.len()
        )));
    }
    let max = mags.iter().cloned().fold(0.0, f64::max);
    let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

// ---------------------------------------------------------------------------
// Discrete pencil of the Theta recurrence
// ---------------------------------------------------------------------------

/// Block pencil `(F, G)` of the Theta-method one-step recurrence
/// `M v_{n+1} = D_0 v_n + D_1 v_{n-1} + ... + D_r v_{n-r}` on the
/// linearized system. Its generalized eigenvalues `z` (from
/// `z F w = G w`) are the amplification factors of the discretization.
#[derive(Debug, Clone)]
pub struct DiscretePencil {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub d: usize,
    pub r: usize,
    pub h: f64,
    pub theta: f64,
    m: DMatrix<f64>,
    d_blocks: Vec<DMatrix<f64>>,
}

/// Assemble the discrete pencil of a linear delay model for a given
/// `theta`. A delay-free model is padded to `r = 1` with a zero block.
pub fn build_discrete_pencil(
    model: &LinearDelayModel,
    theta: f64,
) -> Result<DiscretePencil, PencilError> {
    if !(0.0..=1.0).contains(&theta) || !theta.is_finite() {
        return Err(PencilError::Config(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let h = model.h;
    if !(h > 0.0) || !h.is_finite() {
        return Err(PencilError::Config(format!(
            "model step size must be positive and finite, got {h}"
        )));
    }
    let nu = model.nu;
    let mu = model.mu;
    let d = nu + mu;
    if model.a0.nrows() != d || model.a0.ncols() != d {
        return Err(PencilError::Dimension(format!(
            "A0 is {}x{}, expected {d}x{d}",
            model.a0.nrows(),
            model.a0.ncols()
        )));
    }
    for (i, a) in model.delayed.iter().enumerate() {
        if a.nrows() != d || a.ncols() != d {
            return Err(PencilError::Dimension(format!(
                "A{} is {}x{}, expected {d}x{d}",
                i + 1,
                a.nrows(),
                a.ncols()
            )));
        }
    }
    let mut delayed = model.delayed.clone();
    if delayed.is_empty() {
        delayed.push(DMatrix::zeros(d, d));
    }
    let r = delayed.len();

    let fx0 = model.a0.view((0, 0), (nu, nu));
    let fy0 = model.a0.view((0, nu), (nu, mu));
    let gx0 = model.a0.view((nu, 0), (mu, nu));
    let gy0 = model.a0.view((nu, nu), (mu, mu));

    // M multiplies the unknown v_{n+1}
    let mut m = DMatrix::zeros(d, d);
    for i in 0..nu {
        m[(i, i)] = 1.0;
    }
    {
        let mut b = m.view_mut((0, 0), (nu, nu));
        b -= h * (1.0 - theta) * fx0;
    }
    {
        let mut b = m.view_mut((0, nu), (nu, mu));
        b -= h * (1.0 - theta) * fy0;
    }
    {
        let mut b = m.view_mut((nu, 0), (mu, nu));
        b -= h * gx0;
    }
    {
        let mut b = m.view_mut((nu, nu), (mu, mu));
        b -= h * gy0;
    }

    // delay-free explicit part
    let mut a_exp = DMatrix::zeros(d, d);
    for i in 0..nu {
        a_exp[(i, i)] = 1.0;
    }
    {
        let mut b = a_exp.view_mut((0, 0), (nu, nu));
        b += h * theta * fx0;
    }
    {
        let mut b = a_exp.view_mut((0, nu), (nu, mu));
        b += h * theta * fy0;
    }

    // per-lag implicit (B) and explicit (C) contributions of A_k
    let bmat = |ak: &DMatrix<f64>| -> DMatrix<f64> {
        let mut b = DMatrix::zeros(d, d);
        b.view_mut((0, 0), (nu, nu))
            .copy_from(&(h * (1.0 - theta) * ak.view((0, 0), (nu, nu))));
        b.view_mut((0, nu), (nu, mu))
            .copy_from(&(h * (1.0 - theta) * ak.view((0, nu), (nu, mu))));
        b.view_mut((nu, 0), (mu, nu))
            .copy_from(&(h * ak.view((nu, 0), (mu, nu))));
        b.view_mut((nu, nu), (mu, mu))
            .copy_from(&(h * ak.view((nu, nu), (mu, mu))));
        b
    };
    let cmat = |ak: &DMatrix<f64>| -> DMatrix<f64> {
        let mut c = DMatrix::zeros(d, d);
        c.view_mut((0, 0), (nu, nu))
            .copy_from(&(h * theta * ak.view((0, 0), (nu, nu))));
        c.view_mut((0, nu), (nu, mu))
            .copy_from(&(h * theta * ak.view((0, nu), (nu, mu))));
        c
    };

    // D_j multiplies v_{n-j}: implicit part of A_{j+1} plus explicit of A_j
    let mut d_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(r + 1);
    d_blocks.push(&a_exp + bmat(&delayed[0]));
    for j in 1..r {
        d_blocks.push(bmat(&delayed[j]) + cmat(&delayed[j - 1]));
    }
    d_blocks.push(cmat(&delayed[r - 1]));

    let n = (r + 1) * d;
    let mut f = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(n, n);
    for i in 0..r * d {
        f[(i, d + i)] = 1.0;
        g[(i, i)] = 1.0;
    }
    f.view_mut((r * d, 0), (d, d)).copy_from(&m);
    for j in 0..r {
        let mut blk = f.view_mut((r * d, (j + 1) * d), (d, d));
        blk.copy_from(&(-&d_blocks[j]));
    }
    g.view_mut((r * d, r * d), (d, d)).copy_from(&d_blocks[r]);

    Ok(DiscretePencil {
        f,
        g,
        d,
        r,
        h,
        theta,
        m,
        d_blocks,
    })
}

impl DiscretePencil {
    /// Characteristic matrix `P(z) = M z^{r+1} - sum_j D_j z^{r-j}` of
    /// the recurrence, evaluated at a complex amplification factor.
    pub fn characteristic(&self, z: Complex64) -> DMatrix<Complex64> {
        let r = self.r;
        let mut p = self.m.map(|v| Complex64::new(v, 0.0)) * z.powu((r + 1) as u32);
        for (j, blk) in self.d_blocks.iter().enumerate() {
            let w = z.powu((r - j) as u32);
            p -= blk.map(|v| Complex64::new(v, 0.0)) * w;
        }
        p
    }

    /// Normalized backward error of `z` as a root of the recurrence.
    pub fn residual(&self, z: Complex64) -> f64 {
        let r = self.r;
        let p = self.characteristic(z);
        let mut scale = self.m.norm() * z.norm().powi((r + 1) as i32);
        for (j, blk) in self.d_blocks.iter().enumerate() {
            scale += blk.norm() * z.norm().powi((r - j) as i32);
        }
        if scale <= 0.0 {
            return f64::INFINITY;
        }
        smallest_singular_value(&p) / scale
    }
}

/// Eigenvalues through a complex Schur decomposition with a bounded
/// iteration count. The stock `complex_eigenvalues` iterates without
/// limit and can spin forever on matrices with large singular clusters,
/// such as shift-inverted collocation problems of semi-explicit DAEs.
fn bounded_eigenvalues(m: &DMatrix<f64>, max_iter: usize) -> Option<Vec<Complex64>> {
    let n = m.nrows();
    let mc = m.map(|x| Complex64::new(x, 0.0));
    let sch = nalgebra::linalg::Schur::try_new(mc, f64::EPSILON, max_iter)?;
    let (_, t) = sch.unpack();
    Some((0..n).map(|i| t[(i, i)]).collect())
}

fn smallest_singular_value(m: &DMatrix<Complex64>) -> f64 {
    // bounded iteration count: nalgebra's complex SVD can fail to
    // converge on exactly singular matrices, and the unbounded call
    // would spin forever. A tiny deterministic perturbation (far below
    // every tolerance this value feeds) knocks a stuck iteration loose.
    for attempt in 0..4u32 {
        let mut work = m.clone();
        if attempt > 0 {
            let scale = 1e-14 * work.norm().max(1.0) * attempt as f64;
            for (i, entry) in work.iter_mut().enumerate() {
                let ang = 2.399963229728653 * (i as f64 + attempt as f64);
                *entry += scale * Complex64::new(ang.cos(), ang.sin());
            }
        }
        if let Some(svd) = nalgebra::linalg::SVD::try_new(work, false, false, f64::EPSILON, 50_000)
        {
            return svd
                .singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
        }
    }
    f64::INFINITY
}

/// Amplification factors below this magnitude are treated as artifacts
/// of the singular trailing block and discarded.
const Z_DROP_TOL: f64 = 1e-12;

/// Spectrum of the Theta discretization in the `s` plane: eigenvalues of
/// the pencil mapped through the principal branch of `ln(z) / h`.
pub fn deformed_spectrum(pencil: &DiscretePencil) -> Result<EigenSpectrum, PencilError> {
    let lu = pencil.f.clone().lu();
    let w = lu
        .solve(&pencil.g)
        .ok_or_else(|| PencilError::SingularMatrix {
            context: "pencil leading block (is the model index-1?)".to_string(),
        })?;
    let zs = bounded_eigenvalues(&w, 20_000).ok_or_else(|| PencilError::EigenFailure {
        context: "Schur iteration on the pencil amplification matrix".to_string(),
    })?;
    let mut roots = Vec::new();
    for &z in zs.iter() {
        if z.norm() < Z_DROP_TOL || !z.re.is_finite() || !z.im.is_finite() {
            continue;
        }
        let s = z.ln() / pencil.h;
        roots.push(EigenRoot {
            s,
            residual: pencil.residual(z),
        });
    }
    Ok(EigenSpectrum::new(SpectrumDomain::Deformed, roots))
}

// ---------------------------------------------------------------------------
// Exact spectrum: Chebyshev collocation + bordered Newton refinement
// ---------------------------------------------------------------------------

/// Tuning knobs for [`exact_spectrum`].
#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Chebyshev polynomial degree of the collocation (N + 1 nodes).
    pub n_cheb: usize,
    /// Discard roots with real part below this; default `-50 / tau_max`.
    pub sigma_min: Option<f64>,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            n_cheb: 24,
            sigma_min: None,
        }
    }
}

/// Characteristic matrix `T(s) = s E - A0 - sum_k Ak e^{-s k h}`.
pub fn characteristic_matrix(model: &LinearDelayModel, s: Complex64) -> DMatrix<Complex64> {
    let d = model.dim();
    let e = model.e_matrix();
    let mut t = DMatrix::<Complex64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            t[(i, j)] = s * e[(i, j)] - model.a0[(i, j)];
        }
    }
    for (k, ak) in model.delayed.iter().enumerate() {
        let w = (-s * ((k + 1) as f64) * model.h).exp();
        for i in 0..d {
            for j in 0..d {
                t[(i, j)] -= w * ak[(i, j)];
            }
        }
    }
    t
}

fn characteristic_derivative(model: &LinearDelayModel, s: Complex64) -> DMatrix<Complex64> {
    let d = model.dim();
    let e = model.e_matrix();
    let mut t = DMatrix::<Complex64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            t[(i, j)] = Complex64::new(e[(i, j)], 0.0);
        }
    }
    for (k, ak) in model.delayed.iter().enumerate() {
        let tau = ((k + 1) as f64) * model.h;
        let w = tau * (-s * tau).exp();
        for i in 0..d {
            for j in 0..d {
                t[(i, j)] += w * ak[(i, j)];
            }
        }
    }
    t
}

/// Normalized backward error of `s` as an exact characteristic root.
pub fn exact_residual(model: &LinearDelayModel, s: Complex64) -> f64 {
    let t = characteristic_matrix(model, s);
    let mut scale = model.e_matrix().norm() * s.norm() + model.a0.norm();
    for (k, ak) in model.delayed.iter().enumerate() {
        scale += ak.norm() * (-s.re * ((k + 1) as f64) * model.h).exp();
    }
    if scale <= 0.0 {
        return f64::INFINITY;
    }
    smallest_singular_value(&t) / scale
}

/// Chebyshev extreme points and first-derivative matrix on [-1, 1].
fn chebyshev_diff(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    assert!(n >= 2);
    let x: Vec<f64> = (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let c = |i: usize| -> f64 {
        let base = if i == 0 || i == n { 2.0 } else { 1.0 };
        base * if i % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=n {
        let row_sum: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row_sum;
    }
    (x, d)
}

/// Barycentric interpolation weights for Chebyshev extreme points.
fn barycentric_coeffs(nodes: &[f64], t: f64) -> Vec<f64> {
    let n = nodes.len() - 1;
    for (j, &tj) in nodes.iter().enumerate() {
        if (t - tj).abs() < 1e-14 * (1.0 + tj.abs()) {
            let mut ell = vec![0.0; n + 1];
            ell[j] = 1.0;
            return ell;
        }
    }
    let w = |j: usize| -> f64 {
        let base = if j == 0 || j == n { 0.5 } else { 1.0 };
        base * if j % 2 == 0 { 1.0 } else { -1.0 }
    };
    let terms: Vec<f64> = (0..=n).map(|j| w(j) / (t - nodes[j])).collect();
    let total: f64 = terms.iter().sum();
    terms.iter().map(|&v| v / total).collect()
}

/// Exact characteristic roots of the linear delay model with real part
/// above the cut-off, via collocation seeds refined by Newton.
pub fn exact_spectrum(
    model: &LinearDelayModel,
    opts: &ExactOptions,
) -> Result<EigenSpectrum, PencilError> {
    let d = model.dim();
    let r = model.r().max(1);
    let h = model.h;
    let tau_max = r as f64 * h;
    let sigma_min = opts.sigma_min.unwrap_or(-50.0 / tau_max);
    let n = opts.n_cheb.max(6);

    // collocation of the generator on [-tau_max, 0]; node 0 maps to t = 0
    let (x, dch) = chebyshev_diff(n);
    let t_nodes: Vec<f64> = x.iter().map(|&xi| (xi - 1.0) * tau_max / 2.0).collect();
    let dt = dch * (2.0 / tau_max);

    let dim = (n + 1) * d;
    let mut a_n = DMatrix::zeros(dim, dim);
    let mut b_n = DMatrix::zeros(dim, dim);
    // interior and left-end rows: s v(t_i) = v'(t_i)
    for i in 1..=n {
        for j in 0..=n {
            for q in 0..d {
                a_n[(i * d + q, j * d + q)] = dt[(i, j)];
            }
        }
        for q in 0..d {
            b_n[(i * d + q, i * d + q)] = 1.0;
        }
    }
    // boundary row at t = 0: s E v(0) = A0 v(0) + sum_k Ak v(-k h)
    let e = model.e_matrix();
    b_n.view_mut((0, 0), (d, d)).copy_from(&e);
    {
        let mut blk = a_n.view_mut((0, 0), (d, d));
        blk += &model.a0;
    }
    for (k, ak) in model.delayed.iter().enumerate() {
        let ell = barycentric_coeffs(&t_nodes, -((k + 1) as f64) * h);
        for (j, &lj) in ell.iter().enumerate() {
            if lj == 0.0 {
                continue;
            }
            let mut blk = a_n.view_mut((0, j * d), (d, d));
            blk += lj * ak;
        }
    }

    // real shift-invert: eigenvalues mu of (A - sigma B)^{-1} B give
    // lambda = sigma + 1 / mu; the transform is exact, sigma only
    // affects conditioning
    // a failed LU or a stalled Schur iteration both mean the shift was
    // unlucky; perturb it and try again
    let mut sigma = 1.0 + 1.0 / tau_max;
    let mut mus = None;
    for attempt in 0..6 {
        let shifted = &a_n - sigma * &b_n;
        if let Some(sol) = shifted.lu().solve(&b_n) {
            if let Some(es) = bounded_eigenvalues(&sol, 20_000) {
                mus = Some(es);
                break;
            }
        }
        sigma = sigma * 1.6 + 0.371 * (attempt as f64 + 1.0);
    }
    let mus = mus.ok_or_else(|| PencilError::SingularMatrix {
        context: "shift-invert of the collocation problem".to_string(),
    })?;

    let mut seeds: Vec<Complex64> = Vec::new();
    for &mu in mus.iter() {
        if mu.norm() < 1e-12 {
            continue; // infinite eigenvalue of the singular part
        }
        let lam = sigma + 1.0 / mu;
        if !lam.re.is_finite() || !lam.im.is_finite() {
            continue;
        }
        // generous margin: refinement may pull a seed back across the cut
        if lam.re >= sigma_min - 5.0 / tau_max {
            seeds.push(lam);
        }
    }

    let mut roots: Vec<EigenRoot> = Vec::new();
    for seed in seeds {
        if exact_residual(model, seed) > 1e-2 {
            continue; // not near any root; refinement would wander
        }
        if let Some((s, res)) = refine_root(model, seed) {
            if res <= 1e-8 && s.re >= sigma_min {
                roots.push(EigenRoot { s, residual: res });
            }
        }
    }

    // snap near-real roots and deduplicate refined clusters
    for root in &mut roots {
        if root.s.im.abs() < 1e-9 * (1.0 + root.s.re.abs()) {
            root.s.im = 0.0;
        }
    }
    roots.sort_by(|a, b| a.s.re.total_cmp(&b.s.re).then(a.s.im.total_cmp(&b.s.im)));
    let mut unique: Vec<EigenRoot> = Vec::new();
    for root in roots {
        let dup = unique
            .iter()
            .any(|u| (u.s - root.s).norm() <= 1e-6 * (1.0 + root.s.norm()));
        if !dup {
            unique.push(root);
        }
    }
    Ok(EigenSpectrum::new(SpectrumDomain::Exact, unique))
}

/// Bordered Newton refinement of a characteristic root candidate:
/// solve `[T(s) v; c^H v - 1] = 0` for `(v, s)`.
fn refine_root(model: &LinearDelayModel, s0: Complex64) -> Option<(Complex64, f64)> {
    let d = model.dim();
    // deterministic pseudo-random start vector for the inverse iteration
    let mut v = DVector::from_fn(d, |i, _| {
        Complex64::new(
            (0.37 + 1.73 * i as f64).sin(),
            (0.91 + 2.39 * i as f64).cos(),
        )
    });
    v /= Complex64::new(v.norm(), 0.0);
    for jitter in 0..3 {
        let probe = s0 + Complex64::new(1e-10, 1e-10) * (jitter as f64);
        let t0 = characteristic_matrix(model, probe);
        if let Some(wv) = t0.lu().solve(&v) {
            let nrm = wv.norm();
            if nrm > 0.0 && nrm.is_finite() {
                v = wv / Complex64::new(nrm, 0.0);
                break;
            }
        }
    }
    let c = v.clone();
    let mut s = s0;
    for _ in 0..30 {
        let t = characteristic_matrix(model, s);
        let tp = characteristic_derivative(model, s);
        let top = &t * &v;
        let bot = c.dotc(&v) - Complex64::new(1.0, 0.0);
        let res = top.norm().max(bot.norm());
        if res <= 1e-13 * (1.0 + s.norm()) {
            break;
        }
        let mut j = DMatrix::<Complex64>::zeros(d + 1, d + 1);
        j.view_mut((0, 0), (d, d)).copy_from(&t);
        j.view_mut((0, d), (d, 1)).copy_from(&(&tp * &v));
        for q in 0..d {
            j[(d, q)] = c[q].conj();
        }
        let mut rhs = DVector::<Complex64>::zeros(d + 1);
        rhs.rows_mut(0, d).copy_from(&top);
        rhs[d] = bot;
        let delta = j.lu().solve(&rhs)?;
        for q in 0..d {
            v[q] -= delta[q];
        }
        let ds = delta[d];
        s -= ds;
        if !s.re.is_finite() || !s.im.is_finite() {
            return None;
        }
        if ds.norm() <= 1e-12 * (1.0 + s.norm()) {
            break;
        }
    }
    let res = exact_residual(model, s);
    Some((s, res))
}

// ---------------------------------------------------------------------------
// Deformation report and damping matching
// ---------------------------------------------------------------------------

/// An exact root matched with its deformed counterpart.
#[derive(Debug, Clone, Copy)]
pub struct RootPair {
    pub exact: Complex64,
    pub deformed: Complex64,
    pub distance: f64,
    pub zeta_exact: f64,
    pub zeta_deformed: f64,
}

/// Pairing of exact and deformed spectra by mutual nearest neighbors.
#[derive(Debug, Clone)]
pub struct DeformationReport {
    pub pairs: Vec<RootPair>,
    pub unmatched_exact: Vec<Complex64>,
    pub unmatched_deformed: Vec<Complex64>,
    pub max_distance: f64,
    pub rightmost_exact: Option<Complex64>,
    pub rightmost_deformed: Option<Complex64>,
}

/// Match the two spectra: a pair is formed when each root is the other's
/// nearest neighbor and the distance is below `0.1 (1 + |s_exact|)`.
pub fn deformation_report(exact: &EigenSpectrum, deformed: &EigenSpectrum) -> DeformationReport {
    let es: Vec<Complex64> = exact.roots.iter().map(|r| r.s).collect();
    let ds: Vec<Complex64> = deformed.roots.iter().map(|r| r.s).collect();

    let nearest = |from: Complex64, pool: &[Complex64]| -> Option<(usize, f64)> {
        pool.iter()
            .enumerate()
            .map(|(i, &s)| (i, (s - from).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    };

    let mut pairs = Vec::new();
    let mut matched_e = vec![false; es.len()];
    let mut matched_d = vec![false; ds.len()];
    for (i, &se) in es.iter().enumerate() {
        if let Some((j, dist)) = nearest(se, &ds) {
            if let Some((i_back, _)) = nearest(ds[j], &es) {
                if i_back == i && dist <= 0.1 * (1.0 + se.norm()) {
                    matched_e[i] = true;
                    matched_d[j] = true;
                    pairs.push(RootPair {
                        exact: se,
                        deformed: ds[j],
                        distance: dist,
                        zeta_exact: damping_ratio(se),
                        zeta_deformed: damping_ratio(ds[j]),
                    });
                }
            }
        }
    }
    let max_distance = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
    DeformationReport {
        unmatched_exact: es
            .iter()
            .zip(&matched_e)
            .filter(|(_, &m)| !m)
            .map(|(&s, _)| s)
            .collect(),
        unmatched_deformed: ds
            .iter()
            .zip(&matched_d)
            .filter(|(_, &m)| !m)
            .map(|(&s, _)| s)
            .collect(),
        pairs,
        max_distance,
        rightmost_exact: exact.rightmost().map(|r| r.s),
        rightmost_deformed: deformed.rightmost().map(|r| r.s),
    }
}

/// Result of the damping-matching search.
#[derive(Debug, Clone, Copy)]
pub struct ThetaMatchResult {
    pub theta: f64,
    pub tracked_root: Complex64,
    pub achieved_zeta: f64,
    pub target_zeta: f64,
    pub iterations: usize,
}

/// Deformed root nearest to `target` at a given theta.
fn track_root(
    model: &LinearDelayModel,
    theta: f64,
    target: Complex64,
) -> Result<Complex64, PencilError> {
    let pencil = build_discrete_pencil(model, theta)?;
    let spec = deformed_spectrum(&pencil)?;
    let found = spec
        .roots
        .iter()
        .map(|r| r.s)
        .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
        .ok_or(PencilError::TrackingLost { theta })?;
    if (found - target).norm() > 0.5 * (1.0 + target.norm()) {
        return Err(PencilError::TrackingLost { theta });
    }
    Ok(found)
}

/// Find the theta whose discretization reproduces the damping ratio of
/// an exact root `target`: sweep theta over the bracket in millistep
/// increments tracking the deformed image of `target`, then bisect the
/// first sign change of the damping mismatch.
pub fn theta_match(
    model: &LinearDelayModel,
    target: Complex64,
    theta_lo: f64,
    theta_hi: f64,
) -> Result<ThetaMatchResult, PencilError> {
    if !(0.0..=1.0).contains(&theta_lo) || !(0.0..=1.0).contains(&theta_hi) || theta_lo >= theta_hi
    {
        return Err(PencilError::Config(format!(
            "invalid theta bracket [{theta_lo}, {theta_hi}]"
        )));
    }
    let target_zeta = damping_ratio(target);
    let phi = |theta: f64, anchor: Complex64| -> Result<(f64, Complex64), PencilError> {
        let root = track_root(model, theta, anchor)?;
        Ok((damping_ratio(root) - target_zeta, root))
    };

    const SWEEP_STEP: f64 = 1e-3;
    let n_sweep = ((theta_hi - theta_lo) / SWEEP_STEP).ceil().max(1.0) as usize;
    let mut anchor = target;
    let (mut phi_prev, root_prev) = phi(theta_lo, anchor)?;
    anchor = root_prev;
    if phi_prev.abs() <= 1e-6 {
        return Ok(ThetaMatchResult {
            theta: theta_lo,
            tracked_root: anchor,
            achieved_zeta: phi_prev + target_zeta,
            target_zeta,
            iterations: 0,
        });
    }
    let mut bracket = None;
    let mut theta_prev = theta_lo;
    let mut anchor_prev = anchor;
    for i in 1..=n_sweep {
        let theta = (theta_lo + i as f64 * SWEEP_STEP).min(theta_hi);
        let (phi_cur, root_cur) = phi(theta, anchor)?;
        if phi_cur.abs() <= 1e-6 {
            return Ok(ThetaMatchResult {
                theta,
                tracked_root: root_cur,
                achieved_zeta: phi_cur + target_zeta,
                target_zeta,
                iterations: i,
            });
        }
        if phi_prev.signum() != phi_cur.signum() {
            bracket = Some((theta_prev, theta, anchor_prev));
            break;
        }
        theta_prev = theta;
        phi_prev = phi_cur;
        anchor_prev = root_cur;
        anchor = root_cur;
    }
    let (mut lo, mut hi, mut anchor) = bracket.ok_or_else(|| {
        let phi_hi_val = phi(theta_hi, anchor).map(|(p, _)| p).unwrap_or(f64::NAN);
        PencilError::NoSignChange {
            theta_lo,
            theta_hi,
            phi_lo: phi_prev,
            phi_hi: phi_hi_val,
        }
    })?;

    let (mut phi_lo, _) = phi(lo, anchor)?;
    let mut iterations = 0usize;
    let mut best = (lo, anchor, phi_lo);
    for _ in 0..60 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (phi_mid, root_mid) = phi(mid, anchor)?;
        anchor = root_mid;
        if phi_mid.abs() < best.2.abs() {
            best = (mid, root_mid, phi_mid);
        }
        if phi_mid.abs() <= 1e-6 || (hi - lo) < 1e-12 {
            break;
        }
        if phi_mid.signum() == phi_lo.signum() {
            lo = mid;
            phi_lo = phi_mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThetaMatchResult {
        theta: best.0,
        tracked_root: best.1,
        achieved_zeta: best.2 + target_zeta,
        target_zeta,
        iterations,
    })
}
