//! Independent oracles shared by the integration tests.
//!
//! Everything here is deliberately written from first principles, using
//! different algorithms than the library (RK4 method of steps, direct
//! companion assembly, scalar Newton on the characteristic equation), so
//! that agreement is meaningful evidence of correctness.

#![allow(dead_code)]

use ddae::ddae_core::LinearDelayModel;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Reference solution of the scalar DDE `x' = a x + b x(t - tau)` with
/// constant history 1, by classical RK4 method of steps on a fine grid
/// that divides the delay exactly. Returns the value at `t_end`
/// (assumed a multiple of the fine step).
pub fn method_of_steps_rk4(a: f64, b: f64, tau: f64, h_fine: f64, t_end: f64) -> f64 {
    let lag_steps = (tau / h_fine).round() as usize;
    assert!(
        (lag_steps as f64 * h_fine - tau).abs() < 1e-12,
        "fine step must divide the delay"
    );
    let n_steps = (t_end / h_fine).round() as usize;
    // hist[i] = x at t = (i - lag_steps) * h_fine
    let mut hist: Vec<f64> = vec![1.0; lag_steps + 1];
    let delayed_at = |hist: &Vec<f64>, idx_time: f64| -> f64 {
        // linear interpolation in the stored history (only the RK4
        // half-stages fall between grid points)
        let pos = idx_time + lag_steps as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if frac.abs() < 1e-12 {
            hist[i]
        } else {
            (1.0 - frac) * hist[i] + frac * hist[i + 1]
        }
    };
    for n in 0..n_steps {
        let x = *hist.last().unwrap();
        let t_idx = n as f64; // time in units of h_fine since t = 0
        let f = |x_now: f64, stage_offset: f64, hist: &Vec<f64>| -> f64 {
            a * x_now + b * delayed_at(hist, t_idx + stage_offset - lag_steps as f64)
        };
        let k1 = f(x, 0.0, &hist);
        let k2 = f(x + 0.5 * h_fine * k1, 0.5, &hist);
        let k3 = f(x + 0.5 * h_fine * k2, 0.5, &hist);
        let k4 = f(x + h_fine * k3, 1.0, &hist);
        let x_next = x + h_fine / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        hist.push(x_next);
    }
    *hist.last().unwrap()
}

/// Newton iteration on the scalar characteristic equation
/// `s = a + b e^{-s tau}` from a complex seed.
pub fn scalar_root_newton(a: f64, b: f64, tau: f64, seed: Complex64) -> Complex64 {
    let mut s = seed;
    for _ in 0..200 {
        let f = s - a - b * (-s * tau).exp();
        let fp = Complex64::new(1.0, 0.0) + b * tau * (-s * tau).exp();
        let step = f / fp;
        s -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    s
}

/// Brute-force one-step companion matrix of the Theta method applied to
/// a linear delay model, assembled directly from the step equations
/// without the intermediate D-block aggregation the library uses.
///
/// The step reads, with `v = (x, y)` and lags at exact grid multiples:
/// differential rows
/// `x_{n+1} - x_n = h theta [A0 v_n + sum_k Ak v_{n-k}]_f
///                + h (1-theta) [A0 v_{n+1} + sum_k Ak v_{n+1-k}]_f`
/// and algebraic rows `0 = [A0 v_{n+1} + sum_k Ak v_{n+1-k}]_g`.
pub fn brute_force_companion(model: &LinearDelayModel, theta: f64) -> DMatrix<f64> {
    let nu = model.nu;
    let mu = model.mu;
    let d = nu + mu;
    let r = model.delayed.len().max(1);
    let h = model.h;
    let a = |k: usize| -> DMatrix<f64> {
        if k == 0 {
            model.a0.clone()
        } else if k <= model.delayed.len() {
            model.delayed[k - 1].clone()
        } else {
            DMatrix::zeros(d, d)
        }
    };

    // lhs * v_{n+1} = sum_j rhs[j] * v_{n-j}
    let mut lhs = DMatrix::<f64>::zeros(d, d);
    let mut rhs = vec![DMatrix::<f64>::zeros(d, d); r + 1];
    for i in 0..nu {
        lhs[(i, i)] = 1.0;
        rhs[0][(i, i)] = 1.0;
    }
    // instantaneous terms (k = 0)
    for i in 0..nu {
        for j in 0..d {
            lhs[(i, j)] -= h * (1.0 - theta) * a(0)[(i, j)];
            rhs[0][(i, j)] += h * theta * a(0)[(i, j)];
        }
    }
    for i in nu..d {
        for j in 0..d {
            lhs[(i, j)] = a(0)[(i, j)];
        }
    }
    // delayed terms: implicit part references v_{n+1-k}, explicit v_{n-k}
    for k in 1..=r {
        let ak = a(k);
        for i in 0..nu {
            for j in 0..d {
                // v_{n+1-k} = v_{n-(k-1)}
                rhs[k - 1][(i, j)] += h * (1.0 - theta) * ak[(i, j)];
                rhs[k][(i, j)] += h * theta * ak[(i, j)];
            }
        }
        for i in nu..d {
            for j in 0..d {
                // algebraic rows collected at n+1: move to the right side
                rhs[k - 1][(i, j)] -= ak[(i, j)];
            }
        }
    }

    let lhs_inv = lhs
        .try_inverse()
        .expect("oracle: singular step matrix (model not index-1?)");
    let n = (r + 1) * d;
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for (j, blk) in rhs.iter().enumerate() {
        comp.view_mut((0, j * d), (d, d)).copy_from(&(&lhs_inv * blk));
    }
    for i in d..n {
        comp[(i, i - d)] = 1.0;
    }
    comp
}

/// Eigenvalues of the brute-force companion with magnitude above a cut.
pub fn companion_eigs(model: &LinearDelayModel, theta: f64, cut: f64) -> Vec<Complex64> {
    let comp = brute_force_companion(model, theta);
    let eigs = comp.complex_eigenvalues();
    let mut out: Vec<Complex64> = eigs.iter().cloned().filter(|z| z.norm() > cut).collect();
    out.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.re.total_cmp(&x.re)));
    out
}

/// Independent characteristic-matrix residual for an exact root claim:
/// smallest singular value of `s E - A0 - sum_k Ak e^{-s k h}`,
/// normalized by coefficient magnitudes.
pub fn independent_exact_residual(model: &LinearDelayModel, s: Complex64) -> f64 {
    let d = model.nu + model.mu;
    let mut t = DMatrix::<Complex64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let e = if i == j && i < model.nu { 1.0 } else { 0.0 };
            t[(i, j)] = s * e - model.a0[(i, j)];
        }
    }
    let mut scale = s.norm() + model.a0.norm();
    for (k, ak) in model.delayed.iter().enumerate() {
        let w = (-s * ((k + 1) as f64) * model.h).exp();
        for i in 0..d {
            for j in 0..d {
                t[(i, j)] -= w * ak[(i, j)];
            }
        }
        scale += ak.norm() * w.norm();
    }
    // bounded SVD: the unbounded call can spin on exactly singular input
    let smin = nalgebra::linalg::SVD::try_new(t, false, false, f64::EPSILON, 50_000)
        .map(|svd| {
            svd.singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(0.0);
    smin / scale
}

/// Least-squares slope of `ln(err)` against `ln(h)`: observed order of
/// convergence.
pub fn fitted_order(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .map(|(&h, &e)| (h.ln(), e.max(1e-300).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Greatest distance from each left root to its nearest right root,
/// relative to `1 + |z|`. Symmetric use gives set-to-set matching.
pub fn directed_match_distance(left: &[Complex64], right: &[Complex64]) -> f64 {
    let mut worst: f64 = 0.0;
    for &l in left {
        let best = right
            .iter()
            .map(|&r| (l - r).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best / (1.0 + l.norm()));
    }
    worst
}

/// Deterministic random linear delay model for oracle cross-checks.
/// Entry scales are moderate and the algebraic block is kept
/// well-conditioned so the model is index-1.
pub fn random_model(
    rng: &mut impl rand::Rng,
    max_nu: usize,
    max_mu: usize,
    max_r: usize,
) -> LinearDelayModel {
    let nu = rng.gen_range(1..=max_nu);
    let mu = rng.gen_range(0..=max_mu);
    let r = rng.gen_range(1..=max_r);
    let d = nu + mu;
    let h = rng.gen_range(0.02..0.2);
    let mut a0 = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    // dominant diagonal in the algebraic block keeps g_y invertible
    for i in nu..d {
        a0[(i, i)] += 3.0_f64.copysign(a0[(i, i)]);
    }
    // mild contraction on the differential diagonal
    for i in 0..nu {
        a0[(i, i)] -= 1.0;
    }
    let delayed: Vec<DMatrix<f64>> = (0..r)
        .map(|_| DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.5..0.5)))
        .collect();
    LinearDelayModel {
        nu,
        mu,
        a0,
        delayed,
        h,
    }
}

/// Convenience: dense vector literal.
pub fn vecd(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}
