//! Model catalog and JSON model ingestion.
//!
//! A model is either a named builtin (with overridable scalar
//! parameters) or a JSON file. The file form describes either a builtin
//! reference with parameter overrides, or an explicit linear delay
//! system given by its matrices. Every resolved model carries a content
//! hash so that output manifests pin down exactly what was analyzed.

use crate::ddae_core::{
    DdaeError, DdaeSystem, DelayJacobian, DelaySpec, JacobianFn, JacobianSet, RhsFn,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown builtin model '{0}' (available: scalar_dde, delayed_oscillator, multi_delay_chain)")]
    UnknownBuiltin(String),
    #[error("unknown parameter '{param}' for model '{model}' (accepts: {accepts})")]
    UnknownParam {
        model: String,
        param: String,
        accepts: String,
    },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    System(#[from] DdaeError),
}

/// A fully resolved model ready for analysis.
pub struct ResolvedModel {
    pub name: String,
    pub system: DdaeSystem,
    /// Effective scalar parameters after overrides (builtins only).
    pub params: BTreeMap<String, f64>,
    /// Hex SHA-256 of the canonical model description.
    pub hash: String,
    /// Starting guess for the equilibrium search.
    pub x_guess: DVector<f64>,
    pub y_guess: DVector<f64>,
}

pub fn builtin_names() -> Vec<&'static str> {
    vec!["scalar_dde", "delayed_oscillator", "multi_delay_chain"]
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    /// Builtin reference form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Explicit linear form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<usize>,
    /// Delay-free coefficient matrix, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delays: Vec<DelayEntry>,
    /// Optional mass matrix; must equal diag(I_nu, 0_mu) when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    /// Constant history (and equilibrium guess) for the state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayEntry {
    pub tau: f64,
    /// Coefficient of the lagged state, row-major `d x d`.
    pub matrix: Vec<Vec<f64>>,
}

/// Resolve a model reference: a builtin name, or a path to a JSON file.
pub fn load_model(
    reference: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<ResolvedModel, ModelError> {
    if builtin_names().contains(&reference) {
        return build_builtin(reference, overrides);
    }
    let path = Path::new(reference);
    if !path.exists() {
        return Err(ModelError::UnknownBuiltin(reference.to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if let Some(builtin) = &file.builtin {
        let mut params = file.params.clone();
        for (k, v) in overrides {
            params.insert(k.clone(), *v);
        }
        return build_builtin(builtin, &params);
    }
    build_linear(&file, overrides)
}

fn model_hash(canonical: &impl Serialize) -> String {
    let text = serde_json::to_string(canonical).expect("canonical model serialization");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn merged_params(
    model: &str,
    defaults: &[(&str, f64)],
    overrides: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut params: BTreeMap<String, f64> = defaults
        .iter()
        .map(|&(k, v)| (k.to_string(), v))
        .collect();
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(ModelError::UnknownParam {
                model: model.to_string(),
                param: k.clone(),
                accepts: defaults
                    .iter()
                    .map(|&(k, _)| k)
                    .collect::<Vec<_>>()
                    .join(", "),
            });
        }
        if !v.is_finite() {
            return Err(ModelError::Invalid(format!(
                "parameter '{k}' must be finite, got {v}"
            )));
        }
        params.insert(k.clone(), *v);
    }
    Ok(params)
}

fn build_builtin(
    name: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<ResolvedModel, ModelError> {
    match name {
        "scalar_dde" => scalar_dde(overrides),
        "delayed_oscillator" => delayed_oscillator(overrides),
        "multi_delay_chain" => multi_delay_chain(overrides),
        _ => Err(ModelError::UnknownBuiltin(name.to_string())),
    }
}

#[derive(Serialize)]
struct CanonicalBuiltin<'a> {
    builtin: &'a str,
    params: &'a BTreeMap<String, f64>,
}

fn vecd(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

/// `x' = a x + b x(t - tau)` with constant history 1.
fn scalar_dde(overrides: &BTreeMap<String, f64>) -> Result<ResolvedModel, ModelError> {
    let params = merged_params(
        "scalar_dde",
        &[("a", -1.0), ("b", -0.5), ("tau", 1.0)],
        overrides,
    )?;
    let a = params["a"];
    let b = params["b"];
    let tau = params["tau"];
    let hash = model_hash(&CanonicalBuiltin {
        builtin: "scalar_dde",
        params: &params,
    });
    let f: RhsFn = Box::new(move |x, _y, lags| vecd(&[a * x[0] + b * lags[0].x[0]]));
    let g: RhsFn = Box::new(|_x, _y, _lags| DVector::zeros(0));
    let jac: JacobianFn = Box::new(move |_x, _y, _lags| JacobianSet {
        fx: DMatrix::from_element(1, 1, a),
        fy: DMatrix::zeros(1, 0),
        gx: DMatrix::zeros(0, 1),
        gy: DMatrix::zeros(0, 0),
        delayed: vec![DelayJacobian {
            fx: DMatrix::from_element(1, 1, b),
            fy: DMatrix::zeros(1, 0),
            gx: DMatrix::zeros(0, 1),
            gy: DMatrix::zeros(0, 0),
        }],
    });
    let system = DdaeSystem {
        nu: 1,
        mu: 0,
        delays: vec![DelaySpec::new(tau, "tau").map_err(ModelError::System)?],
        f,
        g,
        history: Box::new(|_t| (vecd(&[1.0]), DVector::zeros(0))),
        jacobians: Some(jac),
    };
    Ok(ResolvedModel {
        name: "scalar_dde".to_string(),
        system,
        params,
        hash,
        x_guess: vecd(&[0.0]),
        y_guess: DVector::zeros(0),
    })
}

/// Pendulum-like oscillator with delayed position feedback:
/// `x1' = x2; x2' = -omega0^2 sin(x1) - 2 zeta0 omega0 x2 - g x1(t - tau)`.
fn delayed_oscillator(overrides: &BTreeMap<String, f64>) -> Result<ResolvedModel, ModelError> {
    let params = merged_params(
        "delayed_oscillator",
        &[("omega0", 2.0), ("zeta0", 0.1), ("g", 0.5), ("tau", 0.25)],
        overrides,
    )?;
    let omega0 = params["omega0"];
    let zeta0 = params["zeta0"];
    let gain = params["g"];
    let tau = params["tau"];
    let hash = model_hash(&CanonicalBuiltin {
        builtin: "delayed_oscillator",
        params: &params,
    });
    let f: RhsFn = Box::new(move |x, _y, lags| {
        vecd(&[
            x[1],
            -omega0 * omega0 * x[0].sin() - 2.0 * zeta0 * omega0 * x[1] - gain * lags[0].x[0],
        ])
    });
    let g: RhsFn = Box::new(|_x, _y, _lags| DVector::zeros(0));
    let jac: JacobianFn = Box::new(move |x, _y, _lags| JacobianSet {
        fx: DMatrix::from_row_slice(
            2,
            2,
            &[
                0.0,
                1.0,
                -omega0 * omega0 * x[0].cos(),
                -2.0 * zeta0 * omega0,
            ],
        ),
        fy: DMatrix::zeros(2, 0),
        gx: DMatrix::zeros(0, 2),
        gy: DMatrix::zeros(0, 0),
        delayed: vec![DelayJacobian {
            fx: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -gain, 0.0]),
            fy: DMatrix::zeros(2, 0),
            gx: DMatrix::zeros(0, 2),
            gy: DMatrix::zeros(0, 0),
        }],
    });
    let system = DdaeSystem {
        nu: 2,
        mu: 0,
        delays: vec![DelaySpec::new(tau, "tau").map_err(ModelError::System)?],
        f,
        g,
        history: Box::new(|_t| (vecd(&[0.0, 0.0]), DVector::zeros(0))),
        jacobians: Some(jac),
    };
    Ok(ResolvedModel {
        name: "delayed_oscillator".to_string(),
        system,
        params,
        hash,
        x_guess: vecd(&[0.0, 0.0]),
        y_guess: DVector::zeros(0),
    })
}

/// Lightly damped oscillator driven through a chain of delayed
/// measurements of an algebraic output:
/// `x1' = x2; x2' = -omega^2 x1 - 2 zeta omega x2
///  - (beta g / m) sum_{i=1..m} y(t - i tau0); 0 = y - x1`.
fn multi_delay_chain(overrides: &BTreeMap<String, f64>) -> Result<ResolvedModel, ModelError> {
    let params = merged_params(
        "multi_delay_chain",
        &[
            ("omega", 19.4),
            ("zeta", 0.005),
            ("g", 8.0),
            ("m", 3.0),
            ("tau0", 0.06),
            ("beta", 1.0),
        ],
        overrides,
    )?;
    let omega = params["omega"];
    let zeta = params["zeta"];
    let gain = params["g"];
    let m_taps = params["m"].round() as usize;
    if m_taps == 0 || (params["m"] - m_taps as f64).abs() > 1e-9 {
        return Err(ModelError::Invalid(format!(
            "parameter 'm' must be a positive integer, got {}",
            params["m"]
        )));
    }
    let tau0 = params["tau0"];
    let beta = params["beta"];
    let hash = model_hash(&CanonicalBuiltin {
        builtin: "multi_delay_chain",
        params: &params,
    });
    let tap_gain = beta * gain / m_taps as f64;
    let f: RhsFn = Box::new(move |x, _y, lags| {
        let fed: f64 = lags.iter().map(|l| l.y[0]).sum();
        vecd(&[
            x[1],
            -omega * omega * x[0] - 2.0 * zeta * omega * x[1] - tap_gain * fed,
        ])
    });
    let g: RhsFn = Box::new(|x, y, _lags| vecd(&[y[0] - x[0]]));
    let jac: JacobianFn = Box::new(move |_x, _y, lags| JacobianSet {
        fx: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -omega * omega, -2.0 * zeta * omega]),
        fy: DMatrix::zeros(2, 1),
        gx: DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
        gy: DMatrix::from_element(1, 1, 1.0),
        delayed: (0..lags.len())
            .map(|_| DelayJacobian {
                fx: DMatrix::zeros(2, 2),
                fy: DMatrix::from_row_slice(2, 1, &[0.0, -tap_gain]),
                gx: DMatrix::zeros(1, 2),
                gy: DMatrix::zeros(1, 1),
            })
            .collect(),
    });
    let delays: Vec<DelaySpec> = (1..=m_taps)
        .map(|i| DelaySpec::new(i as f64 * tau0, format!("tap-{i}")))
        .collect::<Result<_, _>>()
        .map_err(ModelError::System)?;
    let system = DdaeSystem {
        nu: 2,
        mu: 1,
        delays,
        f,
        g,
        history: Box::new(|_t| (vecd(&[0.0, 0.0]), vecd(&[0.0]))),
        jacobians: Some(jac),
    };
    Ok(ResolvedModel {
        name: "multi_delay_chain".to_string(),
        system,
        params,
        hash,
        x_guess: vecd(&[0.0, 0.0]),
        y_guess: vecd(&[0.0]),
    })
}

fn parse_matrix(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    what: &str,
) -> Result<DMatrix<f64>, ModelError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Invalid(format!(
            "{what} must be {nrows}x{ncols} (row-major)"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Invalid(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn build_linear(
    file: &ModelFile,
    overrides: &BTreeMap<String, f64>,
) -> Result<ResolvedModel, ModelError> {
    if !overrides.is_empty() {
        return Err(ModelError::Invalid(
            "parameter overrides apply to builtin models only".to_string(),
        ));
    }
    let name = file.name.clone().unwrap_or_else(|| "linear".to_string());
    let nu = file
        .nu
        .ok_or_else(|| ModelError::Invalid("linear model requires 'nu'".to_string()))?;
    let mu = file.mu.unwrap_or(0);
    let d = nu + mu;
    if nu == 0 {
        return Err(ModelError::Invalid(
            "linear model requires at least one differential variable".to_string(),
        ));
    }
    let a0_rows = file
        .a0
        .as_ref()
        .ok_or_else(|| ModelError::Invalid("linear model requires 'a0'".to_string()))?;
    let a0 = parse_matrix(a0_rows, d, d, "a0")?;
    let mut delays = Vec::new();
    let mut delay_mats = Vec::new();
    for (i, entry) in file.delays.iter().enumerate() {
        delays.push(DelaySpec::new(entry.tau, format!("delay-{}", i + 1)).map_err(ModelError::System)?);
        delay_mats.push(parse_matrix(&entry.matrix, d, d, &format!("delays[{i}].matrix"))?);
    }
    if let Some(e_rows) = &file.e {
        let e = parse_matrix(e_rows, d, d, "e")?;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j && i < nu { 1.0 } else { 0.0 };
                if (e[(i, j)] - want).abs() > 1e-12 {
                    return Err(ModelError::Invalid(
                        "mass matrix 'e' must equal diag(I_nu, 0_mu)".to_string(),
                    ));
                }
            }
        }
    }
    let x0 = match &file.x0 {
        Some(v) if v.len() == nu => vecd(v),
        Some(v) => {
            return Err(ModelError::Invalid(format!(
                "x0 has length {}, expected nu = {nu}",
                v.len()
            )))
        }
        None => DVector::zeros(nu),
    };
    let y0 = match &file.y0 {
        Some(v) if v.len() == mu => vecd(v),
        Some(v) => {
            return Err(ModelError::Invalid(format!(
                "y0 has length {}, expected mu = {mu}",
                v.len()
            )))
        }
        None => DVector::zeros(mu),
    };

    #[derive(Serialize)]
    struct CanonicalLinear<'a> {
        name: &'a str,
        nu: usize,
        mu: usize,
        a0: &'a [Vec<f64>],
        delays: Vec<(f64, &'a [Vec<f64>])>,
        x0: Vec<f64>,
        y0: Vec<f64>,
    }
    let hash = model_hash(&CanonicalLinear {
        name: &name,
        nu,
        mu,
        a0: a0_rows,
        delays: file
            .delays
            .iter()
            .map(|e| (e.tau, e.matrix.as_slice()))
            .collect(),
        x0: x0.iter().cloned().collect(),
        y0: y0.iter().cloned().collect(),
    });

    let apply = move |a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v.rows_mut(0, nu).copy_from(x);
        v.rows_mut(nu, mu).copy_from(y);
        a * v
    };
    let a0_f = a0.clone();
    let mats_f = delay_mats.clone();
    let f: RhsFn = Box::new(move |x, y, lags| {
        let mut total = apply(&a0_f, x, y);
        for (a, l) in mats_f.iter().zip(lags) {
            total += apply(a, &l.x, &l.y);
        }
        total.rows(0, nu).clone_owned()
    });
    let a0_g = a0.clone();
    let mats_g = delay_mats.clone();
    let g: RhsFn = Box::new(move |x, y, lags| {
        let mut total = apply(&a0_g, x, y);
        for (a, l) in mats_g.iter().zip(lags) {
            total += apply(a, &l.x, &l.y);
        }
        total.rows(nu, mu).clone_owned()
    });
    let a0_j = a0.clone();
    let mats_j = delay_mats.clone();
    let jac: JacobianFn = Box::new(move |_x, _y, _lags| JacobianSet {
        fx: a0_j.view((0, 0), (nu, nu)).clone_owned(),
        fy: a0_j.view((0, nu), (nu, mu)).clone_owned(),
        gx: a0_j.view((nu, 0), (mu, nu)).clone_owned(),
        gy: a0_j.view((nu, nu), (mu, mu)).clone_owned(),
        delayed: mats_j
            .iter()
            .map(|a| DelayJacobian {
                fx: a.view((0, 0), (nu, nu)).clone_owned(),
                fy: a.view((0, nu), (nu, mu)).clone_owned(),
                gx: a.view((nu, 0), (mu, nu)).clone_owned(),
                gy: a.view((nu, nu), (mu, mu)).clone_owned(),
            })
            .collect(),
    });
    let hist_x = x0.clone();
    let hist_y = y0.clone();
    let system = DdaeSystem {
        nu,
        mu,
        delays,
        f,
        g,
        history: Box::new(move |_t| (hist_x.clone(), hist_y.clone())),
        jacobians: Some(jac),
    };
    Ok(ResolvedModel {
        name,
        system,
        params: BTreeMap::new(),
        hash,
        x_guess: x0,
        y_guess: y0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddae_core::{find_equilibrium, linearize, numeric_jacobians, Lagged};
    use approx::assert_relative_eq;
    use std::io::Write;

    fn no_overrides() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn builtins_resolve_and_validate() {
        for name in builtin_names() {
            let m = load_model(name, &no_overrides()).unwrap();
            m.system.validate().unwrap();
            assert_eq!(m.hash.len(), 64);
        }
    }

    #[test]
    fn overrides_change_hash_and_params() {
        let base = load_model("scalar_dde", &no_overrides()).unwrap();
        let mut ov = BTreeMap::new();
        ov.insert("b".to_string(), -0.7);
        let changed = load_model("scalar_dde", &ov).unwrap();
        assert_ne!(base.hash, changed.hash);
        assert_eq!(changed.params["b"], -0.7);
        assert_eq!(changed.params["a"], -1.0);
        // same overrides -> same hash (determinism)
        let again = load_model("scalar_dde", &ov).unwrap();
        assert_eq!(changed.hash, again.hash);
    }

    #[test]
    fn unknown_names_and_params_are_rejected() {
        assert!(matches!(
            load_model("no_such_model", &no_overrides()),
            Err(ModelError::UnknownBuiltin(_))
        ));
        let mut ov = BTreeMap::new();
        ov.insert("gamma".to_string(), 1.0);
        assert!(matches!(
            load_model("scalar_dde", &ov),
            Err(ModelError::UnknownParam { .. })
        ));
    }

    #[test]
    fn builtin_analytic_jacobians_match_finite_differences() {
        for name in builtin_names() {
            let m = load_model(name, &no_overrides()).unwrap();
            let sys = &m.system;
            let x = DVector::from_fn(sys.nu, |i, _| 0.11 + 0.07 * i as f64);
            let y = DVector::from_fn(sys.mu, |i, _| -0.05 + 0.04 * i as f64);
            let lags: Vec<Lagged> = sys
                .delays
                .iter()
                .enumerate()
                .map(|(i, _)| Lagged {
                    x: DVector::from_fn(sys.nu, |j, _| 0.03 * (i + j + 1) as f64),
                    y: DVector::from_fn(sys.mu, |j, _| -0.02 * (i + j + 1) as f64),
                })
                .collect();
            let ana = sys.jacobians_at(&x, &y, &lags);
            let num = numeric_jacobians(sys, &x, &y, &lags);
            assert_relative_eq!(ana.fx, num.fx, epsilon = 1e-6);
            assert_relative_eq!(ana.fy, num.fy, epsilon = 1e-6);
            assert_relative_eq!(ana.gx, num.gx, epsilon = 1e-6);
            assert_relative_eq!(ana.gy, num.gy, epsilon = 1e-6);
            for (a, n) in ana.delayed.iter().zip(&num.delayed) {
                assert_relative_eq!(a.fx, n.fx, epsilon = 1e-6);
                assert_relative_eq!(a.fy, n.fy, epsilon = 1e-6);
                assert_relative_eq!(a.gx, n.gx, epsilon = 1e-6);
                assert_relative_eq!(a.gy, n.gy, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn chain_equilibrium_and_linearization_shape() {
        let m = load_model("multi_delay_chain", &no_overrides()).unwrap();
        let eq = find_equilibrium(&m.system, &m.x_guess, &m.y_guess).unwrap();
        assert_relative_eq!(eq.x.amax(), 0.0, epsilon = 1e-12);
        let lin = linearize(&m.system, &eq, 0.02).unwrap();
        // delays 0.06, 0.12, 0.18 on h = 0.02: lags 3, 6, 9
        assert_eq!(lin.r(), 9);
        assert_relative_eq!(lin.delayed[2][(1, 2)], -8.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(lin.delayed[5][(1, 2)], -8.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(lin.delayed[8][(1, 2)], -8.0 / 3.0, epsilon = 1e-9);
        assert!(lin.is_index1());
    }

    #[test]
    fn linear_model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut fh = std::fs::File::create(&path).unwrap();
        write!(
            fh,
            r#"{{
                "name": "test_linear",
                "nu": 1, "mu": 1,
                "a0": [[-1.0, 0.5], [-1.0, 1.0]],
                "delays": [ {{ "tau": 0.4, "matrix": [[-0.3, 0.0], [0.0, 0.0]] }} ],
                "e": [[1.0, 0.0], [0.0, 0.0]],
                "x0": [0.0], "y0": [0.0]
            }}"#
        )
        .unwrap();
        drop(fh);
        let m = load_model(path.to_str().unwrap(), &no_overrides()).unwrap();
        m.system.validate().unwrap();
        assert_eq!(m.system.nu, 1);
        assert_eq!(m.system.mu, 1);
        assert_eq!(m.system.delays.len(), 1);
        let eq = find_equilibrium(&m.system, &m.x_guess, &m.y_guess).unwrap();
        let lin = linearize(&m.system, &eq, 0.1).unwrap();
        assert_eq!(lin.r(), 4);
        assert_relative_eq!(lin.a0[(0, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(lin.delayed[3][(0, 0)], -0.3, epsilon = 1e-12);
    }

    #[test]
    fn linear_model_file_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let write_model = |name: &str, body: &str| -> String {
            let path = dir.path().join(name);
            std::fs::write(&path, body).unwrap();
            path.to_str().unwrap().to_string()
        };
        // wrong a0 shape
        let p = write_model(
            "bad_shape.json",
            r#"{ "name": "x", "nu": 2, "a0": [[1.0]] }"#,
        );
        assert!(matches!(
            load_model(&p, &no_overrides()),
            Err(ModelError::Invalid(_))
        ));
        // bad mass matrix
        let p = write_model(
            "bad_e.json",
            r#"{ "name": "x", "nu": 1, "a0": [[-1.0]], "e": [[2.0]] }"#,
        );
        assert!(matches!(
            load_model(&p, &no_overrides()),
            Err(ModelError::Invalid(_))
        ));
        // malformed JSON
        let p = write_model("garbage.json", "not json at all");
        assert!(matches!(
            load_model(&p, &no_overrides()),
            Err(ModelError::Parse(_))
        ));
    }

    #[test]
    fn builtin_reference_file_with_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.json");
        std::fs::write(
            &path,
            r#"{ "builtin": "scalar_dde", "params": { "b": -0.9 } }"#,
        )
        .unwrap();
        let m = load_model(path.to_str().unwrap(), &no_overrides()).unwrap();
        assert_eq!(m.params["b"], -0.9);
        // CLI overrides win over file params
        let mut ov = BTreeMap::new();
        ov.insert("b".to_string(), -0.2);
        let m2 = load_model(path.to_str().unwrap(), &ov).unwrap();
        assert_eq!(m2.params["b"], -0.2);
    }
}
