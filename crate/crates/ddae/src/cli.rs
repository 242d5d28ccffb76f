//! Command-line driver.
//!
//! Subcommands:
//!
//! - `region`: rasterize the stability region of the Theta method on the
//!   scalar test equations.
//! - `simulate`: integrate a model in the time domain.
//! - `pencil`: exact vs deformed spectra of a linearized model, over one
//!   step size or a sweep.
//! - `theta-match`: find the theta whose discretization reproduces the
//!   damping of the exact rightmost mode.
//!
//! Exit codes: 0 success, 2 configuration error, 3 model error,
//! 4 numerical failure, 5 I/O error.

use crate::dde_scalar::{self, RasterBounds, ScalarError, ScanTarget};
use crate::ddae_core::{find_equilibrium, linearize, DdaeError};
use crate::export::{self, RunManifest};
use crate::model_io::{self, ModelError};
use crate::pencil_analysis::{
    build_discrete_pencil, damping_ratio, deformation_report, deformed_spectrum, exact_spectrum,
    theta_match, ExactOptions, PencilError,
};
use crate::theta_integrator::{growth_rate, simulate, Event, IntegratorError};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Model(_) => 3,
            Self::Numerical(_) => 4,
            Self::Io(_) => 5,
        }
    }
}

impl From<ScalarError> for CliError {
    fn from(e: ScalarError) -> Self {
        match e {
            ScalarError::Config(_) => Self::Config(e.to_string()),
            ScalarError::Pole { .. } => Self::Numerical(e.to_string()),
        }
    }
}

impl From<PencilError> for CliError {
    fn from(e: PencilError) -> Self {
        match e {
            PencilError::Config(_) | PencilError::Dimension(_) => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<IntegratorError> for CliError {
    fn from(e: IntegratorError) -> Self {
        match e {
            IntegratorError::Config(_) => Self::Config(e.to_string()),
            IntegratorError::System(inner) => inner.into(),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<DdaeError> for CliError {
    fn from(e: DdaeError) -> Self {
        match e {
            DdaeError::Config(_) | DdaeError::Dimension(_) => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ddae",
    version,
    about = "Theta-method stability analysis for delay differential-algebraic systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize the stability region of the Theta method on the scalar
    /// test equations.
    Region(RegionArgs),
    /// Integrate a model in the time domain.
    Simulate(SimulateArgs),
    /// Exact vs method-deformed spectra of a linearized model.
    Pencil(PencilArgs),
    /// Find the theta that reproduces the exact damping of the
    /// rightmost mode.
    ThetaMatch(ThetaMatchArgs),
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    /// Method parameter in [0, 1] (0.5 = trapezoidal, 0 = backward Euler).
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Scan rule: a preset (b-eq-0, a-eq-0, b-eq-a, a-eq-1.1b,
    /// b-eq-0.15a, a-eq-0.85b) or an expression such as "b=0.3a".
    #[arg(long, default_value = "b-eq-0")]
    pub scan: String,
    /// Window of the swept parameter: re_min,re_max,im_min,im_max.
    #[arg(long, default_value = "-5,5,-5,5", allow_hyphen_values = true)]
    pub bounds: String,
    #[arg(long, default_value_t = 400)]
    pub nx: usize,
    #[arg(long, default_value_t = 400)]
    pub ny: usize,
    /// Delay as a whole number of steps (the lag is delay_steps * h).
    #[arg(long, default_value_t = 1)]
    pub delay_steps: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Builtin model name or path to a model JSON file.
    #[arg(long, default_value = "scalar_dde")]
    pub model: String,
    /// Shortcut for the 'a' parameter of the model.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Shortcut for the 'b' parameter of the model.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Shortcut for the 'tau' parameter of the model.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Shortcut for the 'beta' parameter of the model.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Generic parameter override, e.g. --set omega=20.0 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ModelArgs {
    pub fn overrides(&self) -> Result<BTreeMap<String, f64>, CliError> {
        let mut map = BTreeMap::new();
        if let Some(v) = self.a {
            map.insert("a".to_string(), v);
        }
        if let Some(v) = self.b {
            map.insert("b".to_string(), v);
        }
        if let Some(v) = self.tau {
            map.insert("tau".to_string(), v);
        }
        if let Some(v) = self.beta {
            map.insert("beta".to_string(), v);
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--set expects KEY=VALUE, got '{s}'"))
            })?;
            let val: f64 = v
                .parse()
                .map_err(|_| CliError::Config(format!("cannot parse '{v}' as a number")))?;
            map.insert(k.trim().to_string(), val);
        }
        Ok(map)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Step size.
    #[arg(long = "h", default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    /// Instantaneous state disturbance "t:dx1,dx2,..." (repeatable).
    #[arg(long = "event", value_name = "T:DX1,DX2,...")]
    pub events: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PencilArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Step size (ignored when --h-sweep is given).
    #[arg(long = "h", default_value_t = 0.02)]
    pub h: f64,
    /// Step-size sweep "lo:hi:logN" or "lo:hi:linN".
    #[arg(long)]
    pub h_sweep: Option<String>,
    /// Chebyshev degree of the exact-spectrum collocation.
    #[arg(long, default_value_t = 24)]
    pub n_cheb: usize,
    /// Discard exact roots with real part below this.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_min: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThetaMatchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Step size.
    #[arg(long = "h", default_value_t = 0.02)]
    pub h: f64,
    #[arg(long, default_value_t = 0.3)]
    pub theta_lo: f64,
    #[arg(long, default_value_t = 0.7)]
    pub theta_hi: f64,
    /// Chebyshev degree of the exact-spectrum collocation.
    #[arg(long, default_value_t = 24)]
    pub n_cheb: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Run a parsed command line; the argument list is recorded in the
/// manifest verbatim.
pub fn run(cli: Cli, raw_args: Vec<String>) -> Result<(), CliError> {
    match cli.command {
        Command::Region(args) => run_region(args, raw_args),
        Command::Simulate(args) => run_simulate(args, raw_args),
        Command::Pencil(args) => run_pencil(args, raw_args),
        Command::ThetaMatch(args) => run_theta_match(args, raw_args),
    }
}

fn parse_bounds(text: &str) -> Result<RasterBounds, CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("cannot parse bounds '{text}'")))?;
    if parts.len() != 4 {
        return Err(CliError::Config(format!(
            "bounds need 4 comma-separated numbers, got {}",
            parts.len()
        )));
    }
    Ok(RasterBounds::new(parts[0], parts[1], parts[2], parts[3])?)
}

fn parse_scan(text: &str) -> Result<ScanTarget, CliError> {
    if let Some(preset) = ScanTarget::preset(text) {
        return Ok(preset);
    }
    Ok(ScanTarget::parse_rule(text)?)
}

fn parse_event(text: &str) -> Result<Event, CliError> {
    let (t_str, dx_str) = text
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("event expects T:DX1,DX2,..., got '{text}'")))?;
    let t: f64 = t_str
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse event time '{t_str}'")))?;
    let dx: Vec<f64> = dx_str
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("cannot parse event disturbance '{dx_str}'")))?;
    Ok(Event {
        t,
        dx: DVector::from_row_slice(&dx),
    })
}

/// Parse "lo:hi:logN" / "lo:hi:linN" into a list of step sizes.
fn parse_h_sweep(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("cannot parse h sweep '{text}' (want lo:hi:logN)"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0) || !(hi > lo) {
        return Err(CliError::Config(format!(
            "h sweep needs 0 < lo < hi, got {lo}..{hi}"
        )));
    }
    let tail = parts[2].trim();
    let (log, n_str) = if let Some(rest) = tail.strip_prefix("log") {
        (true, rest)
    } else if let Some(rest) = tail.strip_prefix("lin") {
        (false, rest)
    } else {
        return Err(bad());
    };
    let n: usize = n_str.parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(CliError::Config("h sweep needs at least 2 points".into()));
    }
    let mut hs = Vec::with_capacity(n);
    for i in 0..n {
        let f = i as f64 / (n - 1) as f64;
        let h = if log {
            (lo.ln() + f * (hi.ln() - lo.ln())).exp()
        } else {
            lo + f * (hi - lo)
        };
        hs.push(h);
    }
    Ok(hs)
}

fn run_region(args: RegionArgs, raw_args: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let bounds = parse_bounds(&args.bounds)?;
    let scan = parse_scan(&args.scan)?;
    let raster = dde_scalar::stability_raster_k(
        bounds,
        args.nx,
        args.ny,
        args.theta,
        scan,
        args.delay_steps,
    )?;
    let csv = args.out_dir.join("region_raster.csv");
    let pgm = args.out_dir.join("region_raster.pgm");
    export::write_raster_csv(&csv, &raster)?;
    export::write_raster_pgm(&pgm, &raster)?;

    let mut manifest = RunManifest::new(raw_args, "scalar-test-equation", "-");
    manifest.params.insert("theta".into(), args.theta);
    manifest
        .params
        .insert("delay_steps".into(), args.delay_steps as f64);
    manifest.outputs = vec![
        csv.to_string_lossy().into_owned(),
        pgm.to_string_lossy().into_owned(),
    ];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir.join("manifest.json"))?;

    let stable = raster.stable_mask.iter().filter(|&&s| s).count();
    println!(
        "region: {} of {} cells stable ({}), theta = {}",
        stable,
        raster.nx * raster.ny,
        scan.describe(),
        args.theta
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    status: String,
    steps: usize,
    growth_rate: Option<f64>,
    final_norm: f64,
}

fn run_simulate(args: SimulateArgs, raw_args: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let overrides = args.model.overrides()?;
    let model = model_io::load_model(&args.model.model, &overrides)?;
    let events: Vec<Event> = args
        .events
        .iter()
        .map(|e| parse_event(e))
        .collect::<Result<_, _>>()?;
    for ev in &events {
        if ev.dx.len() != model.system.nu {
            return Err(CliError::Config(format!(
                "event disturbance has {} entries, model has nu = {}",
                ev.dx.len(),
                model.system.nu
            )));
        }
    }
    let result = simulate(&model.system, args.theta, args.h, args.t_end, &events)?;
    let traj = args.out_dir.join("trajectory.csv");
    export::write_trajectory_csv(&traj, &result)?;

    let rate = growth_rate(&result, 0.5);
    let summary = SimulationSummary {
        status: export::status_str(&result.status),
        steps: result.t.len().saturating_sub(1),
        growth_rate: rate,
        final_norm: result.x.last().map_or(0.0, |x| x.norm()),
    };
    let summary_path = args.out_dir.join("simulation.json");
    {
        let file = std::fs::File::create(&summary_path)?;
        serde_json::to_writer_pretty(file, &summary).map_err(std::io::Error::from)?;
    }

    let mut manifest = RunManifest::new(raw_args, &model.name, &model.hash);
    manifest.params = model.params.clone();
    manifest.params.insert("theta".into(), args.theta);
    manifest.params.insert("h".into(), args.h);
    manifest.params.insert("t_end".into(), args.t_end);
    manifest.outputs = vec![
        traj.to_string_lossy().into_owned(),
        summary_path.to_string_lossy().into_owned(),
    ];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir.join("manifest.json"))?;

    println!(
        "simulate: {} after {} steps, growth rate {}",
        summary.status,
        summary.steps,
        rate.map_or("n/a".to_string(), |r| format!("{r:.6}"))
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry {
    index: usize,
    h: f64,
    theta: f64,
    rightmost_exact_re: Option<f64>,
    rightmost_exact_im: Option<f64>,
    rightmost_deformed_re: Option<f64>,
    rightmost_deformed_im: Option<f64>,
    stability_agreement: Option<bool>,
}

fn run_pencil(args: PencilArgs, raw_args: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let overrides = args.model.overrides()?;
    let model = model_io::load_model(&args.model.model, &overrides)?;
    let hs = match &args.h_sweep {
        Some(spec) => parse_h_sweep(spec)?,
        None => vec![args.h],
    };
    let eq = find_equilibrium(&model.system, &model.x_guess, &model.y_guess)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let opts = ExactOptions {
        n_cheb: args.n_cheb,
        sigma_min: args.sigma_min,
    };
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for (i, &h) in hs.iter().enumerate() {
        let lin = linearize(&model.system, &eq, h)?;
        if !lin.is_index1() {
            eprintln!("warning: model is not index-1 at h = {h} (singular g_y block)");
        }
        let exact = exact_spectrum(&lin, &opts)?;
        let pencil = build_discrete_pencil(&lin, args.theta)?;
        let deformed = deformed_spectrum(&pencil)?;
        let report = deformation_report(&exact, &deformed);

        let spectrum_path = args.out_dir.join(format!("spectrum_{i:03}.csv"));
        export::write_spectrum_csv(&spectrum_path, &[&exact, &deformed])?;
        let pairs_path = args.out_dir.join(format!("deformation_{i:03}.csv"));
        export::write_deformation_csv(&pairs_path, &report)?;
        let summary_path = args.out_dir.join(format!("deformation_{i:03}.json"));
        export::write_deformation_summary(&summary_path, &report)?;
        for p in [&spectrum_path, &pairs_path, &summary_path] {
            outputs.push(p.to_string_lossy().into_owned());
        }
        let agreement = match (report.rightmost_exact, report.rightmost_deformed) {
            (Some(e), Some(d)) => Some((e.re < 0.0) == (d.re < 0.0)),
            _ => None,
        };
        entries.push(SweepEntry {
            index: i,
            h,
            theta: args.theta,
            rightmost_exact_re: report.rightmost_exact.map(|s| s.re),
            rightmost_exact_im: report.rightmost_exact.map(|s| s.im),
            rightmost_deformed_re: report.rightmost_deformed.map(|s| s.re),
            rightmost_deformed_im: report.rightmost_deformed.map(|s| s.im),
            stability_agreement: agreement,
        });
        if let (Some(e), Some(d)) = (report.rightmost_exact, report.rightmost_deformed) {
            println!(
                "pencil: h = {h:.6}: rightmost exact {:.6}{:+.6}i (zeta {:.6}), deformed {:.6}{:+.6}i (zeta {:.6})",
                e.re,
                e.im,
                damping_ratio(e),
                d.re,
                d.im,
                damping_ratio(d)
            );
        }
    }
    let sweep_path = args.out_dir.join("sweep.json");
    {
        let file = std::fs::File::create(&sweep_path)?;
        serde_json::to_writer_pretty(file, &entries).map_err(std::io::Error::from)?;
    }
    outputs.push(sweep_path.to_string_lossy().into_owned());

    let mut manifest = RunManifest::new(raw_args, &model.name, &model.hash);
    manifest.params = model.params.clone();
    manifest.params.insert("theta".into(), args.theta);
    manifest.outputs = outputs;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir.join("manifest.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct ThetaMatchJson {
    theta: f64,
    h: f64,
    target_root_re: f64,
    target_root_im: f64,
    target_zeta: f64,
    achieved_zeta: f64,
    iterations: usize,
}

fn run_theta_match(args: ThetaMatchArgs, raw_args: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let overrides = args.model.overrides()?;
    let model = model_io::load_model(&args.model.model, &overrides)?;
    let eq = find_equilibrium(&model.system, &model.x_guess, &model.y_guess)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let lin = linearize(&model.system, &eq, args.h)?;
    let opts = ExactOptions {
        n_cheb: args.n_cheb,
        sigma_min: None,
    };
    let exact = exact_spectrum(&lin, &opts)?;
    let target = exact
        .rightmost()
        .ok_or_else(|| CliError::Numerical("exact spectrum is empty".to_string()))?
        .s;
    let m = theta_match(&lin, target, args.theta_lo, args.theta_hi)?;

    let json = ThetaMatchJson {
        theta: m.theta,
        h: args.h,
        target_root_re: target.re,
        target_root_im: target.im,
        target_zeta: m.target_zeta,
        achieved_zeta: m.achieved_zeta,
        iterations: m.iterations,
    };
    let out_path = args.out_dir.join("theta_match.json");
    {
        let file = std::fs::File::create(&out_path)?;
        serde_json::to_writer_pretty(file, &json).map_err(std::io::Error::from)?;
    }

    let mut manifest = RunManifest::new(raw_args, &model.name, &model.hash);
    manifest.params = model.params.clone();
    manifest.params.insert("h".into(), args.h);
    manifest.outputs = vec![out_path.to_string_lossy().into_owned()];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir.join("manifest.json"))?;

    println!(
        "theta-match: theta = {:.6} reproduces zeta = {:.6} of root {:.6}{:+.6}i at h = {}",
        m.theta, m.target_zeta, target.re, target.im, args.h
    );
    Ok(())
}
