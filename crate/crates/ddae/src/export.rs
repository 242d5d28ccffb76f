//! Plain-file output: CSV tables, PGM raster images, JSON summaries and
//! the run manifest.
//!
//! All floating-point values in CSV files are printed with 17
//! significant digits (`{:.16e}`) so that replaying a run reproduces the
//! outputs byte for byte.

use crate::pencil_analysis::{DeformationReport, EigenSpectrum};
use crate::dde_scalar::StabilityRaster;
use crate::theta_integrator::{SimStatus, SimulationResult};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Canonical float formatting used in every CSV cell.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> io::Result<BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

/// Write a stability raster as `re,im,rho,stable` rows (row-major, the
/// imaginary axis is the slow index).
pub fn write_raster_csv(path: &Path, raster: &StabilityRaster) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "re,im,rho,stable")?;
    for iy in 0..raster.ny {
        for ix in 0..raster.nx {
            let (re, im) = raster.coord(ix, iy);
            let (rho, stable) = raster.at(ix, iy);
            writeln!(
                w,
                "{},{},{},{}",
                fmt_float(re),
                fmt_float(im),
                fmt_float(rho),
                u8::from(stable)
            )?;
        }
    }
    w.flush()
}

/// Write a stability raster as a binary PGM image. Gray level encodes
/// the spectral radius clipped at 2: stable cells are dark, unstable
/// bright. Row 0 of the image is the top of the window (largest
/// imaginary part).
pub fn write_raster_pgm(path: &Path, raster: &StabilityRaster) -> io::Result<()> {
    let mut w = create(path)?;
    write!(w, "P5\n{} {}\n255\n", raster.nx, raster.ny)?;
    let mut row = Vec::with_capacity(raster.nx);
    for iy in (0..raster.ny).rev() {
        row.clear();
        for ix in 0..raster.nx {
            let (rho, _) = raster.at(ix, iy);
            let clipped = if rho.is_finite() { rho.min(2.0) } else { 2.0 };
            row.push((clipped / 2.0 * 255.0).round() as u8);
        }
        w.write_all(&row)?;
    }
    w.flush()
}

/// Write one or more spectra as `re,im,damping,domain,residual` rows.
pub fn write_spectrum_csv(path: &Path, spectra: &[&EigenSpectrum]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "re,im,damping,domain,residual")?;
    for spec in spectra {
        for root in &spec.roots {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_float(root.s.re),
                fmt_float(root.s.im),
                fmt_float(crate::pencil_analysis::damping_ratio(root.s)),
                spec.domain.as_str(),
                fmt_float(root.residual)
            )?;
        }
    }
    w.flush()
}

/// Write a trajectory as `t,x1..x_nu,y1..y_mu` rows.
pub fn write_trajectory_csv(path: &Path, result: &SimulationResult) -> io::Result<()> {
    let mut w = create(path)?;
    let nu = result.x.first().map_or(0, |x| x.len());
    let mu = result.y.first().map_or(0, |y| y.len());
    let mut header = String::from("t");
    for i in 1..=nu {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=mu {
        header.push_str(&format!(",y{i}"));
    }
    writeln!(w, "{header}")?;
    for ((t, x), y) in result.t.iter().zip(&result.x).zip(&result.y) {
        let mut line = fmt_float(*t);
        for v in x.iter() {
            line.push(',');
            line.push_str(&fmt_float(*v));
        }
        for v in y.iter() {
            line.push(',');
            line.push_str(&fmt_float(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Write matched root pairs as CSV, one row per pair.
pub fn write_deformation_csv(path: &Path, report: &DeformationReport) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "exact_re,exact_im,deformed_re,deformed_im,distance,zeta_exact,zeta_deformed"
    )?;
    for p in &report.pairs {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_float(p.exact.re),
            fmt_float(p.exact.im),
            fmt_float(p.deformed.re),
            fmt_float(p.deformed.im),
            fmt_float(p.distance),
            fmt_float(p.zeta_exact),
            fmt_float(p.zeta_deformed)
        )?;
    }
    w.flush()
}

#[derive(Serialize)]
struct ComplexJson {
    re: f64,
    im: f64,
}

impl From<num_complex::Complex64> for ComplexJson {
    fn from(z: num_complex::Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Serialize)]
struct DeformationSummaryJson {
    pairs: usize,
    unmatched_exact: usize,
    unmatched_deformed: usize,
    max_distance: f64,
    rightmost_exact: Option<ComplexJson>,
    rightmost_deformed: Option<ComplexJson>,
    /// Do the exact and deformed rightmost roots agree on stability?
    stability_agreement: Option<bool>,
}

/// Write the deformation summary as JSON next to the pair table.
pub fn write_deformation_summary(path: &Path, report: &DeformationReport) -> io::Result<()> {
    let agreement = match (report.rightmost_exact, report.rightmost_deformed) {
        (Some(e), Some(d)) => Some((e.re < 0.0) == (d.re < 0.0)),
        _ => None,
    };
    let summary = DeformationSummaryJson {
        pairs: report.pairs.len(),
        unmatched_exact: report.unmatched_exact.len(),
        unmatched_deformed: report.unmatched_deformed.len(),
        max_distance: report.max_distance,
        rightmost_exact: report.rightmost_exact.map(Into::into),
        rightmost_deformed: report.rightmost_deformed.map(Into::into),
        stability_agreement: agreement,
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()
}

/// Record of a completed run: what was asked, on which model, and which
/// files were produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub model: String,
    pub model_hash: String,
    pub params: BTreeMap<String, f64>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: Vec<String>, model: &str, model_hash: &str) -> Self {
        Self {
            tool: "ddae".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            model: model.to_string(),
            model_hash: model_hash.to_string(),
            params: BTreeMap::new(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()
    }
}

/// Simulation status as a short string for summaries.
pub fn status_str(status: &SimStatus) -> String {
    match status {
        SimStatus::Completed => "completed".to_string(),
        SimStatus::Diverged { t } => format!("diverged at t = {t:.6}"),
    }
}
