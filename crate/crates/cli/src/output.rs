//! CSV and JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use phi_sasaki::frenet::{ArcLength, FrenetResult};
use phi_sasaki::geometry::CheckReport;
use phi_sasaki::integrate::Trajectory;
use phi_sasaki::verify::Claim;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(name))
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["x", "xdot", "xi", "xidot"] {
        h.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    h
}

pub const MONITOR_HEADER: [&str; 4] = ["t", "unit_norm", "rho_sq", "speed_sq"];

/// Writes `trajectory.csv` and `monitors.csv`; an empty trajectory yields header-only files.
pub fn write_trajectory(dir: &Path, n: usize, traj: &Trajectory) -> Result<(PathBuf, PathBuf)> {
    let tpath = create(dir, "trajectory.csv")?;
    let mut w = csv::Writer::from_path(&tpath).with_context(|| format!("writing {}", tpath.display()))?;
    w.write_record(trajectory_header(n))?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![num(*t)];
        for v in [&s.x, &s.xdot, &s.xi, &s.xidot] {
            row.extend(v.iter().map(|c| num(*c)));
        }
        w.write_record(row)?;
    }
    w.flush()?;

    let mpath = create(dir, "monitors.csv")?;
    let mut w = csv::Writer::from_path(&mpath).with_context(|| format!("writing {}", mpath.display()))?;
    w.write_record(MONITOR_HEADER)?;
    for m in &traj.monitors {
        w.write_record([num(m.t), num(m.unit_norm), num(m.rho_sq), num(m.speed_sq)])?;
    }
    w.flush()?;
    Ok((tpath, mpath))
}

pub fn write_frenet_csv(dir: &Path, arc: &ArcLength, frenet: &FrenetResult) -> Result<PathBuf> {
    let path = create(dir, "frenet.csv")?;
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let r = frenet.frame_rank;
    let mut header = vec!["s".to_string()];
    header.extend((1..=r).map(|i| format!("k{i}")));
    w.write_record(&header)?;
    for (j, s) in arc.s.iter().enumerate() {
        let mut row = vec![num(*s)];
        row.extend((0..r).map(|i| num(frenet.curvature(j, i))));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = create(dir, name)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub worst_point: Option<Vec<f64>>,
    pub error: Option<String>,
    pub passed: bool,
}

impl From<&CheckReport> for CheckRecord {
    fn from(r: &CheckReport) -> Self {
        Self {
            check: r.check.to_string(),
            max_residual: r.max_residual,
            tolerance: r.tolerance,
            samples: r.samples,
            worst_point: r.worst_point.clone(),
            error: r.error.clone(),
            passed: r.passed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClaimRecord {
    pub id: String,
    pub description: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl From<&Claim> for ClaimRecord {
    fn from(c: &Claim) -> Self {
        Self {
            id: c.id.clone(),
            description: c.description.clone(),
            measured: c.measured,
            threshold: c.threshold,
            passed: c.passed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FrenetSummary {
    pub frame_rank: usize,
    pub samples: usize,
    pub arc_length: f64,
    pub speed_deviation: f64,
    pub mean_curvatures: Vec<f64>,
    pub constancy: Vec<f64>,
    pub tolerance: f64,
    pub constant: Vec<bool>,
    pub degenerate_samples: usize,
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn print_checks(label: &str, reports: &[CheckReport]) {
    println!("structure checks on {label}");
    println!("{:<18} {:>12} {:>10} {:>8}  status", "check", "residual", "tol", "samples");
    for r in reports {
        println!(
            "{:<18} {:>12.3e} {:>10.1e} {:>8}  {}{}",
            r.check,
            r.max_residual,
            r.tolerance,
            r.samples,
            status(r.passed),
            r.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
        );
    }
}

pub fn print_claims(claims: &[Claim]) {
    println!("{:<10} {:>12} {:>10}  {:<6} description", "claim", "measured", "threshold", "status");
    for c in claims {
        println!(
            "{:<10} {:>12.3e} {:>10.1e}  {:<6} {}",
            c.id,
            c.measured,
            c.threshold,
            status(c.passed),
            c.description
        );
    }
    let failed = claims.iter().filter(|c| !c.passed).count();
    println!("{} claims, {} failed", claims.len(), failed);
}
