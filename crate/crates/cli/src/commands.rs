//! The five workflows. Each returns its outputs in memory; nothing touches
//! the output directory until the whole computation has succeeded.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use surrosens_core::data::CombinedDataset;
use surrosens_core::dgp::{default_tau_grid, oracle_curve, sign_change_threshold, simulate, OracleCurvePoint};
use surrosens_core::dml::{
    estimate_bounds, estimate_general, sensitivity_analysis, CurvePoint, EstimateReport, REPORT_SCHEMA_VERSION,
};
use surrosens_core::Family;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{sha256_hex, Artifact, FileDigest};

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub inputs: Vec<FileDigest>,
    pub summary: String,
}

pub fn run(command: Command, config: &RunConfig) -> CliResult<Outcome> {
    match command {
        Command::Simulate => cmd_simulate(config),
        Command::OracleCurve => cmd_oracle_curve(config),
        Command::Bounds => cmd_bounds(config),
        Command::Sensitivity => cmd_sensitivity(config),
        Command::Estimate => cmd_estimate(config),
    }
}

/// Reads the configured data file, splitting it when asked.
pub fn load_data(config: &RunConfig) -> CliResult<(CombinedDataset, FileDigest)> {
    let path = config.data.as_deref().ok_or_else(|| CliError::Config("no data file given".into()))?;
    let bytes = std::fs::read(path).map_err(|e| CliError::reading(path, e))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    let digest = FileDigest { path: name, sha256: sha256_hex(&bytes) };
    let located = |e: surrosens_core::Error| CliError::Data(format!("{}: {e}", path.display()));
    let data = if config.split {
        CombinedDataset::read_complete_csv(bytes.as_slice())
            .and_then(|d| d.split_evenly(config.estimator.seed))
            .map_err(located)?
    } else {
        CombinedDataset::read_csv(bytes.as_slice()).map_err(located)?
    };
    Ok((data, digest))
}

fn csv_bytes<F>(write: F) -> CliResult<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> surrosens_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn cmd_simulate(config: &RunConfig) -> CliResult<Outcome> {
    let data = simulate(&config.simulate)?;
    let bytes = csv_bytes(|b| data.write_csv(b))?;
    Ok(Outcome {
        artifacts: vec![Artifact::new("data.csv", bytes)],
        inputs: Vec::new(),
        summary: format!("simulated {} rows ({} per sample)", data.len(), config.simulate.n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub family: Family,
    pub rho: f64,
    /// Kendall's tau at which the true ATE changes sign; null when the
    /// curve keeps one sign over the grid.
    pub tau_k: Option<f64>,
}

pub fn curve_file_name(family: Family, rho: f64) -> String {
    format!("oracle_curve_{family}_rho{rho}.csv")
}

fn cmd_oracle_curve(config: &RunConfig) -> CliResult<Outcome> {
    let o = &config.oracle_curve;
    let mut artifacts = Vec::new();
    let mut thresholds = Vec::new();
    let mut summary = String::new();
    for &family in &o.families {
        let grid = o.grid.clone().unwrap_or_else(|| default_tau_grid(family));
        for &rho in &o.rhos {
            let points = oracle_curve(family, &grid, rho, &o.quadrature)?;
            let bytes = csv_bytes(|b| write_oracle_csv(&points, b))?;
            artifacts.push(Artifact::new(curve_file_name(family, rho), bytes));
            let tau_k = match points.windows(2).find(|p| p[0].ate.signum() != p[1].ate.signum()) {
                Some(p) => Some(sign_change_threshold(family, rho, p[0].tau_k, p[1].tau_k, &o.quadrature)?),
                None => None,
            };
            match tau_k {
                Some(t) => writeln!(summary, "{family} rho={rho}: sign change at tau_K = {t:.4}"),
                None => writeln!(summary, "{family} rho={rho}: no sign change on the grid"),
            }
            .expect("string write");
            thresholds.push(Threshold { family, rho, tau_k });
        }
    }
    artifacts.push(Artifact::json("thresholds.json", &thresholds)?);
    Ok(Outcome { artifacts, inputs: Vec::new(), summary: summary.trim_end().to_string() })
}

fn write_oracle_csv(points: &[OracleCurvePoint], out: &mut Vec<u8>) -> surrosens_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn report_summary(report: &EstimateReport) -> String {
    let mut s = String::new();
    for e in &report.estimates {
        writeln!(s, "{}: {:.4} (se {:.4}), CI [{:.4}, {:.4}]", e.label, e.tau_hat, e.se, e.ci.lo, e.ci.hi)
            .expect("string write");
    }
    if let Some(ci) = report.identified_ci {
        writeln!(s, "identified-set CI: [{:.4}, {:.4}]", ci.lo, ci.hi).expect("string write");
    }
    if report.bounds_crossed {
        writeln!(s, "warning: the lower bound estimate exceeds the upper one").expect("string write");
    }
    s.trim_end().to_string()
}

fn cmd_bounds(config: &RunConfig) -> CliResult<Outcome> {
    let (data, input) = load_data(config)?;
    let mut report = estimate_bounds(&data, &config.estimator)?;
    report.config_digest = Some(config.digest());
    Ok(Outcome {
        summary: report_summary(&report),
        artifacts: vec![Artifact::json("report.json", &report)?],
        inputs: vec![input],
    })
}

fn cmd_estimate(config: &RunConfig) -> CliResult<Outcome> {
    let copula = config
        .copula
        .as_ref()
        .ok_or_else(|| CliError::Config("`estimate` needs a `copula` block".into()))?
        .resolve()?;
    let (data, input) = load_data(config)?;
    let mut report = estimate_general(&data, &copula, &config.estimator)?;
    report.config_digest = Some(config.digest());
    Ok(Outcome {
        summary: report_summary(&report),
        artifacts: vec![Artifact::json("report.json", &report)?],
        inputs: vec![input],
    })
}

/// Breakpoint document written next to the sensitivity curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointReport {
    pub schema_version: u32,
    pub family: Family,
    pub level: f64,
    /// Smallest positive Kendall's tau whose CI excludes zero.
    pub breakpoint: Option<f64>,
    pub zoom: Vec<CurvePoint>,
    pub worst_case: EstimateReport,
    pub config_digest: String,
}

fn cmd_sensitivity(config: &RunConfig) -> CliResult<Outcome> {
    let (data, input) = load_data(config)?;
    let s = &config.sensitivity;
    let curve = sensitivity_analysis(&data, s.family, &s.grid, &config.estimator)?;
    let digest = config.digest();
    let mut worst_case = curve.worst_case.clone();
    worst_case.config_digest = Some(digest.clone());
    let doc = BreakpointReport {
        schema_version: REPORT_SCHEMA_VERSION,
        family: s.family,
        level: config.estimator.level,
        breakpoint: curve.breakpoint,
        zoom: curve.zoom.clone(),
        worst_case,
        config_digest: digest,
    };
    let mut summary = String::new();
    for p in &curve.points {
        writeln!(summary, "tau_K {:>5}: {:.4} [{:.4}, {:.4}]", p.tau_k, p.tau_hat, p.ci_lo, p.ci_hi).expect("string write");
    }
    match curve.breakpoint {
        Some(b) => write!(summary, "breakpoint: tau_K = {b:.4}"),
        None => write!(summary, "breakpoint: none"),
    }
    .expect("string write");
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("curve.csv", csv_bytes(|b| curve.write_csv(b))?),
            Artifact::json("breakpoint.json", &doc)?,
        ],
        inputs: vec![input],
        summary,
    })
}
