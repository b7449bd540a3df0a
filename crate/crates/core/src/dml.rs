//! Orthogonal moments, cross-fitted estimating equations and inference.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaSpec, Family};
use crate::data::{CombinedDataset, RowRef, Sample};
use crate::dgp::copula_at_tau;
use crate::error::{Error, Result};
use crate::numeric::{brent, normal};
use crate::nuisance::{BaseFit, FoldAssignment, NuisanceBundle, NuisanceConfig, NuisanceRow};
use crate::wsi::{Bound, Target};

/// Kendall's tau grid used by default in sensitivity analyses.
pub const DEFAULT_SENSITIVITY_GRID: [f64; 11] = [-0.9, -0.75, -0.5, -0.25, -0.1, 0.0, 0.1, 0.25, 0.5, 0.75, 0.9];

/// Named pieces of a moment value; they sum to `value`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTerms {
    pub arm1_residual: f64,
    pub arm0_residual: f64,
    /// μ̄₁ − μ̄₀ − τ, weighted.
    pub x_level: f64,
    pub observational_dual: f64,
    pub surrogacy_correction: f64,
}

/// Moment of one row at one τ; affine in τ with slope `−affine_slope`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEvaluation {
    pub value: f64,
    pub affine_slope: f64,
    pub terms: MomentTerms,
}

impl MomentEvaluation {
    /// Value at τ = 0.
    pub fn intercept(&self, tau: f64) -> f64 {
        self.value + self.affine_slope * tau
    }
}

fn required(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingNuisance(name))
}

/// Shared arithmetic of the bound and general moments: they differ only in
/// how the duals and the correction level were produced.
pub fn moment(row: RowRef<'_>, tau: f64, n: &NuisanceRow) -> Result<MomentEvaluation> {
    let mut t = MomentTerms::default();
    let g = 1.0 / n.phi;
    let mut slope = 0.0;
    match row.sample {
        Sample::Experimental => {
            let w = match row.w {
                Some(true) => 1.0,
                Some(false) => 0.0,
                None => return Err(Error::MissingNuisance("w")),
            };
            t.arm1_residual = g * w / n.rho_x * (n.mu1 - n.mu_bar1);
            t.arm0_residual = -g * (1.0 - w) / (1.0 - n.rho_x) * (n.mu0 - n.mu_bar0);
            t.x_level = g * (n.mu_bar1 - n.mu_bar0 - tau);
            let resid = w - n.rho_sx;
            t.surrogacy_correction =
                g * ((n.correction - n.mu1) * resid / n.rho_x + (n.correction - n.mu0) * resid / (1.0 - n.rho_x));
            slope = g;
        }
        Sample::Observational => {
            let h1 = required(n.h1, "h1")?;
            let h0 = required(n.h0, "h0")?;
            let odds = n.phi_sx / (1.0 - n.phi_sx);
            t.observational_dual = g
                * odds
                * (n.rho_sx / n.rho_x * (h1 - n.mu1) - (1.0 - n.rho_sx) / (1.0 - n.rho_x) * (h0 - n.mu0));
        }
    }
    let value = t.arm1_residual + t.arm0_residual + t.x_level + t.observational_dual + t.surrogacy_correction;
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite moment value".into()));
    }
    Ok(MomentEvaluation { value, affine_slope: slope, terms: t })
}

/// Moment for a Fréchet bound; `n` must come from a bundle built for `_bound`.
pub fn moment_worst_case(row: RowRef<'_>, tau: f64, n: &NuisanceRow, _bound: Bound) -> Result<MomentEvaluation> {
    moment(row, tau, n)
}

/// Moment for a smooth copula, from a bundle built for that copula.
pub fn moment_general(row: RowRef<'_>, tau: f64, n: &NuisanceRow, copula: &CopulaSpec) -> Result<MomentEvaluation> {
    if !copula.is_smooth() {
        return Err(Error::DensityUndefined(copula.family().name()));
    }
    moment(row, tau, n)
}

fn check_bundle(data: &CombinedDataset, bundle: &NuisanceBundle) -> Result<()> {
    if bundle.len() != data.len() {
        return Err(Error::InvalidConfig(format!("bundle has {} rows for {} data rows", bundle.len(), data.len())));
    }
    Ok(())
}

/// Moments of every row at `tau`.
pub fn evaluate_moments(data: &CombinedDataset, bundle: &NuisanceBundle, tau: f64) -> Result<Vec<MomentEvaluation>> {
    check_bundle(data, bundle)?;
    (0..data.len()).map(|i| moment(data.row(i), tau, &bundle.rows[i])).collect()
}

/// Exact root of the averaged affine moment.
pub fn solve_tau(data: &CombinedDataset, bundle: &NuisanceBundle) -> Result<f64> {
    let evals = evaluate_moments(data, bundle, 0.0)?;
    let slope: f64 = evals.iter().map(|e| e.affine_slope).sum();
    if slope <= 0.0 {
        return Err(Error::Numerical("zero total slope: no experimental rows".into()));
    }
    Ok(evals.iter().map(|e| e.value).sum::<f64>() / slope)
}

/// Fold-averaged second-moment matrix of the moment columns.
pub fn variance(folds: &FoldAssignment, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = columns.len();
    let mut v = vec![vec![0.0; d]; d];
    for k in 0..folds.k {
        let members = folds.members(k);
        if members.len() < 2 {
            return Err(Error::Numerical(format!("fold {k} has fewer than 2 rows")));
        }
        let r = members.len() as f64;
        for a in 0..d {
            for b in a..d {
                let s: f64 = members.iter().map(|&i| columns[a][i] * columns[b][i]).sum();
                v[a][b] += s / r / folds.k as f64;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            v[a][b] = v[b][a];
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }
}

pub fn wald_ci(tau_hat: f64, se: f64, level: f64) -> Interval {
    let z = normal::quantile(0.5 * (1.0 + level));
    Interval { lo: tau_hat - z * se, hi: tau_hat + z * se }
}

/// Critical value c solving Φ(c + Δ/σ) − Φ(−c) = level.
pub fn imbens_manski_critical(delta: f64, sigma: f64, level: f64) -> f64 {
    let two_sided = normal::quantile(0.5 * (1.0 + level));
    if delta <= 0.0 || sigma <= 0.0 {
        return two_sided;
    }
    let ratio = delta / sigma;
    let one_sided = normal::quantile(level);
    let f = |c: f64| normal::cdf(c + ratio) - normal::cdf(-c) - level;
    if f(one_sided) >= 0.0 {
        return one_sided;
    }
    brent(f, one_sided, two_sided, 1e-12, 200).unwrap_or(two_sided)
}

/// Confidence interval for a parameter in [τ_L, τ_U].
pub fn interval_identified_ci(tau_l: f64, tau_u: f64, se_l: f64, se_u: f64, level: f64) -> Interval {
    let delta = (tau_u - tau_l).max(0.0);
    let c = imbens_manski_critical(delta, se_l.max(se_u), level);
    let (a, b) = (tau_l - c * se_l, tau_u + c * se_u);
    Interval { lo: a.min(b), hi: a.max(b) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub nuisance: NuisanceConfig,
    pub level: f64,
    pub seed: u64,
    /// Bisection tolerance in Kendall's tau for the breakpoint.
    pub breakpoint_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { nuisance: NuisanceConfig::default(), level: 0.95, seed: 0, breakpoint_tol: 0.002 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level {} must lie in (0, 1)", self.level)));
        }
        if !(self.breakpoint_tol > 0.0) {
            return Err(Error::InvalidConfig("breakpoint_tol must be positive".into()));
        }
        self.nuisance.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub target: Target,
    pub label: String,
    pub tau_hat: f64,
    pub se: f64,
    pub ci: Interval,
}

/// Result of one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    /// Lower then upper for bounds; a single entry for a known copula.
    pub estimates: Vec<PointEstimate>,
    /// Asymptotic covariance of the estimates (V / n).
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Option<f64>,
    /// Covers every ATE in the identified set; bounds runs only.
    pub identified_ci: Option<Interval>,
    /// The lower bound estimate exceeds the upper one.
    pub bounds_crossed: bool,
    pub level: f64,
    pub n: usize,
    pub folds: usize,
    pub seed: u64,
    pub config_digest: Option<String>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

impl EstimateReport {
    pub fn estimate(&self, target: Target) -> Option<&PointEstimate> {
        self.estimates.iter().find(|e| e.target == target)
    }

    pub fn lower(&self) -> Option<&PointEstimate> {
        self.estimate(Target::Bound(Bound::Lower))
    }

    pub fn upper(&self) -> Option<&PointEstimate> {
        self.estimate(Target::Bound(Bound::Upper))
    }
}

/// Solves and assembles inference for bundles that share one fold split.
pub fn estimate_from_bundles(
    data: &CombinedDataset,
    bundles: &[NuisanceBundle],
    level: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let first = bundles.first().ok_or(Error::MissingNuisance("bundle"))?;
    let taus: Vec<f64> = bundles.iter().map(|b| solve_tau(data, b)).collect::<Result<_>>()?;
    let columns: Vec<Vec<f64>> = bundles
        .iter()
        .zip(&taus)
        .map(|(b, &t)| Ok(evaluate_moments(data, b, t)?.into_iter().map(|e| e.value).collect()))
        .collect::<Result<_>>()?;
    let v = variance(&first.folds, &columns)?;
    let n = data.len() as f64;
    let covariance: Vec<Vec<f64>> = v.iter().map(|r| r.iter().map(|x| x / n).collect()).collect();
    let estimates: Vec<PointEstimate> = bundles
        .iter()
        .zip(&taus)
        .enumerate()
        .map(|(j, (b, &tau_hat))| {
            let se = covariance[j][j].max(0.0).sqrt();
            PointEstimate { target: b.target, label: b.target.label(), tau_hat, se, ci: wald_ci(tau_hat, se, level) }
        })
        .collect();
    let correlation = (estimates.len() == 2).then(|| {
        let d = (covariance[0][0] * covariance[1][1]).sqrt();
        if d > 0.0 {
            (covariance[0][1] / d).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    });
    Ok(EstimateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        estimates,
        covariance,
        correlation,
        identified_ci: None,
        bounds_crossed: false,
        level,
        n: data.len(),
        folds: first.folds.k,
        seed,
        config_digest: None,
    })
}

/// Worst-case bounds from a fitted base.
pub fn estimate_bounds_with(base: &BaseFit<'_>, data: &CombinedDataset, level: f64, seed: u64) -> Result<EstimateReport> {
    let bundles = [base.bundle(Target::Bound(Bound::Lower))?, base.bundle(Target::Bound(Bound::Upper))?];
    bounds_report(data, &bundles, level, seed)
}

/// Bounds report from the lower and upper bundles, in that order.
pub fn bounds_report(data: &CombinedDataset, bundles: &[NuisanceBundle; 2], level: f64, seed: u64) -> Result<EstimateReport> {
    let mut report = estimate_from_bundles(data, bundles, level, seed)?;
    let (l, u) = (&report.estimates[0], &report.estimates[1]);
    report.bounds_crossed = l.tau_hat > u.tau_hat;
    report.identified_ci = Some(interval_identified_ci(l.tau_hat, u.tau_hat, l.se, u.se, level));
    Ok(report)
}

pub fn estimate_bounds(data: &CombinedDataset, config: &EstimatorConfig) -> Result<EstimateReport> {
    config.validate()?;
    let base = BaseFit::fit(data, &config.nuisance, config.seed)?;
    estimate_bounds_with(&base, data, config.level, config.seed)
}

pub fn estimate_general_with(
    base: &BaseFit<'_>,
    data: &CombinedDataset,
    copula: &CopulaSpec,
    level: f64,
    seed: u64,
) -> Result<EstimateReport> {
    if !copula.is_smooth() {
        return Err(Error::DensityUndefined(copula.family().name()));
    }
    estimate_from_bundles(data, &[base.bundle(Target::Copula(*copula))?], level, seed)
}

pub fn estimate_general(data: &CombinedDataset, copula: &CopulaSpec, config: &EstimatorConfig) -> Result<EstimateReport> {
    config.validate()?;
    if !copula.is_smooth() {
        return Err(Error::DensityUndefined(copula.family().name()));
    }
    let base = BaseFit::fit(data, &config.nuisance, config.seed)?;
    estimate_general_with(&base, data, copula, config.level, config.seed)
}

/// One row of a sensitivity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau_k: f64,
    pub tau_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl CurvePoint {
    fn from_report(tau_k: f64, r: &EstimateReport) -> Self {
        let e = &r.estimates[0];
        CurvePoint { tau_k, tau_hat: e.tau_hat, se: e.se, ci_lo: e.ci.lo, ci_hi: e.ci.hi }
    }

    pub fn excludes_zero(&self) -> bool {
        self.ci_lo > 0.0 || self.ci_hi < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub family: Family,
    pub points: Vec<CurvePoint>,
    /// Smallest positive Kendall's tau at which the CI excludes zero.
    pub breakpoint: Option<f64>,
    /// Evaluations made while refining the breakpoint, ordered by tau.
    pub zoom: Vec<CurvePoint>,
    pub worst_case: EstimateReport,
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

impl SensitivityCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curve_csv(&self.points, out)
    }
}

/// Checks a tau grid against a family's range.
pub fn validate_grid(family: Family, grid: &[f64]) -> Result<()> {
    for &t in grid {
        if t != 0.0 {
            copula_at_tau(family, t)?;
        }
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty tau grid".into()));
    }
    Ok(())
}

pub fn sensitivity_with(
    base: &BaseFit<'_>,
    data: &CombinedDataset,
    family: Family,
    grid: &[f64],
    config: &EstimatorConfig,
) -> Result<SensitivityCurve> {
    validate_grid(family, grid)?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let at = |t: f64| -> Result<CurvePoint> {
        let c = copula_at_tau(family, t)?;
        Ok(CurvePoint::from_report(t, &estimate_general_with(base, data, &c, config.level, config.seed)?))
    };
    let points: Vec<CurvePoint> = sorted.par_iter().map(|&t| at(t)).collect::<Result<_>>()?;
    let worst_case = estimate_bounds_with(base, data, config.level, config.seed)?;

    let mut zoom = Vec::new();
    let zero_excludes = points.iter().find(|p| p.tau_k == 0.0).map(CurvePoint::excludes_zero);
    let first = points.iter().position(|p| p.tau_k > 0.0 && p.excludes_zero());
    let breakpoint = match (zero_excludes, first) {
        (Some(true), _) | (_, None) => None,
        (_, Some(j)) => {
            let mut lo = points[..j].iter().rev().find(|p| p.tau_k >= 0.0).map_or(0.0, |p| p.tau_k);
            let mut hi = points[j].tau_k;
            while hi - lo > config.breakpoint_tol {
                let mid = 0.5 * (lo + hi);
                let p = at(mid)?;
                zoom.push(p);
                if p.excludes_zero() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        }
    };
    zoom.sort_by(|a, b| a.tau_k.total_cmp(&b.tau_k));
    Ok(SensitivityCurve { family, points, breakpoint, zoom, worst_case })
}

pub fn sensitivity_analysis(
    data: &CombinedDataset,
    family: Family,
    grid: &[f64],
    config: &EstimatorConfig,
) -> Result<SensitivityCurve> {
    config.validate()?;
    validate_grid(family, grid)?;
    let base = BaseFit::fit(data, &config.nuisance, config.seed)?;
    sensitivity_with(&base, data, family, grid, config)
}
