use surrosens_core::dgp::{oracle_ate, oracle_curve, simulate, DgpConfig};
use surrosens_core::dml::{estimate_bounds_with, estimate_general_with, EstimateReport, DEFAULT_SENSITIVITY_GRID};
use surrosens_core::learners::ForestConfig;
use surrosens_core::learners::QuantileLearner;
use surrosens_core::numeric::QuadratureConfig;
use surrosens_core::nuisance::{BaseFit, NuisanceConfig};
use surrosens_core::{Bound, CopulaSpec, Family};

use crate::{Checks, Verdict};

const REPLICATIONS: u64 = 200;
const PER_SAMPLE: usize = 1000;
const LEVEL: f64 = 0.95;

/// Estimates from one simulated dataset.
#[derive(Debug, Clone)]
pub struct Replication {
    /// (τ̂, se) for the lower bound, upper bound and Gaussian copula.
    pub lower: (f64, f64),
    pub upper: (f64, f64),
    pub gaussian: (f64, f64),
    pub identified: (f64, f64),
    /// (τ̂_lower − τ̂_upper) in units of the joint standard error.
    pub crossing_z: f64,
}

fn pair(report: &EstimateReport, j: usize) -> (f64, f64) {
    (report.estimates[j].tau_hat, report.estimates[j].se)
}

fn replicate(r: u64, nuisance: &NuisanceConfig, gaussian: &CopulaSpec) -> Replication {
    let data = simulate(&DgpConfig { n: PER_SAMPLE, seed: 10_000 + r, ..Default::default() }).unwrap();
    let base = BaseFit::fit(&data, nuisance, r).unwrap();
    let bounds = estimate_bounds_with(&base, &data, LEVEL, r).unwrap();
    let general = estimate_general_with(&base, &data, gaussian, LEVEL, r).unwrap();
    let v = &bounds.covariance;
    let sd = (v[0][0] + v[1][1] - 2.0 * v[0][1]).max(1e-300).sqrt();
    let ci = bounds.identified_ci.unwrap();
    Replication {
        lower: pair(&bounds, 0),
        upper: pair(&bounds, 1),
        gaussian: pair(&general, 0),
        identified: (ci.lo, ci.hi),
        crossing_z: (bounds.estimates[0].tau_hat - bounds.estimates[1].tau_hat) / sd,
    }
}

fn covers((tau_hat, se): (f64, f64), truth: f64) -> bool {
    (tau_hat - truth).abs() <= 1.959963984540054 * se
}

fn rate(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

fn nuisance(forest: ForestConfig) -> NuisanceConfig {
    let mut cfg = NuisanceConfig::default();
    cfg.learners.quantile = QuantileLearner::Forest(forest);
    cfg
}

pub fn criterion_6() -> (Verdict, Vec<Replication>) {
    let mut c = Checks::default();
    let quad = QuadratureConfig::default();
    let gaussian = CopulaSpec::from_tau(Family::Gaussian, 0.5).unwrap();
    let truth_l = oracle_ate(&Bound::Lower.copula(), 0.5, &quad).unwrap();
    let truth_u = oracle_ate(&Bound::Upper.copula(), 0.5, &quad).unwrap();
    let truth_g = oracle_ate(&gaussian, 0.5, &quad).unwrap();
    let mut grid_values = Vec::new();
    for family in [Family::Gaussian, Family::Frank] {
        let curve = oracle_curve(family, &DEFAULT_SENSITIVITY_GRID, 0.5, &quad).unwrap();
        grid_values.extend(curve.iter().map(|p| p.ate));
    }
    let grid_lo = grid_values.iter().copied().fold(f64::INFINITY, f64::min);
    let grid_hi = grid_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let config = nuisance(ForestConfig { residualize: true, min_leaf: 40, ..Default::default() });
    let reps: Vec<Replication> = (0..REPLICATIONS).map(|r| replicate(r, &config, &gaussian)).collect();
    let n = reps.len();
    let wald = [
        ("lower", truth_l, reps.iter().filter(|r| covers(r.lower, truth_l)).count()),
        ("upper", truth_u, reps.iter().filter(|r| covers(r.upper, truth_u)).count()),
        ("gaussian tau_k=0.5", truth_g, reps.iter().filter(|r| covers(r.gaussian, truth_g)).count()),
    ];
    for (name, truth, hits) in wald {
        let p = rate(hits, n);
        c.check((0.90..=0.98).contains(&p), format!("{name} Wald coverage {hits}/{n} of {truth:.4}"));
    }
    let im = reps.iter().filter(|r| r.identified.0 <= grid_lo && r.identified.1 >= grid_hi).count();
    c.check(
        rate(im, n) >= 0.93,
        format!("identified-set CI covers the grid ATEs [{grid_lo:.4}, {grid_hi:.4}] in {im}/{n}"),
    );
    c.note("quantile forest: residualized, min_leaf 40");

    let plain = nuisance(ForestConfig::default());
    let probe: Vec<Replication> = (0..40).map(|r| replicate(r, &plain, &gaussian)).collect();
    let hits = probe.iter().filter(|r| covers(r.lower, truth_l)).count()
        + probe.iter().filter(|r| covers(r.upper, truth_u)).count()
        + probe.iter().filter(|r| covers(r.gaussian, truth_g)).count();
    c.note(format!("diagnostic, default forest: pooled Wald coverage {hits}/{} over 40 replications", 3 * probe.len()));
    (c.verdict(), reps)
}
