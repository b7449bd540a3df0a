use surrosens_core::dgp::{outcome_mean, simulate, surrogacy_score, DgpConfig, OutcomeKind};
use surrosens_core::dml::{estimate_bounds, EstimatorConfig};
use surrosens_core::numeric::normal;
use surrosens_core::wsi::{binary_worst_case_contrast, worst_case_dual};
use surrosens_core::{Arm, Bound};

use crate::{Checks, Verdict};

/// Worst-case contrast by enumerating the two outcome values through the
/// dual pseudo-outcomes.
fn brute_force(mu: f64, rho: f64) -> f64 {
    let cutoff = if 1.0 - rho > 1.0 - mu { 1.0 } else { 0.0 };
    let contrast = |y: f64| {
        worst_case_dual(Bound::Upper, Arm::Treated, y, cutoff, rho) - worst_case_dual(Bound::Upper, Arm::Control, y, cutoff, rho)
    };
    mu * contrast(1.0) + (1.0 - mu) * contrast(0.0)
}

pub fn criterion_8() -> Verdict {
    let mut c = Checks::default();
    let cfg = DgpConfig { n: 1000, seed: 88, surrogates: 5, covariates: 5, outcome: OutcomeKind::Binary, ..Default::default() };
    let data = simulate(&cfg).unwrap();
    let (mut closed_err, mut dual_err): (f64, f64) = (0.0, 0.0);
    for i in 0..data.len() {
        let (s, x) = (data.s(i), data.x(i));
        let mu = normal::cdf(outcome_mean(s, x) - cfg.threshold);
        let rho = surrogacy_score(s, x, cfg.rho);
        let direct = (mu / rho).min((1.0 - mu) / (1.0 - rho));
        closed_err = closed_err.max((binary_worst_case_contrast(mu, rho) - direct).abs());
        dual_err = dual_err.max((brute_force(mu, rho) - direct).abs());
    }
    c.check(closed_err <= 1e-12, format!("closed form vs min(mu/rho, (1-mu)/(1-rho)) over {} rows: {closed_err:.1e}", data.len()));
    c.check(dual_err <= 1e-12, format!("dual enumeration vs the same: {dual_err:.1e}"));
    let report = estimate_bounds(&data, &EstimatorConfig::default()).unwrap();
    let (l, u) = (report.lower().unwrap().tau_hat, report.upper().unwrap().tau_hat);
    c.check((-1.0..=1.0).contains(&l) && (-1.0..=1.0).contains(&u), format!("estimated bounds [{l:.4}, {u:.4}]"));
    c.verdict()
}
