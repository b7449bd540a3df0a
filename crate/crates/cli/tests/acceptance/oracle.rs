use std::time::Instant;

use surrosens_core::copulas::{is_stochastically_increasing, tau_to_theta, theta_to_tau};
use surrosens_core::dgp::{default_tau_grid, oracle_ate, oracle_curve, sign_change_threshold};
use surrosens_core::dml::DEFAULT_SENSITIVITY_GRID;
use surrosens_core::numeric::QuadratureConfig;
use surrosens_core::{CopulaSpec, Family};

use crate::coverage::Replication;
use crate::{Checks, Verdict};

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

pub fn criterion_1() -> Verdict {
    let mut c = Checks::default();
    let worst = [0.1, 0.5, 0.9]
        .iter()
        .map(|&rho| (oracle_ate(&CopulaSpec::independence(), rho, &quad()).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    c.check(worst <= 1e-3, format!("independence ATE max |error| {worst:.1e}"));
    let cases = [
        (Family::Gaussian, 0.5, -0.55, 0.02),
        (Family::Frank, 0.5, -0.55, 0.02),
        (Family::Gaussian, 0.1, -0.41, 0.03),
        (Family::Gaussian, 0.9, -0.41, 0.03),
    ];
    for (family, rho, target, tol) in cases {
        let t = sign_change_threshold(family, rho, -0.85, -0.15, &quad()).unwrap();
        c.check((t - target).abs() <= tol, format!("{family} rho={rho} sign change {t:.4} (want {target} +/- {tol})"));
    }
    let start = Instant::now();
    oracle_curve(Family::Gaussian, &default_tau_grid(Family::Gaussian), 0.5, &quad()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    c.check(secs <= 300.0, format!("19-point Gaussian curve in {secs:.1}s"));
    c.verdict()
}

pub fn criterion_2() -> Verdict {
    let mut c = Checks::default();
    let families = [Family::Gaussian, Family::Clayton, Family::Gumbel, Family::Frank, Family::Plackett];
    let mut worst: f64 = 0.0;
    for family in families {
        for &tau in DEFAULT_SENSITIVITY_GRID.iter().filter(|&&t| t != 0.0 && family.tau_in_range(t)) {
            let theta = tau_to_theta(family, tau).unwrap();
            worst = worst.max((theta_to_tau(family, theta).unwrap() - tau).abs());
        }
    }
    c.check(worst <= 1e-6, format!("round-trip max |error| {worst:.1e}"));
    let mut closed: f64 = 0.0;
    for &tau in DEFAULT_SENSITIVITY_GRID.iter().filter(|&&t| t > 0.0) {
        closed = closed.max((tau_to_theta(Family::Clayton, tau).unwrap() - 2.0 * tau / (1.0 - tau)).abs());
        closed = closed.max((tau_to_theta(Family::Gumbel, tau).unwrap() - 1.0 / (1.0 - tau)).abs());
    }
    for &tau in DEFAULT_SENSITIVITY_GRID.iter().filter(|&&t| t < 0.0 && Family::Clayton.tau_in_range(t)) {
        closed = closed.max((tau_to_theta(Family::Clayton, tau).unwrap() - 2.0 * tau / (1.0 - tau)).abs());
    }
    c.check(closed <= 1e-12, format!("Clayton/Gumbel closed forms max |error| {closed:.1e}"));
    let two = [Family::Clayton, Family::Gumbel].map(|f| tau_to_theta(f, 0.5).unwrap());
    c.check(two.iter().all(|&t| (t - 2.0).abs() <= 1e-12), format!("theta at tau=0.5: {:?}", two));
    c.verdict()
}

/// Monotone oracle curves, the sign of the surrogacy bias, and bound
/// ordering across the coverage replications.
pub fn criterion_7(reps: Option<&[Replication]>) -> Verdict {
    let mut c = Checks::default();
    for family in [Family::Gaussian, Family::Clayton, Family::Gumbel, Family::Frank] {
        let curve = oracle_curve(family, &default_tau_grid(family), 0.5, &quad()).unwrap();
        let drop = curve.windows(2).map(|p| p[0].ate - p[1].ate).fold(f64::NEG_INFINITY, f64::max);
        c.check(drop <= 1e-8, format!("{family} curve non-decreasing (largest step down {drop:.1e})"));
    }
    let pos = CopulaSpec::gaussian(0.5).unwrap();
    let neg = CopulaSpec::gaussian(-0.5).unwrap();
    let (up, down) = (oracle_ate(&pos, 0.5, &quad()).unwrap(), oracle_ate(&neg, 0.5, &quad()).unwrap());
    c.check(is_stochastically_increasing(&pos, 41), "Gaussian theta=0.5 is stochastically increasing");
    c.check(up > 1.0 && down < 1.0, format!("true ATE {up:.4} (theta=0.5) > 1 > {down:.4} (theta=-0.5)"));
    match reps {
        Some(reps) if !reps.is_empty() => {
            let crossed = reps.iter().filter(|r| r.crossing_z > 1.645).count();
            let share = crossed as f64 / reps.len() as f64;
            c.check(share <= 0.05, format!("lower exceeds upper beyond 1.645 joint se in {crossed}/{} replications", reps.len()));
        }
        _ => c.check(false, "no coverage replications to check ordering on"),
    }
    c.verdict()
}
