use surrosens_core::data::RowRef;
use surrosens_core::dgp::{joint_density, oracle_ate, simulate, true_surrogacy_score, DgpConfig, OracleNuisance};
use surrosens_core::dml::{evaluate_moments, moment};
use surrosens_core::numeric::normal;
use surrosens_core::numeric::quadrature::{cached_rule, QuadratureConfig};
use surrosens_core::nuisance::{partition_folds, NuisanceBundle, NuisanceRow};
use surrosens_core::wsi::{d_weight, h_dual_general, NormalQuantile};
use surrosens_core::{Arm, Bound, CopulaSpec, Sample, Target};

use crate::{Checks, Verdict};

const RHO: f64 = 0.5;
const PHI: f64 = 0.5;
const STEPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Extreme surrogacy scores leave the default tolerance round-off limited.
fn quad() -> QuadratureConfig {
    QuadratureConfig { abs_tol: 1e-8, rel_tol: 1e-8, ..Default::default() }
}

fn targets() -> [Target; 3] {
    [
        Target::Bound(Bound::Lower),
        Target::Bound(Bound::Upper),
        Target::Copula(CopulaSpec::gaussian(0.5).unwrap()),
    ]
}

pub fn criterion_5() -> Verdict {
    let mut c = Checks::default();
    sample_means(&mut c);
    for target in targets() {
        orthogonality(&mut c, target);
    }
    c.verdict()
}

/// Sample mean of the moment at the true nuisances and the true τ.
fn sample_means(c: &mut Checks) {
    let data = simulate(&DgpConfig { n: 25_000, seed: 505, ..Default::default() }).unwrap();
    for target in targets() {
        let truth = oracle_ate(&target.copula(), RHO, &QuadratureConfig::default()).unwrap();
        let oracle = OracleNuisance::new(RHO, target, 1, &quad()).unwrap();
        let folds = partition_folds(data.len(), 3, 5).unwrap();
        let bundle = NuisanceBundle::oracle(&data, folds, &oracle, PHI, &quad()).unwrap();
        let values: Vec<f64> = evaluate_moments(&data, &bundle, truth).unwrap().iter().map(|e| e.value).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let z = mean.abs() / (sd / n.sqrt());
        c.check(z <= 3.0, format!("{}: sample mean {mean:.4} is {z:.2} se from zero", target.label()));
    }
}

/// Quadrature node over (s, x) in the one-surrogate design.
struct Node {
    s: f64,
    x: f64,
    column: usize,
    /// Quadrature weight times f(s, x).
    mass: f64,
    /// Quadrature weight alone.
    weight: f64,
    rho_sx: f64,
    m: f64,
}

fn nodes() -> Vec<Node> {
    let (xs, wx) = cached_rule(8).on_interval(0.0, 1.0);
    let rule = cached_rule(24);
    let mut out = Vec::new();
    for (column, (&x, &w_x)) in xs.iter().zip(&wx).enumerate() {
        for (a, b) in [(x - 8.0, x + 0.5), (x + 0.5, x + 9.0)] {
            let (ss, ws) = rule.on_interval(a, b);
            for (&s, &w_s) in ss.iter().zip(&ws) {
                out.push(Node {
                    s,
                    x,
                    column,
                    mass: w_x * w_s * joint_density(s, x, RHO),
                    weight: w_x * w_s,
                    rho_sx: true_surrogacy_score(s, x, RHO),
                    m: s + 0.5 * x,
                });
            }
        }
    }
    out
}

fn logistic_shift(p: f64, by: f64) -> f64 {
    1.0 / (1.0 + (-((p / (1.0 - p)).ln() + by)).exp())
}

/// E[(Z + t)₊] for standard normal Z.
fn normal_plus(t: f64) -> f64 {
    t * normal::cdf(t) + normal::pdf(t)
}

/// Quantile model N(m + shift, 1) at the level ρ(s,x) = `rho`.
fn correction_level(target: Target, m: f64, shift: f64, rho: f64) -> f64 {
    let centre = m + shift;
    match target {
        Target::Bound(b) => centre + normal::quantile(b.cutoff_level(rho)),
        Target::Copula(c) => centre + d_weight(&c, &NormalQuantile { mean: 0.0, sd: 1.0 }, 1.0 - rho, &quad()).unwrap(),
    }
}

/// Means of the dual pseudo-outcomes over Y ~ N(m, 1) when they are built
/// from the quantile model N(m + shift, 1) and the level `rho`.
fn expected_duals(target: Target, m: f64, shift: f64, rho: f64) -> [f64; 2] {
    match target {
        Target::Bound(bound) => {
            let cut = correction_level(target, m, shift, rho);
            let mean = |arm| match (bound, arm) {
                (Bound::Upper, Arm::Treated) => cut + normal_plus(m - cut) / rho,
                (Bound::Upper, Arm::Control) => cut - normal_plus(cut - m) / (1.0 - rho),
                (Bound::Lower, Arm::Treated) => cut - normal_plus(cut - m) / rho,
                (Bound::Lower, Arm::Control) => cut + normal_plus(m - cut) / (1.0 - rho),
            };
            [mean(Arm::Control), mean(Arm::Treated)]
        }
        Target::Copula(copula) => {
            let q = NormalQuantile { mean: m + shift, sd: 1.0 };
            let rule = cached_rule(16);
            let mut acc = [0.0; 2];
            for (a, b) in [(-8.0, -4.0), (-4.0, 0.0), (0.0, 4.0), (4.0, 8.0)] {
                let (zs, ws) = rule.on_interval(a, b);
                for (&z, &w) in zs.iter().zip(&ws) {
                    for arm in [Arm::Control, Arm::Treated] {
                        let h = h_dual_general(&copula, arm, m + z, &q, 1.0 - rho, &quad()).unwrap();
                        acc[arm as usize] += w * normal::pdf(z) * h;
                    }
                }
            }
            acc
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Direction {
    RhoSx,
    RhoX,
    PhiSx,
    Phi,
    Mu,
    MuBar,
    Quantile,
    Joint,
    /// ρ(s,x) moves in the weights only; the duals stay at the truth.
    FrozenDuals,
}

impl Direction {
    const ORTHOGONAL: [Direction; 8] = [
        Direction::RhoSx,
        Direction::RhoX,
        Direction::PhiSx,
        Direction::Phi,
        Direction::Mu,
        Direction::MuBar,
        Direction::Quantile,
        Direction::Joint,
    ];

    fn on(self, d: Direction) -> bool {
        self == d || (self == Direction::Joint && d != Direction::FrozenDuals)
    }
}

/// True nuisances at each node, with the harness's own quadrature.
struct Truth {
    target: Target,
    nodes: Vec<Node>,
    mu: Vec<[f64; 2]>,
    correction: Vec<f64>,
    mu_bar: Vec<[f64; 2]>,
    tau: f64,
}

impl Truth {
    fn new(target: Target) -> Self {
        let nodes = nodes();
        let mu: Vec<[f64; 2]> = nodes.iter().map(|n| expected_duals(target, n.m, 0.0, n.rho_sx)).collect();
        let correction = nodes.iter().map(|n| correction_level(target, n.m, 0.0, n.rho_sx)).collect();
        // μ̄_w(x) as the quadrature mean of μ_w over S | W=w, X=x.
        let columns = nodes.iter().map(|n| n.column).max().unwrap() + 1;
        let mut mu_bar = vec![[0.0; 2]; columns];
        for w in 0..2 {
            let mut num = vec![0.0; columns];
            let mut den = vec![0.0; columns];
            for (n, mu) in nodes.iter().zip(&mu) {
                let f = n.weight * normal::pdf(n.s - n.x - w as f64);
                num[n.column] += f * mu[w];
                den[n.column] += f;
            }
            for k in 0..columns {
                mu_bar[k][w] = num[k] / den[k];
            }
        }
        let mut truth = Truth { target, nodes, mu, correction, mu_bar, tau: 0.0 };
        let at_zero = truth.psi(Direction::Joint, 0.0, 0.0);
        let slope = at_zero - truth.psi(Direction::Joint, 0.0, 1.0);
        truth.tau = at_zero / slope;
        truth
    }

    /// Population mean of the moment with every nuisance in `dir` moved by `delta`.
    fn psi(&self, dir: Direction, delta: f64, tau: f64) -> f64 {
        let mut total = 0.0;
        for (i, n) in self.nodes.iter().enumerate() {
            let step = |d: Direction| if dir.on(d) { delta } else { 0.0 };
            let rho_sx = logistic_shift(n.rho_sx, (step(Direction::RhoSx) + step(Direction::FrozenDuals)) * (1.0 + 0.5 * (n.s - n.x).tanh()));
            let shift = step(Direction::Quantile) * (0.7 + 0.2 * n.x);
            let (duals, correction) = if rho_sx != n.rho_sx && dir != Direction::FrozenDuals || shift != 0.0 {
                (expected_duals(self.target, n.m, shift, rho_sx), correction_level(self.target, n.m, shift, rho_sx))
            } else {
                (self.mu[i], self.correction[i])
            };
            let mu_step = step(Direction::Mu);
            let bar_step = step(Direction::MuBar);
            let bar = self.mu_bar[n.column];
            let row = NuisanceRow {
                fold: 0,
                rho_x: logistic_shift(RHO, 0.8 * step(Direction::RhoX)),
                rho_sx,
                phi_sx: logistic_shift(PHI, step(Direction::PhiSx) * (0.6 - 0.4 * n.x)),
                phi: logistic_shift(PHI, step(Direction::Phi)),
                mu1: self.mu[i][1] + mu_step * (0.5 + 0.3 * n.s.sin() + 0.2 * n.x),
                mu0: self.mu[i][0] + mu_step * (-0.4 + 0.2 * n.s.cos()),
                mu_bar1: bar[1] + bar_step * (0.3 + 0.5 * n.x),
                mu_bar0: bar[0] + bar_step * (-0.2 + 0.1 * n.x),
                correction,
                h1: Some(duals[1]),
                h0: Some(duals[0]),
            };
            let (s, x) = ([n.s], [n.x]);
            let eval = |sample, w| {
                moment(RowRef { sample, w, y: None, s: &s, x: &x }, tau, &row).unwrap().value
            };
            let experimental =
                n.rho_sx * eval(Sample::Experimental, Some(true)) + (1.0 - n.rho_sx) * eval(Sample::Experimental, Some(false));
            let observational = eval(Sample::Observational, None);
            total += n.mass * (PHI * experimental + (1.0 - PHI) * observational);
        }
        total
    }
}

/// Least-squares slope of log r on log δ.
fn log_slope(steps: &[f64], r: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = steps.iter().zip(r).map(|(d, v)| (d.ln(), v.max(1e-300).ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn orthogonality(c: &mut Checks, target: Target) {
    let label = target.label();
    let truth = Truth::new(target);
    let oracle_tau = oracle_ate(&target.copula(), RHO, &QuadratureConfig::default()).unwrap();
    let at_oracle = truth.psi(Direction::Joint, 0.0, oracle_tau);
    c.check(
        (truth.tau - oracle_tau).abs() <= 1e-4,
        format!("{label}: population moment at the true tau {at_oracle:.1e}, root {:.5} vs {oracle_tau:.5}", truth.tau),
    );
    let mut summary = Vec::new();
    for dir in Direction::ORTHOGONAL {
        let r: Vec<f64> = STEPS.iter().map(|&d| truth.psi(dir, d, truth.tau).abs()).collect();
        if r[0] < 1e-9 {
            summary.push(format!("{dir:?} exact"));
            continue;
        }
        let slope = log_slope(&STEPS, &r);
        c.check(slope >= 1.7, format!("{label} {dir:?}: residual order {slope:.2}"));
        summary.push(format!("{dir:?} {slope:.2}"));
    }
    let frozen: Vec<f64> = STEPS.iter().map(|&d| truth.psi(Direction::FrozenDuals, d, truth.tau).abs()).collect();
    let slope = log_slope(&STEPS, &frozen);
    c.check(slope <= 1.3, format!("{label}: frozen duals give first-order bias (order {slope:.2})"));
    c.note(format!("{label} orders [{}]", summary.join(", ")));
}
