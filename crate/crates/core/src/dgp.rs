//! The illustrative data-generating process with its closed-form nuisances,
//! the quadrature oracle for the long-term ATE, and a seeded simulator.
//!
//! Base design (one surrogate, one covariate):
//! `X ~ U[0,1]`, `W ~ Bernoulli(ρ)`, `S = X + W + η_S`, `Y = S + 0.5X + η_Y`,
//! with the structural treatment `W = 1{ε > 1 − ρ(S,X)}` and the copula
//! coupling the rank of `η_Y` with `ε`. The extended design uses `k`
//! surrogates `S_l = X_{l mod m} + W + η_l` and `Y = mean(S) + 0.5·mean(X) + η_Y`,
//! optionally dichotomised at a threshold.

use rand::distributions::{Distribution, Open01};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaSpec, Family};
use crate::data::CombinedDataset;
use crate::error::{Error, Result};
use crate::numeric::normal;
use crate::numeric::quadrature::{integrate, QuadratureConfig};
use crate::numeric::roots::brent;
use crate::wsi::{self, Arm, Bound, NormalQuantile, Target};

pub const DEFAULT_S_RANGE: (f64, f64) = (-4.0, 6.0);
/// Largest S mass a configured range may leave out; the default range
/// leaves about 7.1e-6.
const S_MASS_SLACK: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    #[default]
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub rho: f64,
    pub copula: CopulaSpec,
    /// Units per sample; the dataset holds `n` experimental and `n`
    /// observational rows.
    pub n: usize,
    pub seed: u64,
    pub s_range: (f64, f64),
    pub surrogates: usize,
    pub covariates: usize,
    pub outcome: OutcomeKind,
    /// Binary outcomes are `1{mean(S) + 0.5·mean(X) + η_Y > threshold}`.
    pub threshold: f64,
    /// Use the surrogate-generating draw of W as the treatment, drawing ε
    /// from its conditional law given W instead of regenerating W from ε.
    pub single_draw: bool,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            rho: 0.5,
            copula: CopulaSpec::independence(),
            n: 1000,
            seed: 0,
            s_range: DEFAULT_S_RANGE,
            surrogates: 1,
            covariates: 1,
            outcome: OutcomeKind::Continuous,
            threshold: 1.0,
            single_draw: false,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho = {} must lie in (0, 1)", self.rho));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.surrogates == 0 || self.covariates == 0 {
            return bad("need at least one surrogate and one covariate".into());
        }
        let (lo, hi) = self.s_range;
        if !(lo < hi) {
            return bad(format!("empty s_range ({lo}, {hi})"));
        }
        if self.surrogates == 1 && self.covariates == 1 {
            let outside = s_mass_outside(self.rho, lo, hi);
            if outside > S_MASS_SLACK {
                return bad(format!("s_range ({lo}, {hi}) leaves {outside:.2e} of the S mass outside"));
            }
        }
        Ok(())
    }
}

/// P(S ∉ (lo, hi)) in the base design.
fn s_mass_outside(rho: f64, lo: f64, hi: f64) -> f64 {
    let tail = |shift: f64| {
        // X ~ U[0,1]: average the normal tails over x with a fine midpoint rule.
        let n = 200;
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                normal::cdf(lo - x - shift) + normal::cdf(-(hi - x - shift))
            })
            .sum::<f64>()
            / n as f64
    };
    (1.0 - rho) * tail(0.0) + rho * tail(1.0)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ρ(s,x) = P(W=1 | S=s, X=x) in the base design.
pub fn true_surrogacy_score(s: f64, x: f64, rho: f64) -> f64 {
    1.0 / (1.0 + ((1.0 - rho) / rho) * (-(s - x - 0.5)).exp())
}

/// Surrogacy score of the extended design: each surrogate contributes a
/// likelihood ratio `exp(s_l − x_{l mod m} − 1/2)`.
pub fn surrogacy_score(s: &[f64], x: &[f64], rho: f64) -> f64 {
    logistic((rho / (1.0 - rho)).ln() + surrogate_excess(s, x))
}

fn surrogate_excess(s: &[f64], x: &[f64]) -> f64 {
    s.iter().enumerate().map(|(l, &sl)| sl - x[l % x.len()] - 0.5).sum()
}

/// Conditional mean of the continuous outcome given (s, x).
pub fn outcome_mean(s: &[f64], x: &[f64]) -> f64 {
    mean(s) + 0.5 * mean(x)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// f_{S,X}(s, x) in the base design.
pub fn joint_density(s: f64, x: f64, rho: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    (1.0 - rho) * normal::pdf(s - x) + rho * normal::pdf(s - x - 1.0)
}

/// F_Y^{-1}(u | s, x) = s + 0.5x + Φ^{-1}(u).
pub fn true_quantile(u: f64, s: f64, x: f64) -> f64 {
    s + 0.5 * x + normal::quantile(u)
}

/// τ_C in the base design with outcome noise of standard deviation
/// `noise_sd`, by nested adaptive quadrature over x ∈ [0,1] and s in the
/// configured range of the second form
/// `E[ρ(s,x)/(ρ(1−ρ)) μ_{C,1}] − E[μ/(1−ρ)]`.
pub fn oracle_ate_with(
    copula: &CopulaSpec,
    rho: f64,
    noise_sd: f64,
    s_range: (f64, f64),
    quad: &QuadratureConfig,
) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!("rho = {rho} must lie in (0, 1)")));
    }
    let outer = QuadratureConfig {
        abs_tol: 1e-6,
        rel_tol: 1e-12,
        max_subdivisions: 200,
        ..*quad
    };
    let inner = QuadratureConfig { abs_tol: 1e-7, ..outer };
    let mut failure = None;
    let value = integrate(
        |x| {
            let v = integrate(
                |s| {
                    let rsx = true_surrogacy_score(s, x, rho);
                    let m = s + 0.5 * x;
                    let q = NormalQuantile { mean: m, sd: noise_sd };
                    let mu1 = if noise_sd == 0.0 {
                        m
                    } else {
                        match wsi::wsi(&q, copula, Arm::Treated, 1.0 - rsx, quad) {
                            Ok(v) => v,
                            Err(e) => {
                                failure.get_or_insert(e);
                                0.0
                            }
                        }
                    };
                    (rsx / (rho * (1.0 - rho)) * mu1 - m / (1.0 - rho)) * joint_density(s, x, rho)
                },
                s_range.0,
                s_range.1,
                &[x + 0.5],
                &inner,
            );
            v.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            })
        },
        0.0,
        1.0,
        &[],
        &outer,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// τ_C for the base design with unit outcome noise.
pub fn oracle_ate(copula: &CopulaSpec, rho: f64, quad: &QuadratureConfig) -> Result<f64> {
    oracle_ate_with(copula, rho, 1.0, DEFAULT_S_RANGE, quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCurvePoint {
    pub tau_k: f64,
    pub ate: f64,
}

/// Copula for a Kendall's tau grid point; zero maps to independence.
pub fn copula_at_tau(family: Family, tau: f64) -> Result<CopulaSpec> {
    if tau == 0.0 {
        return Ok(CopulaSpec::independence());
    }
    CopulaSpec::from_tau(family, tau)
}

pub fn oracle_curve(
    family: Family,
    tau_grid: &[f64],
    rho: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<OracleCurvePoint>> {
    for &t in tau_grid {
        if t != 0.0 && !family.tau_in_range(t) {
            return Err(Error::ParameterOutOfRange(format!("tau = {t} outside the {family} range")));
        }
    }
    tau_grid
        .par_iter()
        .map(|&tau_k| {
            let c = copula_at_tau(family, tau_k)?;
            Ok(OracleCurvePoint { tau_k, ate: oracle_ate(&c, rho, quad)? })
        })
        .collect()
}

/// Default Kendall's tau grid for a family: multiples of 0.1 in
/// [−0.9, 0.9] inside the family's range, plus zero.
pub fn default_tau_grid(family: Family) -> Vec<f64> {
    (-9..=9)
        .map(|i| i as f64 / 10.0)
        .filter(|&t| t == 0.0 || family.tau_in_range(t))
        .collect()
}

/// Kendall's tau in `[lo, hi]` at which τ_C crosses zero.
pub fn sign_change_threshold(
    family: Family,
    rho: f64,
    lo: f64,
    hi: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let mut failure = None;
    let root = brent(
        |t| {
            copula_at_tau(family, t)
                .and_then(|c| oracle_ate(&c, rho, quad))
                .unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                })
        },
        lo,
        hi,
        1e-5,
        60,
    );
    match failure {
        Some(e) => Err(e),
        None => root,
    }
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    normal::quantile(Open01.sample(rng))
}

/// Draws a dataset of `n` experimental and `n` observational rows, one of
/// each per unit index, each from an independent unit.
pub fn simulate(config: &DgpConfig) -> Result<CombinedDataset> {
    config.validate()?;
    let (k, m) = (config.surrogates, config.covariates);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = CombinedDataset::new(k, m)?;
    let mut unit = Unit { s: vec![0.0; k], x: vec![0.0; m], w: false, y: 0.0 };
    for _ in 0..config.n {
        draw_unit(config, &mut rng, &mut unit);
        data.push_experimental(unit.w, &unit.s, &unit.x);
        draw_unit(config, &mut rng, &mut unit);
        data.push_observational(unit.y, &unit.s, &unit.x);
    }
    Ok(data)
}

struct Unit {
    s: Vec<f64>,
    x: Vec<f64>,
    w: bool,
    y: f64,
}

fn draw_unit<R: Rng>(config: &DgpConfig, rng: &mut R, unit: &mut Unit) {
    let rho = config.rho;
    for xj in unit.x.iter_mut() {
        *xj = rng.gen::<f64>();
    }
    let w_marginal = rng.gen::<f64>() < rho;
    let m = unit.x.len();
    for (l, sl) in unit.s.iter_mut().enumerate() {
        *sl = unit.x[l % m] + f64::from(u8::from(w_marginal)) + std_normal(rng);
    }
    let cut = 1.0 - surrogacy_score(&unit.s, &unit.x, rho);
    let u: f64 = Open01.sample(rng);
    let eps = if config.single_draw {
        if w_marginal {
            cut + (1.0 - cut) * u
        } else {
            cut * u
        }
    } else {
        u
    };
    // The copula couples ε with the rank of η_Y; sample the rank given ε.
    let p: f64 = Open01.sample(rng);
    let v = config.copula.cond_quantile(p, eps).clamp(1e-16, 1.0 - 1e-16);
    unit.w = if config.single_draw { w_marginal } else { eps > cut };
    let latent = outcome_mean(&unit.s, &unit.x) + normal::quantile(v);
    unit.y = match config.outcome {
        OutcomeKind::Continuous => latent,
        OutcomeKind::Binary => f64::from(u8::from(latent > config.threshold)),
    };
}

/// Closed-form nuisances of the continuous design (unit outcome noise) for
/// one WSI target.
#[derive(Debug, Clone)]
pub struct OracleNuisance {
    rho: f64,
    target: Target,
    quad: QuadratureConfig,
    /// E[μ_{C,w} − μ | W=w, X] for w = 0, 1; constant in X.
    shift: [f64; 2],
    surrogates: usize,
}

impl OracleNuisance {
    pub fn new(rho: f64, target: Target, surrogates: usize, quad: &QuadratureConfig) -> Result<Self> {
        let mut me = OracleNuisance { rho, target, quad: *quad, shift: [0.0; 2], surrogates };
        let k = surrogates as f64;
        for arm in [Arm::Control, Arm::Treated] {
            // Σ_l (S_l − X_l) − k/2 ~ N(k·w − k/2, k) given W = w.
            let centre = k * arm.value() - 0.5 * k;
            let sd = k.sqrt();
            let mut failure = None;
            let v = integrate(
                |z| {
                    let r = logistic((rho / (1.0 - rho)).ln() + centre + sd * z);
                    me.excess(arm, r).unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        0.0
                    }) * normal::pdf(z)
                },
                -9.0,
                9.0,
                &[],
                &QuadratureConfig { abs_tol: 1e-10, rel_tol: 1e-10, ..*quad },
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            me.shift[arm as usize] = v;
        }
        Ok(me)
    }

    /// μ_{C,w} − μ at surrogacy score `rho_sx` for N(0,1) outcome noise.
    fn excess(&self, arm: Arm, rho_sx: f64) -> Result<f64> {
        let std = NormalQuantile { mean: 0.0, sd: 1.0 };
        match self.target {
            Target::Bound(b) => Ok(normal_worst_case(b, arm, rho_sx)),
            Target::Copula(c) => wsi::wsi(&std, &c, arm, 1.0 - rho_sx, &self.quad),
        }
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn rho_x(&self) -> f64 {
        self.rho
    }

    pub fn rho_sx(&self, s: &[f64], x: &[f64]) -> f64 {
        surrogacy_score(s, x, self.rho)
    }

    pub fn mu(&self, s: &[f64], x: &[f64]) -> f64 {
        outcome_mean(s, x)
    }

    pub fn wsi(&self, arm: Arm, s: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.mu(s, x) + self.excess(arm, self.rho_sx(s, x))?)
    }

    /// μ̄_{C,w}(w, x).
    pub fn cond_mean(&self, arm: Arm, x: &[f64]) -> f64 {
        let k = self.surrogates;
        let s_mean = (0..k).map(|l| x[l % x.len()]).sum::<f64>() / k as f64 + arm.value();
        s_mean + 0.5 * mean(x) + self.shift[arm as usize]
    }

    /// Cutoff q_{C±} for bound targets.
    pub fn cutoff(&self, s: &[f64], x: &[f64]) -> Option<f64> {
        match self.target {
            Target::Bound(b) => Some(self.mu(s, x) + normal::quantile(b.cutoff_level(self.rho_sx(s, x)))),
            Target::Copula(_) => None,
        }
    }

    /// d_C for copula targets; the cutoff for bound targets.
    pub fn correction_level(&self, s: &[f64], x: &[f64]) -> Result<f64> {
        match self.target {
            Target::Bound(_) => Ok(self.cutoff(s, x).unwrap()),
            Target::Copula(c) => {
                let std = NormalQuantile { mean: 0.0, sd: 1.0 };
                Ok(self.mu(s, x) + wsi::d_weight(&c, &std, 1.0 - self.rho_sx(s, x), &self.quad)?)
            }
        }
    }

    pub fn quantile(&self, s: &[f64], x: &[f64]) -> NormalQuantile {
        NormalQuantile { mean: self.mu(s, x), sd: 1.0 }
    }
}

/// Worst-case WSI of N(0,1) noise: tail means beyond the cutoff.
pub fn normal_worst_case(bound: Bound, arm: Arm, rho_sx: f64) -> f64 {
    let up = normal::pdf(normal::quantile(1.0 - rho_sx));
    let lo = normal::pdf(normal::quantile(rho_sx));
    match (bound, arm) {
        (Bound::Upper, Arm::Treated) => up / rho_sx,
        (Bound::Upper, Arm::Control) => -up / (1.0 - rho_sx),
        (Bound::Lower, Arm::Treated) => -lo / rho_sx,
        (Bound::Lower, Arm::Control) => lo / (1.0 - rho_sx),
    }
}
