//! Weighted surrogate indices and their dual representations.
//!
//! A weighted surrogate index is `∫₀¹ q(u) σ_w(u; α) du` where `q` is the
//! conditional outcome quantile function and
//! `σ_w(u; α) = (w − C(α|u)) / (w − α)`. Integrals over `u` are taken in
//! probit coordinates (`u = Φ(z)`), which removes the endpoint singularities
//! of unbounded quantile functions and Gaussian-copula kernels.

use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaSpec, Family};
use crate::error::{Error, Result};
use crate::numeric::normal;
use crate::numeric::quadrature::{cached_rule, integrate, QuadratureConfig};

/// Quantile functions are evaluated here instead of at 0 or 1.
pub const U_GUARD: f64 = 1e-9;
/// Half-width of the probit integration range.
pub const PROBIT_SPAN: f64 = 8.0;
/// Half-width of the probit range over which adaptive dual integrals are
/// taken; 1 − Φ(z) keeps full precision in double arithmetic up to here.
const DUAL_SPAN: f64 = 6.0;

pub trait QuantileFunction: Sync {
    fn eval(&self, u: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> QuantileFunction for F {
    fn eval(&self, u: f64) -> f64 {
        self(u)
    }
}

/// Quantile function of N(mean, sd²).
#[derive(Debug, Clone, Copy)]
pub struct NormalQuantile {
    pub mean: f64,
    pub sd: f64,
}

impl QuantileFunction for NormalQuantile {
    fn eval(&self, u: f64) -> f64 {
        self.mean + self.sd * normal::quantile(u)
    }
}

#[inline]
pub fn guarded(q: &dyn QuantileFunction, u: f64) -> f64 {
    if u <= 0.0 {
        q.eval(U_GUARD)
    } else if u >= 1.0 {
        q.eval(1.0 - U_GUARD)
    } else {
        q.eval(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_w(w: bool) -> Self {
        if w {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treated => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Upper,
}

impl Bound {
    pub fn copula(self) -> CopulaSpec {
        match self {
            Bound::Lower => CopulaSpec::frechet_lower(),
            Bound::Upper => CopulaSpec::frechet_upper(),
        }
    }

    /// Quantile level of the cutoff used by this bound's dual, given ρ(s,x).
    pub fn cutoff_level(self, rho_sx: f64) -> f64 {
        match self {
            Bound::Upper => 1.0 - rho_sx,
            Bound::Lower => rho_sx,
        }
    }
}

/// What the weighted surrogate indices are computed under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Bound(Bound),
    Copula(CopulaSpec),
}

impl Target {
    pub fn copula(&self) -> CopulaSpec {
        match self {
            Target::Bound(b) => b.copula(),
            Target::Copula(c) => *c,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Target::Bound(Bound::Lower) => "lower_bound".into(),
            Target::Bound(Bound::Upper) => "upper_bound".into(),
            Target::Copula(c) => c.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualKind {
    U,
    L,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::DegeneratePropensity(alpha))
    }
}

/// σ_{C,w}(u; α).
pub fn sigma_weight(copula: &CopulaSpec, arm: Arm, u: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let w = arm.value();
    Ok((w - copula.cond_cdf(alpha, u)) / (w - alpha))
}

/// ∫_{u_lo}^{u_hi} f(u) du evaluated in probit coordinates.
pub fn integrate_unit<F: FnMut(f64) -> f64>(
    mut f: F,
    u_lo: f64,
    u_hi: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let to_z = |u: f64| normal::quantile(u).clamp(-PROBIT_SPAN, PROBIT_SPAN);
    let zb: Vec<f64> = breaks.iter().map(|&u| to_z(u)).collect();
    integrate(
        |z| f(normal::cdf(z)) * normal::pdf(z),
        to_z(u_lo),
        to_z(u_hi),
        &zb,
        cfg,
    )
}

/// μ_{C,w} = ∫₀¹ q(u) σ_{C,w}(u; α) du.
pub fn wsi(
    q: &dyn QuantileFunction,
    copula: &CopulaSpec,
    arm: Arm,
    alpha: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_alpha(alpha)?;
    match copula.family() {
        Family::FrechetUpper => return worst_case_wsi(q, Bound::Upper, arm, 1.0 - alpha, quad),
        Family::FrechetLower => return worst_case_wsi(q, Bound::Lower, arm, 1.0 - alpha, quad),
        _ => {}
    }
    if copula.is_independence() {
        return integrate_unit(|u| guarded(q, u), 0.0, 1.0, &[], quad);
    }
    let w = arm.value();
    let breaks: Vec<f64> = copula.breakpoints(alpha).into_iter().collect();
    integrate_unit(
        |u| guarded(q, u) * (w - copula.cond_cdf(alpha, u)) / (w - alpha),
        0.0,
        1.0,
        &breaks,
        quad,
    )
}

/// AVaR_α = (1/(1−α)) ∫_α^1 q(u) du.
pub fn avar(q: &dyn QuantileFunction, alpha: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::ParameterOutOfRange(format!("avar level {alpha} outside [0, 1)")));
    }
    Ok(integrate_unit(|u| guarded(q, u), alpha, 1.0, &[], quad)? / (1.0 - alpha))
}

/// Lower-tail mean (1/β) ∫_0^β q(u) du.
fn lower_tail_mean(q: &dyn QuantileFunction, beta: f64, quad: &QuadratureConfig) -> Result<f64> {
    Ok(integrate_unit(|u| guarded(q, u), 0.0, beta, &[], quad)? / beta)
}

/// WSI under a Fréchet–Hoeffding bound:
///
/// | bound | w=1 | w=0 |
/// |---|---|---|
/// | upper | mean above q(1−ρ) | mean below q(1−ρ) |
/// | lower | mean below q(ρ) | mean above q(ρ) |
pub fn worst_case_wsi(
    q: &dyn QuantileFunction,
    bound: Bound,
    arm: Arm,
    rho_sx: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_alpha(rho_sx)?;
    match (bound, arm) {
        (Bound::Upper, Arm::Treated) => avar(q, 1.0 - rho_sx, quad),
        (Bound::Upper, Arm::Control) => lower_tail_mean(q, 1.0 - rho_sx, quad),
        (Bound::Lower, Arm::Treated) => lower_tail_mean(q, rho_sx, quad),
        (Bound::Lower, Arm::Control) => avar(q, rho_sx, quad),
    }
}

/// H_U(y, s, α) = s + (y − s)₊/α and H_L(y, s, α) = s − (y − s)₋/α.
#[inline]
pub fn dual_h(kind: DualKind, y: f64, s: f64, alpha: f64) -> f64 {
    match kind {
        DualKind::U => s + (y - s).max(0.0) / alpha,
        DualKind::L => s - (s - y).max(0.0) / alpha,
    }
}

/// Dual pseudo-outcome whose conditional mean is the worst-case WSI, given
/// the cutoff `q(bound.cutoff_level(ρ))`.
#[inline]
pub fn worst_case_dual(bound: Bound, arm: Arm, y: f64, cutoff: f64, rho_sx: f64) -> f64 {
    match (bound, arm) {
        (Bound::Upper, Arm::Treated) => dual_h(DualKind::U, y, cutoff, rho_sx),
        (Bound::Upper, Arm::Control) => dual_h(DualKind::L, y, cutoff, 1.0 - rho_sx),
        (Bound::Lower, Arm::Treated) => dual_h(DualKind::L, y, cutoff, rho_sx),
        (Bound::Lower, Arm::Control) => dual_h(DualKind::U, y, cutoff, 1.0 - rho_sx),
    }
}

/// Dual pseudo-outcome h_{C,w}(y; q, α) for a smooth copula, whose mean over
/// Y ~ q equals `wsi(q, copula, arm, alpha)`.
///
/// The Stieltjes integral is taken over the probit span; beyond it the
/// integrand is constant up to the quantile tail, and the σ-mass of each tail
/// is available exactly from C(α|u).
pub fn h_dual_general(
    copula: &CopulaSpec,
    arm: Arm,
    y: f64,
    q: &dyn QuantileFunction,
    alpha: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !copula.is_smooth() {
        return Err(Error::DensityUndefined(copula.family().name()));
    }
    if copula.is_independence() {
        return Ok(y);
    }
    let mut breaks: Vec<f64> = copula.breakpoints(alpha).into_iter().collect();
    breaks.extend(level_of(q, y));
    let tails = DualTails::new(copula, alpha, DUAL_SPAN);
    let (q_lo, q_hi) = (guarded(q, tails.u_lo), guarded(q, tails.u_hi));
    let core = integrate_unit(
        |u| {
            let qu = guarded(q, u);
            let ddu = copula.d_du_cond_cdf(alpha, u).unwrap_or(0.0);
            match arm {
                Arm::Treated => ((1.0 - u) * qu + (y - qu).max(0.0)) * ddu,
                Arm::Control => (u * qu - (qu - y).max(0.0)) * ddu,
            }
        },
        tails.u_lo,
        tails.u_hi,
        &breaks,
        quad,
    )?;
    Ok(match arm {
        Arm::Treated => tails.h1(y, q_lo, q_hi, core),
        Arm::Control => tails.h0(y, q_lo, q_hi, core),
    })
}

/// Closed-form pieces of the general duals outside the probit span.
#[derive(Debug, Clone, Copy)]
struct DualTails {
    alpha: f64,
    u_lo: f64,
    u_hi: f64,
    /// C(α|u) at 0, u_lo, u_hi, 1.
    c: [f64; 4],
}

impl DualTails {
    fn new(copula: &CopulaSpec, alpha: f64, span: f64) -> Self {
        let u_lo = normal::cdf(-span);
        let u_hi = normal::cdf(span);
        let c = [0.0, u_lo, u_hi, 1.0].map(|u| copula.cond_cdf(alpha, u));
        DualTails { alpha, u_lo, u_hi, c }
    }

    /// `core` is ∫_{u_lo}^{u_hi} [(1−u)q + (y−q)₊] ∂_uC du.
    fn h1(&self, y: f64, q_lo: f64, q_hi: f64, core: f64) -> f64 {
        let a = self.alpha;
        let sigma = |c: f64| (1.0 - c) / (1.0 - a);
        let [c0, clo, chi, c1] = self.c;
        sigma(c0) * y
            + q_lo.max(y) * (sigma(clo) - sigma(c0))
            - core / (1.0 - a)
            + (y - q_hi).max(0.0) * (sigma(c1) - sigma(chi))
    }

    /// `core` is ∫_{u_lo}^{u_hi} [u q − (q−y)₊] ∂_uC du.
    fn h0(&self, y: f64, q_lo: f64, q_hi: f64, core: f64) -> f64 {
        let a = self.alpha;
        let sigma = |c: f64| c / a;
        let [c0, clo, chi, c1] = self.c;
        let stieltjes = -(q_lo - y).max(0.0) * (sigma(clo) - sigma(c0))
            + core / a
            + q_hi.min(y) * (sigma(c1) - sigma(chi));
        sigma(c1) * y - stieltjes
    }
}

/// The level u with q(u) = y, by bisection in probit coordinates; `None`
/// when y lies outside the range of q.
fn level_of(q: &dyn QuantileFunction, y: f64) -> Option<f64> {
    let (mut lo, mut hi) = (-PROBIT_SPAN, PROBIT_SPAN);
    if q.eval(normal::cdf(lo)) >= y || q.eval(normal::cdf(hi)) <= y {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if q.eval(normal::cdf(mid)) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(normal::cdf(0.5 * (lo + hi)))
}

/// d_C = ∫₀¹ q(u) c(α|u) du.
pub fn d_weight(
    copula: &CopulaSpec,
    q: &dyn QuantileFunction,
    alpha: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !copula.is_smooth() {
        return Err(Error::DensityUndefined(copula.family().name()));
    }
    let breaks: Vec<f64> = copula.breakpoints(alpha).into_iter().collect();
    integrate_unit(
        |u| guarded(q, u) * copula.cond_pdf(alpha, u).unwrap_or(0.0),
        0.0,
        1.0,
        &breaks,
        quad,
    )
}

/// μ_{C+,1} − μ_{C+,0} for a binary outcome with P(Y=1|s,x) = μ.
pub fn binary_worst_case_contrast(mu: f64, rho_sx: f64) -> f64 {
    (mu / rho_sx).min((1.0 - mu) / (1.0 - rho_sx))
}

/// Increments of C(α|·) for ∫ g dC(α|u) on the grid: one per gap between
/// consecutive nodes, plus the two end cells out to the grid span.
#[derive(Debug, Clone)]
struct Increments {
    gaps: Vec<f64>,
    first: f64,
    last: f64,
}

impl Increments {
    fn new(copula: &CopulaSpec, alpha: f64, grid: &UnitGrid) -> Self {
        let n = grid.len();
        let at = |u: f64| copula.cond_cdf(alpha, u);
        let c: Vec<f64> = grid.u.iter().map(|&u| at(u)).collect();
        Increments {
            gaps: c.windows(2).map(|p| p[1] - p[0]).collect(),
            first: c[0] - at(grid.edges[0]),
            last: at(grid.edges[n]) - c[n - 1],
        }
    }
}

/// Mean of max(r, 0) for r linear from r0 to r1.
fn mean_positive_part(r0: f64, r1: f64) -> f64 {
    match (r0 >= 0.0, r1 >= 0.0) {
        (true, true) => 0.5 * (r0 + r1),
        (false, false) => 0.0,
        _ => {
            let (p, m) = (r0.max(r1), r0.min(r1));
            p * p / (2.0 * (p - m))
        }
    }
}

/// Fixed probit-space Gauss–Legendre rule on (0, 1), used when the
/// quantile function is a fitted model evaluated row by row.
#[derive(Debug, Clone)]
pub struct UnitGrid {
    pub u: Vec<f64>,
    pub weight: Vec<f64>,
    /// Cell boundaries in u around each node (probit midpoints).
    pub edges: Vec<f64>,
}

impl UnitGrid {
    pub fn probit(nodes: usize) -> Self {
        let rule = cached_rule(nodes);
        let (z, w) = rule.on_interval(-PROBIT_SPAN, PROBIT_SPAN);
        let u = z.iter().map(|&z| normal::cdf(z)).collect();
        let weight = z.iter().zip(&w).map(|(&z, &w)| w * normal::pdf(z)).collect();
        let mut edges = Vec::with_capacity(nodes + 1);
        edges.push(normal::cdf(-PROBIT_SPAN));
        edges.extend(z.windows(2).map(|p| normal::cdf(0.5 * (p[0] + p[1]))));
        edges.push(normal::cdf(PROBIT_SPAN));
        UnitGrid { u, weight, edges }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn eval(&self, q: &dyn QuantileFunction) -> Vec<f64> {
        self.u.iter().map(|&u| guarded(q, u)).collect()
    }
}

/// Copula functionals at one α on a [`UnitGrid`], for quantile values
/// already evaluated at the grid nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFunctionals {
    pub mu1: f64,
    pub mu0: f64,
    pub d: f64,
}

/// Per-α kernel weights on a grid.
#[derive(Debug, Clone)]
pub struct GridKernel {
    alpha: f64,
    cond: Vec<f64>,
    dens: Vec<f64>,
    ddu: Increments,
    /// Cell widths replacing the grid weights in cell-mass mode.
    mass: Option<Vec<f64>>,
    tails: DualTails,
}

impl GridKernel {
    pub fn new(copula: &CopulaSpec, alpha: f64, grid: &UnitGrid) -> Result<Self> {
        check_alpha(alpha)?;
        if !copula.is_smooth() {
            return Err(Error::DensityUndefined(copula.family().name()));
        }
        let n = grid.len();
        let (mut cond, mut dens) = (Vec::with_capacity(n), Vec::with_capacity(n));
        if copula.breakpoints(alpha).is_some() {
            // Kernels with an edge inside (0, 1): exact mass of each cell.
            // All families here are exchangeable, so ∂_α C(u, α) = C(u | α).
            for e in grid.edges.windows(2) {
                let (b0, b1) = (e[0], e[1]);
                cond.push(copula.joint_cdf(b1, alpha) - copula.joint_cdf(b0, alpha));
                dens.push(copula.cond_cdf(b1, alpha) - copula.cond_cdf(b0, alpha));
            }
        } else {
            for (&u, &w) in grid.u.iter().zip(&grid.weight) {
                cond.push(copula.cond_cdf(alpha, u) * w);
                dens.push(copula.cond_pdf(alpha, u)? * w);
            }
        }
        let ddu = Increments::new(copula, alpha, grid);
        let mass = if copula.breakpoints(alpha).is_some() {
            Some(grid.edges.windows(2).map(|e| e[1] - e[0]).collect())
        } else {
            None
        };
        Ok(GridKernel {
            alpha,
            cond,
            dens,
            ddu,
            mass,
            tails: DualTails::new(copula, alpha, PROBIT_SPAN),
        })
    }

    pub fn functionals(&self, grid: &UnitGrid, qvals: &[f64]) -> GridFunctionals {
        let a = self.alpha;
        let (mut mean, mut qc, mut d) = (0.0, 0.0, 0.0);
        let weight = self.mass.as_deref().unwrap_or(&grid.weight);
        for i in 0..qvals.len() {
            mean += qvals[i] * weight[i];
            qc += qvals[i] * self.cond[i];
            d += qvals[i] * self.dens[i];
        }
        GridFunctionals {
            mu1: (mean - qc) / (1.0 - a),
            mu0: qc / a,
            d,
        }
    }

    /// (h₁, h₀) duals for outcome `y`.
    pub fn duals(&self, grid: &UnitGrid, qvals: &[f64], y: f64) -> (f64, f64) {
        // Trapezoid in the Stieltjes measure, with q linear between nodes so
        // the kink of the positive parts at q = y is integrated exactly.
        let n = qvals.len();
        let (u, inc) = (&grid.u, &self.ddu);
        let g1 = |i: usize| (1.0 - u[i]) * qvals[i] + (y - qvals[i]).max(0.0);
        let g0 = |i: usize| u[i] * qvals[i] - (qvals[i] - y).max(0.0);
        let mut s1 = inc.first * g1(0) + inc.last * g1(n - 1);
        let mut s0 = inc.first * g0(0) + inc.last * g0(n - 1);
        for i in 0..n - 1 {
            let (qa, qb) = (qvals[i], qvals[i + 1]);
            let lin1 = 0.5 * ((1.0 - u[i]) * qa + (1.0 - u[i + 1]) * qb);
            let lin0 = 0.5 * (u[i] * qa + u[i + 1] * qb);
            s1 += inc.gaps[i] * (lin1 + mean_positive_part(y - qa, y - qb));
            s0 += inc.gaps[i] * (lin0 - mean_positive_part(qa - y, qb - y));
        }
        let (q_lo, q_hi) = (qvals[0], qvals[n - 1]);
        (
            self.tails.h1(y, q_lo, q_hi, s1),
            self.tails.h0(y, q_lo, q_hi, s0),
        )
    }
}
