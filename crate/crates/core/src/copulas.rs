//! Bivariate copula families.
//!
//! Every family exposes the joint CDF `C(u, v)`, the conditional CDF
//! `C(α | u) = ∂C(u, α)/∂u`, its α-derivative (the conditional density) and
//! its u-derivative, plus conversion between Kendall's tau and the family
//! parameter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normal;
use crate::numeric::quadrature::{cached_rule, integrate, QuadratureConfig};
use crate::numeric::roots::brent;

/// Kendall's tau values this close to zero are treated as independence.
pub const TAU_ZERO: f64 = 1e-6;
/// Largest Frank parameter magnitude accepted.
pub const FRANK_THETA_MAX: f64 = 100.0;
const PLACKETT_THETA_MIN: f64 = 1e-6;
const PLACKETT_THETA_MAX: f64 = 1e6;
const PLACKETT_TAU_NODES: usize = 400;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Independence,
    Gaussian,
    Clayton,
    Gumbel,
    Frank,
    Plackett,
    FrechetLower,
    FrechetUpper,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Independence,
        Family::Gaussian,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
        Family::Plackett,
        Family::FrechetLower,
        Family::FrechetUpper,
    ];

    /// Families indexed by a dependence parameter.
    pub const PARAMETRIC: [Family; 5] = [
        Family::Gaussian,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
        Family::Plackett,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
            Family::Plackett => "plackett",
            Family::FrechetLower => "frechet_lower",
            Family::FrechetUpper => "frechet_upper",
        }
    }

    pub fn has_parameter(self) -> bool {
        Family::PARAMETRIC.contains(&self)
    }

    /// Closed range of Kendall's tau the family can attain (endpoints may be
    /// limits rather than attained values; see [`Family::tau_in_range`]).
    pub fn tau_range(self) -> (f64, f64) {
        match self {
            Family::Independence => (0.0, 0.0),
            Family::FrechetLower => (-1.0, -1.0),
            Family::FrechetUpper => (1.0, 1.0),
            Family::Gumbel => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }

    pub fn tau_in_range(self, tau: f64) -> bool {
        if !tau.is_finite() {
            return false;
        }
        match self {
            Family::Independence => tau == 0.0,
            Family::FrechetLower => tau == -1.0,
            Family::FrechetUpper => tau == 1.0,
            Family::Gumbel => (0.0..1.0).contains(&tau),
            Family::Clayton => (-1.0..1.0).contains(&tau),
            Family::Gaussian | Family::Frank | Family::Plackett => tau > -1.0 && tau < 1.0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown copula family '{s}'")))
    }
}

/// A copula family together with its (validated) dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct CopulaSpec {
    family: Family,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
}

impl TryFrom<RawSpec> for CopulaSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        CopulaSpec::new(raw.family, raw.theta)
    }
}

impl From<CopulaSpec> for RawSpec {
    fn from(spec: CopulaSpec) -> Self {
        RawSpec {
            family: spec.family,
            theta: spec.theta(),
        }
    }
}

impl fmt::Display for CopulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.theta() {
            Some(t) => write!(f, "{}(theta={t})", self.family),
            None => write!(f, "{}", self.family),
        }
    }
}

fn check_theta(family: Family, theta: f64) -> Result<()> {
    let ok = theta.is_finite()
        && match family {
            Family::Gaussian => theta > -1.0 && theta < 1.0,
            Family::Clayton => theta >= -1.0 && theta != 0.0,
            Family::Gumbel => theta >= 1.0,
            Family::Frank => theta != 0.0 && theta.abs() <= FRANK_THETA_MAX,
            Family::Plackett => theta > 0.0 && theta != 1.0,
            _ => true,
        };
    if ok {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!(
            "theta = {theta} is not valid for the {family} copula"
        )))
    }
}

impl CopulaSpec {
    pub fn new(family: Family, theta: Option<f64>) -> Result<Self> {
        match (family.has_parameter(), theta) {
            (true, Some(t)) => {
                check_theta(family, t)?;
                Ok(CopulaSpec { family, theta: t })
            }
            (true, None) => Err(Error::ParameterOutOfRange(format!(
                "the {family} copula needs a dependence parameter"
            ))),
            (false, None) => Ok(CopulaSpec { family, theta: 0.0 }),
            (false, Some(_)) => Err(Error::ParameterOutOfRange(format!(
                "the {family} copula takes no parameter"
            ))),
        }
    }

    pub fn independence() -> Self {
        CopulaSpec { family: Family::Independence, theta: 0.0 }
    }

    pub fn frechet_lower() -> Self {
        CopulaSpec { family: Family::FrechetLower, theta: 0.0 }
    }

    pub fn frechet_upper() -> Self {
        CopulaSpec { family: Family::FrechetUpper, theta: 0.0 }
    }

    pub fn gaussian(theta: f64) -> Result<Self> {
        Self::new(Family::Gaussian, Some(theta))
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        Self::new(Family::Clayton, Some(theta))
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        Self::new(Family::Gumbel, Some(theta))
    }

    pub fn frank(theta: f64) -> Result<Self> {
        Self::new(Family::Frank, Some(theta))
    }

    pub fn plackett(theta: f64) -> Result<Self> {
        Self::new(Family::Plackett, Some(theta))
    }

    /// The family member with Kendall's tau equal to `tau`; tau = 0 yields
    /// the independence copula.
    pub fn from_tau(family: Family, tau: f64) -> Result<Self> {
        match family {
            Family::Independence | Family::FrechetLower | Family::FrechetUpper => {
                if family.tau_in_range(tau) {
                    Ok(CopulaSpec::new(family, None)?)
                } else {
                    Err(Error::ParameterOutOfRange(format!(
                        "tau = {tau} is not attainable by the {family} copula"
                    )))
                }
            }
            _ => match tau_to_theta(family, tau) {
                Ok(theta) => CopulaSpec::new(family, Some(theta)),
                Err(Error::IndependenceTau(_)) => Ok(CopulaSpec::independence()),
                Err(e) => Err(e),
            },
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> Option<f64> {
        self.family.has_parameter().then_some(self.theta)
    }

    pub fn kendall_tau(&self) -> f64 {
        match self.family {
            Family::Independence => 0.0,
            Family::FrechetLower => -1.0,
            Family::FrechetUpper => 1.0,
            f => theta_to_tau(f, self.theta).expect("validated parameter"),
        }
    }

    /// Whether C(α|u) is twice continuously differentiable, so that the
    /// conditional density and ∂_u C(α|u) exist.
    pub fn is_smooth(&self) -> bool {
        match self.family {
            Family::FrechetLower | Family::FrechetUpper => false,
            Family::Clayton => self.theta > -1.0,
            _ => true,
        }
    }

    /// Reduces to independence (Gaussian 0 or Gumbel 1).
    pub fn is_independence(&self) -> bool {
        match self.family {
            Family::Independence => true,
            Family::Gaussian => self.theta == 0.0,
            Family::Gumbel => self.theta == 1.0,
            _ => false,
        }
    }

    /// Joint CDF C(u, v).
    pub fn joint_cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return v;
        }
        if v == 1.0 {
            return u;
        }
        let t = self.theta;
        let c = match self.family {
            Family::Independence => u * v,
            Family::FrechetUpper => u.min(v),
            Family::FrechetLower => (u + v - 1.0).max(0.0),
            Family::Gaussian => {
                if t == 0.0 {
                    u * v
                } else {
                    normal::bvn_cdf(normal::quantile(u), normal::quantile(v), t)
                }
            }
            Family::Clayton => {
                let b = u.powf(-t) + v.powf(-t) - 1.0;
                if b <= 0.0 {
                    0.0
                } else {
                    b.powf(-1.0 / t)
                }
            }
            Family::Gumbel => {
                let a = (-u.ln()).powf(t) + (-v.ln()).powf(t);
                (-a.powf(1.0 / t)).exp()
            }
            Family::Frank => {
                let a = (-t * u).exp_m1();
                let b = (-t * v).exp_m1();
                let d = (-t).exp_m1();
                -(a * b / d).ln_1p() / t
            }
            Family::Plackett => {
                let eta = t - 1.0;
                let s = 1.0 + eta * (u + v);
                let r = (s * s - 4.0 * t * eta * u * v).max(0.0).sqrt();
                // Rationalised form avoids cancellation in S - R.
                2.0 * t * u * v / (s + r)
            }
        };
        c.clamp(0.0, u.min(v))
    }

    /// Conditional CDF C(α | u) = P(V ≤ α | U = u).
    pub fn cond_cdf(&self, alpha: f64, u: f64) -> f64 {
        let (a, u) = (alpha.clamp(0.0, 1.0), u.clamp(0.0, 1.0));
        if a == 0.0 {
            return 0.0;
        }
        if a == 1.0 {
            return 1.0;
        }
        let t = self.theta;
        let val = match self.family {
            Family::Independence => a,
            Family::FrechetUpper => f64::from(u <= a),
            Family::FrechetLower => f64::from(u > 1.0 - a),
            Family::Gaussian => {
                if t == 0.0 {
                    a
                } else if u == 0.0 || u == 1.0 {
                    // z_u = ∓∞
                    f64::from((u == 0.0) == (t > 0.0))
                } else {
                    let s = (1.0 - t * t).sqrt();
                    normal::cdf((normal::quantile(a) - t * normal::quantile(u)) / s)
                }
            }
            Family::Clayton => clayton_cond(a, u, t),
            Family::Gumbel => gumbel_cond(a, u, t),
            Family::Frank => {
                let f = FrankTerms::new(t, a, u);
                f.eu * f.n / f.s
            }
            Family::Plackett => {
                let eta = t - 1.0;
                let s = 1.0 + eta * (u + a);
                let r = (s * s - 4.0 * t * eta * u * a).max(0.0).sqrt();
                let n = 1.0 + eta * u - (t + 1.0) * a;
                0.5 - n / (2.0 * r)
            }
        };
        val.clamp(0.0, 1.0)
    }

    /// Conditional density c(α | u) = ∂C(α|u)/∂α.
    pub fn cond_pdf(&self, alpha: f64, u: f64) -> Result<f64> {
        if !self.is_smooth() {
            return Err(Error::DensityUndefined(self.family.name()));
        }
        let (a, u) = (interior(alpha), interior(u));
        let t = self.theta;
        let val = match self.family {
            Family::Independence => 1.0,
            Family::Gaussian => {
                if t == 0.0 {
                    1.0
                } else {
                    let s = (1.0 - t * t).sqrt();
                    let za = normal::quantile(a);
                    let w = (za - t * normal::quantile(u)) / s;
                    (0.5 * (za * za - w * w)).exp() / s
                }
            }
            Family::Clayton => {
                let g = 1.0 + u.powf(t) * (a.powf(-t) - 1.0);
                if g <= 0.0 {
                    0.0
                } else {
                    (1.0 + t) * a.powf(-t - 1.0) * u.powf(t) * g.powf(-(1.0 + 2.0 * t) / t)
                }
            }
            Family::Gumbel => {
                if t == 1.0 {
                    1.0
                } else {
                    let (x, y) = (-u.ln(), -a.ln());
                    let ax = x.powf(t) + y.powf(t);
                    let s = ax.powf(1.0 / t);
                    let log_c = -s + (t - 1.0) * (x.ln() + y.ln()) + x + y
                        + (2.0 / t - 2.0) * ax.ln()
                        + (1.0 + (t - 1.0) / s).ln();
                    log_c.exp()
                }
            }
            Family::Frank => {
                let f = FrankTerms::new(t, a, u);
                -t * (-t).exp_m1() * f.eu * f.ea / (f.s * f.s)
            }
            Family::Plackett => {
                let eta = t - 1.0;
                let s = 1.0 + eta * (u + a);
                let r2 = s * s - 4.0 * t * eta * u * a;
                t * (1.0 + eta * (u + a - 2.0 * u * a)) / (r2 * r2.sqrt())
            }
            Family::FrechetLower | Family::FrechetUpper => unreachable!(),
        };
        Ok(val.max(0.0))
    }

    /// ∂_u C(α | u).
    pub fn d_du_cond_cdf(&self, alpha: f64, u: f64) -> Result<f64> {
        if !self.is_smooth() {
            return Err(Error::DensityUndefined(self.family.name()));
        }
        let (a, u) = (interior(alpha), interior(u));
        let t = self.theta;
        let val = match self.family {
            Family::Independence => 0.0,
            Family::Gaussian => {
                if t == 0.0 {
                    0.0
                } else {
                    let s = (1.0 - t * t).sqrt();
                    let zu = normal::quantile(u);
                    let w = (normal::quantile(a) - t * zu) / s;
                    -t / s * (0.5 * (zu * zu - w * w)).exp()
                }
            }
            Family::Clayton => {
                let g = 1.0 + u.powf(t) * (a.powf(-t) - 1.0);
                if g <= 0.0 {
                    0.0
                } else {
                    -(1.0 + t) * u.powf(t - 1.0) * (a.powf(-t) - 1.0) * g.powf(-(1.0 + 2.0 * t) / t)
                }
            }
            Family::Gumbel => {
                if t == 1.0 {
                    0.0
                } else {
                    let (x, y) = (-u.ln(), -a.ln());
                    let ax = x.powf(t) + y.powf(t);
                    let xt1 = x.powf(t - 1.0);
                    let dlog = (ax.powf(1.0 / t - 1.0) * xt1 + (t - 1.0) * xt1 / ax
                        - (t - 1.0) / x
                        - 1.0)
                        / u;
                    gumbel_cond(a, u, t) * dlog
                }
            }
            Family::Frank => {
                let f = FrankTerms::new(t, a, u);
                -t * f.n * f.eu * f.ea * f.m / (f.s * f.s)
            }
            Family::Plackett => {
                let eta = t - 1.0;
                let s = 1.0 + eta * (u + a);
                let r2 = s * s - 4.0 * t * eta * u * a;
                let n = 1.0 + eta * u - (t + 1.0) * a;
                -eta * (r2 - n * n) / (2.0 * r2 * r2.sqrt())
            }
            Family::FrechetLower | Family::FrechetUpper => unreachable!(),
        };
        Ok(val)
    }

    /// Central-difference fallback for ∂_u C(α|u), step clipped to [0, 1].
    pub fn d_du_cond_cdf_numeric(&self, alpha: f64, u: f64) -> f64 {
        let lo = (u - FD_STEP).max(0.0);
        let hi = (u + FD_STEP).min(1.0);
        (self.cond_cdf(alpha, hi) - self.cond_cdf(alpha, lo)) / (hi - lo)
    }

    /// Points in u where C(α|·) has a jump or a kink, for splitting
    /// integration domains.
    pub fn breakpoints(&self, alpha: f64) -> Option<f64> {
        match self.family {
            Family::FrechetUpper => Some(alpha),
            Family::FrechetLower => Some(1.0 - alpha),
            Family::Clayton if self.theta < 0.0 => {
                let s = -self.theta;
                Some((1.0 - alpha.powf(s)).powf(1.0 / s))
            }
            _ => None,
        }
    }

    /// The conditional quantile C^{-1}(p | u): the v with C(v|u) = p.
    pub fn cond_quantile(&self, p: f64, u: f64) -> f64 {
        let (p, u) = (p.clamp(0.0, 1.0), u.clamp(0.0, 1.0));
        let t = self.theta;
        match self.family {
            Family::Independence => p,
            Family::FrechetUpper => u,
            Family::FrechetLower => 1.0 - u,
            Family::Gaussian if u > 0.0 && u < 1.0 && p > 0.0 && p < 1.0 => normal::cdf(
                t * normal::quantile(u) + (1.0 - t * t).sqrt() * normal::quantile(p),
            ),
            Family::Clayton if t == -1.0 => 1.0 - u,
            Family::Clayton if u > 0.0 && p > 0.0 && p < 1.0 => {
                let g = p.powf(-t / (1.0 + t));
                let base = 1.0 + (g - 1.0) * u.powf(-t);
                base.max(0.0).powf(-1.0 / t).clamp(0.0, 1.0)
            }
            Family::Frank if p > 0.0 && p < 1.0 => {
                let e = (-t * u).exp();
                let d = (-t).exp_m1();
                let b = p * d / (e * (1.0 - p) + p);
                (-b.ln_1p() / t).clamp(0.0, 1.0)
            }
            _ => self.cond_quantile_numeric(p, u),
        }
    }

    /// Conditional quantile by Brent inversion of C(·|u).
    pub fn cond_quantile_numeric(&self, p: f64, u: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        brent(|v| self.cond_cdf(v, u) - p, 0.0, 1.0, 1e-14, 200).unwrap_or(p)
    }
}

#[inline]
fn interior(x: f64) -> f64 {
    x.clamp(1e-300, 1.0 - f64::EPSILON / 2.0)
}

fn clayton_cond(a: f64, u: f64, t: f64) -> f64 {
    if u == 0.0 {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let g = 1.0 + u.powf(t) * (a.powf(-t) - 1.0);
    if g <= 0.0 {
        return 0.0;
    }
    if t == -1.0 {
        return 1.0;
    }
    g.powf(-(1.0 + t) / t)
}

fn gumbel_cond(a: f64, u: f64, t: f64) -> f64 {
    if t == 1.0 {
        return a;
    }
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let (x, y) = (-u.ln(), -a.ln());
    let ax = x.powf(t) + y.powf(t);
    let log_c = -ax.powf(1.0 / t) + (1.0 / t - 1.0) * ax.ln() + (t - 1.0) * x.ln() + x;
    log_c.exp()
}

/// Debye function D₁(x) = (1/x)∫₀ˣ t/(eᵗ − 1) dt.
pub fn debye1(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let cfg = QuadratureConfig { abs_tol: 1e-12, rel_tol: 1e-14, max_subdivisions: 500, nodes: 0 };
    let integrand = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    integrate(integrand, 0.0, x, &[], &cfg).expect("smooth integrand") / x
}

/// Pieces of the Frank conditional distribution arranged so that no step
/// subtracts nearly equal numbers: with U = e^{−θu} and A = e^{−θα},
/// C(α|u) = U(1−A) / (U(1−A) + A(1−e^{−θ(1−α)})), and both summands share
/// the sign of θ.
struct FrankTerms {
    eu: f64,
    ea: f64,
    /// 1 − e^{−θα}.
    n: f64,
    /// 1 − e^{−θ(1−α)}.
    m: f64,
    s: f64,
}

impl FrankTerms {
    fn new(theta: f64, alpha: f64, u: f64) -> Self {
        let eu = (-theta * u).exp();
        let ea = (-theta * alpha).exp();
        let n = -(-theta * alpha).exp_m1();
        let m = -(-theta * (1.0 - alpha)).exp_m1();
        FrankTerms { eu, ea, n, m, s: eu * n + ea * m }
    }
}

fn frank_tau(theta: f64) -> f64 {
    1.0 - 4.0 / theta * (1.0 - debye1(theta))
}

fn plackett_tau(theta: f64) -> f64 {
    let spec = CopulaSpec { family: Family::Plackett, theta };
    let rule = cached_rule(PLACKETT_TAU_NODES);
    let (x, w) = rule.on_interval(0.0, 1.0);
    let mut acc = 0.0;
    for (u, wu) in x.iter().zip(&w) {
        let mut inner = 0.0;
        for (v, wv) in x.iter().zip(&w) {
            let c = spec.cond_pdf(*v, *u).unwrap_or(0.0);
            inner += wv * spec.joint_cdf(*u, *v) * c;
        }
        acc += wu * inner;
    }
    4.0 * acc - 1.0
}

/// Kendall's tau of the family member with parameter `theta`.
pub fn theta_to_tau(family: Family, theta: f64) -> Result<f64> {
    match family {
        Family::Independence => Ok(0.0),
        Family::FrechetLower => Ok(-1.0),
        Family::FrechetUpper => Ok(1.0),
        f => {
            check_theta(f, theta)?;
            Ok(match f {
                Family::Gaussian => std::f64::consts::FRAC_2_PI * theta.asin(),
                Family::Clayton => theta / (theta + 2.0),
                Family::Gumbel => 1.0 - 1.0 / theta,
                Family::Frank => frank_tau(theta),
                Family::Plackett => plackett_tau(theta),
                _ => unreachable!(),
            })
        }
    }
}

/// Family parameter with Kendall's tau equal to `tau`.
///
/// Returns [`Error::IndependenceTau`] when `|tau| < TAU_ZERO`; callers then
/// use the independence copula.
pub fn tau_to_theta(family: Family, tau: f64) -> Result<f64> {
    if !family.has_parameter() {
        return Err(Error::ParameterOutOfRange(format!(
            "the {family} copula has no parameter"
        )));
    }
    if !family.tau_in_range(tau) {
        return Err(Error::ParameterOutOfRange(format!(
            "tau = {tau} is not attainable by the {family} copula"
        )));
    }
    if tau.abs() < TAU_ZERO {
        return Err(Error::IndependenceTau(family.name()));
    }
    match family {
        Family::Gaussian => Ok((std::f64::consts::FRAC_PI_2 * tau).sin()),
        Family::Clayton => Ok(2.0 * tau / (1.0 - tau)),
        Family::Gumbel => Ok(1.0 / (1.0 - tau)),
        Family::Frank => {
            let (lo, hi) = if tau > 0.0 {
                (1e-8, FRANK_THETA_MAX)
            } else {
                (-FRANK_THETA_MAX, -1e-8)
            };
            let edge = frank_tau(if tau > 0.0 { hi } else { lo });
            if tau.abs() > edge.abs() {
                return Err(Error::ParameterOutOfRange(format!(
                    "tau = {tau} needs |theta| > {FRANK_THETA_MAX} for the frank copula"
                )));
            }
            brent(|th| frank_tau(th) - tau, lo, hi, 1e-13, 200)
        }
        Family::Plackett => {
            let f = |lt: f64| plackett_tau(lt.exp()) - tau;
            let lt = brent(f, PLACKETT_THETA_MIN.ln(), PLACKETT_THETA_MAX.ln(), 1e-12, 200)
                .map_err(|e| Error::ParameterOutOfRange(format!("plackett tau = {tau}: {e}")))?;
            Ok(lt.exp())
        }
        _ => unreachable!(),
    }
}

/// Interior lattice {1/(n+1), …, n/(n+1)}.
fn lattice(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n as f64 + 1.0)).collect()
}

/// `a ≺_c b`: C_a ≤ C_b pointwise on the `grid_n × grid_n` interior lattice.
pub fn concordance_leq(a: &CopulaSpec, b: &CopulaSpec, grid_n: usize) -> bool {
    let g = lattice(grid_n.max(2));
    g.iter()
        .all(|&u| g.iter().all(|&v| a.joint_cdf(u, v) <= b.joint_cdf(u, v) + 1e-12))
}

/// Whether C(α|u) is non-increasing in u for every α on the lattice.
pub fn is_stochastically_increasing(spec: &CopulaSpec, grid_n: usize) -> bool {
    let g = lattice(grid_n.max(3));
    g.iter().all(|&a| {
        g.windows(2)
            .all(|w| spec.cond_cdf(a, w[1]) <= spec.cond_cdf(a, w[0]) + 1e-10)
    })
}
