//! Gauss–Legendre rules and adaptive Gauss–Kronrod integration.

use std::collections::HashMap;
use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = cached_rule(n);
    (rule.nodes.clone(), rule.weights.clone())
}

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        let nf = n as f64;
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let x = self.nodes.iter().map(|t| mid + half * t).collect();
        let w = self.weights.iter().map(|w| half * w).collect();
        (x, w)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared, lazily built rule of size `n`.
pub fn cached_rule(n: usize) -> &'static GaussLegendre {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussLegendre>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Box::leak(Box::new(GaussLegendre::new(n))))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel: (estimate, error estimate).
fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let est = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    (est, err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Size of the fixed rule used when integrating fitted quantile models.
    pub nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 1000,
            nodes: 256,
        }
    }
}

impl QuadratureConfig {
    pub fn coarse() -> Self {
        QuadratureConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_subdivisions: 200,
            nodes: 128,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    est: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive G7–K15 integration of `f` over [a, b], with optional
/// interior breakpoints where the integrand has kinks or jumps.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut edges = vec![lo];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    edges.extend(inner);
    edges.push(hi);

    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for win in edges.windows(2) {
        if win[1] <= win[0] {
            continue;
        }
        let (est, err) = kronrod15(&mut f, win[0], win[1]);
        total += est;
        total_err += err;
        heap.push(Panel { a: win[0], b: win[1], est, err });
    }

    let mut subdivisions = 0;
    while total_err > cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                error: total_err,
                subdivisions,
            });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            heap.push(Panel { err: 0.0, ..worst });
            total_err = heap.iter().map(|p| p.err).sum();
            continue;
        }
        let (e1, r1) = kronrod15(&mut f, worst.a, mid);
        let (e2, r2) = kronrod15(&mut f, mid, worst.b);
        total += e1 + e2 - worst.est;
        total_err += r1 + r2 - worst.err;
        heap.push(Panel { a: worst.a, b: mid, est: e1, err: r1 });
        heap.push(Panel { a: mid, b: worst.b, est: e2, err: r2 });
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            // Refresh accumulated sums to shed rounding drift.
            total = heap.iter().map(|p| p.est).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
    let total: f64 = heap.iter().map(|p| p.est).sum();
    Ok(sign * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_rule_is_exact_for_high_degree_polynomials() {
        for n in [1usize, 2, 5, 20, 64, 256] {
            let rule = GaussLegendre::new(n);
            assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let got = rule.integrate(|x| x.powi(deg as i32 - 1) * (deg as f64), 0.0, 1.0);
            assert_abs_diff_eq!(got, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn kronrod_panel_is_exact_to_degree_22() {
        let mut f = |x: f64| 23.0 * x.powi(22);
        let (est, _) = kronrod15(&mut f, 0.0, 1.0);
        assert_abs_diff_eq!(est, 1.0, epsilon = 1e-13);
        // Embedded Gauss rule is exact to degree 13, so the error estimate
        // vanishes there.
        let mut g = |x: f64| 14.0 * x.powi(13);
        let (est, err) = kronrod15(&mut g, 0.0, 1.0);
        assert_abs_diff_eq!(est, 1.0, epsilon = 1e-14);
        assert!(err < 1e-13);
    }

    #[test]
    fn adaptive_handles_kinks_and_peaks() {
        let cfg = QuadratureConfig::default();
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[], &cfg).unwrap();
        assert_abs_diff_eq!(v, 0.045 + 0.245, epsilon = 1e-10);
        let v = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, &[], &cfg).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (1.0f64 / 1e-2).atan() / 1e-2, epsilon = 1e-8);
        let v = integrate(|x: f64| if x < 0.4 { 1.0 } else { 3.0 }, 0.0, 1.0, &[0.4], &cfg).unwrap();
        assert_abs_diff_eq!(v, 0.4 + 1.8, epsilon = 1e-13);
        let v = integrate(|x: f64| x.sqrt(), 1.0, 0.0, &[], &cfg).unwrap();
        assert_abs_diff_eq!(v, -2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = QuadratureConfig { max_subdivisions: 3, ..Default::default() };
        let r = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &[], &cfg);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
