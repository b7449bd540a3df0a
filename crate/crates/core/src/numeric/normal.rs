//! Standard normal helpers and the bivariate normal CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

use super::quadrature::gauss_legendre;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Φ^{-1}(p) by Wichura's AS241 (relative accuracy about 1e-16); returns ±∞
/// at the endpoints.
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[inline]
fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_5,
    1_971.590_950_306_551_443,
    13_731.693_765_509_461_25,
    45_921.953_931_549_871_46,
    67_265.770_927_008_700_85,
    33_430.575_583_588_128_11,
    2_509.080_928_730_122_673,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_25,
    687.187_007_492_057_908_6,
    5_394.196_021_424_751_077,
    21_213.794_301_586_595_87,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_67,
    5_226.495_278_852_545_925,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577,
    4.630_337_846_156_545_295,
    5.769_497_221_460_691_405,
    3.647_848_324_763_204_605,
    1.270_458_252_452_368_382,
    0.241_780_725_177_450_611_8,
    0.022_723_844_989_269_184_58,
    7.745_450_142_783_414_076e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821,
    1.676_384_830_183_803_849,
    0.689_767_334_985_100_004_5,
    0.148_103_976_427_480_074_6,
    0.015_198_666_563_616_457_49,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_844e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777,
    5.463_784_911_164_114_369,
    1.784_826_539_917_291_335,
    0.296_560_571_828_504_891_2,
    0.026_532_189_526_576_123_09,
    0.001_242_660_947_388_078_438,
    2.711_555_568_743_487_579e-5,
    2.010_334_399_292_288_132e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_8,
    0.136_929_880_922_735_805_3,
    0.014_875_361_290_850_614_85,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681e-5,
    1.421_511_758_316_445_888e-7,
    2.044_263_103_389_939_785e-15,
];

/// Upper orthant probability P(X > h, Y > k) for a standard bivariate normal
/// with correlation `r`, following Genz's adaptation of the Drezner–Wesolowsky
/// method (accurate to about 1e-15).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let n = if r.abs() < 0.3 {
        6
    } else if r.abs() < 0.75 {
        12
    } else {
        20
    };
    let (x, w) = gauss_legendre(n);
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (xi, wi) in x.iter().zip(w.iter()) {
            let sn = (asr * (xi + 1.0) / 2.0).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        // The full rule has weights summing to 2 on [-1, 1].
        bvn = bvn * asr / (4.0 * PI) + cdf(-h) * cdf(-k);
        return bvn;
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(bs / a_s + hk) / 2.0;
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if -hk < 100.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * (2.0 * PI).sqrt()
                * cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (xi, wi) in x.iter().zip(w.iter()) {
            let xs = (a * (xi + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -(bs / xs + hk) / 2.0;
            if asr > -100.0 {
                bvn += a
                    * wi
                    * asr.exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn + cdf(-h.max(k))
    } else {
        -bvn + (cdf(-h) - cdf(-k)).max(0.0)
    }
}

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation `r`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return cdf(k);
    }
    if k == f64::INFINITY {
        return cdf(h);
    }
    bvn_upper(-h, -k, r).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.025, 0.3, 0.5, 0.8, 0.975, 1.0 - 1e-9] {
            assert_abs_diff_eq!(cdf(quantile(p)), p, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
    }

    /// Independent route: integrate P(Y <= k | X = t) φ(t) over t <= h.
    fn bvn_by_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let lo = -12.0f64;
        let hi = h.min(12.0);
        let (x, w) = gauss_legendre(400);
        let half = (hi - lo) / 2.0;
        let mid = (hi + lo) / 2.0;
        x.iter()
            .zip(w.iter())
            .map(|(xi, wi)| {
                let t = mid + half * xi;
                wi * half * pdf(t) * cdf((k - r * t) / (1.0 - r * r).sqrt())
            })
            .sum()
    }

    #[test]
    fn bvn_matches_quadrature_across_correlations() {
        for &r in &[-0.99, -0.95, -0.7, -0.3, 0.0, 0.2, 0.5, 0.8, 0.93, 0.99] {
            for &(h, k) in &[(0.0, 0.0), (-1.0, 0.5), (1.3, -0.2), (-2.0, -1.5), (2.5, 1.0)] {
                let a = bvn_cdf(h, k, r);
                let b = bvn_by_quadrature(h, k, r);
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn bvn_orthant_closed_form() {
        // P(X<=0, Y<=0) = 1/4 + asin(r)/(2π)
        for &r in &[-0.9f64, -0.5, 0.0, 0.4, 0.95] {
            let expect = 0.25 + r.asin() / (2.0 * PI);
            assert_abs_diff_eq!(bvn_cdf(0.0, 0.0, r), expect, epsilon = 1e-14);
        }
    }
}
