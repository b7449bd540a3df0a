use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surrosens_core::numeric::{normal, QuadratureConfig};
use surrosens_core::wsi::{h_dual_general, worst_case_dual, worst_case_wsi, wsi, NormalQuantile};
use surrosens_core::{Arm, Bound, CopulaSpec};

use crate::{Checks, Verdict};

const DRAWS: usize = 100_000;

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn normal_draws(mean: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..DRAWS).map(|_| mean + normal::quantile(rng.gen_range(f64::EPSILON..1.0))).collect()
}

pub fn criterion_3() -> Verdict {
    let mut c = Checks::default();
    let quad = QuadratureConfig::default();
    let (m, rho_sx) = (0.7, 0.35);
    let q = NormalQuantile { mean: m, sd: 1.0 };
    let ys = normal_draws(m, 17);
    let mut worst_z: f64 = 0.0;
    for bound in [Bound::Lower, Bound::Upper] {
        let cutoff = m + normal::quantile(bound.cutoff_level(rho_sx));
        for arm in [Arm::Control, Arm::Treated] {
            let h: Vec<f64> = ys.iter().map(|&y| worst_case_dual(bound, arm, y, cutoff, rho_sx)).collect();
            let (mean, se) = mean_and_se(&h);
            let primal = worst_case_wsi(&q, bound, arm, rho_sx, &quad).unwrap();
            let z = (mean - primal).abs() / se;
            worst_z = worst_z.max(z);
            c.check(z <= 3.0, format!("{bound:?} w={}: {z:.2} se", arm.value()));
        }
    }
    let gaussian = CopulaSpec::gaussian(0.6).unwrap();
    let alpha = 1.0 - rho_sx;
    for arm in [Arm::Control, Arm::Treated] {
        let h: Vec<f64> = ys.iter().map(|&y| h_dual_general(&gaussian, arm, y, &q, alpha, &quad).unwrap()).collect();
        let (mean, se) = mean_and_se(&h);
        let primal = wsi(&q, &gaussian, arm, alpha, &quad).unwrap();
        let z = (mean - primal).abs() / se;
        c.check(z <= 3.0, format!("Gaussian theta=0.6 w={}: {z:.2} se", arm.value()));
    }
    c.note(format!("{DRAWS} draws, largest bound discrepancy {worst_z:.2} se"));
    c.verdict()
}

pub fn criterion_4() -> Verdict {
    let mut c = Checks::default();
    let quad = QuadratureConfig::default();
    let copulas = [
        CopulaSpec::independence(),
        CopulaSpec::gaussian(0.5).unwrap(),
        CopulaSpec::gaussian(-0.7).unwrap(),
        CopulaSpec::clayton(2.0).unwrap(),
        CopulaSpec::clayton(-0.5).unwrap(),
        CopulaSpec::gumbel(2.0).unwrap(),
        CopulaSpec::frank(5.0).unwrap(),
        CopulaSpec::frank(-5.0).unwrap(),
        CopulaSpec::plackett(4.0).unwrap(),
        CopulaSpec::frechet_lower(),
        CopulaSpec::frechet_upper(),
    ];
    let one = |_: f64| 1.0;
    let q = NormalQuantile { mean: 0.3, sd: 1.2 };
    let (mut mass_err, mut mix_err): (f64, f64) = (0.0, 0.0);
    for copula in &copulas {
        for alpha in (1..=9).map(|i| i as f64 / 10.0) {
            for arm in [Arm::Control, Arm::Treated] {
                mass_err = mass_err.max((wsi(&one, copula, arm, alpha, &quad).unwrap() - 1.0).abs());
            }
            let mu1 = wsi(&q, copula, Arm::Treated, alpha, &quad).unwrap();
            let mu0 = wsi(&q, copula, Arm::Control, alpha, &quad).unwrap();
            mix_err = mix_err.max(((1.0 - alpha) * mu1 + alpha * mu0 - 0.3).abs());
        }
    }
    c.check(mass_err <= 1e-8, format!("max |integral of sigma - 1| {mass_err:.1e}"));
    c.check(mix_err <= 1e-8, format!("max mixture-identity error {mix_err:.1e}"));
    c.note(format!("{} copulas x 9 levels", copulas.len()));
    c.verdict()
}
