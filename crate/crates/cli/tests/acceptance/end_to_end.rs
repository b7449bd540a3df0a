use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use surrosens_core::data::load_dataset;
use surrosens_core::numeric::normal;
use surrosens_core::nuisance::{BaseFit, NuisanceConfig};
use surrosens_core::{Bound, CombinedDataset, Sample, Target};

use crate::common::{check_breakpoint, check_report, read_json, stderr, surrosens, write_config};
use crate::{Checks, Verdict};

const SURROGATE_NOISE: f64 = 10.0;

/// Adds independent N(0, 10²) noise to every surrogate, which weakens the
/// surrogate signal and pulls the surrogacy score towards 1/2.
fn blur_surrogates(data: &CombinedDataset, seed: u64) -> CombinedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CombinedDataset::new(data.surrogate_dim(), data.covariate_dim()).unwrap();
    for i in 0..data.len() {
        let s: Vec<f64> = data
            .s(i)
            .iter()
            .map(|v| v + SURROGATE_NOISE * normal::quantile(rng.gen_range(f64::EPSILON..1.0)))
            .collect();
        match data.sample(i) {
            Sample::Experimental => out.push_experimental(data.w(i).unwrap(), &s, data.x(i)),
            Sample::Observational => out.push_observational(data.y(i).unwrap(), &s, data.x(i)),
        }
    }
    out
}

fn run(args: &[&str]) -> Result<(), String> {
    let o = surrosens(args);
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{} exited {:?}: {}", args[0], o.status.code(), stderr(&o)))
    }
}

fn read_curve(path: &Path) -> Vec<[f64; 5]> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3], v[4]]
        })
        .collect()
}

fn excludes_zero(p: &[f64; 5]) -> bool {
    p[3] > 0.0 || p[4] < 0.0
}

/// The reported breakpoint sits between the last positive grid point whose
/// CI covers zero and the first one that excludes it.
fn breakpoint_consistent(curve: &[[f64; 5]], breakpoint: Option<f64>) -> bool {
    let zero = curve.iter().find(|p| p[0] == 0.0);
    let first = curve.iter().find(|p| p[0] > 0.0 && excludes_zero(p));
    match (breakpoint, zero, first) {
        (Some(b), Some(z), Some(f)) => {
            let below = curve.iter().filter(|p| p[0] >= 0.0 && p[0] < f[0]).map(|p| p[0]).fold(0.0, f64::max);
            !excludes_zero(z) && b > below && b <= f[0]
        }
        (None, Some(z), first) => excludes_zero(z) || first.is_none(),
        _ => false,
    }
}

pub fn criterion_9() -> Verdict {
    let mut c = Checks::default();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = |p: &Path| p.to_str().unwrap().to_string();

    let sim = write_config(d, "sim.json", r#"{"simulate": {"n": 425, "seed": 6, "surrogates": 5, "covariates": 5}}"#);
    if let Err(e) = run(&["simulate", "--config", &path(&sim), "--out", &path(&d.join("sim"))]) {
        c.check(false, e);
        return c.verdict();
    }
    let raw = load_dataset(&d.join("sim/data.csv")).unwrap();
    let data = blur_surrogates(&raw, 60);
    let csv = d.join("data.csv");
    data.write_csv(fs::File::create(&csv).unwrap()).unwrap();
    c.note(format!("{} rows, 5 surrogates, 5 covariates", data.len()));

    let base = BaseFit::fit(&data, &NuisanceConfig::default(), 0).unwrap();
    let rho: Vec<f64> = base.bundle(Target::Bound(Bound::Lower)).unwrap().rows.iter().map(|r| r.rho_sx).collect();
    let central = rho.iter().filter(|r| (0.25..=0.75).contains(*r)).count();
    c.note(format!("fitted surrogacy score in [0.25, 0.75] for {central}/{} rows", rho.len()));

    let cfg = write_config(d, "bounds.json", "{}");
    let out = d.join("bounds");
    match run(&["bounds", "--config", &path(&cfg), "--data", &path(&csv), "--out", &path(&out)]) {
        Ok(()) => {
            let report = read_json(&out.join("report.json"));
            c.check(check_report(&report).is_ok(), "bounds report is schema-valid");
            let (l, u) = (report["estimates"][0]["tau_hat"].as_f64().unwrap(), report["estimates"][1]["tau_hat"].as_f64().unwrap());
            c.note(format!("bounds [{l:.3}, {u:.3}]"));
        }
        Err(e) => c.check(false, e),
    }

    let mut curves = Vec::new();
    for family in ["frank", "plackett"] {
        let cfg = write_config(d, &format!("{family}.json"), &format!(r#"{{"sensitivity": {{"family": "{family}"}}}}"#));
        let out = d.join(family);
        if let Err(e) = run(&["sensitivity", "--config", &path(&cfg), "--data", &path(&csv), "--out", &path(&out)]) {
            c.check(false, e);
            continue;
        }
        let doc = read_json(&out.join("breakpoint.json"));
        let schema = check_breakpoint(&doc);
        c.check(schema.is_ok(), format!("{family} breakpoint report schema-valid {}", schema.err().unwrap_or_default()));
        let curve = read_curve(&out.join("curve.csv"));
        let breakpoint = doc["breakpoint"].as_f64();
        let shown: Vec<String> = curve.iter().map(|p| format!("{}: [{:.2}, {:.2}]", p[0], p[3], p[4])).collect();
        c.note(format!("{family} curve {}", shown.join(" ")));
        c.check(breakpoint.is_some(), format!("{family} breakpoint detected at {breakpoint:?}"));
        c.check(breakpoint_consistent(&curve, breakpoint), format!("{family} breakpoint consistent with the curve"));
        curves.push(curve);
    }
    if let [frank, plackett] = &curves[..] {
        let worst = frank
            .iter()
            .zip(plackett)
            .map(|(f, p)| (f[1] - p[1]).abs() / (2.0 * f[2].max(p[2])))
            .fold(0.0, f64::max);
        c.check(
            frank.len() == plackett.len() && worst <= 1.0,
            format!("Frank vs Plackett largest gap {worst:.2} x 2 se over {} grid points", frank.len()),
        );
    }
    c.verdict()
}
