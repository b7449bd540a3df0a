//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

#[path = "../common/mod.rs"]
mod common;

mod binary;
mod coverage;
mod duals;
mod end_to_end;
mod moments;
mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

/// Collects named checks and folds them into one verdict.
#[derive(Default)]
pub struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    pub fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    pub fn verdict(self) -> Verdict {
        if self.failures.is_empty() {
            Verdict::new(true, self.notes.join("; "))
        } else {
            Verdict::new(false, format!("failed: {} | {}", self.failures.join("; "), self.notes.join("; ")))
        }
    }
}

fn run(number: usize, name: &str, body: impl FnOnce() -> Verdict) -> bool {
    if !selected(number) {
        return true;
    }
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Verdict::new(false, format!("panicked: {msg}"))
    });
    let tag = if verdict.pass { "PASS" } else { "FAIL" };
    println!("criterion {number} ({name}): {tag} [{:.1}s] {}", start.elapsed().as_secs_f64(), verdict.detail);
    verdict.pass
}

/// Criterion numbers given after `--`; none means all. Criterion 7 reads
/// the replications of criterion 6.
fn selected(number: usize) -> bool {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    picked.is_empty() || picked.contains(&number)
}

fn main() {
    // `cargo test` forwards harness flags; listing requests get an empty list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run(1, "oracle ATE curves and sign-change thresholds", oracle::criterion_1);
    ok &= run(2, "Kendall's tau calibration", oracle::criterion_2);
    ok &= run(3, "dual and primal weighted surrogate indices", duals::criterion_3);
    ok &= run(4, "weight identities", duals::criterion_4);
    ok &= run(5, "moment mean zero and orthogonality", moments::criterion_5);
    let mut replications = None;
    ok &= run(6, "estimator coverage", || {
        let (verdict, reps) = coverage::criterion_6();
        replications = Some(reps);
        verdict
    });
    ok &= run(7, "ordering and sign properties", || oracle::criterion_7(replications.as_deref()));
    ok &= run(8, "binary outcomes", binary::criterion_8);
    ok &= run(9, "end-to-end bounds and sensitivity on an empirical-shape dataset", end_to_end::criterion_9);
    if !ok {
        std::process::exit(1);
    }
}
