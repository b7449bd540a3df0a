#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::{Registry, Validator};
use serde_json::Value;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_surrosens"))
}

pub fn surrosens(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const REPORT_SCHEMA: &str = include_str!("../../schemas/estimate_report.schema.json");
const BREAKPOINT_SCHEMA: &str = include_str!("../../schemas/breakpoint.schema.json");

fn check(schema: &str, doc: &Value) -> Result<(), String> {
    let report: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let id = report["$id"].as_str().unwrap().to_string();
    let registry = Registry::new().add(id, report).unwrap().prepare().unwrap();
    let schema: Value = serde_json::from_str(schema).unwrap();
    let validator: Validator = jsonschema::options().with_registry(&registry).build(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

pub fn check_report(doc: &Value) -> Result<(), String> {
    check(REPORT_SCHEMA, doc)
}

pub fn check_breakpoint(doc: &Value) -> Result<(), String> {
    check(BREAKPOINT_SCHEMA, doc)
}

/// Rewrites the observational outcomes of a dataset CSV as `s1 + 0.5·x1`.
pub fn degenerate_outcomes(csv: &str) -> String {
    let mut lines = csv.lines();
    let mut out = String::from(lines.next().unwrap());
    out.push('\n');
    for line in lines {
        let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
        if f[0] == "O" {
            let s: f64 = f[3].parse().unwrap();
            let x: f64 = f[f.len() - 1].parse().unwrap();
            f[2] = (s + 0.5 * x).to_string();
        }
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}
