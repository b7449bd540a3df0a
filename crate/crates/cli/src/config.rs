//! Run configuration: one JSON document per run, with flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use surrosens_core::dgp::{copula_at_tau, DgpConfig};
use surrosens_core::dml::{validate_grid, EstimatorConfig, DEFAULT_SENSITIVITY_GRID};
use surrosens_core::numeric::QuadratureConfig;
use surrosens_core::{CopulaSpec, Family};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    OracleCurve,
    Bounds,
    Sensitivity,
    Estimate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::OracleCurve => "oracle-curve",
            Command::Bounds => "bounds",
            Command::Sensitivity => "sensitivity",
            Command::Estimate => "estimate",
        }
    }

    fn needs_data(self) -> bool {
        matches!(self, Command::Bounds | Command::Sensitivity | Command::Estimate)
    }
}

/// A copula named by family and either Kendall's tau or its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaChoice {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl CopulaChoice {
    pub fn resolve(&self) -> CliResult<CopulaSpec> {
        let spec = match (self.tau, self.theta) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either tau or theta for the copula, not both".into())),
            (Some(t), None) => copula_at_tau(self.family, t)?,
            (None, theta) => CopulaSpec::new(self.family, theta)?,
        };
        if !spec.is_smooth() {
            return Err(CliError::Config(format!(
                "the {} copula has no density; use the `bounds` command for worst-case bounds",
                self.family
            )));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleCurveConfig {
    pub families: Vec<Family>,
    pub rhos: Vec<f64>,
    /// Kendall's tau grid shared by all families; each family's default
    /// grid when absent.
    pub grid: Option<Vec<f64>>,
    pub quadrature: QuadratureConfig,
}

impl Default for OracleCurveConfig {
    fn default() -> Self {
        OracleCurveConfig {
            families: vec![Family::Gaussian, Family::Clayton, Family::Gumbel, Family::Frank],
            rhos: vec![0.1, 0.5, 0.9],
            grid: None,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub family: Family,
    pub grid: Vec<f64>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig { family: Family::Gaussian, grid: DEFAULT_SENSITIVITY_GRID.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// The data file holds `w` and `y` on every row and is split evenly
    /// into the two samples.
    pub split: bool,
    pub simulate: DgpConfig,
    pub oracle_curve: OracleCurveConfig,
    pub estimator: EstimatorConfig,
    pub copula: Option<CopulaChoice>,
    pub sensitivity: SensitivityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: PathBuf::from("out"),
            threads: None,
            split: false,
            simulate: DgpConfig::default(),
            oracle_curve: OracleCurveConfig::default(),
            estimator: EstimatorConfig::default(),
            copula: None,
            sensitivity: SensitivityConfig::default(),
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub split: bool,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &config.data {
            config.data = Some(base.join(d));
        }
        config.out = base.join(&config.out);
        Ok(config)
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.data.is_some() {
            self.data = o.data;
        }
        if let Some(out) = o.out {
            self.out = out;
        }
        if let Some(seed) = o.seed {
            self.simulate.seed = seed;
            self.estimator.seed = seed;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        self.split |= o.split;
    }

    /// Checks everything the command will use before any computation.
    pub fn validate(&self, command: Command) -> CliResult<()> {
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if command.needs_data() && self.data.is_none() {
            return Err(CliError::Config(format!("`{}` needs a data file (--data)", command.name())));
        }
        match command {
            Command::Simulate => self.simulate.validate()?,
            Command::OracleCurve => self.validate_oracle()?,
            Command::Bounds => self.estimator.validate()?,
            Command::Estimate => {
                self.estimator.validate()?;
                self.copula
                    .as_ref()
                    .ok_or_else(|| CliError::Config("`estimate` needs a `copula` block".into()))?
                    .resolve()?;
            }
            Command::Sensitivity => {
                self.estimator.validate()?;
                let family = self.sensitivity.family;
                if !family.has_parameter() {
                    return Err(CliError::Config(format!("the {family} family has no dependence parameter to vary")));
                }
                validate_grid(family, &self.sensitivity.grid)?;
            }
        }
        Ok(())
    }

    fn validate_oracle(&self) -> CliResult<()> {
        let o = &self.oracle_curve;
        if o.families.is_empty() || o.rhos.is_empty() {
            return Err(CliError::Config("oracle_curve needs at least one family and one rho".into()));
        }
        if let Some(r) = o.rhos.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(CliError::Config(format!("rho = {r} must lie in (0, 1)")));
        }
        for &family in &o.families {
            if !family.has_parameter() {
                return Err(CliError::Config(format!("the {family} family has no Kendall's tau curve")));
            }
            if let Some(grid) = &o.grid {
                validate_grid(family, grid)?;
            }
        }
        Ok(())
    }

    /// The settings that determine results: file locations and the
    /// thread cap are dropped, since inputs are hashed by content.
    pub fn substantive(&self) -> RunConfig {
        RunConfig { data: None, out: PathBuf::new(), threads: None, ..self.clone() }
    }

    /// SHA-256 of the substantive configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(&self.substantive()).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
