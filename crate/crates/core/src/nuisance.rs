//! Cross-fitted nuisance estimation.
//!
//! Work splits into a copula-independent [`BaseFit`] (folds, probability
//! models, conditional quantiles and their cutoffs) and a per-target stage
//! ([`BaseFit::bundle`]) that builds pseudo-outcomes, sieve regressions and
//! the row-level [`NuisanceBundle`].

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CombinedDataset, Sample};
use crate::dgp::OracleNuisance;
use crate::error::{Error, Result};
use crate::learners::{
    self, fit_binary_quantile, fit_mean, fit_probability, Features, LearnerConfig, PolynomialSieve,
    ProbabilityModel, QuantileLearner, QuantileModel, Regression, SieveConfig,
};
use crate::numeric::QuadratureConfig;
use crate::wsi::{self, worst_case_dual, Arm, Bound, GridKernel, Target, UnitGrid};

/// Fold label of every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_row: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.fold_of_row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of_row.is_empty()
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of_row[i] == k).collect()
    }

    pub fn complement(&self, k: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of_row[i] != k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.fold_of_row.iter().for_each(|&f| s[f] += 1);
        s
    }
}

/// Balanced random partition of `n` rows into `k` folds.
pub fn partition_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::InvalidConfig(format!("fold count {k} must lie in [2, {n}]")));
    }
    Ok(FoldAssignment { fold_of_row: learners::internal_folds(n, k, seed), k })
}

/// φ̂ for fold `k`: K·|E-rows outside fold k| / (n(K − 1)).
pub fn estimate_phi(folds: &FoldAssignment, samples: &[Sample], k: usize) -> Result<f64> {
    if k >= folds.k {
        return Err(Error::InvalidConfig(format!("fold {k} out of range")));
    }
    let outside = folds.complement(k);
    if outside.is_empty() {
        return Err(Error::Learner("empty complement".into()).in_fold(k));
    }
    let e = outside.iter().filter(|&&i| samples[i] == Sample::Experimental).count() as f64;
    let (kf, n) = (folds.k as f64, folds.len() as f64);
    Ok(kf * e / (n * (kf - 1.0)))
}

/// Distinct seed for a named sub-task of a run.
pub fn child_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondMeanRows {
    /// Experimental rows with W = w only.
    #[default]
    Arm,
    /// Every experimental row.
    AllExperimental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    /// Binary when every observed outcome is 0 or 1.
    #[default]
    Auto,
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceConfig {
    pub folds: usize,
    pub clip: f64,
    /// Nodes of the probit grid used for functionals of fitted quantiles.
    pub grid_nodes: usize,
    pub learners: LearnerConfig,
    pub cond_mean_rows: CondMeanRows,
    pub outcome: OutcomeMode,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            folds: 3,
            clip: 0.01,
            grid_nodes: 256,
            learners: LearnerConfig::default(),
            cond_mean_rows: CondMeanRows::Arm,
            outcome: OutcomeMode::Auto,
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::InvalidConfig(format!("clip {} must lie in (0, 0.5)", self.clip)));
        }
        if self.grid_nodes < 16 {
            return Err(Error::InvalidConfig("grid_nodes must be at least 16".into()));
        }
        self.learners.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityTarget {
    /// ρ(x) on experimental rows.
    PropensityX,
    /// ρ(s, x) on experimental rows.
    SurrogacySx,
    /// φ(s, x) on all rows.
    SelectionSx,
}

fn x_features(data: &CombinedDataset, rows: &[usize]) -> Features {
    Features::from_rows(data.covariate_dim(), rows.iter().map(|&i| data.x(i)))
}

fn sx_features(data: &CombinedDataset, rows: &[usize]) -> Features {
    Features::from_rows(data.surrogate_dim() + data.covariate_dim(), rows.iter().map(|&i| data.sx(i)))
}

/// Probability model for `target`, trained on the right subset of `rows`
/// and clipped into `[clip, 1 − clip]`.
pub fn fit_probability_target(
    data: &CombinedDataset,
    rows: &[usize],
    target: ProbabilityTarget,
    learner: &learners::ProbabilityLearner,
    clip: f64,
    seed: u64,
) -> Result<Box<dyn ProbabilityModel>> {
    let model = match target {
        ProbabilityTarget::PropensityX | ProbabilityTarget::SurrogacySx => {
            let e: Vec<usize> = rows.iter().copied().filter(|&i| data.is_experimental(i)).collect();
            let labels: Vec<bool> = e.iter().map(|&i| data.w(i) == Some(true)).collect();
            let x = if target == ProbabilityTarget::PropensityX { x_features(data, &e) } else { sx_features(data, &e) };
            fit_probability(&x, &labels, learner, seed)?
        }
        ProbabilityTarget::SelectionSx => {
            let labels: Vec<bool> = rows.iter().map(|&i| data.is_experimental(i)).collect();
            fit_probability(&sx_features(data, rows), &labels, learner, seed)?
        }
    };
    Ok(Box::new(learners::Clipped { inner: model, clip }))
}

/// Conditional quantile model of Y given (s, x) on observational `rows`.
pub fn fit_cond_quantile(
    data: &CombinedDataset,
    rows: &[usize],
    config: &NuisanceConfig,
    binary: bool,
    seed: u64,
) -> Result<Box<dyn QuantileModel>> {
    let obs: Vec<usize> = rows.iter().copied().filter(|&i| data.sample(i) == Sample::Observational).collect();
    let min = match config.learners.quantile {
        QuantileLearner::Forest(f) => f.min_leaf,
        QuantileLearner::Knn { k } => k,
    };
    if obs.len() < min.max(2) {
        return Err(Error::Learner(format!("{} observational rows, fewer than the minimum {min}", obs.len())));
    }
    let x = sx_features(data, &obs);
    let y: Vec<f64> = obs.iter().map(|&i| data.y(i).unwrap_or(f64::NAN)).collect();
    if binary {
        fit_binary_quantile(&x, &y, &config.learners.probability, 5, seed)
    } else {
        learners::fit_quantile(&x, &y, &config.learners.quantile, seed)
    }
}

/// Second-stage sieve of pseudo-outcomes on (s, x).
pub fn fit_wsi_regression(sx: &Features, pseudo: &[f64], cfg: &SieveConfig) -> Result<PolynomialSieve> {
    PolynomialSieve::fit(sx, pseudo, cfg)
}

/// μ̄ regression of WSI values on covariates.
pub fn fit_cond_mean(
    x: &Features,
    values: &[f64],
    learner: &learners::MeanLearner,
    seed: u64,
) -> Result<Box<dyn Regression>> {
    if values.is_empty() {
        return Err(Error::Learner("empty arm for the conditional mean".into()));
    }
    fit_mean(x, values, learner, seed)
}

/// Quantile evaluations for one row: the grid plus both cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub grid: Vec<f64>,
    /// q at level 1 − ρ(s, x).
    pub upper: f64,
    /// q at level ρ(s, x).
    pub lower: f64,
}

impl QuantileRow {
    pub fn cutoff(&self, bound: Bound) -> f64 {
        match bound {
            Bound::Upper => self.upper,
            Bound::Lower => self.lower,
        }
    }

    fn evaluate(grid: &UnitGrid, rho_sx: f64, eval: impl FnOnce(&[f64]) -> Vec<f64>) -> Self {
        let n = grid.len();
        let mut levels = grid.u.clone();
        levels.push(Bound::Upper.cutoff_level(rho_sx));
        levels.push(Bound::Lower.cutoff_level(rho_sx));
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
        let values = eval(&sorted);
        let mut out = vec![0.0; levels.len()];
        for (pos, &i) in order.iter().enumerate() {
            out[i] = values[pos];
        }
        QuantileRow { upper: out[n], lower: out[n + 1], grid: out[..n].to_vec() }
    }
}

/// Training rows behind each fold's models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldProvenance {
    pub fold: usize,
    /// Rows behind ρ(x), ρ(s, x) and μ̄.
    pub experimental: Vec<usize>,
    /// Rows behind the quantile model and the sieves.
    pub observational: Vec<usize>,
    /// Rows behind φ(s, x) and φ.
    pub selection: Vec<usize>,
}

/// Training observational row with fold-model inputs for its pseudo-outcome.
#[derive(Debug, Clone)]
struct TrainPoint {
    row: usize,
    rho_sx: f64,
    quantiles: QuantileRow,
}

#[derive(Debug, Clone)]
struct FoldBase {
    provenance: FoldProvenance,
    obs_train: Vec<TrainPoint>,
}

/// Copula-independent evaluations for a scored row.
#[derive(Debug, Clone)]
struct RowBase {
    rho_x: f64,
    rho_sx: f64,
    phi_sx: f64,
    phi: f64,
    quantiles: QuantileRow,
}

/// Everything that does not depend on the copula, fitted once per dataset.
pub struct BaseFit<'a> {
    data: &'a CombinedDataset,
    folds: FoldAssignment,
    config: NuisanceConfig,
    seed: u64,
    grid: UnitGrid,
    binary: bool,
    fold_fits: Vec<FoldBase>,
    rows: Vec<RowBase>,
}

fn in_fold<T>(fold: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_fold(fold))
}

impl<'a> BaseFit<'a> {
    pub fn fit(data: &'a CombinedDataset, config: &NuisanceConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let folds = partition_folds(data.len(), config.folds, child_seed(seed, 1))?;
        Self::fit_with_folds(data, folds, config, seed)
    }

    pub fn fit_with_folds(
        data: &'a CombinedDataset,
        folds: FoldAssignment,
        config: &NuisanceConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if folds.len() != data.len() {
            return Err(Error::InvalidConfig("fold assignment does not match the dataset".into()));
        }
        let binary = match config.outcome {
            OutcomeMode::Auto => data.has_binary_outcome(),
            OutcomeMode::Continuous => false,
            OutcomeMode::Binary => true,
        };
        let grid = UnitGrid::probit(config.grid_nodes);
        let samples: Vec<Sample> = (0..data.len()).map(|i| data.sample(i)).collect();
        let fitted: Vec<(FoldBase, Vec<(usize, RowBase)>)> = (0..folds.k)
            .into_par_iter()
            .map(|k| {
                in_fold(k, Self::fit_fold(data, &folds, &samples, config, &grid, binary, child_seed(seed, 100 + k as u64), k))
            })
            .collect::<Result<_>>()?;
        let mut rows: Vec<Option<RowBase>> = vec![None; data.len()];
        let mut fold_fits = Vec::with_capacity(folds.k);
        for (fb, scored) in fitted {
            for (i, r) in scored {
                rows[i] = Some(r);
            }
            fold_fits.push(fb);
        }
        let rows = rows.into_iter().map(|r| r.ok_or(Error::MissingNuisance("row evaluation"))).collect::<Result<_>>()?;
        Ok(BaseFit { data, folds, config: *config, seed, grid, binary, fold_fits, rows })
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_fold(
        data: &CombinedDataset,
        folds: &FoldAssignment,
        samples: &[Sample],
        config: &NuisanceConfig,
        grid: &UnitGrid,
        binary: bool,
        seed: u64,
        k: usize,
    ) -> Result<(FoldBase, Vec<(usize, RowBase)>)> {
        let train = folds.complement(k);
        let e_train: Vec<usize> = train.iter().copied().filter(|&i| data.is_experimental(i)).collect();
        let o_train: Vec<usize> = train.iter().copied().filter(|&i| !data.is_experimental(i)).collect();
        let learner = &config.learners.probability;
        let rho_x = fit_probability_target(data, &train, ProbabilityTarget::PropensityX, learner, config.clip, child_seed(seed, 1))?;
        let rho_sx = fit_probability_target(data, &train, ProbabilityTarget::SurrogacySx, learner, config.clip, child_seed(seed, 2))?;
        let phi_sx = fit_probability_target(data, &train, ProbabilityTarget::SelectionSx, learner, config.clip, child_seed(seed, 3))?;
        let phi = estimate_phi(folds, samples, k)?;
        let quantile = fit_cond_quantile(data, &o_train, config, binary, child_seed(seed, 4))?;

        let obs_train = o_train
            .par_iter()
            .enumerate()
            .map(|(j, &i)| {
                let r = rho_sx.predict(&data.sx(i));
                TrainPoint { row: i, rho_sx: r, quantiles: QuantileRow::evaluate(grid, r, |lv| quantile.held_out_levels(j, lv)) }
            })
            .collect();
        let scored = folds
            .members(k)
            .par_iter()
            .map(|&i| {
                let sx = data.sx(i);
                let r = rho_sx.predict(&sx);
                let base = RowBase {
                    rho_x: rho_x.predict(data.x(i)),
                    rho_sx: r,
                    phi_sx: phi_sx.predict(&sx),
                    phi,
                    quantiles: QuantileRow::evaluate(grid, r, |lv| quantile.predict_levels(&sx, lv)),
                };
                (i, base)
            })
            .collect();
        let provenance = FoldProvenance { fold: k, experimental: e_train, observational: o_train, selection: train };
        Ok((FoldBase { provenance, obs_train }, scored))
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn grid(&self) -> &UnitGrid {
        &self.grid
    }

    /// Fitted quantiles of row `i` from its complementary folds.
    pub fn quantiles(&self, i: usize) -> &QuantileRow {
        &self.rows[i].quantiles
    }

    pub fn config(&self) -> &NuisanceConfig {
        &self.config
    }

    /// Row-level nuisances for one target.
    pub fn bundle(&self, target: Target) -> Result<NuisanceBundle> {
        if let Target::Copula(c) = target {
            if !c.is_smooth() {
                return Err(Error::DensityUndefined(c.family().name()));
            }
        }
        let per_fold: Vec<Vec<(usize, NuisanceRow)>> = (0..self.folds.k)
            .into_par_iter()
            .map(|k| in_fold(k, self.bundle_fold(target, k)))
            .collect::<Result<_>>()?;
        let mut rows: Vec<Option<NuisanceRow>> = vec![None; self.data.len()];
        for (i, r) in per_fold.into_iter().flatten() {
            rows[i] = Some(r);
        }
        Ok(NuisanceBundle {
            target,
            folds: self.folds.clone(),
            rows: rows.into_iter().map(|r| r.ok_or(Error::MissingNuisance("bundle row"))).collect::<Result<_>>()?,
            provenance: self.fold_fits.iter().map(|f| f.provenance.clone()).collect(),
        })
    }

    fn bundle_fold(&self, target: Target, k: usize) -> Result<Vec<(usize, NuisanceRow)>> {
        let data = self.data;
        let fb = &self.fold_fits[k];
        let pseudo: Vec<(f64, f64)> = fb
            .obs_train
            .par_iter()
            .map(|p| {
                let y = data.y(p.row).ok_or(Error::MissingNuisance("observational outcome"))?;
                let (h1, h0) = row_duals(target, &self.grid, &p.quantiles, p.rho_sx, y)?;
                Ok((h1, h0))
            })
            .collect::<Result<_>>()?;
        let sx = sx_features(data, &fb.provenance.observational);
        let sieve = &self.config.learners.sieve;
        let mu1 = fit_wsi_regression(&sx, &pseudo.iter().map(|p| p.0).collect::<Vec<_>>(), sieve)?;
        let mu0 = fit_wsi_regression(&sx, &pseudo.iter().map(|p| p.1).collect::<Vec<_>>(), sieve)?;

        let seed = child_seed(self.seed, 200 + k as u64);
        let fit_bar = |arm: Arm, mu: &PolynomialSieve| -> Result<Box<dyn Regression>> {
            let rows: Vec<usize> = fb
                .provenance
                .experimental
                .iter()
                .copied()
                .filter(|&i| self.config.cond_mean_rows == CondMeanRows::AllExperimental || data.w(i) == Some(arm == Arm::Treated))
                .collect();
            let values: Vec<f64> = rows.iter().map(|&i| mu.predict(&data.sx(i))).collect();
            fit_cond_mean(&x_features(data, &rows), &values, &self.config.learners.cond_mean, child_seed(seed, arm as u64))
        };
        let bar1 = fit_bar(Arm::Treated, &mu1)?;
        let bar0 = fit_bar(Arm::Control, &mu0)?;

        self.folds
            .members(k)
            .par_iter()
            .map(|&i| {
                let b = &self.rows[i];
                let sx = data.sx(i);
                let correction = match target {
                    Target::Bound(bound) => b.quantiles.cutoff(bound),
                    Target::Copula(c) => {
                        GridKernel::new(&c, 1.0 - b.rho_sx, &self.grid)?.functionals(&self.grid, &b.quantiles.grid).d
                    }
                };
                let (h1, h0) = match data.y(i) {
                    Some(y) if data.sample(i) == Sample::Observational => {
                        let (a, b) = row_duals(target, &self.grid, &b.quantiles, b.rho_sx, y)?;
                        (Some(a), Some(b))
                    }
                    _ => (None, None),
                };
                Ok((
                    i,
                    NuisanceRow {
                        fold: k,
                        rho_x: b.rho_x,
                        rho_sx: b.rho_sx,
                        phi_sx: b.phi_sx,
                        phi: b.phi,
                        mu1: mu1.predict(&sx),
                        mu0: mu0.predict(&sx),
                        mu_bar1: bar1.predict(data.x(i)),
                        mu_bar0: bar0.predict(data.x(i)),
                        correction,
                        h1,
                        h0,
                    },
                ))
            })
            .collect()
    }
}

/// (h₁, h₀) for outcome `y` under `target`, from fitted quantiles.
fn row_duals(target: Target, grid: &UnitGrid, q: &QuantileRow, rho_sx: f64, y: f64) -> Result<(f64, f64)> {
    Ok(match target {
        Target::Bound(b) => {
            let cut = q.cutoff(b);
            (worst_case_dual(b, Arm::Treated, y, cut, rho_sx), worst_case_dual(b, Arm::Control, y, cut, rho_sx))
        }
        Target::Copula(c) if c.is_independence() => (y, y),
        Target::Copula(c) => GridKernel::new(&c, 1.0 - rho_sx, grid)?.duals(grid, &q.grid, y),
    })
}

/// Nuisance values used by the moment of one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceRow {
    pub fold: usize,
    pub rho_x: f64,
    pub rho_sx: f64,
    pub phi_sx: f64,
    pub phi: f64,
    /// μ̂_{C,1}(s, x) and μ̂_{C,0}(s, x).
    pub mu1: f64,
    pub mu0: f64,
    /// μ̄̂_{C,1}(x) and μ̄̂_{C,0}(x).
    pub mu_bar1: f64,
    pub mu_bar0: f64,
    /// Level the surrogacy correction centres on: the cutoff q_{C±} for
    /// bounds, d_C for a smooth copula.
    pub correction: f64,
    /// Dual pseudo-outcomes, observational rows only.
    pub h1: Option<f64>,
    pub h0: Option<f64>,
}

/// Cross-fitted nuisance values for every row, for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceBundle {
    pub target: Target,
    pub folds: FoldAssignment,
    pub rows: Vec<NuisanceRow>,
    pub provenance: Vec<FoldProvenance>,
}

impl NuisanceBundle {
    /// Fits the base models and the bundle for one target.
    pub fn assemble(data: &CombinedDataset, target: Target, config: &NuisanceConfig, seed: u64) -> Result<Self> {
        BaseFit::fit(data, config, seed)?.bundle(target)
    }

    /// Closed-form nuisances of the simulation design; `phi` is the
    /// experimental share used for both φ and φ(s, x).
    pub fn oracle(
        data: &CombinedDataset,
        folds: FoldAssignment,
        oracle: &OracleNuisance,
        phi: f64,
        quad: &QuadratureConfig,
    ) -> Result<Self> {
        let target = oracle.target();
        let rows = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let (s, x) = (data.s(i), data.x(i));
                let rho_sx = oracle.rho_sx(s, x);
                let (h1, h0) = match (data.sample(i), data.y(i)) {
                    (Sample::Observational, Some(y)) => {
                        let (a, b) = oracle_duals(oracle, s, x, y, quad)?;
                        (Some(a), Some(b))
                    }
                    _ => (None, None),
                };
                Ok(NuisanceRow {
                    fold: folds.fold_of_row[i],
                    rho_x: oracle.rho_x(),
                    rho_sx,
                    phi_sx: phi,
                    phi,
                    mu1: oracle.wsi(Arm::Treated, s, x)?,
                    mu0: oracle.wsi(Arm::Control, s, x)?,
                    mu_bar1: oracle.cond_mean(Arm::Treated, x),
                    mu_bar0: oracle.cond_mean(Arm::Control, x),
                    correction: oracle.correction_level(s, x)?,
                    h1,
                    h0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(NuisanceBundle { target, folds, rows, provenance: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks the cross-fitting contract: no row is scored by a model whose
    /// training rows include it.
    pub fn audit(&self) -> Result<()> {
        for p in &self.provenance {
            for set in [&p.experimental, &p.observational, &p.selection] {
                if let Some(&i) = set.iter().find(|&&i| self.folds.fold_of_row[i] == p.fold) {
                    return Err(Error::Learner(format!("row {i} is both trained on and scored")).in_fold(p.fold));
                }
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.fold != self.folds.fold_of_row[i] {
                return Err(Error::Learner(format!("row {i} scored by fold {} but belongs to fold {}", r.fold, self.folds.fold_of_row[i])));
            }
        }
        Ok(())
    }

    /// Audit dump: one line per row with every nuisance value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "row", "fold", "rho_x", "rho_sx", "phi_sx", "phi", "mu1", "mu0", "mu_bar1", "mu_bar0", "correction", "h1", "h0",
        ])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.fold.to_string(),
                r.rho_x.to_string(),
                r.rho_sx.to_string(),
                r.phi_sx.to_string(),
                r.phi.to_string(),
                r.mu1.to_string(),
                r.mu0.to_string(),
                r.mu_bar1.to_string(),
                r.mu_bar0.to_string(),
                r.correction.to_string(),
                opt(r.h1),
                opt(r.h0),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn oracle_duals(oracle: &OracleNuisance, s: &[f64], x: &[f64], y: f64, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    let rho_sx = oracle.rho_sx(s, x);
    Ok(match oracle.target() {
        Target::Bound(b) => {
            let cut = oracle.cutoff(s, x).ok_or(Error::MissingNuisance("cutoff"))?;
            (worst_case_dual(b, Arm::Treated, y, cut, rho_sx), worst_case_dual(b, Arm::Control, y, cut, rho_sx))
        }
        Target::Copula(c) => {
            let q = oracle.quantile(s, x);
            let alpha = 1.0 - rho_sx;
            (
                wsi::h_dual_general(&c, Arm::Treated, y, &q, alpha, quad)?,
                wsi::h_dual_general(&c, Arm::Control, y, &q, alpha, quad)?,
            )
        }
    })
}
