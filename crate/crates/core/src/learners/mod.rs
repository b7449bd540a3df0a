//! Self-contained supervised learners for the nuisance functions.

mod coordinate;
mod forest;
mod knn;
mod sieve;

pub use coordinate::{fit_lasso, fit_logistic_lasso, LambdaRule, LinearModel, LogisticModel};
pub use forest::{ForestConfig, QuantileForest};
pub use knn::KnnQuantile;
pub use sieve::{PolynomialSieve, SieveConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl Features {
    pub fn new(p: usize) -> Self {
        Features { data: Vec::new(), n: 0, p }
    }

    pub fn from_rows<I, R>(p: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut f = Features::new(p);
        for r in rows {
            f.push(r.as_ref());
        }
        f
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.p, "feature width");
        self.data.extend_from_slice(row);
        self.n += 1;
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn subset(&self, idx: &[usize]) -> Features {
        Features::from_rows(self.p, idx.iter().map(|&i| self.row(i)))
    }
}

/// Column centring and scaling; zero-variance columns keep scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Features) -> Self {
        let (n, p) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; p];
        for i in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; p];
        for i in 0..x.rows() {
            for j in 0..p {
                var[j] += (x.row(i)[j] - mean[j]).powi(2) / n;
            }
        }
        let scale = var.iter().map(|&v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.scale[j];
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        self.apply(row, &mut out);
        out
    }
}

pub trait Regression: Send + Sync {
    fn predict(&self, features: &[f64]) -> f64;
}

pub trait ProbabilityModel: Send + Sync {
    fn predict(&self, features: &[f64]) -> f64;
}

impl<M: ProbabilityModel + ?Sized> ProbabilityModel for Box<M> {
    fn predict(&self, features: &[f64]) -> f64 {
        (**self).predict(features)
    }
}

/// Conditional quantile model; every evaluation is monotone in the level.
pub trait QuantileModel: Send + Sync {
    /// Quantiles at `levels` (ascending) for a new point.
    fn predict_levels(&self, features: &[f64], levels: &[f64]) -> Vec<f64>;

    /// Quantiles at `levels` for training row `i`, from parts of the model
    /// that did not see that row.
    fn held_out_levels(&self, i: usize, levels: &[f64]) -> Vec<f64>;

    fn predict(&self, u: f64, features: &[f64]) -> f64 {
        self.predict_levels(features, &[u])[0]
    }
}

/// Sorts evaluated quantiles so they are non-decreasing in the level.
pub fn rearrange(values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
}

/// Probability model clipped into `[clip, 1 − clip]`.
pub struct Clipped<M> {
    pub inner: M,
    pub clip: f64,
}

impl<M: ProbabilityModel> ProbabilityModel for Clipped<M> {
    fn predict(&self, features: &[f64]) -> f64 {
        self.inner.predict(features).clamp(self.clip, 1.0 - self.clip)
    }
}

/// A probability that ignores features.
#[derive(Debug, Clone, Copy)]
pub struct ConstantProbability(pub f64);

impl ProbabilityModel for ConstantProbability {
    fn predict(&self, _: &[f64]) -> f64 {
        self.0
    }
}

/// Quantiles of residuals around a fitted mean, shifted back.
pub struct LocationShifted<Q> {
    pub location: PolynomialSieve,
    /// Fitted mean at each training row.
    pub centres: Vec<f64>,
    pub inner: Q,
}

impl<Q: QuantileModel> QuantileModel for LocationShifted<Q> {
    fn predict_levels(&self, features: &[f64], levels: &[f64]) -> Vec<f64> {
        let m = self.location.predict(features);
        self.inner.predict_levels(features, levels).into_iter().map(|v| v + m).collect()
    }

    fn held_out_levels(&self, i: usize, levels: &[f64]) -> Vec<f64> {
        self.inner.held_out_levels(i, levels).into_iter().map(|v| v + self.centres[i]).collect()
    }
}

/// Quantile function of a binary outcome with P(Y = 1 | features) from a
/// probability model: `F⁻¹(u) = 1{u > 1 − p}`.
pub struct BinaryQuantile {
    pub model: Box<dyn ProbabilityModel>,
    /// Cross-predicted P(Y = 1) for each training row.
    pub held_out: Vec<f64>,
}

fn binary_levels(p: f64, levels: &[f64]) -> Vec<f64> {
    levels.iter().map(|&u| if u > 1.0 - p { 1.0 } else { 0.0 }).collect()
}

impl QuantileModel for BinaryQuantile {
    fn predict_levels(&self, features: &[f64], levels: &[f64]) -> Vec<f64> {
        binary_levels(self.model.predict(features), levels)
    }

    fn held_out_levels(&self, i: usize, levels: &[f64]) -> Vec<f64> {
        binary_levels(self.held_out[i], levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbabilityLearner {
    /// L1-penalised logistic regression along a λ path, λ by internal CV.
    LogisticLasso {
        #[serde(default = "default_n_lambda")]
        n_lambda: usize,
        #[serde(default = "default_cv_folds")]
        cv_folds: usize,
        #[serde(default)]
        rule: LambdaRule,
    },
    /// Unpenalised logistic regression.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantileLearner {
    Forest(ForestConfig),
    Knn { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanLearner {
    Lasso {
        #[serde(default = "default_n_lambda")]
        n_lambda: usize,
        #[serde(default = "default_cv_folds")]
        cv_folds: usize,
        #[serde(default)]
        rule: LambdaRule,
    },
    Ols,
}

fn default_n_lambda() -> usize {
    100
}

fn default_cv_folds() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub probability: ProbabilityLearner,
    pub quantile: QuantileLearner,
    pub cond_mean: MeanLearner,
    pub sieve: SieveConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            probability: ProbabilityLearner::LogisticLasso {
                n_lambda: default_n_lambda(),
                cv_folds: default_cv_folds(),
                rule: LambdaRule::Min,
            },
            quantile: QuantileLearner::Forest(ForestConfig::default()),
            cond_mean: MeanLearner::Lasso {
                n_lambda: default_n_lambda(),
                cv_folds: default_cv_folds(),
                rule: LambdaRule::Min,
            },
            sieve: SieveConfig::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        match self.probability {
            ProbabilityLearner::LogisticLasso { n_lambda, cv_folds, .. } if n_lambda == 0 || cv_folds < 2 => {
                return bad("logistic_lasso needs n_lambda ≥ 1 and cv_folds ≥ 2")
            }
            _ => {}
        }
        match self.cond_mean {
            MeanLearner::Lasso { n_lambda, cv_folds, .. } if n_lambda == 0 || cv_folds < 2 => {
                return bad("lasso needs n_lambda ≥ 1 and cv_folds ≥ 2")
            }
            _ => {}
        }
        match self.quantile {
            QuantileLearner::Forest(f) => f.validate()?,
            QuantileLearner::Knn { k } if k == 0 => return bad("knn needs k ≥ 1"),
            QuantileLearner::Knn { .. } => {}
        }
        if self.sieve.degree == 0 || self.sieve.degree > 4 {
            return bad("sieve degree must be between 1 and 4");
        }
        Ok(())
    }
}

/// Fits a binary classifier on `labels`.
pub fn fit_probability(
    x: &Features,
    labels: &[bool],
    learner: &ProbabilityLearner,
    seed: u64,
) -> Result<Box<dyn ProbabilityModel>> {
    let y: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let ones = labels.iter().filter(|&&b| b).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::Learner(format!(
            "all-one-class training subset ({} rows, {ones} positive)",
            labels.len()
        )));
    }
    Ok(match *learner {
        ProbabilityLearner::LogisticLasso { n_lambda, cv_folds, rule } => {
            Box::new(fit_logistic_lasso(x, &y, n_lambda, cv_folds, rule, seed)?)
        }
        ProbabilityLearner::Logistic => Box::new(fit_logistic_lasso(x, &y, 1, 0, LambdaRule::Min, seed)?),
    })
}

pub fn fit_mean(x: &Features, y: &[f64], learner: &MeanLearner, seed: u64) -> Result<Box<dyn Regression>> {
    if y.is_empty() {
        return Err(Error::Learner("empty training set".into()));
    }
    Ok(match *learner {
        MeanLearner::Lasso { n_lambda, cv_folds, rule } => Box::new(fit_lasso(x, y, n_lambda, cv_folds, rule, seed)?),
        MeanLearner::Ols => Box::new(fit_lasso(x, y, 1, 0, LambdaRule::Min, seed)?),
    })
}

pub fn fit_quantile(x: &Features, y: &[f64], learner: &QuantileLearner, seed: u64) -> Result<Box<dyn QuantileModel>> {
    Ok(match *learner {
        QuantileLearner::Forest(cfg) if cfg.residualize => {
            let location = PolynomialSieve::fit(x, y, &SieveConfig::default())?;
            let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - location.predict(x.row(i))).collect();
            let centres = (0..y.len()).map(|i| location.predict(x.row(i))).collect();
            Box::new(LocationShifted { location, centres, inner: QuantileForest::fit(x, &resid, &cfg, seed)? })
        }
        QuantileLearner::Forest(cfg) => Box::new(QuantileForest::fit(x, y, &cfg, seed)?),
        QuantileLearner::Knn { k } => Box::new(KnnQuantile::fit(x, y, k)?),
    })
}

/// Quantile model for a 0/1 outcome through a probability model, with
/// training-row probabilities cross-predicted over `folds` internal folds.
pub fn fit_binary_quantile(
    x: &Features,
    y: &[f64],
    learner: &ProbabilityLearner,
    folds: usize,
    seed: u64,
) -> Result<Box<dyn QuantileModel>> {
    let labels: Vec<bool> = y.iter().map(|&v| v > 0.5).collect();
    let model = fit_probability(x, &labels, learner, seed)?;
    let n = labels.len();
    let assign = internal_folds(n, folds.min(n), seed ^ 0x9e37_79b9);
    let mut held_out = vec![0.0; n];
    for k in 0..folds.min(n) {
        let train: Vec<usize> = (0..n).filter(|&i| assign[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assign[i] == k).collect();
        let sub_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let fitted = fit_probability(&x.subset(&train), &sub_labels, learner, seed.wrapping_add(k as u64 + 1));
        for &i in &test {
            held_out[i] = match &fitted {
                Ok(m) => m.predict(x.row(i)),
                // A one-class internal fold: fall back to the training share.
                Err(_) => sub_labels.iter().filter(|&&b| b).count() as f64 / sub_labels.len() as f64,
            };
        }
    }
    Ok(Box::new(BinaryQuantile { model, held_out }))
}

/// Balanced random fold labels in `[0, k)`.
pub fn internal_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k.max(1);
    }
    fold
}
