//! Penalised linear and logistic regression by cyclic coordinate descent.

use serde::{Deserialize, Serialize};

use super::{internal_folds, Features, ProbabilityModel, Regression, Standardizer};
use crate::error::{Error, Result};

const CD_TOL: f64 = 1e-8;
const CD_MAX_SWEEPS: usize = 10_000;
const IRLS_MAX: usize = 60;
const IRLS_TOL: f64 = 1e-8;
const MIN_WEIGHT: f64 = 1e-5;

/// Which cross-validated λ to keep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Minimum mean held-out loss.
    #[default]
    Min,
    /// Largest λ within one standard error of the minimum.
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Gaussian,
    Binomial,
}

/// Standardised design stored by column.
struct Design {
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Design {
    fn new(x: &Features, st: &Standardizer) -> Self {
        let mut cols = vec![vec![0.0; x.rows()]; x.cols()];
        let mut buf = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            st.apply(x.row(i), &mut buf);
            for (c, v) in cols.iter_mut().zip(&buf) {
                c[i] = *v;
            }
        }
        Design { cols, n: x.rows() }
    }

    fn subset(&self, idx: &[usize]) -> Design {
        Design { cols: self.cols.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(), n: idx.len() }
    }

    fn eta(&self, b0: f64, beta: &[f64], i: usize) -> f64 {
        b0 + self.cols.iter().zip(beta).map(|(c, b)| c[i] * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Coefficients {
    b0: f64,
    beta: Vec<f64>,
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Weighted lasso sweeps on the residual `r = z − η`, updating in place.
fn cd_sweeps(d: &Design, w: &[f64], r: &mut [f64], c: &mut Coefficients, lambda: f64) {
    let n = d.n as f64;
    let wsum: f64 = w.iter().sum();
    let xw: Vec<f64> = d.cols.iter().map(|col| col.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>() / n).collect();
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        let shift = r.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / wsum;
        if shift != 0.0 {
            c.b0 += shift;
            r.iter_mut().for_each(|r| *r -= shift);
            max_change = max_change.max(shift.abs() * (wsum / n).sqrt());
        }
        for (j, col) in d.cols.iter().enumerate() {
            if xw[j] <= 0.0 {
                continue;
            }
            let old = c.beta[j];
            let grad = col.iter().zip(r.iter()).zip(w).map(|((x, r), w)| w * x * r).sum::<f64>() / n;
            let new = soft_threshold(grad + xw[j] * old, lambda) / xw[j];
            if new != old {
                let delta = new - old;
                for (ri, x) in r.iter_mut().zip(col) {
                    *ri -= delta * x;
                }
                c.beta[j] = new;
                max_change = max_change.max(delta.abs() * xw[j].sqrt());
            }
        }
        if max_change < CD_TOL {
            return;
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Fits one λ starting from `c`.
fn fit_at(d: &Design, y: &[f64], family: Family, lambda: f64, c: &mut Coefficients) {
    match family {
        Family::Gaussian => {
            let w = vec![1.0; d.n];
            let mut r: Vec<f64> = (0..d.n).map(|i| y[i] - d.eta(c.b0, &c.beta, i)).collect();
            cd_sweeps(d, &w, &mut r, c, lambda);
        }
        Family::Binomial => {
            let mut w = vec![0.0; d.n];
            let mut r = vec![0.0; d.n];
            for _ in 0..IRLS_MAX {
                let before = c.clone();
                for i in 0..d.n {
                    let p = sigmoid(d.eta(c.b0, &c.beta, i));
                    w[i] = (p * (1.0 - p)).max(MIN_WEIGHT);
                    r[i] = (y[i] - p) / w[i];
                }
                cd_sweeps(d, &w, &mut r, c, lambda);
                let moved = (c.b0 - before.b0)
                    .abs()
                    .max(c.beta.iter().zip(&before.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                if moved < IRLS_TOL {
                    break;
                }
            }
        }
    }
}

fn lambda_max(d: &Design, y: &[f64]) -> f64 {
    let n = d.n as f64;
    let ybar = y.iter().sum::<f64>() / n;
    d.cols
        .iter()
        .map(|c| (c.iter().zip(y).map(|(x, y)| x * (y - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
}

fn lambda_path(d: &Design, y: &[f64], n_lambda: usize) -> Vec<f64> {
    if n_lambda <= 1 {
        return vec![0.0];
    }
    let top = lambda_max(d, y);
    if top <= 0.0 {
        return vec![0.0];
    }
    let ratio: f64 = if d.n > d.cols.len() { 1e-4 } else { 1e-2 };
    (0..n_lambda).map(|k| top * ratio.powf(k as f64 / (n_lambda - 1) as f64)).collect()
}

fn intercept_only(y: &[f64], family: Family, p: usize) -> Coefficients {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let b0 = match family {
        Family::Gaussian => ybar,
        Family::Binomial => (ybar / (1.0 - ybar)).ln(),
    };
    Coefficients { b0, beta: vec![0.0; p] }
}

fn loss(family: Family, y: f64, eta: f64) -> f64 {
    match family {
        Family::Gaussian => (y - eta).powi(2),
        Family::Binomial => {
            let p = sigmoid(eta).clamp(1e-10, 1.0 - 1e-10);
            -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

/// Index into `lambdas` chosen by K-fold cross-validation.
fn cross_validate(
    d: &Design,
    y: &[f64],
    family: Family,
    lambdas: &[f64],
    folds: usize,
    rule: LambdaRule,
    seed: u64,
) -> usize {
    if lambdas.len() == 1 || folds < 2 || d.n < 2 * folds {
        return lambdas.len() - 1;
    }
    let assign = internal_folds(d.n, folds, seed);
    let mut fold_loss = vec![vec![f64::NAN; lambdas.len()]; folds];
    for (k, row) in fold_loss.iter_mut().enumerate() {
        let train: Vec<usize> = (0..d.n).filter(|&i| assign[i] != k).collect();
        let test: Vec<usize> = (0..d.n).filter(|&i| assign[i] == k).collect();
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let mean = yt.iter().sum::<f64>() / yt.len() as f64;
        if family == Family::Binomial && (mean <= 0.0 || mean >= 1.0) {
            continue;
        }
        let dt = d.subset(&train);
        let mut c = intercept_only(&yt, family, d.cols.len());
        for (l, &lambda) in lambdas.iter().enumerate() {
            fit_at(&dt, &yt, family, lambda, &mut c);
            row[l] = test.iter().map(|&i| loss(family, y[i], d.eta(c.b0, &c.beta, i))).sum::<f64>() / test.len() as f64;
        }
    }
    let usable: Vec<&Vec<f64>> = fold_loss.iter().filter(|r| r[0].is_finite()).collect();
    if usable.is_empty() {
        return lambdas.len() - 1;
    }
    let m = usable.len() as f64;
    let mean: Vec<f64> = (0..lambdas.len()).map(|l| usable.iter().map(|r| r[l]).sum::<f64>() / m).collect();
    let best = (0..lambdas.len()).min_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap_or(0);
    match rule {
        LambdaRule::Min => best,
        LambdaRule::OneSe => {
            let var = usable.iter().map(|r| (r[best] - mean[best]).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            let cap = mean[best] + (var / m).sqrt();
            (0..=best).find(|&l| mean[l] <= cap).unwrap_or(best)
        }
    }
}

struct PathFit {
    st: Standardizer,
    coef: Coefficients,
    lambda: f64,
}

fn fit_path(
    x: &Features,
    y: &[f64],
    family: Family,
    n_lambda: usize,
    folds: usize,
    rule: LambdaRule,
    seed: u64,
) -> Result<PathFit> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::Learner(format!("{} feature rows for {} responses", x.rows(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Learner("non-finite response".into()));
    }
    let st = Standardizer::fit(x);
    let d = Design::new(x, &st);
    let lambdas = lambda_path(&d, y, n_lambda);
    let chosen = cross_validate(&d, y, family, &lambdas, folds, rule, seed);
    let mut coef = intercept_only(y, family, x.cols());
    for &lambda in &lambdas[..=chosen] {
        fit_at(&d, y, family, lambda, &mut coef);
    }
    if !coef.b0.is_finite() || coef.beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Learner("coordinate descent diverged".into()));
    }
    Ok(PathFit { st, coef, lambda: lambdas[chosen] })
}

fn linear_predictor(st: &Standardizer, c: &Coefficients, row: &[f64]) -> f64 {
    let z = st.transform(row);
    c.b0 + z.iter().zip(&c.beta).map(|(z, b)| z * b).sum::<f64>()
}

fn original_scale(st: &Standardizer, c: &Coefficients, p: usize) -> (f64, Vec<f64>) {
    let zero = st.transform(&vec![0.0; p]);
    let intercept = c.b0 + zero.iter().zip(&c.beta).map(|(z, b)| z * b).sum::<f64>();
    let slopes = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            let z = st.transform(&e);
            z[j] * c.beta[j] - zero[j] * c.beta[j]
        })
        .collect();
    (intercept, slopes)
}

/// Fitted penalised linear regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    st: Standardizer,
    coef: Coefficients,
    pub lambda: f64,
}

impl LinearModel {
    /// Intercept and slopes on the original feature scale.
    pub fn coefficients(&self) -> (f64, Vec<f64>) {
        original_scale(&self.st, &self.coef, self.coef.beta.len())
    }
}

impl Regression for LinearModel {
    fn predict(&self, features: &[f64]) -> f64 {
        linear_predictor(&self.st, &self.coef, features)
    }
}

/// Fitted penalised logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    st: Standardizer,
    coef: Coefficients,
    pub lambda: f64,
}

impl LogisticModel {
    pub fn coefficients(&self) -> (f64, Vec<f64>) {
        original_scale(&self.st, &self.coef, self.coef.beta.len())
    }
}

impl ProbabilityModel for LogisticModel {
    fn predict(&self, features: &[f64]) -> f64 {
        sigmoid(linear_predictor(&self.st, &self.coef, features))
    }
}

/// Lasso along a log-spaced λ path; `n_lambda = 1` gives least squares.
pub fn fit_lasso(
    x: &Features,
    y: &[f64],
    n_lambda: usize,
    cv_folds: usize,
    rule: LambdaRule,
    seed: u64,
) -> Result<LinearModel> {
    let f = fit_path(x, y, Family::Gaussian, n_lambda, cv_folds, rule, seed)?;
    Ok(LinearModel { st: f.st, coef: f.coef, lambda: f.lambda })
}

/// L1-logistic regression for 0/1 responses; `n_lambda = 1` gives the MLE.
pub fn fit_logistic_lasso(
    x: &Features,
    y: &[f64],
    n_lambda: usize,
    cv_folds: usize,
    rule: LambdaRule,
    seed: u64,
) -> Result<LogisticModel> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Learner("logistic response must be 0 or 1".into()));
    }
    let f = fit_path(x, y, Family::Binomial, n_lambda, cv_folds, rule, seed)?;
    Ok(LogisticModel { st: f.st, coef: f.coef, lambda: f.lambda })
}

#[cfg(test)]
pub(crate) fn lasso_at(x: &Features, y: &[f64], lambda: f64) -> LinearModel {
    let st = Standardizer::fit(x);
    let d = Design::new(x, &st);
    let mut coef = intercept_only(y, Family::Gaussian, x.cols());
    fit_at(&d, y, Family::Gaussian, lambda, &mut coef);
    LinearModel { st, coef, lambda }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_rows(n: usize, p: usize, seed: u64) -> Features {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Features::new(p);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
            x.push(&row);
        }
        x
    }

    #[test]
    fn least_squares_recovers_noiseless_plane() {
        let x = gaussian_rows(50, 3, 1);
        let y: Vec<f64> = (0..50).map(|i| 0.5 + 2.0 * x.row(i)[0] - 1.0 * x.row(i)[2]).collect();
        let m = fit_lasso(&x, &y, 1, 0, LambdaRule::Min, 0).unwrap();
        let (b0, b) = m.coefficients();
        assert!((b0 - 0.5).abs() < 1e-6);
        assert!((b[0] - 2.0).abs() < 1e-6 && b[1].abs() < 1e-6 && (b[2] + 1.0).abs() < 1e-6);
        assert!((m.predict(&[1.0, 1.0, 1.0]) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn single_feature_lasso_is_soft_thresholded_covariance() {
        let x = gaussian_rows(40, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..40).map(|i| x.row(i)[0] + rng.gen_range(-1.0..1.0)).collect();
        let n = 40.0;
        let mx = (0..40).map(|i| x.row(i)[0]).sum::<f64>() / n;
        let sd = ((0..40).map(|i| (x.row(i)[0] - mx).powi(2)).sum::<f64>() / n).sqrt();
        let my = y.iter().sum::<f64>() / n;
        let cov = (0..40).map(|i| (x.row(i)[0] - mx) / sd * (y[i] - my)).sum::<f64>() / n;
        for lambda in [0.1, 0.4, cov.abs() + 0.1] {
            let m = lasso_at(&x, &y, lambda);
            let expected = soft_threshold(cov, lambda) / sd;
            assert!((m.coefficients().1[0] - expected).abs() < 1e-7, "λ = {lambda}");
        }
    }

    #[test]
    fn cross_validated_lasso_drops_noise_features() {
        let x = gaussian_rows(400, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..400).map(|i| 3.0 * x.row(i)[1] + rng.gen_range(-0.5..0.5)).collect();
        let m = fit_lasso(&x, &y, 100, 5, LambdaRule::OneSe, 6).unwrap();
        let (_, b) = m.coefficients();
        assert!((b[1] - 3.0).abs() < 0.1);
        assert!(m.lambda > 0.0);
        let noise: f64 = b.iter().enumerate().filter(|(j, _)| *j != 1).map(|(_, v)| v.abs()).sum();
        assert!(noise < 0.1, "{b:?}");
    }

    fn newton_logistic(x: &Features, y: &[f64]) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..100 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..y.len() {
                let t = x.row(i)[0];
                let p = 1.0 / (1.0 + (-(a + b * t)).exp());
                g0 += y[i] - p;
                g1 += (y[i] - p) * t;
                let w = p * (1.0 - p);
                h00 += w;
                h01 += w * t;
                h11 += w * t * t;
            }
            let det = h00 * h11 - h01 * h01;
            a += (h11 * g0 - h01 * g1) / det;
            b += (h00 * g1 - h01 * g0) / det;
        }
        (a, b)
    }

    #[test]
    fn unpenalised_logistic_matches_newton() {
        let x = gaussian_rows(300, 1, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<f64> = (0..300)
            .map(|i| f64::from(u8::from(rng.gen::<f64>() < sigmoid(-0.3 + 1.2 * x.row(i)[0]))))
            .collect();
        let m = fit_logistic_lasso(&x, &y, 1, 0, LambdaRule::Min, 0).unwrap();
        let (a, b) = newton_logistic(&x, &y);
        let (b0, slope) = m.coefficients();
        assert!((b0 - a).abs() < 1e-5 && (slope[0] - b).abs() < 1e-5, "{b0} {slope:?} vs {a} {b}");
    }

    #[test]
    fn logistic_lasso_probabilities_are_sensible() {
        let x = gaussian_rows(600, 3, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y: Vec<f64> =
            (0..600).map(|i| f64::from(u8::from(rng.gen::<f64>() < sigmoid(1.5 * x.row(i)[0])))).collect();
        let m = fit_logistic_lasso(&x, &y, 100, 5, LambdaRule::Min, 11).unwrap();
        assert!((m.predict(&[0.0, 0.0, 0.0]) - 0.5).abs() < 0.08);
        assert!(m.predict(&[2.0, 0.0, 0.0]) > 0.85);
        assert!(m.predict(&[-2.0, 0.0, 0.0]) < 0.15);
    }

    #[test]
    fn constant_feature_is_harmless() {
        let x = Features::from_rows(2, (0..20).map(|i| [i as f64, 1.0]));
        let y: Vec<f64> = (0..20).map(|i| 2.0 * i as f64).collect();
        let m = fit_lasso(&x, &y, 1, 0, LambdaRule::Min, 0).unwrap();
        assert!((m.predict(&[3.0, 1.0]) - 6.0).abs() < 1e-6);
    }
}
