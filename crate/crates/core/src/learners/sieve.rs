//! Polynomial series least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Features, Regression, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SieveConfig {
    /// Total degree of the polynomial basis.
    pub degree: usize,
    /// Ridge added to the non-intercept diagonal, per observation.
    pub ridge: f64,
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig { degree: 2, ridge: 1e-8 }
    }
}

/// Exponent vectors of all monomials in `p` variables up to total `degree`,
/// excluding the constant.
fn monomials(p: usize, degree: usize) -> Vec<Vec<u32>> {
    fn extend(prefix: &mut Vec<u32>, p: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == p {
            if prefix.iter().any(|&e| e > 0) {
                out.push(prefix.clone());
            }
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            extend(prefix, p, left - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(p), p, degree as u32, &mut out);
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

fn basis(terms: &[Vec<u32>], z: &[f64]) -> Vec<f64> {
    terms
        .iter()
        .map(|e| z.iter().zip(e).map(|(v, &k)| v.powi(k as i32)).product())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSieve {
    st: Standardizer,
    terms: Vec<Vec<u32>>,
    coef: Vec<f64>,
}

impl PolynomialSieve {
    pub fn fit(x: &Features, y: &[f64], cfg: &SieveConfig) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Learner(format!("{} feature rows for {} responses", x.rows(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Learner("non-finite sieve response".into()));
        }
        let st = Standardizer::fit(x);
        let all = monomials(x.cols(), cfg.degree);
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| basis(&all, &st.transform(x.row(i)))).collect();
        let n = rows.len() as f64;
        let keep: Vec<usize> = (0..all.len())
            .filter(|&j| {
                let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n > 1e-12
            })
            .collect();
        let terms: Vec<Vec<u32>> = keep.iter().map(|&j| all[j].clone()).collect();
        let width = terms.len() + 1;
        if rows.len() < width {
            return Err(Error::Learner(format!("{} rows for a sieve with {width} terms", rows.len())));
        }
        let design = DMatrix::from_fn(rows.len(), width, |i, j| if j == 0 { 1.0 } else { rows[i][keep[j - 1]] });
        let mut gram = design.transpose() * &design;
        for j in 1..width {
            gram[(j, j)] += cfg.ridge * n;
        }
        let rhs = design.transpose() * DVector::from_column_slice(y);
        let coef = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::Learner(format!("sieve normal equations: {e}")))?,
        };
        Ok(PolynomialSieve { st, terms, coef: coef.iter().copied().collect() })
    }

    pub fn terms(&self) -> usize {
        self.coef.len()
    }
}

impl Regression for PolynomialSieve {
    fn predict(&self, features: &[f64]) -> f64 {
        let b = basis(&self.terms, &self.st.transform(features));
        self.coef[0] + b.iter().zip(&self.coef[1..]).map(|(b, c)| b * c).sum::<f64>()
    }
}
