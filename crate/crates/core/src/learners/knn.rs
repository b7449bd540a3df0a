//! Nearest-neighbour conditional quantiles.

use super::{rearrange, Features, QuantileModel, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KnnQuantile {
    st: Standardizer,
    z: Features,
    y: Vec<f64>,
    k: usize,
}

impl KnnQuantile {
    pub fn fit(x: &Features, y: &[f64], k: usize) -> Result<Self> {
        if x.rows() != y.len() || y.len() < 2 {
            return Err(Error::Learner(format!("knn needs ≥ 2 rows, got {}", y.len())));
        }
        let st = Standardizer::fit(x);
        let z = Features::from_rows(x.cols(), (0..x.rows()).map(|i| st.transform(x.row(i))));
        Ok(KnnQuantile { st, z, y: y.to_vec(), k: k.min(y.len() - 1).max(1) })
    }

    fn neighbour_outcomes(&self, z: &[f64], skip: Option<usize>) -> Vec<f64> {
        let mut d: Vec<(f64, usize)> = (0..self.y.len())
            .filter(|&i| Some(i) != skip)
            .map(|i| (self.z.row(i).iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<f64> = d[..k].iter().map(|&(_, i)| self.y[i]).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    fn levels_from(sorted: &[f64], levels: &[f64]) -> Vec<f64> {
        let k = sorted.len() as f64;
        let mut q: Vec<f64> = levels
            .iter()
            .map(|&u| sorted[((u * k).ceil() as usize).clamp(1, sorted.len()) - 1])
            .collect();
        if levels.windows(2).all(|p| p[0] <= p[1]) {
            rearrange(&mut q);
        }
        q
    }
}

impl QuantileModel for KnnQuantile {
    fn predict_levels(&self, features: &[f64], levels: &[f64]) -> Vec<f64> {
        Self::levels_from(&self.neighbour_outcomes(&self.st.transform(features), None), levels)
    }

    fn held_out_levels(&self, i: usize, levels: &[f64]) -> Vec<f64> {
        Self::levels_from(&self.neighbour_outcomes(self.z.row(i), Some(i)), levels)
    }
}
