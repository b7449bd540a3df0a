//! Quantile regression forest with subsampled trees and out-of-bag weights.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rearrange, Features, QuantileModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
    /// Share of rows drawn without replacement for each tree.
    pub sample_fraction: f64,
    /// Grow the forest on residuals from a quadratic sieve mean and shift
    /// its quantiles back by the fitted mean.
    pub residualize: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 200, min_leaf: 10, mtry: None, sample_fraction: 0.5, residualize: false }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) {
            return Err(Error::InvalidConfig("forest needs trees, min_leaf and mtry ≥ 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidConfig("forest sample_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { start: usize, len: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    members: Vec<u32>,
    in_bag: Vec<bool>,
}

impl Tree {
    fn leaf(&self, row: &[f64]) -> &[u32] {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
                Node::Leaf { start, len } => return &self.members[start..start + len],
            }
        }
    }
}

struct Grower<'a> {
    x: &'a Features,
    y: &'a [f64],
    min_leaf: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    members: Vec<u32>,
}

impl Grower<'_> {
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let p = self.x.cols();
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for feature in sample(&mut self.rng, p, self.mtry.min(p)).into_iter() {
            order.sort_by(|&a, &b| self.x.row(a)[feature].total_cmp(&self.x.row(b)[feature]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let a = self.x.row(order[k])[feature];
                let b = self.x.row(order[k + 1])[feature];
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
                if best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (a + b)));
                }
            }
        }
        let (gain, feature, threshold) = best?;
        (gain > total * total / n as f64 + 1e-12 * total.abs().max(1.0)).then_some((feature, threshold))
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, len: 0 });
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let split = if idx.len() >= 2 * self.min_leaf && !pure { self.best_split(&idx) } else { None };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.row(i)[feature] <= threshold);
                let left = self.grow(l);
                let right = self.grow(r);
                self.nodes[id] = Node::Split { feature, threshold, left, right };
            }
            None => {
                let start = self.members.len();
                self.members.extend(idx.iter().map(|&i| i as u32));
                self.nodes[id] = Node::Leaf { start, len: idx.len() };
            }
        }
        id
    }
}

/// Forest whose leaves keep their training rows, so that predictions are
/// weighted empirical distributions of the training outcomes.
#[derive(Debug, Clone)]
pub struct QuantileForest {
    trees: Vec<Tree>,
    x: Features,
    y: Vec<f64>,
    /// Training rows sorted by outcome.
    order: Vec<u32>,
}

impl QuantileForest {
    pub fn fit(x: &Features, y: &[f64], cfg: &ForestConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = y.len();
        if x.rows() != n || n == 0 {
            return Err(Error::Learner(format!("{} feature rows for {} responses", x.rows(), n)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Learner("non-finite forest response".into()));
        }
        let bag = ((cfg.sample_fraction * n as f64).round() as usize).clamp(1, n);
        let mtry = cfg.mtry.unwrap_or_else(|| (x.cols() as f64).sqrt().ceil() as usize).max(1);
        let trees = (0..cfg.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64 + 1);
                let drawn = sample(&mut rng, n, bag).into_vec();
                let mut in_bag = vec![false; n];
                drawn.iter().for_each(|&i| in_bag[i] = true);
                let mut g = Grower {
                    x,
                    y,
                    min_leaf: cfg.min_leaf,
                    mtry,
                    rng,
                    nodes: Vec::new(),
                    members: Vec::with_capacity(bag),
                };
                g.grow(drawn);
                Tree { nodes: g.nodes, members: g.members, in_bag }
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| y[a as usize].total_cmp(&y[b as usize]));
        Ok(QuantileForest { trees, x: x.clone(), y: y.to_vec(), order })
    }

    /// Forest weights on the training rows for `row`, using only trees for
    /// which `keep` holds.
    fn weights(&self, row: &[f64], keep: impl Fn(&Tree) -> bool) -> Vec<f64> {
        let mut w = vec![0.0; self.y.len()];
        let mut used = 0usize;
        for tree in self.trees.iter().filter(|t| keep(t)) {
            let leaf = tree.leaf(row);
            let share = 1.0 / leaf.len() as f64;
            leaf.iter().for_each(|&i| w[i as usize] += share);
            used += 1;
        }
        if used > 0 {
            w.iter_mut().for_each(|v| *v /= used as f64);
        }
        w
    }

    fn quantiles(&self, w: &[f64], levels: &[f64]) -> Vec<f64> {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return levels.iter().map(|_| f64::NAN).collect();
        }
        let mut ranked: Vec<usize> = (0..levels.len()).collect();
        ranked.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
        let mut out = vec![self.y[*self.order.last().unwrap_or(&0) as usize]; levels.len()];
        let mut cum = 0.0;
        let mut next = 0;
        for &i in &self.order {
            cum += w[i as usize] / total;
            while next < ranked.len() && cum >= levels[ranked[next]] - 1e-12 {
                out[ranked[next]] = self.y[i as usize];
                next += 1;
            }
            if next == ranked.len() {
                break;
            }
        }
        out
    }

    fn monotone(&self, w: &[f64], levels: &[f64]) -> Vec<f64> {
        let mut q = self.quantiles(w, levels);
        if levels.windows(2).all(|p| p[0] <= p[1]) {
            rearrange(&mut q);
        }
        q
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn training_rows(&self) -> usize {
        self.y.len()
    }
}

impl QuantileModel for QuantileForest {
    fn predict_levels(&self, features: &[f64], levels: &[f64]) -> Vec<f64> {
        self.monotone(&self.weights(features, |_| true), levels)
    }

    fn held_out_levels(&self, i: usize, levels: &[f64]) -> Vec<f64> {
        let w = self.weights(self.x.row(i), |t| !t.in_bag[i]);
        if w.iter().all(|&v| v == 0.0) {
            return self.predict_levels(self.x.row(i), levels);
        }
        self.monotone(&w, levels)
    }
}
