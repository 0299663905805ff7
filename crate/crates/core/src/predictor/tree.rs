//! CART-style regression tree with exact split search.
//!
//! Splits greedily maximize the weighted variance reduction (equivalently,
//! minimize the summed squared error of the children). Candidate thresholds
//! are the midpoints of consecutive sorted unique feature values — no
//! histogram binning, the data is desk-scale. Ties between equally good
//! splits break toward the lowest feature index, then the lowest threshold,
//! which the recursive construction realizes by scanning features and
//! thresholds in ascending order and accepting only strict improvements.
//!
//! Every node carries its sample count, mean target, and a small histogram
//! (the split feature's values at internal nodes, targets at leaves) so
//! decision paths can be rendered with per-node distributions downstream.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, N_FEATURES};

/// Gains below this are treated as no reduction at all, so constant-target
/// nodes do not split on rounding noise.
const MIN_GAIN: f64 = 1e-12;

/// Number of histogram bins per node.
const HIST_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 2,
        }
    }
}

/// Fixed-width histogram over a node's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
}

impl Histogram {
    fn build(values: impl Iterator<Item = f64> + Clone) -> Histogram {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values.clone() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || lo >= hi {
            let v = if lo.is_finite() { lo } else { 0.0 };
            let n = values.count() as u32;
            return Histogram {
                lo: v,
                hi: v,
                counts: vec![n],
            };
        }
        let mut counts = vec![0u32; HIST_BINS];
        let width = (hi - lo) / HIST_BINS as f64;
        for v in values {
            let bin = (((v - lo) / width) as usize).min(HIST_BINS - 1);
            counts[bin] += 1;
        }
        Histogram { lo, hi, counts }
    }
}

/// Per-node training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub n_samples: usize,
    pub mean_target: f64,
    pub hist: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        stats: NodeStats,
    },
    Leaf {
        prediction: f64,
        stats: NodeStats,
    },
}

impl Node {
    pub fn stats(&self) -> &NodeStats {
        match self {
            Node::Internal { stats, .. } | Node::Leaf { stats, .. } => stats,
        }
    }
}

/// A fitted regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub params: TreeParams,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { prediction, .. } => return *prediction,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Fitter<'a> {
    xs: &'a [[f64; N_FEATURES]],
    ys: &'a [f64],
    params: TreeParams,
    features: &'a [usize],
    /// Features drawn per split when set; otherwise all of `features`.
    mtry: Option<usize>,
    rng: Option<ChaCha12Rng>,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> Fitter<'a> {
    fn node_stats(&self, idx: &[u32], hist_feature: Option<usize>) -> NodeStats {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.ys[i as usize]).sum::<f64>() / n as f64;
        let hist = match hist_feature {
            Some(f) => Histogram::build(idx.iter().map(|&i| self.xs[i as usize][f])),
            None => Histogram::build(idx.iter().map(|&i| self.ys[i as usize])),
        };
        NodeStats {
            n_samples: n,
            mean_target: mean,
            hist,
        }
    }

    fn sse(&self, idx: &[u32]) -> f64 {
        let n = idx.len() as f64;
        let mean = idx.iter().map(|&i| self.ys[i as usize]).sum::<f64>() / n;
        idx.iter()
            .map(|&i| (self.ys[i as usize] - mean).powi(2))
            .sum()
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.mtry {
            Some(m) if m < self.features.len() => {
                let rng = self.rng.as_mut().expect("mtry requires an rng");
                let mut picked: Vec<usize> =
                    self.features.choose_multiple(rng, m).copied().collect();
                picked.sort_unstable();
                picked
            }
            _ => self.features.to_vec(),
        }
    }

    fn best_split(&mut self, idx: &[u32], sse_parent: f64) -> Option<BestSplit> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = idx.len();
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);

        for feature in self.candidate_features() {
            pairs.clear();
            pairs.extend(
                idx.iter()
                    .map(|&i| (self.xs[i as usize][feature], self.ys[i as usize])),
            );
            pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

            let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
            let mut left_sum = 0.0;
            let mut left_sumsq = 0.0;
            let total_sumsq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

            for i in 0..n - 1 {
                left_sum += pairs[i].1;
                left_sumsq += pairs[i].1 * pairs[i].1;
                let nl = i + 1;
                let nr = n - nl;
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let right_sumsq = total_sumsq - left_sumsq;
                let sse_l = (left_sumsq - left_sum * left_sum / nl as f64).max(0.0);
                let sse_r = (right_sumsq - right_sum * right_sum / nr as f64).max(0.0);
                let gain = sse_parent - sse_l - sse_r;
                if gain > MIN_GAIN && best.as_ref().map(|b| gain > b.gain).unwrap_or(true) {
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold: (pairs[i].0 + pairs[i + 1].0) / 2.0,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [u32], depth: u32) -> usize {
        let sse_parent = self.sse(idx);
        let depth_ok = self.params.max_depth.map(|d| depth < d).unwrap_or(true);
        let splittable =
            depth_ok && idx.len() >= 2 * self.params.min_samples_leaf.max(1) && sse_parent > MIN_GAIN;

        let split = if splittable {
            self.best_split(idx, sse_parent)
        } else {
            None
        };

        match split {
            None => {
                let stats = self.node_stats(idx, None);
                self.nodes.push(Node::Leaf {
                    prediction: stats.mean_target,
                    stats,
                });
                self.nodes.len() - 1
            }
            Some(s) => {
                let stats = self.node_stats(idx, Some(s.feature));
                // stable partition keeps sibling order deterministic
                let (mut l, mut r): (Vec<u32>, Vec<u32>) = idx
                    .iter()
                    .partition(|&&i| self.xs[i as usize][s.feature] <= s.threshold);
                let me = self.nodes.len();
                self.nodes.push(Node::Internal {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: 0,
                    right: 0,
                    stats,
                });
                let left = self.build(&mut l, depth + 1);
                let right = self.build(&mut r, depth + 1);
                if let Node::Internal {
                    left: l_ref,
                    right: r_ref,
                    ..
                } = &mut self.nodes[me]
                {
                    *l_ref = left;
                    *r_ref = right;
                }
                me
            }
        }
    }
}

/// Core fitter over a design matrix. `index` is the training multiset (rows
/// may repeat under bootstrap); `mtry`/`rng` enable per-split feature
/// subsampling for forests.
pub(crate) fn fit_tree_core(
    xs: &[[f64; N_FEATURES]],
    ys: &[f64],
    index: &[u32],
    params: TreeParams,
    features: &[usize],
    mtry: Option<usize>,
    rng: Option<ChaCha12Rng>,
) -> Result<RegressionTree> {
    if index.is_empty() {
        return Err(Error::validation("cannot fit a tree on zero rows"));
    }
    if features.is_empty() {
        return Err(Error::validation("feature set must be non-empty"));
    }
    if features.iter().any(|&f| f >= N_FEATURES) {
        return Err(Error::validation("feature index out of range"));
    }
    let mut fitter = Fitter {
        xs,
        ys,
        params,
        features,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    let mut idx = index.to_vec();
    fitter.build(&mut idx, 0);
    Ok(RegressionTree {
        nodes: fitter.nodes,
        params,
    })
}

pub(crate) fn design(rows: &[FeatureRow]) -> (Vec<[f64; N_FEATURES]>, Vec<f64>) {
    (
        rows.iter().map(|r| r.features).collect(),
        rows.iter().map(|r| r.mos).collect(),
    )
}

/// Fits a regression tree on the rows' own targets, using the given feature
/// subset (all 14 when `features` is `None`).
pub fn fit_tree(
    rows: &[FeatureRow],
    params: TreeParams,
    features: Option<&[usize]>,
) -> Result<RegressionTree> {
    let (xs, ys) = design(rows);
    fit_tree_with_targets_xs(&xs, &ys, params, features)
}

/// Like [`fit_tree`] but with externally supplied targets (residuals,
/// teacher predictions).
pub fn fit_tree_with_targets(
    rows: &[FeatureRow],
    targets: &[f64],
    params: TreeParams,
    features: Option<&[usize]>,
) -> Result<RegressionTree> {
    if rows.len() != targets.len() {
        return Err(Error::validation("rows and targets length mismatch"));
    }
    let xs: Vec<[f64; N_FEATURES]> = rows.iter().map(|r| r.features).collect();
    fit_tree_with_targets_xs(&xs, targets, params, features)
}

fn fit_tree_with_targets_xs(
    xs: &[[f64; N_FEATURES]],
    ys: &[f64],
    params: TreeParams,
    features: Option<&[usize]>,
) -> Result<RegressionTree> {
    let all: Vec<usize> = (0..N_FEATURES).collect();
    let feats = features.unwrap_or(&all);
    let index: Vec<u32> = (0..xs.len() as u32).collect();
    fit_tree_core(xs, ys, &index, params, feats, None, None)
}
