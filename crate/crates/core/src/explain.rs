//! Interpretation stack: exact per-feature attributions for tree models,
//! decision-path extraction, forest-to-tree distillation, and cumulative-SNR
//! root-cause curves.
//!
//! Attributions are Shapley values of the tree-path-dependent game: the
//! value of a feature coalition is the tree walk that follows the row on
//! coalition features and averages both children by their training sample
//! counts elsewhere. The polynomial-time algorithm tracks, along each
//! root-leaf path, the proportion of feature subsets flowing down ("zero
//! fraction") and whether the row itself does ("one fraction"), with the
//! permutation-weight bookkeeping folded into an incrementally extended and
//! unwound path. Base value plus contributions reproduces the prediction
//! exactly (local accuracy).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, FEATURE_NAMES, N_FEATURES};
use crate::predictor::{fit_tree_with_targets, Forest, Histogram, Node, RegressionTree, TreeParams};
use crate::trace::Dataset;

/// Additive per-feature explanation of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Expected model output over the training distribution.
    pub base_value: f64,
    pub contributions: [f64; N_FEATURES],
    pub session_id: String,
    pub mos_index: usize,
}

impl Attribution {
    pub fn prediction(&self) -> f64 {
        self.base_value + self.contributions.iter().sum::<f64>()
    }
}

/// Tree-model reference accepted by the attribution operations.
#[derive(Debug, Clone, Copy)]
pub enum TreeModel<'a> {
    Tree(&'a RegressionTree),
    Forest(&'a Forest),
}

impl<'a> TreeModel<'a> {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        match self {
            TreeModel::Tree(t) => t.predict(x),
            TreeModel::Forest(f) => f.predict(x),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..depth).rev() {
        path[i + 1].pweight +=
            one_fraction * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one = tmp - path[i].pweight * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) as f64 / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = next_one * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one = path[i].pweight - tmp * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else if zero_fraction != 0.0 {
            total += path[i].pweight / zero_fraction * (depth + 1) as f64 / (depth - i) as f64;
        }
    }
    total
}

// Sentinel feature index for the root path element.
const NO_FEATURE: usize = usize::MAX;

#[allow(clippy::too_many_arguments)]
fn shap_recurse(
    tree: &RegressionTree,
    x: &[f64; N_FEATURES],
    node_idx: usize,
    mut path: Vec<PathElement>,
    parent_zero: f64,
    parent_one: f64,
    parent_feature: usize,
    contribs: &mut [f64; N_FEATURES],
) {
    extend_path(&mut path, parent_zero, parent_one, parent_feature);
    match &tree.nodes[node_idx] {
        Node::Leaf { prediction, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = &path[i];
                contribs[el.feature] += w * (el.one_fraction - el.zero_fraction) * prediction;
            }
        }
        Node::Internal {
            feature,
            threshold,
            left,
            right,
            stats,
        } => {
            let (hot, cold) = if x[*feature] <= *threshold {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let node_cover = stats.n_samples as f64;
            let hot_cover = tree.nodes[hot].stats().n_samples as f64;
            let cold_cover = tree.nodes[cold].stats().n_samples as f64;

            // a feature met twice on a path is first unwound, carrying its
            // accumulated fractions into the new element
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..path.len()).find(|&i| path[i].feature == *feature) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }

            shap_recurse(
                tree,
                x,
                hot,
                path.clone(),
                hot_cover / node_cover * incoming_zero,
                incoming_one,
                *feature,
                contribs,
            );
            shap_recurse(
                tree,
                x,
                cold,
                path,
                cold_cover / node_cover * incoming_zero,
                0.0,
                *feature,
                contribs,
            );
        }
    }
}

/// Expected tree output over the training distribution (cover-weighted
/// mean of the leaves).
fn tree_base_value(tree: &RegressionTree) -> f64 {
    fn walk(tree: &RegressionTree, idx: usize) -> f64 {
        match &tree.nodes[idx] {
            Node::Leaf { prediction, stats } => prediction * stats.n_samples as f64,
            Node::Internal { left, right, .. } => walk(tree, *left) + walk(tree, *right),
        }
    }
    walk(tree, 0) / tree.nodes[0].stats().n_samples as f64
}

fn shap_tree(tree: &RegressionTree, x: &[f64; N_FEATURES]) -> (f64, [f64; N_FEATURES]) {
    let mut contribs = [0.0; N_FEATURES];
    if tree.nodes.len() > 1 {
        shap_recurse(tree, x, 0, Vec::new(), 1.0, 1.0, NO_FEATURE, &mut contribs);
    }
    (tree_base_value(tree), contribs)
}

/// Exact Shapley attributions for a single row. Forest attributions are the
/// mean of the per-tree attributions (the model itself is a mean of trees).
pub fn tree_shap(model: TreeModel<'_>, row: &FeatureRow) -> Attribution {
    let (base_value, contributions) = match model {
        TreeModel::Tree(tree) => shap_tree(tree, &row.features),
        TreeModel::Forest(forest) => {
            let mut base = 0.0;
            let mut acc = [0.0; N_FEATURES];
            for tree in &forest.trees {
                let (b, c) = shap_tree(tree, &row.features);
                base += b;
                for (a, v) in acc.iter_mut().zip(&c) {
                    *a += v;
                }
            }
            let n = forest.trees.len() as f64;
            base /= n;
            for a in acc.iter_mut() {
                *a /= n;
            }
            (base, acc)
        }
    };
    Attribution {
        base_value,
        contributions,
        session_id: row.session_id.clone(),
        mos_index: row.mos_index,
    }
}

/// Per-feature importance ranking plus beeswarm-style scatter data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    /// (feature, mean absolute contribution), highest first.
    pub ranking: Vec<(String, f64)>,
    pub scatter: Vec<ScatterPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub session_id: String,
    pub mos_index: usize,
    pub feature: String,
    pub value: f64,
    pub contribution: f64,
}

/// Attributes every row and ranks features by mean absolute contribution.
pub fn shap_summary(model: TreeModel<'_>, rows: &[FeatureRow]) -> ShapSummary {
    let mut abs_sum = [0.0; N_FEATURES];
    let mut scatter = Vec::with_capacity(rows.len() * N_FEATURES);
    for row in rows {
        let attribution = tree_shap(model, row);
        for (i, &c) in attribution.contributions.iter().enumerate() {
            abs_sum[i] += c.abs();
            scatter.push(ScatterPoint {
                session_id: row.session_id.clone(),
                mos_index: row.mos_index,
                feature: FEATURE_NAMES[i].to_string(),
                value: row.features[i],
                contribution: c,
            });
        }
    }
    let n = rows.len().max(1) as f64;
    let mut ranking: Vec<(String, f64)> = FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), abs_sum[i] / n))
        .collect();
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite importances"));
    ShapSummary { ranking, scatter }
}

/// One internal node on a decision path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node_id: usize,
    pub feature: String,
    pub threshold: f64,
    /// True when the row satisfied `value <= threshold`.
    pub went_left: bool,
    pub row_value: f64,
    pub n_samples: usize,
    pub mean_target: f64,
    /// Distribution of the split feature's values at this node, with the
    /// threshold as the marker position.
    pub hist: Histogram,
}

/// Root-to-leaf path of one prediction, with per-node statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub steps: Vec<PathStep>,
    pub leaf_prediction: f64,
    pub leaf_n_samples: usize,
    pub leaf_hist: Histogram,
}

/// Extracts the decision path a row takes through a tree.
pub fn decision_path(tree: &RegressionTree, row: &FeatureRow) -> DecisionPath {
    let mut steps = Vec::new();
    let mut idx = 0usize;
    loop {
        match &tree.nodes[idx] {
            Node::Leaf { prediction, stats } => {
                return DecisionPath {
                    steps,
                    leaf_prediction: *prediction,
                    leaf_n_samples: stats.n_samples,
                    leaf_hist: stats.hist.clone(),
                };
            }
            Node::Internal {
                feature,
                threshold,
                left,
                right,
                stats,
            } => {
                let value = row.features[*feature];
                let went_left = value <= *threshold;
                steps.push(PathStep {
                    node_id: idx,
                    feature: FEATURE_NAMES[*feature].to_string(),
                    threshold: *threshold,
                    went_left,
                    row_value: value,
                    n_samples: stats.n_samples,
                    mean_target: stats.mean_target,
                    hist: stats.hist.clone(),
                });
                idx = if went_left { *left } else { *right };
            }
        }
    }
}

/// Maximum depth of the distilled surrogate tree.
pub const DISTILL_MAX_DEPTH: u32 = 8;

/// Trains a depth-limited tree on the teacher's predictions so its decision
/// paths approximate the forest. The student generally scores worse than
/// the teacher on raw targets; fidelity is measured against the teacher.
pub fn distill(teacher: &Forest, rows: &[FeatureRow]) -> Result<RegressionTree> {
    if rows.is_empty() {
        return Err(Error::validation("cannot distill on zero rows"));
    }
    let targets: Vec<f64> = rows.iter().map(|r| teacher.predict(&r.features)).collect();
    fit_tree_with_targets(
        rows,
        &targets,
        TreeParams {
            max_depth: Some(DISTILL_MAX_DEPTH),
            min_samples_leaf: 2,
        },
        None,
    )
}

/// Mean cumulative SNR and 95% CI of one class at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    pub t: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_sessions: usize,
}

/// Per-second cumulative-SNR bands for normal and abnormal sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCauseCurves {
    pub normal: Vec<CurveBand>,
    pub abnormal: Vec<CurveBand>,
}

fn class_band(
    d: &Dataset,
    ids: &[&str],
    t_end: f64,
) -> Option<CurveBand> {
    let values: Vec<f64> = ids
        .iter()
        .filter_map(|id| d.session(id).and_then(|s| crate::synth::cumulative_snr(s, t_end)))
        .collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / n.sqrt();
    Some(CurveBand {
        t: t_end,
        mean,
        lo: mean - half,
        hi: mean + half,
        n_sessions: values.len(),
    })
}

/// Cumulative mean SNR over time per class, with 95% confidence bands. The
/// point at `t` covers samples strictly before `t`, so the last point of a
/// 60 s session aggregates the full session.
pub fn cumulative_snr_curves(
    d: &Dataset,
    labels: &BTreeMap<String, bool>,
    horizon_s: usize,
) -> Result<RootCauseCurves> {
    let normal_ids: Vec<&str> = d
        .sessions
        .iter()
        .filter(|s| labels.get(&s.id).copied() == Some(false))
        .map(|s| s.id.as_str())
        .collect();
    let abnormal_ids: Vec<&str> = d
        .sessions
        .iter()
        .filter(|s| labels.get(&s.id).copied() == Some(true))
        .map(|s| s.id.as_str())
        .collect();
    if normal_ids.is_empty() || abnormal_ids.is_empty() {
        return Err(Error::validation(
            "both classes must be non-empty for root-cause curves",
        ));
    }
    let mut normal = Vec::with_capacity(horizon_s);
    let mut abnormal = Vec::with_capacity(horizon_s);
    for t in 1..=horizon_s {
        if let Some(band) = class_band(d, &normal_ids, t as f64) {
            normal.push(band);
        }
        if let Some(band) = class_band(d, &abnormal_ids, t as f64) {
            abnormal.push(band);
        }
    }
    Ok(RootCauseCurves { normal, abnormal })
}

/// Writes attributions as `(row id, feature, value, contribution)` rows.
pub fn write_attribution_csv(attributions: &[Attribution], rows: &[FeatureRow], path: &Path) -> Result<()> {
    if attributions.len() != rows.len() {
        return Err(Error::validation("attributions and rows length mismatch"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "session_id,mos_index,feature,value,contribution").map_err(io_err)?;
    for (a, row) in attributions.iter().zip(rows) {
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{:.6},{:.9}",
                a.session_id, a.mos_index, name, row.features[i], a.contributions[i]
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Writes both curve bands as `(t, class, mean, lo, hi)` rows.
pub fn write_curves_csv(curves: &RootCauseCurves, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "t,class,mean,lo,hi").map_err(io_err)?;
    for (class, bands) in [("normal", &curves.normal), ("abnormal", &curves.abnormal)] {
        for b in bands.iter() {
            writeln!(
                w,
                "{:.6},{},{:.6},{:.6},{:.6}",
                b.t, class, b.mean, b.lo, b.hi
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
