//! MOS regression from engineered KPI features.
//!
//! Three learners share the regression-tree core in [`tree`]: a single tree,
//! a bagged random forest (bootstrap resampling plus per-split feature
//! subsampling), and stagewise gradient boosting on squared-error residuals.
//! Evaluation follows the session-level protocol: splits are drawn over
//! sessions, never samples, and quality is reported as the per-sample R²
//! and the MSE-per-session (mean over sessions of the within-session MSE),
//! with normal-approximation confidence intervals over repeated trials.

pub mod tree;

pub use tree::{fit_tree, fit_tree_with_targets, Histogram, Node, NodeStats, RegressionTree, TreeParams};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, N_FEATURES};
use crate::mix_seed;

/// Random forest parameters. Defaults: 100 trees, unlimited depth, leaves of
/// at least 2 samples, a third of the features drawn per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn (without replacement) at each split.
    pub split_feature_fraction: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            split_feature_fraction: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Bagged ensemble; the prediction is the plain mean of the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub tree_seeds: Vec<u64>,
    pub params: ForestParams,
}

impl Forest {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

/// Fits a random forest. Each tree draws its own RNG stream from
/// `(params.seed, tree index)`, so the result does not depend on the order
/// trees are fitted in.
pub fn fit_forest(rows: &[FeatureRow], params: &ForestParams) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::validation("n_trees must be at least 1"));
    }
    if rows.is_empty() {
        return Err(Error::validation("cannot fit a forest on zero rows"));
    }
    if !(0.0 < params.split_feature_fraction && params.split_feature_fraction <= 1.0) {
        return Err(Error::validation("split_feature_fraction must lie in (0,1]"));
    }
    let (xs, ys) = tree::design(rows);
    let n = rows.len();
    let all: Vec<usize> = (0..N_FEATURES).collect();
    let mtry = ((N_FEATURES as f64 * params.split_feature_fraction).round() as usize)
        .clamp(1, N_FEATURES);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };

    let mut trees = Vec::with_capacity(params.n_trees);
    let mut tree_seeds = Vec::with_capacity(params.n_trees);
    for i in 0..params.n_trees {
        let seed = mix_seed(params.seed, i as u64);
        tree_seeds.push(seed);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let index: Vec<u32> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        let mtry_opt = (mtry < N_FEATURES).then_some(mtry);
        trees.push(tree::fit_tree_core(
            &xs,
            &ys,
            &index,
            tree_params,
            &all,
            mtry_opt,
            Some(rng),
        )?);
    }
    Ok(Forest {
        trees,
        tree_seeds,
        params: params.clone(),
    })
}

/// Gradient boosting parameters. Defaults: 200 depth-3 stages with
/// shrinkage 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_stages: usize,
    pub shrinkage: f64,
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_stages: 200,
            shrinkage: 0.1,
            max_depth: Some(3),
            min_samples_leaf: 1,
        }
    }
}

/// Additive model: the training-target mean plus shrunken residual trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub initial: f64,
    pub stages: Vec<(RegressionTree, f64)>,
    pub params: BoostParams,
    /// Training MSE after each stage; non-increasing by construction.
    pub train_curve: Vec<f64>,
}

impl Boosted {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        self.stages
            .iter()
            .fold(self.initial, |acc, (t, s)| acc + s * t.predict(x))
    }
}

/// Fits squared-error gradient boosting: stage `t` fits the residuals of
/// the model after stage `t-1`. Fully deterministic (no subsampling).
pub fn fit_boosted(rows: &[FeatureRow], params: &BoostParams) -> Result<Boosted> {
    if params.n_stages == 0 {
        return Err(Error::validation("n_stages must be at least 1"));
    }
    if !(0.0 < params.shrinkage && params.shrinkage <= 1.0) {
        return Err(Error::validation("shrinkage must lie in (0,1]"));
    }
    if rows.is_empty() {
        return Err(Error::validation("cannot fit boosting on zero rows"));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let n = rows.len() as f64;
    let initial = rows.iter().map(|r| r.mos).sum::<f64>() / n;
    let mut current: Vec<f64> = vec![initial; rows.len()];
    let mut residuals = vec![0.0; rows.len()];
    let mut stages = Vec::with_capacity(params.n_stages);
    let mut train_curve = Vec::with_capacity(params.n_stages);

    for _ in 0..params.n_stages {
        for (r, (row, cur)) in residuals.iter_mut().zip(rows.iter().zip(&current)) {
            *r = row.mos - cur;
        }
        let stage = fit_tree_with_targets(rows, &residuals, tree_params, None)?;
        for (cur, row) in current.iter_mut().zip(rows) {
            *cur += params.shrinkage * stage.predict(&row.features);
        }
        stages.push((stage, params.shrinkage));
        let mse = rows
            .iter()
            .zip(&current)
            .map(|(row, cur)| (row.mos - cur).powi(2))
            .sum::<f64>()
            / n;
        train_curve.push(mse);
    }
    Ok(Boosted {
        initial,
        stages,
        params: params.clone(),
        train_curve,
    })
}

/// Coefficient of determination: `1 - SS_res / SS_tot`. Negative when the
/// estimator does worse than predicting the mean.
pub fn r2_score(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::validation("r2: length mismatch"));
    }
    if y.len() < 2 {
        return Err(Error::validation("r2 needs at least 2 points"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::validation("r2 undefined for constant targets"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean over sessions of the within-session MSE. Sessions weigh equally no
/// matter how many rows they contribute.
pub fn mse_per_session(rows: &[FeatureRow], predictions: &[f64]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::validation("mse_per_session on empty input"));
    }
    if rows.len() != predictions.len() {
        return Err(Error::validation("mse_per_session: length mismatch"));
    }
    // first-appearance session order; rows of one session may be scattered
    let mut order: Vec<&str> = Vec::new();
    let mut acc: std::collections::BTreeMap<&str, (f64, usize)> = std::collections::BTreeMap::new();
    for (row, pred) in rows.iter().zip(predictions) {
        let e = (row.mos - pred).powi(2);
        let entry = acc.entry(row.session_id.as_str()).or_insert_with(|| {
            order.push(row.session_id.as_str());
            (0.0, 0)
        });
        entry.0 += e;
        entry.1 += 1;
    }
    let total: f64 = order
        .iter()
        .map(|id| {
            let (sum, n) = acc[id];
            sum / n as f64
        })
        .sum();
    Ok(total / order.len() as f64)
}

/// Which learner a trial evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerSpec {
    /// Single tree, optionally restricted to a feature subset.
    Tree {
        params: TreeParams,
        features: Option<Vec<usize>>,
    },
    Forest(ForestParams),
    Boosted(BoostParams),
}

impl LearnerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            LearnerSpec::Tree { .. } => "decision_tree",
            LearnerSpec::Forest(_) => "random_forest",
            LearnerSpec::Boosted(_) => "gradient_boosting",
        }
    }

    /// Fits the learner; `seed` overrides the forest's configured seed so
    /// each trial gets a fresh ensemble.
    pub fn fit(&self, rows: &[FeatureRow], seed: u64) -> Result<FittedModel> {
        match self {
            LearnerSpec::Tree { params, features } => Ok(FittedModel::Tree(fit_tree(
                rows,
                *params,
                features.as_deref(),
            )?)),
            LearnerSpec::Forest(params) => {
                let params = ForestParams {
                    seed,
                    ..params.clone()
                };
                Ok(FittedModel::Forest(fit_forest(rows, &params)?))
            }
            LearnerSpec::Boosted(params) => Ok(FittedModel::Boosted(fit_boosted(rows, params)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Tree(RegressionTree),
    Forest(Forest),
    Boosted(Boosted),
}

impl FittedModel {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        match self {
            FittedModel::Tree(t) => t.predict(x),
            FittedModel::Forest(f) => f.predict(x),
            FittedModel::Boosted(b) => b.predict(x),
        }
    }
}

/// Session-level train/test split: unique session ids (first-appearance
/// order) are shuffled and `round(test_fraction * n)` of them become the
/// test set.
pub fn split_rows_by_session(
    rows: &[FeatureRow],
    test_fraction: f64,
    seed: u64,
) -> (Vec<FeatureRow>, Vec<FeatureRow>) {
    let mut ids: Vec<&str> = Vec::new();
    for row in rows {
        if ids.last() != Some(&row.session_id.as_str())
            && !ids.contains(&row.session_id.as_str())
        {
            ids.push(&row.session_id);
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut shuffled = ids.clone();
    shuffled.shuffle(&mut rng);
    let n_test = (test_fraction * shuffled.len() as f64).round() as usize;
    let test_ids: std::collections::BTreeSet<&str> =
        shuffled.into_iter().take(n_test).collect();
    let (test, train): (Vec<FeatureRow>, Vec<FeatureRow>) = rows
        .iter()
        .cloned()
        .partition(|r| test_ids.contains(r.session_id.as_str()));
    (train, test)
}

/// Mean with a 95% normal-approximation confidence interval over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        let half = 1.96 * sd / n.sqrt();
        Summary {
            mean,
            sd,
            ci_lo: mean - half,
            ci_hi: mean + half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub r2: f64,
    pub mse_per_session: f64,
    pub n_test_sessions: usize,
}

/// Multi-trial evaluation report for one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub learner: String,
    pub n_trials: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub r2: Summary,
    pub mse_per_session: Summary,
    pub trials: Vec<TrialRecord>,
}

/// Runs `n_trials` random session-level splits, fitting the learner on the
/// train side and scoring the test side per sample (R²) and per session
/// (MSE-per-session).
pub fn run_trials(
    rows: &[FeatureRow],
    spec: &LearnerSpec,
    n_trials: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<EvalReport> {
    if n_trials < 2 {
        return Err(Error::validation(
            "n_trials must be at least 2 for a confidence interval",
        ));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::validation("train_fraction must lie in (0,1)"));
    }
    let mut trials = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let trial_seed = mix_seed(seed, t as u64);
        let (train, test) = split_rows_by_session(rows, 1.0 - train_fraction, trial_seed);
        if train.is_empty() || test.is_empty() {
            return Err(Error::validation("too few sessions for the requested split"));
        }
        let model = spec.fit(&train, trial_seed)?;
        let preds: Vec<f64> = test.iter().map(|r| model.predict(&r.features)).collect();
        let targets: Vec<f64> = test.iter().map(|r| r.mos).collect();
        let n_test_sessions = {
            let mut ids: Vec<&str> = test.iter().map(|r| r.session_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        };
        trials.push(TrialRecord {
            trial: t,
            seed: trial_seed,
            r2: r2_score(&targets, &preds)?,
            mse_per_session: mse_per_session(&test, &preds)?,
            n_test_sessions,
        });
    }
    let r2_values: Vec<f64> = trials.iter().map(|t| t.r2).collect();
    let mse_values: Vec<f64> = trials.iter().map(|t| t.mse_per_session).collect();
    Ok(EvalReport {
        learner: spec.label().to_string(),
        n_trials,
        train_fraction,
        seed,
        r2: Summary::from_values(&r2_values),
        mse_per_session: Summary::from_values(&mse_values),
        trials,
    })
}
