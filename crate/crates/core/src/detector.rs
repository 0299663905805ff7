//! Unsupervised session-level anomaly detection.
//!
//! A session's MOS trajectory (predicted by the regressor, or the measured
//! one) is aligned by MOS index to the 15-point typical pattern and scored
//! with the mean squared deviation. Sessions whose score exceeds a
//! percentile threshold are flagged. "Actual" anomaly labels use the same
//! construction on the measured MOS with a separate threshold, which keeps
//! the whole stack free of ground-truth scenario tags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{TypicalPattern, SEQ_LEN};

/// Minimum number of aligned points for a meaningful session score.
pub const MIN_ALIGNED: usize = 12;

/// Per-session deviation scores against the typical pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    /// MSE of the predicted MOS trajectory against the typical pattern.
    pub predicted_mse: f64,
    /// MSE of the measured MOS trajectory against the typical pattern.
    pub actual_mse: f64,
    /// Number of points compared (at most 15).
    pub aligned_len: usize,
}

/// Mean squared deviation between a MOS series (aligned by index) and the
/// typical pattern, over `min(series.len(), 15)` points.
pub fn session_mse(series: &[f64], pattern: &TypicalPattern) -> Result<f64> {
    let n = series.len().min(SEQ_LEN);
    if n < MIN_ALIGNED {
        return Err(Error::validation(format!(
            "need at least {MIN_ALIGNED} aligned points, got {n}"
        )));
    }
    let sum: f64 = series[..n]
        .iter()
        .zip(&pattern.values[..n])
        .map(|(s, p)| (s - p).powi(2))
        .sum();
    Ok(sum / n as f64)
}

/// Linear-interpolation percentile (the `q*(n-1)` convention) of a score
/// list; `q` in [0,1].
pub fn percentile_threshold(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::validation("percentile of an empty list"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::validation("percentile q must lie in [0,1]"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Flags everything strictly above the threshold.
pub fn label_by_threshold(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

/// Confusion counts with anomalies as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn precision(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    /// Harmonic mean of precision and recall; 0 when TP = 0 with defined
    /// denominators, `None` when precision or recall is undefined.
    pub fn f1(&self) -> Option<f64> {
        let p = self.precision()?;
        let r = self.recall()?;
        if p + r == 0.0 {
            return Some(0.0);
        }
        Some(2.0 * p * r / (p + r))
    }
}

/// Builds confusion counts from aligned (session id, flag) vectors. The two
/// vectors must cover the same session set.
pub fn confusion(
    predicted: &[(String, bool)],
    actual: &[(String, bool)],
) -> Result<Confusion> {
    if predicted.len() != actual.len() {
        return Err(Error::validation("label sets differ in size"));
    }
    let lookup: std::collections::BTreeMap<&str, bool> = actual
        .iter()
        .map(|(id, flag)| (id.as_str(), *flag))
        .collect();
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (id, pred) in predicted {
        let Some(&truth) = lookup.get(id.as_str()) else {
            return Err(Error::validation(format!(
                "session `{id}` missing from the actual label set"
            )));
        };
        match (pred, truth) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// One point of the threshold sweep. Precision and F1 are absent when no
/// session is flagged at this threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub f1: Option<f64>,
    pub flagged: usize,
}

/// Threshold sweep result with the max-F1 operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    pub best_threshold: f64,
    pub best_f1: f64,
}

/// Default sweep grid: one threshold below the minimum score (flagging
/// everything) plus every distinct score, which together realize every
/// achievable flagged set under the strict-greater rule.
pub fn default_grid(scores: &[f64]) -> Vec<f64> {
    let mut grid = scores.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    grid.dedup();
    if let Some(&min) = grid.first() {
        grid.insert(0, min - 1.0);
    }
    grid
}

/// Evaluates precision/recall/F1 across the grid and returns the argmax-F1
/// threshold (lowest threshold on ties). Fails when the actual label set
/// has no positives, since recall is undefined there.
pub fn threshold_sweep(scores: &[f64], actual: &[bool], grid: &[f64]) -> Result<Sweep> {
    if scores.len() != actual.len() {
        return Err(Error::validation("scores and labels differ in length"));
    }
    if scores.is_empty() {
        return Err(Error::validation("empty score list"));
    }
    if !actual.iter().any(|&a| a) {
        return Err(Error::validation(
            "no actual positives: recall (and the F1 sweep) is undefined",
        ));
    }
    if grid.is_empty() {
        return Err(Error::validation("empty threshold grid"));
    }
    let positives = actual.iter().filter(|&&a| a).count();
    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None; // (threshold, f1)
    for &threshold in grid {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &a) in scores.iter().zip(actual) {
            if s > threshold {
                if a {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let flagged = tp + fp;
        let recall = tp as f64 / positives as f64;
        let precision = (flagged > 0).then(|| tp as f64 / flagged as f64);
        let f1 = precision.map(|p| {
            if p + recall == 0.0 {
                0.0
            } else {
                2.0 * p * recall / (p + recall)
            }
        });
        if let Some(f1) = f1 {
            let better = best.map(|(_, bf)| f1 > bf).unwrap_or(true);
            if better {
                best = Some((threshold, f1));
            }
        }
        points.push(SweepPoint {
            threshold,
            precision,
            recall,
            f1,
            flagged,
        });
    }
    let (best_threshold, best_f1) =
        best.ok_or_else(|| Error::validation("no threshold produced a defined F1"))?;
    Ok(Sweep {
        points,
        best_threshold,
        best_f1,
    })
}

/// Full detection report for one evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Detection threshold applied to predicted-MOS scores.
    pub threshold: f64,
    /// Labeling threshold applied to measured-MOS scores.
    pub threshold_actual: f64,
    pub labels: Vec<SessionLabel>,
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub sweep: Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLabel {
    pub session_id: String,
    pub predicted_mse: f64,
    pub actual_mse: f64,
    pub predicted_anomalous: bool,
    pub actual_anomalous: bool,
}

/// Scores sessions, derives both thresholds as percentiles of the respective
/// score distributions, and assembles the report with a full sweep.
///
/// `q_detect` is the detection percentile (0.90 in the reference protocol);
/// `q_actual` calibrates the share of sessions labeled anomalous and is a
/// separate knob because a 90th-percentile rule would pin prevalence at 10%.
pub fn detect(scores: &[SessionScore], q_detect: f64, q_actual: f64) -> Result<DetectionReport> {
    if scores.is_empty() {
        return Err(Error::validation("no session scores"));
    }
    let predicted: Vec<f64> = scores.iter().map(|s| s.predicted_mse).collect();
    let actual: Vec<f64> = scores.iter().map(|s| s.actual_mse).collect();
    let threshold = percentile_threshold(&predicted, q_detect)?;
    let threshold_actual = percentile_threshold(&actual, q_actual)?;
    let pred_flags = label_by_threshold(&predicted, threshold);
    let actual_flags = label_by_threshold(&actual, threshold_actual);

    let labels: Vec<SessionLabel> = scores
        .iter()
        .zip(pred_flags.iter().zip(&actual_flags))
        .map(|(s, (&p, &a))| SessionLabel {
            session_id: s.session_id.clone(),
            predicted_mse: s.predicted_mse,
            actual_mse: s.actual_mse,
            predicted_anomalous: p,
            actual_anomalous: a,
        })
        .collect();

    let pred_pairs: Vec<(String, bool)> = labels
        .iter()
        .map(|l| (l.session_id.clone(), l.predicted_anomalous))
        .collect();
    let actual_pairs: Vec<(String, bool)> = labels
        .iter()
        .map(|l| (l.session_id.clone(), l.actual_anomalous))
        .collect();
    let conf = confusion(&pred_pairs, &actual_pairs)?;
    let sweep = threshold_sweep(&predicted, &actual_flags, &default_grid(&predicted))?;

    Ok(DetectionReport {
        threshold,
        threshold_actual,
        labels,
        confusion: conf,
        precision: conf.precision(),
        recall: conf.recall(),
        f1: conf.f1(),
        sweep,
    })
}
