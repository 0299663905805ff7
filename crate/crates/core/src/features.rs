//! Supervised feature engineering: sessions to per-MOS feature rows.
//!
//! Each MOS sample becomes one row with 14 features: two temporal values
//! (`sess_time`, `block_len`, both in seconds) and, for each of the four
//! KPIs, an instantaneous value (`_c`, latest at or before the MOS
//! timestamp), a block mean (`_b`, over the interval since the previous MOS
//! sample) and a cumulative session mean (`_s`, since session start).
//!
//! Gaps in a KPI series are backward filled: an absent slot takes the next
//! later present value. Row features must stay causal, so when building a
//! row the fill is evaluated on the session prefix up to the row's MOS
//! timestamp only; a slot whose fill source lies beyond that timestamp
//! counts as absent for that row. Rows with any absent feature are dropped
//! and counted rather than imputed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::{Dataset, KpiSample, Session};

/// Number of engineered features per row.
pub const N_FEATURES: usize = 14;

/// Canonical feature order; also the CSV column order between `mos_index`
/// metadata and the `mos` target.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "sess_time", "block_len", "rsrp_c", "rsrp_b", "rsrp_s", "rsrq_c", "rsrq_b", "rsrq_s",
    "snr_c", "snr_b", "snr_s", "prb_c", "prb_b", "prb_s",
];

/// Index of a named feature in [`FEATURE_NAMES`].
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// One supervised example: 14 features, the target MOS, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub session_id: String,
    /// Ordinal of the MOS sample within its session.
    pub mos_index: usize,
    pub features: [f64; N_FEATURES],
    pub mos: f64,
}

impl FeatureRow {
    pub fn sess_time(&self) -> f64 {
        self.features[0]
    }

    pub fn block_len(&self) -> f64 {
        self.features[1]
    }
}

/// Replaces every absent KPI value with the next later present value of the
/// same KPI. Trailing gaps (no later value) stay absent. Timestamps and
/// series length are preserved.
pub fn backward_fill(kpi: &[KpiSample]) -> Vec<KpiSample> {
    let mut out = kpi.to_vec();
    let mut next = KpiSample::default();
    for sample in out.iter_mut().rev() {
        match sample.rsrp {
            Some(v) => next.rsrp = Some(v),
            None => sample.rsrp = next.rsrp,
        }
        match sample.rsrq {
            Some(v) => next.rsrq = Some(v),
            None => sample.rsrq = next.rsrq,
        }
        match sample.snr {
            Some(v) => next.snr = Some(v),
            None => sample.snr = next.snr,
        }
        match sample.prb {
            Some(v) => next.prb = Some(v),
            None => sample.prb = next.prb,
        }
    }
    out
}

/// Arithmetic mean of present values with `t <= upto_t`; `None` when no
/// present value exists by then.
pub fn cumulative_mean(values: &[(f64, Option<f64>)], upto_t: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(t, v) in values {
        if t > upto_t {
            break;
        }
        if let Some(v) = v {
            sum += v;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean of present values with `t` in the half-open block `(t_prev, t_now]`;
/// `None` when the block holds no present value.
pub fn block_mean(values: &[(f64, Option<f64>)], t_prev: f64, t_now: f64) -> Result<Option<f64>> {
    if t_prev >= t_now {
        return Err(Error::validation(format!(
            "block bounds inverted: t_prev {t_prev} >= t_now {t_now}"
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(t, v) in values {
        if t > t_now {
            break;
        }
        if t > t_prev {
            if let Some(v) = v {
                sum += v;
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Output of [`build_rows`]: the rows plus the count of rows dropped for
/// missing features.
#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub rows: Vec<FeatureRow>,
    pub dropped_rows: usize,
}

// Per-KPI view of a session: raw (t, value) pairs plus, for each slot, the
// index of the next present value at or after it.
struct KpiSeries {
    points: Vec<(f64, Option<f64>)>,
    next_present: Vec<Option<usize>>,
}

impl KpiSeries {
    fn new(kpi: &[KpiSample], get: impl Fn(&KpiSample) -> Option<f64>) -> Self {
        let points: Vec<(f64, Option<f64>)> = kpi.iter().map(|k| (k.t, get(k))).collect();
        let mut next_present = vec![None; points.len()];
        let mut next = None;
        for j in (0..points.len()).rev() {
            if points[j].1.is_some() {
                next = Some(j);
            }
            next_present[j] = next;
        }
        KpiSeries {
            points,
            next_present,
        }
    }

    // Backward-filled value of slot `j`, valid for a row at time `cutoff`:
    // absent when the fill source lies after the cutoff.
    fn filled_at(&self, j: usize, cutoff: f64) -> Option<f64> {
        let src = self.next_present[j]?;
        if self.points[src].0 > cutoff {
            return None;
        }
        self.points[src].1
    }

    // Latest present raw value at or before `t`.
    fn instantaneous(&self, t: f64) -> Option<f64> {
        self.points
            .iter()
            .rev()
            .find(|&&(pt, v)| pt <= t && v.is_some())
            .and_then(|&(_, v)| v)
    }

    // Mean of filled values over slots with t in (lo, hi], fill cut at `hi`.
    // A `lo` of -inf makes the block start at session start, inclusive.
    fn filled_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (j, &(t, _)) in self.points.iter().enumerate() {
            if t > hi {
                break;
            }
            if t > lo {
                if let Some(v) = self.filled_at(j, hi) {
                    sum += v;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

fn session_rows(session: &Session, report: &mut BuildReport) {
    let series = [
        KpiSeries::new(&session.kpi, |k| k.rsrp),
        KpiSeries::new(&session.kpi, |k| k.rsrq),
        KpiSeries::new(&session.kpi, |k| k.snr),
        KpiSeries::new(&session.kpi, |k| k.prb),
    ];

    for (i, m) in session.mos.iter().enumerate() {
        let sess_time = m.t;
        let block_start = if i == 0 {
            // First block spans from session start, inclusive of t = 0.
            f64::NEG_INFINITY
        } else {
            session.mos[i - 1].t
        };
        let block_len = if i == 0 {
            sess_time
        } else {
            sess_time - session.mos[i - 1].t
        };

        let mut features = [0.0; N_FEATURES];
        features[0] = sess_time;
        features[1] = block_len;
        let mut complete = true;
        for (k, s) in series.iter().enumerate() {
            let c = s.instantaneous(m.t);
            let b = s.filled_mean(block_start, m.t);
            let cum = s.filled_mean(f64::NEG_INFINITY, m.t);
            match (c, b, cum) {
                (Some(c), Some(b), Some(cum)) => {
                    features[2 + 3 * k] = c;
                    features[3 + 3 * k] = b;
                    features[4 + 3 * k] = cum;
                }
                _ => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            report.rows.push(FeatureRow {
                session_id: session.id.clone(),
                mos_index: i,
                features,
                mos: m.mos,
            });
        } else {
            report.dropped_rows += 1;
        }
    }
}

/// Builds one row per MOS sample per session. Deterministic and independent
/// per session; rows never read measurements past their MOS timestamp.
pub fn build_rows(d: &Dataset) -> BuildReport {
    let mut report = BuildReport::default();
    for session in &d.sessions {
        session_rows(session, &mut report);
    }
    report
}

/// Pearson correlation matrix over the 14 features plus the MOS target.
#[derive(Debug, Clone)]
pub struct PearsonMatrix {
    /// Labels of the retained (non-constant) columns.
    pub labels: Vec<String>,
    /// Labels of constant columns, excluded from the matrix.
    pub excluded: Vec<String>,
    /// Square correlation matrix over `labels`.
    pub matrix: Vec<Vec<f64>>,
}

/// Pearson correlation of two equal-length slices.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Correlation matrix over features and MOS. Constant columns are reported
/// in `excluded` and left out; entries lie in [-1, 1] with a unit diagonal.
pub fn pearson_matrix(rows: &[FeatureRow]) -> Result<PearsonMatrix> {
    if rows.len() < 2 {
        return Err(Error::validation("pearson matrix needs at least 2 rows"));
    }
    let mut columns: Vec<(String, Vec<f64>)> = Vec::with_capacity(N_FEATURES + 1);
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        columns.push((
            name.to_string(),
            rows.iter().map(|r| r.features[i]).collect(),
        ));
    }
    columns.push(("mos".to_string(), rows.iter().map(|r| r.mos).collect()));

    let mut labels = Vec::new();
    let mut excluded = Vec::new();
    let mut kept: Vec<&Vec<f64>> = Vec::new();
    for (name, col) in &columns {
        let constant = col.iter().all(|v| *v == col[0]);
        if constant {
            excluded.push(name.clone());
        } else {
            labels.push(name.clone());
            kept.push(col);
        }
    }

    let k = kept.len();
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..k {
        matrix[i][i] = 1.0;
        for j in (i + 1)..k {
            let r = pearson(kept[i], kept[j]).clamp(-1.0, 1.0);
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    Ok(PearsonMatrix {
        labels,
        excluded,
        matrix,
    })
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes rows in the fixed CSV column order.
pub fn write_feature_csv(rows: &[FeatureRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "session_id,mos_index,{},mos", FEATURE_NAMES.join(",")).map_err(io_err)?;
    for row in rows {
        let feats: Vec<String> = row.features.iter().map(|v| fmt6(*v)).collect();
        writeln!(
            w,
            "{},{},{},{}",
            row.session_id,
            row.mos_index,
            feats.join(","),
            fmt6(row.mos)
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads rows written by [`write_feature_csv`].
pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let expected = format!("session_id,mos_index,{},mos", FEATURE_NAMES.join(","));
    let header = reader
        .headers()
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != expected {
        return Err(Error::validation(format!(
            "{}: unexpected feature csv header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::validation(format!("line {}: {e}", i + 2)))?;
        let get = |j: usize| -> Result<f64> {
            record
                .get(j)
                .ok_or_else(|| Error::validation(format!("line {}: short record", i + 2)))?
                .parse::<f64>()
                .map_err(|e| Error::validation(format!("line {}: {e}", i + 2)))
        };
        let mut features = [0.0; N_FEATURES];
        for (k, f) in features.iter_mut().enumerate() {
            *f = get(2 + k)?;
        }
        rows.push(FeatureRow {
            session_id: record.get(0).unwrap_or("").to_string(),
            mos_index: get(1)? as usize,
            features,
            mos: get(2 + N_FEATURES)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::MosSample;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn snr_only(values: &[(f64, Option<f64>)]) -> Vec<KpiSample> {
        values
            .iter()
            .map(|&(t, snr)| KpiSample {
                t,
                snr,
                ..KpiSample::default()
            })
            .collect()
    }

    // Reference implementation used as the fill oracle: a plain reverse scan
    // carrying the last seen present value.
    fn backward_fill_reference(series: &[Option<f64>]) -> Vec<Option<f64>> {
        let mut out = series.to_vec();
        let mut carry = None;
        for v in out.iter_mut().rev() {
            match v {
                Some(x) => carry = Some(*x),
                None => *v = carry,
            }
        }
        out
    }

    #[test]
    fn backward_fill_fills_from_later_values() {
        let kpi = snr_only(&[(0.0, None), (1.0, Some(5.0)), (2.0, None), (3.0, Some(7.0))]);
        let filled = backward_fill(&kpi);
        let snr: Vec<_> = filled.iter().map(|k| k.snr).collect();
        assert_eq!(snr, vec![Some(5.0), Some(5.0), Some(7.0), Some(7.0)]);
    }

    #[test]
    fn backward_fill_is_identity_on_full_series() {
        let kpi = snr_only(&[(0.0, Some(1.0)), (1.0, Some(2.0))]);
        assert_eq!(backward_fill(&kpi), kpi);
    }

    #[test]
    fn backward_fill_preserves_trailing_gap() {
        let kpi = snr_only(&[(0.0, Some(3.0)), (1.0, None), (2.0, None)]);
        let filled = backward_fill(&kpi);
        let snr: Vec<_> = filled.iter().map(|k| k.snr).collect();
        assert_eq!(snr, backward_fill_reference(&[Some(3.0), None, None]));
        assert_eq!(snr, vec![Some(3.0), None, None]);
    }

    proptest! {
        #[test]
        fn prop_backward_fill_matches_reference(
            series in proptest::collection::vec(proptest::option::of(-10.0f64..10.0), 0..40)
        ) {
            let kpi = snr_only(
                &series.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect::<Vec<_>>(),
            );
            let got: Vec<_> = backward_fill(&kpi).iter().map(|k| k.snr).collect();
            prop_assert_eq!(got, backward_fill_reference(&series));
        }
    }

    #[test]
    fn cumulative_mean_basic_cases() {
        let vals = [(1.0, Some(2.0)), (2.0, Some(4.0)), (3.0, Some(6.0))];
        assert_eq!(cumulative_mean(&vals, 3.0), Some(4.0));
        assert_eq!(cumulative_mean(&[(1.0, Some(7.0))], 1.0), Some(7.0));
        assert_eq!(cumulative_mean(&[(1.0, None)], 1.0), None);
    }

    #[test]
    fn cumulative_mean_after_fill_matches_hand_accumulator() {
        // (1@1, ?@2, 5@3) backward filled is (1, 5, 5); mean by t=3 is 11/3.
        let kpi = snr_only(&[(1.0, Some(1.0)), (2.0, None), (3.0, Some(5.0))]);
        let filled: Vec<(f64, Option<f64>)> =
            backward_fill(&kpi).iter().map(|k| (k.t, k.snr)).collect();
        let got = cumulative_mean(&filled, 3.0).unwrap();
        assert!((got - 11.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn block_mean_enumerate_and_average_oracle() {
        // Values 1..10 at t = 1..10; block (5, 8] holds {6, 7, 8}.
        let vals: Vec<(f64, Option<f64>)> =
            (1..=10).map(|i| (i as f64, Some(i as f64))).collect();
        let expected = (6.0 + 7.0 + 8.0) / 3.0;
        assert_eq!(block_mean(&vals, 5.0, 8.0).unwrap(), Some(expected));
    }

    #[test]
    fn block_mean_single_and_empty_blocks() {
        let vals = [(1.0, Some(2.0)), (5.0, Some(9.0))];
        assert_eq!(block_mean(&vals, 3.0, 6.0).unwrap(), Some(9.0));
        assert_eq!(block_mean(&vals, 1.0, 4.0).unwrap(), None);
        assert!(block_mean(&vals, 4.0, 4.0).is_err());
    }

    fn full_session(id: &str, n_kpi: usize, mos_at: &[f64]) -> Session {
        Session {
            id: id.into(),
            kpi: (0..n_kpi)
                .map(|i| KpiSample {
                    t: i as f64,
                    rsrp: Some(-90.0 - i as f64 * 0.1),
                    rsrq: Some(-10.0),
                    snr: Some(5.0 + i as f64 * 0.01),
                    prb: Some(50.0),
                })
                .collect(),
            mos: mos_at
                .iter()
                .map(|&t| MosSample {
                    t,
                    mos: 3.0 + t / 60.0,
                })
                .collect(),
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn build_rows_emits_one_row_per_mos_with_14_features() {
        let mos_at: Vec<f64> = (1..=15).map(|i| i as f64 * 4.0).collect();
        let d = Dataset {
            sessions: vec![full_session("a", 60, &mos_at)],
            provenance: String::new(),
        };
        let report = build_rows(&d);
        assert_eq!(report.rows.len(), 15);
        assert_eq!(report.dropped_rows, 0);
        for row in &report.rows[1..] {
            assert!(row.sess_time() >= row.block_len());
            assert!(row.block_len() > 0.0);
        }
    }

    #[test]
    fn first_row_block_spans_session_start() {
        // KPIs at t = 1..=5, first MOS at t = 5: block and session aggregates
        // coincide and sess_time = block_len = 5.
        let session = Session {
            id: "a".into(),
            kpi: (1..=5)
                .map(|i| KpiSample {
                    t: i as f64,
                    rsrp: Some(-90.0),
                    rsrq: Some(-10.0),
                    snr: Some(i as f64),
                    prb: Some(10.0),
                })
                .collect(),
            mos: vec![MosSample { t: 5.0, mos: 4.0 }],
            meta: BTreeMap::new(),
        };
        let d = Dataset {
            sessions: vec![session],
            provenance: String::new(),
        };
        let report = build_rows(&d);
        let row = &report.rows[0];
        assert_eq!(row.sess_time(), 5.0);
        assert_eq!(row.block_len(), 5.0);
        for k in 0..4 {
            assert_eq!(row.features[3 + 3 * k], row.features[4 + 3 * k], "kpi {k}");
        }
        assert_eq!(row.features[10], 3.0); // snr_s = mean(1..=5)
    }

    #[test]
    fn sessions_without_snr_drop_all_rows() {
        let mut session = full_session("a", 30, &[5.0, 10.0, 15.0]);
        for k in &mut session.kpi {
            k.snr = None;
        }
        let d = Dataset {
            sessions: vec![session],
            provenance: String::new(),
        };
        let report = build_rows(&d);
        assert_eq!(report.rows.len(), 0);
        assert_eq!(report.dropped_rows, 3);
    }

    #[test]
    fn rows_ignore_measurements_after_their_mos_timestamp() {
        // Perturbing samples later than a row's MOS timestamp must not
        // change that row, even where backward fill would reach forward.
        let base = Session {
            id: "a".into(),
            kpi: vec![
                KpiSample {
                    t: 0.0,
                    rsrp: Some(-90.0),
                    rsrq: Some(-10.0),
                    snr: Some(4.0),
                    prb: Some(50.0),
                },
                KpiSample {
                    t: 1.0,
                    rsrp: Some(-90.0),
                    rsrq: Some(-10.0),
                    snr: None, // fill source is at t = 3, after the first MOS
                    prb: Some(50.0),
                },
                KpiSample {
                    t: 3.0,
                    rsrp: Some(-91.0),
                    rsrq: Some(-10.5),
                    snr: Some(8.0),
                    prb: Some(52.0),
                },
                KpiSample {
                    t: 4.0,
                    rsrp: Some(-92.0),
                    rsrq: Some(-11.0),
                    snr: Some(9.0),
                    prb: Some(53.0),
                },
            ],
            mos: vec![
                MosSample { t: 2.0, mos: 4.0 },
                MosSample { t: 4.5, mos: 4.2 },
            ],
            meta: BTreeMap::new(),
        };
        let mut perturbed = base.clone();
        perturbed.kpi[2].snr = Some(-3.0);
        perturbed.kpi[2].rsrp = Some(-120.0);
        perturbed.kpi[3].prb = Some(1.0);

        let rows_base = build_rows(&Dataset {
            sessions: vec![base],
            provenance: String::new(),
        });
        let rows_pert = build_rows(&Dataset {
            sessions: vec![perturbed],
            provenance: String::new(),
        });
        assert_eq!(rows_base.rows[0], rows_pert.rows[0]);
        assert_ne!(rows_base.rows[1], rows_pert.rows[1]);
    }

    #[test]
    fn session_mean_is_a_running_mean() {
        let mos_at: Vec<f64> = (1..=12).map(|i| i as f64 * 4.5).collect();
        let session = full_session("a", 60, &mos_at);
        let d = Dataset {
            sessions: vec![session.clone()],
            provenance: String::new(),
        };
        let report = build_rows(&d);
        let snr_series: Vec<(f64, Option<f64>)> =
            session.kpi.iter().map(|k| (k.t, k.snr)).collect();

        // Final k_s equals the cumulative mean over the full prefix.
        let last = report.rows.last().unwrap();
        let expect = cumulative_mean(&snr_series, last.sess_time()).unwrap();
        assert!((last.features[10] - expect).abs() < 1e-12);

        // Each k_s is a convex combination of the previous value and the
        // mean of the newly included measurements.
        for w in report.rows.windows(2) {
            let prev = w[0].features[10];
            let cur = w[1].features[10];
            let new_mean = block_mean(&snr_series, w[0].sess_time(), w[1].sess_time())
                .unwrap()
                .unwrap();
            let lo = prev.min(new_mean) - 1e-12;
            let hi = prev.max(new_mean) + 1e-12;
            assert!(
                (lo..=hi).contains(&cur),
                "k_s {cur} outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn build_rows_is_permutation_invariant_over_sessions() {
        let s1 = full_session("a", 40, &[4.0, 8.5, 13.0]);
        let s2 = full_session("b", 40, &[5.0, 9.0]);
        let d12 = Dataset {
            sessions: vec![s1.clone(), s2.clone()],
            provenance: String::new(),
        };
        let d21 = Dataset {
            sessions: vec![s2, s1],
            provenance: String::new(),
        };
        let mut r12 = build_rows(&d12).rows;
        let mut r21 = build_rows(&d21).rows;
        let key = |r: &FeatureRow| (r.session_id.clone(), r.mos_index);
        r12.sort_by_key(key);
        r21.sort_by_key(key);
        assert_eq!(r12, r21);
    }

    #[test]
    fn pearson_worked_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg) + 1.0).abs() < 1e-12);
        // Direct covariance/variance evaluation gives 9 / (2 * sqrt(21)).
        let y = [1.0, 2.0, 4.0];
        let expected = 9.0 / (2.0 * 21.0_f64.sqrt());
        assert!((pearson(&x, &y) - expected).abs() < 1e-9);
        assert!((pearson(&x, &y) - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn pearson_matrix_excludes_constant_columns() {
        let rows: Vec<FeatureRow> = (0..10)
            .map(|i| {
                let mut features = [1.0; N_FEATURES];
                features[0] = i as f64; // sess_time varies
                features[10] = (i * i) as f64; // snr_s varies
                FeatureRow {
                    session_id: "a".into(),
                    mos_index: i,
                    features,
                    mos: i as f64 * 0.1 + 1.0,
                }
            })
            .collect();
        let pm = pearson_matrix(&rows).unwrap();
        assert!(pm.excluded.contains(&"block_len".to_string()));
        assert_eq!(pm.labels, vec!["sess_time", "snr_s", "mos"]);
        for (i, row) in pm.matrix.iter().enumerate() {
            assert_eq!(row[i], 1.0);
            for (j, v) in row.iter().enumerate() {
                assert!((-1.0..=1.0).contains(v));
                assert_eq!(pm.matrix[j][i], *v);
            }
        }
        assert!(pearson_matrix(&rows[..1]).is_err());
    }

    #[test]
    fn feature_csv_roundtrip() {
        let d = Dataset {
            sessions: vec![full_session("a", 40, &[4.0, 8.5, 13.0])],
            provenance: String::new(),
        };
        let rows = build_rows(&d).rows;
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_feature_csv(&rows, tmp.path()).unwrap();
        let back = read_feature_csv(tmp.path()).unwrap();
        assert_eq!(rows.len(), back.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.session_id, b.session_id);
            assert_eq!(a.mos_index, b.mos_index);
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
