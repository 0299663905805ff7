//! Calibrated synthetic session generator.
//!
//! Stands in for proprietary drive-test data: per-second SNR follows a
//! first-order autoregressive process around a scenario mean (anomalous
//! sessions fade from the normal mean to a deep-fade mean at a random onset
//! between 10 and 14 s), the remaining KPIs are affine functions of SNR plus
//! independent noise, and MOS comes from a small adaptive-streaming player
//! model: a ladder of bitrate rungs, a playback buffer that fills at
//! `throughput / bitrate` (capped) and drains in real time, rung switching
//! gated on buffer health and affordability, and a stall penalty when the
//! buffer cannot cover playback.
//!
//! The player is monotone by construction: raising the SNR (or PRB) series
//! pointwise never lowers any MOS sample. This is why the stall state has no
//! exit hysteresis and why an unaffordable rung is dropped immediately
//! rather than waiting for the buffer to drain.
//!
//! Everything is a pure function of the config, including its seed; each
//! session derives its own RNG stream from `(seed, session index)`.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mix_seed;
use crate::trace::{Dataset, KpiSample, MosSample, Session, MOS_RANGE, SNR_RANGE};

/// First-order autoregressive SNR process parameters (dB).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrProcess {
    pub mean_normal_db: f64,
    pub mean_anomalous_db: f64,
    pub ar_coefficient: f64,
    pub noise_std_db: f64,
}

impl Default for SnrProcess {
    fn default() -> Self {
        SnrProcess {
            mean_normal_db: 3.9,
            mean_anomalous_db: -3.8,
            ar_coefficient: 0.6,
            noise_std_db: 0.8,
        }
    }
}

/// Affine KPI maps: each KPI is `intercept + slope * snr + N(0, noise_std)`,
/// clamped to its valid range. PRB is additionally rounded to a count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiMaps {
    pub rsrp_slope: f64,
    pub rsrp_intercept: f64,
    pub rsrp_noise_std: f64,
    pub rsrq_slope: f64,
    pub rsrq_intercept: f64,
    pub rsrq_noise_std: f64,
    pub prb_slope: f64,
    pub prb_intercept: f64,
    pub prb_noise_std: f64,
    pub prb_max: f64,
}

impl Default for KpiMaps {
    fn default() -> Self {
        KpiMaps {
            rsrp_slope: 2.0,
            rsrp_intercept: -95.0,
            rsrp_noise_std: 3.0,
            rsrq_slope: 0.35,
            rsrq_intercept: -10.5,
            rsrq_noise_std: 0.8,
            prb_slope: 5.0,
            prb_intercept: 58.0,
            prb_noise_std: 6.0,
            prb_max: 100.0,
        }
    }
}

impl KpiMaps {
    /// PRB count for a given SNR without the noise term.
    pub fn nominal_prb(&self, snr_db: f64) -> f64 {
        (self.prb_intercept + self.prb_slope * snr_db)
            .round()
            .clamp(0.0, self.prb_max)
    }
}

/// One ABR ladder rung: segment bitrate and the quality score delivered
/// while playing it without stalls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderRung {
    pub bitrate_kbps: f64,
    pub quality: f64,
}

/// Player model parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerConfig {
    /// A rung is affordable when `bitrate <= safety_factor * throughput`.
    pub safety_factor: f64,
    /// Buffer level above which the player steps one rung up.
    pub buffer_up_s: f64,
    /// Buffer level below which the player steps one rung down.
    pub buffer_down_s: f64,
    /// Maximum buffered media, seconds.
    pub buffer_cap_s: f64,
    /// MOS reduction applied in proportion to the stalled fraction of a second.
    pub stall_penalty: f64,
    /// Throughput scale: `thr_kbps = scale * prb * log2(1 + snr_linear)`.
    pub throughput_scale_kbps: f64,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        PlayerConfig {
            safety_factor: 0.5,
            buffer_up_s: 8.0,
            buffer_down_s: 3.0,
            buffer_cap_s: 30.0,
            stall_penalty: 2.5,
            throughput_scale_kbps: 175.0,
        }
    }
}

fn default_ladder() -> Vec<LadderRung> {
    [
        (300.0, 1.9),
        (800.0, 2.7),
        (1800.0, 3.5),
        (2600.0, 4.2),
        (3500.0, 4.45),
    ]
    .iter()
    .map(|&(bitrate_kbps, quality)| LadderRung {
        bitrate_kbps,
        quality,
    })
    .collect()
}

/// Generator configuration. Defaults reproduce the calibration targets:
/// normal sessions end with a cumulative SNR in [3.3, 4.5] dB, anomalous
/// ones in [-4, -0.5] dB, and the anomalous prevalence matches 28/1199.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenConfig {
    pub n_sessions: usize,
    /// Fraction of sessions tagged (and generated) anomalous.
    pub anomaly_fraction: f64,
    pub duration_s: usize,
    pub kpi_period_s: f64,
    /// MOS sampling period is drawn uniformly from this interval per sample.
    pub mos_period_s: (f64, f64),
    pub seed: u64,
    pub snr: SnrProcess,
    /// Anomalous fade onset drawn uniformly from this window, seconds.
    pub anomaly_onset_s: (f64, f64),
    pub kpi_maps: KpiMaps,
    pub player: PlayerConfig,
    pub abr_ladder: Vec<LadderRung>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_sessions: 1199,
            anomaly_fraction: 0.0234,
            duration_s: 60,
            kpi_period_s: 1.0,
            mos_period_s: (4.0, 5.0),
            seed: 7,
            snr: SnrProcess::default(),
            anomaly_onset_s: (10.0, 14.0),
            kpi_maps: KpiMaps::default(),
            player: PlayerConfig::default(),
            abr_ladder: default_ladder(),
        }
    }
}

impl GenConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_sessions == 0 {
            return Err(Error::validation("n_sessions must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return Err(Error::validation("anomaly_fraction must lie in [0,1]"));
        }
        if self.duration_s == 0 {
            return Err(Error::validation("duration_s must be positive"));
        }
        if self.kpi_period_s != 1.0 {
            return Err(Error::validation(
                "kpi_period_s must be 1: the player model steps at 1 s granularity",
            ));
        }
        if !(self.mos_period_s.0 > 0.0 && self.mos_period_s.1 >= self.mos_period_s.0) {
            return Err(Error::validation("mos_period_s interval must be positive"));
        }
        if self.abr_ladder.is_empty() {
            return Err(Error::validation("abr_ladder must have at least one rung"));
        }
        if self
            .abr_ladder
            .windows(2)
            .any(|w| w[1].bitrate_kbps <= w[0].bitrate_kbps || w[1].quality < w[0].quality)
        {
            return Err(Error::validation(
                "abr_ladder must have strictly increasing bitrates and non-decreasing quality",
            ));
        }
        if self
            .abr_ladder
            .iter()
            .any(|r| r.quality < MOS_RANGE.0 || r.quality > MOS_RANGE.1)
        {
            return Err(Error::validation("ladder quality scores must lie in [1,5]"));
        }
        if !(self.player.safety_factor > 0.0 && self.player.safety_factor <= 1.0) {
            return Err(Error::validation("safety_factor must lie in (0,1]"));
        }
        if self.snr.ar_coefficient.abs() >= 1.0 {
            return Err(Error::validation("|ar_coefficient| must be below 1"));
        }
        Ok(())
    }

    /// Number of sessions that will be tagged anomalous.
    pub fn n_anomalous(&self) -> usize {
        (self.anomaly_fraction * self.n_sessions as f64).round() as usize
    }
}

/// Player state after a simulated second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerState {
    /// Seconds of queued media; never negative.
    pub buffer_s: f64,
    /// Current ladder rung index.
    pub current_rung: usize,
    /// True when playback was interrupted during the last second; implies
    /// an empty buffer.
    pub stalled: bool,
    /// True once a full second has played back at real-time rate.
    pub startup_done: bool,
}

/// Per-second playback trace produced by the player model.
#[derive(Debug, Clone)]
pub struct PlayerTrace {
    /// MOS value for each simulated second, in [1,5].
    pub mos: Vec<f64>,
    pub states: Vec<PlayerState>,
}

/// Throughput map: monotone in both SNR and PRB.
pub fn throughput_kbps(snr_db: f64, prb: f64, player: &PlayerConfig) -> f64 {
    let snr_linear = 10f64.powf(snr_db / 10.0);
    player.throughput_scale_kbps * prb.max(0.0) * (1.0 + snr_linear).log2()
}

/// Steps the buffer/rung model over per-second SNR and PRB series.
///
/// Each second: the highest rung affordable at the current throughput is the
/// target; the player drops immediately to the target when above it, steps
/// one rung up when below it with a buffer above `buffer_up_s`, and steps
/// one down when the buffer sinks below `buffer_down_s`. The buffer gains
/// `min(throughput/bitrate, 1/safety_factor)` seconds of media and loses the
/// fraction of the second that actually played. MOS is the rung quality
/// minus `stall_penalty` times the stalled fraction, clamped to [1,5].
pub fn simulate_player(snr_db: &[f64], prb: &[f64], config: &GenConfig) -> Result<PlayerTrace> {
    if snr_db.is_empty() {
        return Err(Error::validation("empty input series"));
    }
    if snr_db.len() != prb.len() {
        return Err(Error::validation(format!(
            "snr series length {} != prb series length {}",
            snr_db.len(),
            prb.len()
        )));
    }
    config.check()?;

    let ladder = &config.abr_ladder;
    let p = &config.player;
    let fill_cap = 1.0 / p.safety_factor;

    let mut state = PlayerState {
        buffer_s: 0.0,
        current_rung: 0,
        stalled: false,
        startup_done: false,
    };
    let mut mos = Vec::with_capacity(snr_db.len());
    let mut states = Vec::with_capacity(snr_db.len());

    for (&snr, &prb_v) in snr_db.iter().zip(prb) {
        let thr = throughput_kbps(snr, prb_v, p);
        let target = ladder
            .iter()
            .rposition(|r| r.bitrate_kbps <= p.safety_factor * thr);

        let mut rung = state.current_rung;
        match target {
            Some(t) if t < rung => rung = t,
            Some(t) if t > rung && state.buffer_s > p.buffer_up_s => rung += 1,
            Some(_) => {}
            None => rung = 0,
        }
        if state.buffer_s < p.buffer_down_s {
            rung = rung.saturating_sub(1);
        }

        let fill = if thr > 0.0 {
            (thr / ladder[rung].bitrate_kbps).min(fill_cap)
        } else {
            0.0
        };
        let available = state.buffer_s + fill;
        let played = available.min(1.0);
        let stall_frac = 1.0 - played;

        state = PlayerState {
            buffer_s: (available - played).min(p.buffer_cap_s),
            current_rung: rung,
            stalled: stall_frac > 0.0,
            startup_done: state.startup_done || played >= 1.0,
        };
        mos.push(
            (ladder[rung].quality - p.stall_penalty * stall_frac).clamp(MOS_RANGE.0, MOS_RANGE.1),
        );
        states.push(state);
    }
    Ok(PlayerTrace { mos, states })
}

/// Produces MOS samples at the given timestamps from the player model.
///
/// `sample_times` are seconds since session start, strictly increasing; each
/// sample takes the MOS of the second it falls into.
pub fn mos_oracle(
    snr_db: &[f64],
    prb: &[f64],
    config: &GenConfig,
    sample_times: &[f64],
) -> Result<Vec<MosSample>> {
    let trace = simulate_player(snr_db, prb, config)?;
    Ok(sample_times
        .iter()
        .map(|&t| {
            let idx = (t.floor() as usize).min(trace.mos.len() - 1);
            MosSample {
                t,
                mos: trace.mos[idx],
            }
        })
        .collect())
}

/// Generation output: the dataset plus non-fatal warnings.
#[derive(Debug, Clone)]
pub struct GenReport {
    pub dataset: Dataset,
    pub n_anomalous: usize,
    pub warnings: Vec<String>,
}

/// Generates a dataset. Deterministic for a given config (seed included);
/// sessions are independent streams so generation order does not matter.
pub fn generate(config: &GenConfig) -> Result<GenReport> {
    config.check()?;
    let mut warnings = Vec::new();

    let n_anom = config.n_anomalous();
    if config.anomaly_fraction > 0.0 && n_anom == 0 {
        warnings.push(format!(
            "anomaly_fraction {} with {} sessions rounds to zero anomalous sessions",
            config.anomaly_fraction, config.n_sessions
        ));
    }

    // Scenario assignment gets its own stream so per-session streams stay
    // independent of the anomaly count.
    let mut assign_rng = ChaCha12Rng::seed_from_u64(mix_seed(config.seed, u64::MAX));
    let mut order: Vec<usize> = (0..config.n_sessions).collect();
    order.shuffle(&mut assign_rng);
    let anomalous: BTreeSet<usize> = order.into_iter().take(n_anom).collect();

    let sessions = (0..config.n_sessions)
        .map(|i| gen_session(config, i, anomalous.contains(&i)))
        .collect::<Result<Vec<_>>>()?;

    let dataset = Dataset {
        sessions,
        provenance: format!("synthetic seed={} n={}", config.seed, config.n_sessions),
    };
    Ok(GenReport {
        dataset,
        n_anomalous: n_anom,
        warnings,
    })
}

fn gen_session(config: &GenConfig, index: usize, is_anomalous: bool) -> Result<Session> {
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(config.seed, index as u64));
    let n = config.duration_s;
    let snr_p = &config.snr;
    let maps = &config.kpi_maps;

    let onset = if is_anomalous {
        rng.random_range(config.anomaly_onset_s.0..=config.anomaly_onset_s.1)
    } else {
        f64::INFINITY
    };
    let mean_at = |t: f64| {
        if t >= onset {
            snr_p.mean_anomalous_db
        } else {
            snr_p.mean_normal_db
        }
    };

    // AR(1) around the scenario mean, started from the stationary law.
    let innov = Normal::new(0.0, snr_p.noise_std_db)
        .map_err(|e| Error::validation(format!("snr noise_std: {e}")))?;
    let stationary_sd = snr_p.noise_std_db / (1.0 - snr_p.ar_coefficient.powi(2)).sqrt();
    let init = Normal::new(0.0, stationary_sd).expect("positive sd");
    let mut snr = Vec::with_capacity(n);
    let mut x = mean_at(0.0) + init.sample(&mut rng);
    snr.push(x.clamp(SNR_RANGE.0, SNR_RANGE.1));
    for k in 1..n {
        let t = k as f64;
        x = mean_at(t) + snr_p.ar_coefficient * (x - mean_at(t - 1.0)) + innov.sample(&mut rng);
        snr.push(x.clamp(SNR_RANGE.0, SNR_RANGE.1));
    }

    let rsrp_noise = Normal::new(0.0, maps.rsrp_noise_std).expect("positive sd");
    let rsrq_noise = Normal::new(0.0, maps.rsrq_noise_std).expect("positive sd");
    let prb_noise = Normal::new(0.0, maps.prb_noise_std).expect("positive sd");
    let rsrp: Vec<f64> = snr
        .iter()
        .map(|&s| {
            (maps.rsrp_intercept + maps.rsrp_slope * s + rsrp_noise.sample(&mut rng))
                .clamp(crate::trace::RSRP_RANGE.0, crate::trace::RSRP_RANGE.1)
        })
        .collect();
    let rsrq: Vec<f64> = snr
        .iter()
        .map(|&s| {
            (maps.rsrq_intercept + maps.rsrq_slope * s + rsrq_noise.sample(&mut rng))
                .clamp(crate::trace::RSRQ_RANGE.0, crate::trace::RSRQ_RANGE.1)
        })
        .collect();
    let prb: Vec<f64> = snr
        .iter()
        .map(|&s| {
            (maps.prb_intercept + maps.prb_slope * s + prb_noise.sample(&mut rng))
                .round()
                .clamp(0.0, maps.prb_max)
        })
        .collect();

    let mut mos_times = Vec::new();
    let mut t = rng.random_range(config.mos_period_s.0..=config.mos_period_s.1);
    while t <= config.duration_s as f64 {
        mos_times.push(t);
        t += rng.random_range(config.mos_period_s.0..=config.mos_period_s.1);
    }

    let mos = mos_oracle(&snr, &prb, config, &mos_times)?;

    let kpi = (0..n)
        .map(|k| KpiSample {
            t: k as f64 * config.kpi_period_s,
            rsrp: Some(rsrp[k]),
            rsrq: Some(rsrq[k]),
            snr: Some(snr[k]),
            prb: Some(prb[k]),
        })
        .collect();

    let mut meta = std::collections::BTreeMap::new();
    meta.insert(
        "scenario".to_string(),
        if is_anomalous { "anomalous" } else { "normal" }.to_string(),
    );

    Ok(Session {
        id: format!("s{index:05}"),
        kpi,
        mos,
        meta,
    })
}

/// Adds clamped Gaussian observation noise to every MOS sample. Used by
/// evaluation harnesses to model measurement-tool inaccuracy; the generator
/// itself emits noise-free MOS.
pub fn add_observation_noise(dataset: &Dataset, sigma: f64, seed: u64) -> Dataset {
    let mut out = dataset.clone();
    for (i, session) in out.sessions.iter_mut().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, i as u64));
        let noise = Normal::new(0.0, sigma).expect("positive sd");
        for m in &mut session.mos {
            m.mos = (m.mos + noise.sample(&mut rng)).clamp(MOS_RANGE.0, MOS_RANGE.1);
        }
    }
    out.provenance = format!("{} +noise(sigma={sigma},seed={seed})", dataset.provenance);
    out
}

/// Cumulative mean of a session's SNR samples up to (strictly before) time
/// `t_end`. Returns `None` when no SNR sample exists in the window.
pub fn cumulative_snr(session: &Session, t_end: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in &session.kpi {
        if k.t < t_end {
            if let Some(s) = k.snr {
                sum += s;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_config(n: usize, frac: f64, seed: u64) -> GenConfig {
        GenConfig {
            n_sessions: n,
            anomaly_fraction: frac,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = small_config(12, 0.25, 99);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn anomaly_count_matches_rounded_fraction() {
        let cfg = small_config(40, 0.0234, 3);
        let report = generate(&cfg).unwrap();
        let tagged = report
            .dataset
            .sessions
            .iter()
            .filter(|s| s.meta.get("scenario").map(String::as_str) == Some("anomalous"))
            .count();
        assert_eq!(tagged, 1); // round(0.0234 * 40) = 1
        assert_eq!(report.n_anomalous, 1);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn tiny_fraction_warns_and_produces_zero_anomalies() {
        let cfg = small_config(10, 0.0234, 3);
        let report = generate(&cfg).unwrap();
        assert_eq!(report.n_anomalous, 0);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("zero anomalous"));
    }

    #[test]
    fn zero_sessions_is_an_error() {
        let cfg = small_config(0, 0.0, 1);
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn normal_sessions_hit_calibration_bands() {
        let cfg = small_config(80, 0.0, 11);
        let report = generate(&cfg).unwrap();
        let mut inside = 0usize;
        let mut late_mos_sum = 0.0;
        let mut late_mos_n = 0usize;
        for s in &report.dataset.sessions {
            let cum = cumulative_snr(s, 60.0).unwrap();
            if (3.3..=4.5).contains(&cum) {
                inside += 1;
            }
            for m in &s.mos {
                if m.t >= 20.0 {
                    late_mos_sum += m.mos;
                    late_mos_n += 1;
                }
            }
        }
        let frac = inside as f64 / report.dataset.sessions.len() as f64;
        assert!(frac >= 0.9, "only {frac:.2} of normal sessions in band");
        let mean_late = late_mos_sum / late_mos_n as f64;
        assert!(mean_late > 4.1, "late MOS mean {mean_late:.3}");
    }

    #[test]
    fn anomalous_sessions_fade_and_dip() {
        let cfg = GenConfig {
            n_sessions: 40,
            anomaly_fraction: 1.0,
            seed: 17,
            ..GenConfig::default()
        };
        let report = generate(&cfg).unwrap();
        let mut inside = 0usize;
        for s in &report.dataset.sessions {
            let cum = cumulative_snr(s, 60.0).unwrap();
            if (-4.0..=-0.5).contains(&cum) {
                inside += 1;
            }
            let min_mos = s.mos.iter().map(|m| m.mos).fold(f64::INFINITY, f64::min);
            assert!(min_mos < 3.0, "session {} never dips below 3", s.id);
        }
        let frac = inside as f64 / 40.0;
        assert!(frac >= 0.9, "only {frac:.2} of anomalous sessions in band");
    }

    #[test]
    fn every_generated_session_is_model_eligible_and_valid() {
        let cfg = small_config(50, 0.1, 23);
        let report = generate(&cfg).unwrap();
        report.dataset.check(60.0).unwrap();
        for s in &report.dataset.sessions {
            assert!(s.is_model_eligible(), "{} has {} mos", s.id, s.mos.len());
            assert!(s.mos.len() <= 15);
            assert_eq!(s.kpi.len(), 60);
        }
    }

    #[test]
    fn average_normal_trajectory_ramps_up() {
        // Resample each session's MOS to 15 points by index and average.
        let cfg = small_config(80, 0.0, 5);
        let report = generate(&cfg).unwrap();
        let mut acc = [0.0f64; 15];
        let mut cnt = [0usize; 15];
        for s in &report.dataset.sessions {
            for (i, m) in s.mos.iter().take(15).enumerate() {
                acc[i] += m.mos;
                cnt[i] += 1;
            }
        }
        let avg: Vec<f64> = acc
            .iter()
            .zip(&cnt)
            .map(|(a, &c)| if c > 0 { a / c as f64 } else { f64::NAN })
            .collect();
        for i in 3..14 {
            if cnt[i + 1] == 0 {
                break;
            }
            assert!(
                avg[i + 1] >= avg[i] - 1e-9,
                "avg trajectory decreases at {i}: {avg:?}"
            );
        }
        for (i, v) in avg.iter().enumerate().skip(5) {
            if cnt[i] > 0 {
                assert!(*v > 4.0, "avg[{i}] = {v}");
            }
        }
    }

    #[test]
    fn oracle_constant_high_snr_reaches_top_rung_without_stalls() {
        let cfg = GenConfig::default();
        let snr = vec![30.0; 60];
        let prb = vec![cfg.kpi_maps.nominal_prb(30.0); 60];
        let trace = simulate_player(&snr, &prb, &cfg).unwrap();
        assert!(trace.states.iter().all(|s| !s.stalled));
        let top = cfg.abr_ladder.last().unwrap().quality;
        assert_eq!(*trace.mos.last().unwrap(), top);
        // steady state well within 15 s
        assert!(trace.mos[15..].iter().all(|&m| m == top));
    }

    #[test]
    fn oracle_constant_deep_fade_stalls_and_floors() {
        // Hand recurrence for the defaults: nominal prb at -15 dB is
        // round(58 - 75) clamped to 0, so throughput and fill stay 0, the
        // buffer never covers playback, every second stalls, and MOS is
        // clamp(1.9 - 2.5, 1, 5) = 1.
        let cfg = GenConfig::default();
        let snr = vec![-15.0; 60];
        let prb = vec![cfg.kpi_maps.nominal_prb(-15.0); 60];
        assert_eq!(prb[0], 0.0);
        let trace = simulate_player(&snr, &prb, &cfg).unwrap();
        assert!(trace.states.iter().any(|s| s.stalled));
        let min = trace.mos.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(min <= 2.0);
        assert_eq!(min, 1.0);
    }

    #[test]
    fn oracle_rejects_empty_series() {
        let cfg = GenConfig::default();
        assert!(mos_oracle(&[], &[], &cfg, &[]).is_err());
    }

    #[test]
    fn stalled_state_implies_empty_buffer() {
        let cfg = GenConfig::default();
        let snr: Vec<f64> = (0..60).map(|k| if k < 20 { 10.0 } else { -15.0 }).collect();
        let prb: Vec<f64> = snr.iter().map(|&s| cfg.kpi_maps.nominal_prb(s)).collect();
        let trace = simulate_player(&snr, &prb, &cfg).unwrap();
        for st in &trace.states {
            assert!(st.buffer_s >= 0.0);
            if st.stalled {
                assert_eq!(st.buffer_s, 0.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Raising the SNR series pointwise never lowers any MOS sample.
        #[test]
        fn prop_mos_monotone_in_snr(
            base in proptest::collection::vec(-18.0f64..12.0, 60),
            lift in proptest::collection::vec(0.0f64..10.0, 60),
        ) {
            let cfg = GenConfig::default();
            let prb = vec![50.0; 60];
            let times: Vec<f64> = (1..=12).map(|i| i as f64 * 4.8).collect();
            let lifted: Vec<f64> = base.iter().zip(&lift).map(|(b, l)| b + l).collect();
            let lo = mos_oracle(&base, &prb, &cfg, &times).unwrap();
            let hi = mos_oracle(&lifted, &prb, &cfg, &times).unwrap();
            for (a, b) in hi.iter().zip(&lo) {
                prop_assert!(a.mos >= b.mos - 1e-12,
                    "MOS dropped: {} < {} at t={}", a.mos, b.mos, a.t);
            }
        }
    }
}
