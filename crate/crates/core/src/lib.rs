//! Virtual drive-test analysis pipeline for adaptive video streaming QoE.
//!
//! The crate turns per-second radio KPI traces (RSRP/RSRQ/SNR/PRB) and
//! sparse MOS estimates of short benchmark video sessions into:
//!
//! - a learned *typical* 15-point MOS trajectory (LSTM autoencoder,
//!   [`pattern`]),
//! - MOS predictions from engineered KPI features (regression trees, random
//!   forest, gradient boosting, [`predictor`]),
//! - unsupervised session-level anomaly flags by comparing predicted
//!   trajectories against the typical pattern ([`detector`]),
//! - exact per-feature attributions, decision paths and root-cause curves
//!   ([`explain`]).
//!
//! Since real drive-test traces are proprietary, [`synth`] provides a
//! calibrated session generator that stands in for them; [`trace`] defines
//! the canonical data model and CSV interchange format, and [`pipeline`]
//! wires everything into reproducible, manifest-tracked CLI stages.

pub mod detector;
pub mod error;
pub mod explain;
pub mod features;
pub mod pattern;
pub mod pipeline;
pub mod predictor;
pub mod synth;
pub mod trace;

pub use error::{Error, ErrorClass, Result};

/// Deterministic 64-bit mixer used to derive sub-seeds (per session, per
/// tree, per trial) from a root seed, so independent work items get
/// decorrelated, order-independent RNG streams.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
