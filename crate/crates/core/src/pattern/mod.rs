//! Typical-MOS-pattern extraction with an LSTM autoencoder.
//!
//! Per-session MOS trajectories (at most 15 values) pass through a
//! sequence-returning LSTM of width 15, a second LSTM whose final 6-wide
//! state is the bottleneck, a 15-fold repeat of that state, two mirrored
//! decoder LSTMs (widths 6 and 15) and a time-distributed affine head with
//! ReLU. Training minimizes the masked reconstruction MSE with Adam;
//! hyperparameters come from a small grid searched by validation MSE. The
//! typical pattern is the pointwise mean of the reconstructions.
//!
//! Sequences shorter than 15 are padded with their last observed value, but
//! the pad slots are inert: the forward pass derives pad inputs from the
//! last valid value and the loss masks padded steps, so whatever is stored
//! in the pad slots cannot influence training.

pub mod nn;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mix_seed;
use crate::trace::{Session, MOS_RANGE};
use nn::{Adam, AffineLayout, LstmCache, LstmLayout};

/// Input/output sequence length of the autoencoder.
pub const SEQ_LEN: usize = 15;
/// Width of the first encoder LSTM.
pub const ENC_HIDDEN: usize = 15;
/// Width of the bottleneck state.
pub const BOTTLENECK: usize = 6;
/// Minimum MOS samples for a trainable sequence.
pub const MIN_VALID: usize = 12;

/// Fixed-length per-session MOS sequence. `values[valid_len..]` hold the
/// last observed value as padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosSequence {
    pub session_id: String,
    pub values: [f64; SEQ_LEN],
    pub valid_len: usize,
}

impl MosSequence {
    /// Input fed to the network at step `t`: pad steps replay the last
    /// valid value regardless of what the pad slots store.
    #[inline]
    fn input_at(&self, t: usize) -> f64 {
        self.values[t.min(self.valid_len - 1)]
    }
}

/// Extracts the MOS sequence of a model-eligible session: first 15 values,
/// padded with the last observed value when shorter.
pub fn to_sequence(session: &Session) -> Result<MosSequence> {
    let n = session.mos.len();
    if n < MIN_VALID {
        return Err(Error::validation(format!(
            "session {} has {n} MOS samples; need at least {MIN_VALID}",
            session.id
        )));
    }
    let valid_len = n.min(SEQ_LEN);
    let mut values = [0.0; SEQ_LEN];
    for (i, v) in values.iter_mut().enumerate() {
        *v = session.mos[i.min(valid_len - 1)].mos;
    }
    Ok(MosSequence {
        session_id: session.id.clone(),
        values,
        valid_len,
    })
}

/// Session-level split into (train, validation, test).
///
/// `round((1-ratio) * n)` sequences become the test set; the remainder is
/// split again with the same ratio into train and validation.
pub fn split_sessions(
    seqs: &[MosSequence],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<MosSequence>, Vec<MosSequence>, Vec<MosSequence>)> {
    if seqs.len() < 4 {
        return Err(Error::validation("need at least 4 sequences to split"));
    }
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::validation("split ratio must lie in (0,1)"));
    }
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_test = ((1.0 - ratio) * seqs.len() as f64).round() as usize;
    let test: Vec<MosSequence> = order[..n_test].iter().map(|&i| seqs[i].clone()).collect();
    let rest = &order[n_test..];
    let n_val = ((1.0 - ratio) * rest.len() as f64).round() as usize;
    let validation: Vec<MosSequence> = rest[..n_val].iter().map(|&i| seqs[i].clone()).collect();
    let train: Vec<MosSequence> = rest[n_val..].iter().map(|&i| seqs[i].clone()).collect();
    Ok((train, validation, test))
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
}

/// Grid searched by validation MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub epochs: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            epochs: vec![100, 200],
            batch_sizes: vec![16, 32],
            learning_rates: vec![1e-3, 3e-4],
            dropouts: vec![0.0, 0.1],
        }
    }
}

impl HyperGrid {
    /// A single-cell grid, for callers that already know their settings.
    pub fn single(hyper: Hyper) -> HyperGrid {
        HyperGrid {
            epochs: vec![hyper.epochs],
            batch_sizes: vec![hyper.batch_size],
            learning_rates: vec![hyper.learning_rate],
            dropouts: vec![hyper.dropout],
        }
    }

    pub fn cells(&self) -> Vec<Hyper> {
        let mut cells = Vec::new();
        for &epochs in &self.epochs {
            for &batch_size in &self.batch_sizes {
                for &learning_rate in &self.learning_rates {
                    for &dropout in &self.dropouts {
                        cells.push(Hyper {
                            epochs,
                            batch_size,
                            learning_rate,
                            dropout,
                        });
                    }
                }
            }
        }
        cells
    }
}

/// The autoencoder network: a flat parameter vector plus layer layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub params: Vec<f64>,
    enc1: LstmLayout,
    enc2: LstmLayout,
    dec1: LstmLayout,
    dec2: LstmLayout,
    head: AffineLayout,
}

// Scratch caches reused across sequences during training.
#[derive(Default)]
struct Scratch {
    c1: LstmCache,
    c2: LstmCache,
    c3: LstmCache,
    c4: LstmCache,
    enc1_out: Vec<f64>,
    dec_in: Vec<f64>,
    dec1_out: Vec<f64>,
    outputs: Vec<f64>,
    preacts: Vec<f64>,
    mask1: Vec<f64>,
    mask2: Vec<f64>,
}

impl Autoencoder {
    /// Builds the architecture with weights drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; biases start at zero except the
    /// forget gates, which start at one.
    pub fn new_seeded(seed: u64) -> Autoencoder {
        let (enc1, n1) = LstmLayout::new(1, ENC_HIDDEN, 0);
        let (enc2, n2) = LstmLayout::new(ENC_HIDDEN, BOTTLENECK, n1);
        let (dec1, n3) = LstmLayout::new(BOTTLENECK, BOTTLENECK, n2);
        let (dec2, n4) = LstmLayout::new(BOTTLENECK, ENC_HIDDEN, n3);
        let (head, n5) = AffineLayout::new(ENC_HIDDEN, true, n4);
        let mut params = vec![0.0; n5];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);

        let init_lstm = |l: &LstmLayout, rng: &mut ChaCha12Rng, params: &mut [f64]| {
            let kw = 1.0 / (l.input as f64).sqrt();
            for p in params[l.w0..l.w0 + 4 * l.hidden * l.input].iter_mut() {
                *p = rng.random_range(-kw..kw);
            }
            let ku = 1.0 / (l.hidden as f64).sqrt();
            for p in params[l.u0..l.u0 + 4 * l.hidden * l.hidden].iter_mut() {
                *p = rng.random_range(-ku..ku);
            }
            // forget-gate bias 1 keeps early memory open
            for h in 0..l.hidden {
                params[l.b0 + l.hidden + h] = 1.0;
            }
        };
        init_lstm(&enc1, &mut rng, &mut params);
        init_lstm(&enc2, &mut rng, &mut params);
        init_lstm(&dec1, &mut rng, &mut params);
        init_lstm(&dec2, &mut rng, &mut params);
        let kh = 1.0 / (ENC_HIDDEN as f64).sqrt();
        for p in params[head.w0..head.w0 + ENC_HIDDEN].iter_mut() {
            *p = rng.random_range(-kh..kh);
        }
        Autoencoder {
            params,
            enc1,
            enc2,
            dec1,
            dec2,
            head,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// (name, start, len) of every weight tensor, for sampling in checks.
    pub fn tensors(&self) -> Vec<(String, usize, usize)> {
        let mut t = self.enc1.tensors("enc1");
        t.extend(self.enc2.tensors("enc2"));
        t.extend(self.dec1.tensors("dec1"));
        t.extend(self.dec2.tensors("dec2"));
        t.extend(self.head.tensors("head"));
        t
    }

    /// Encoder only: the 6-wide bottleneck code of a sequence.
    pub fn encode(&self, seq: &MosSequence) -> [f64; BOTTLENECK] {
        let inputs: Vec<f64> = (0..SEQ_LEN).map(|t| seq.input_at(t)).collect();
        let mut c1 = LstmCache::default();
        let mut c2 = LstmCache::default();
        nn::lstm_forward(&self.params, &self.enc1, &inputs, &mut c1);
        nn::lstm_forward(&self.params, &self.enc2, &c1.h, &mut c2);
        let mut code = [0.0; BOTTLENECK];
        code.copy_from_slice(&c2.h[(SEQ_LEN - 1) * BOTTLENECK..]);
        code
    }

    /// Decoder only: broadcasts the code over 15 steps and runs the
    /// mirrored stack. The reconstruction depends on nothing but the code,
    /// which is the architectural bottleneck guarantee.
    pub fn decode(&self, code: &[f64; BOTTLENECK]) -> [f64; SEQ_LEN] {
        let mut dec_in = Vec::with_capacity(SEQ_LEN * BOTTLENECK);
        for _ in 0..SEQ_LEN {
            dec_in.extend_from_slice(code);
        }
        let mut c3 = LstmCache::default();
        let mut c4 = LstmCache::default();
        nn::lstm_forward(&self.params, &self.dec1, &dec_in, &mut c3);
        nn::lstm_forward(&self.params, &self.dec2, &c3.h, &mut c4);
        let mut outputs = Vec::new();
        let mut preacts = Vec::new();
        nn::affine_forward(&self.params, &self.head, &c4.h, &mut outputs, &mut preacts);
        let mut out = [0.0; SEQ_LEN];
        out.copy_from_slice(&outputs);
        out
    }

    /// Raw (unclamped) reconstruction.
    pub fn reconstruct_raw(&self, seq: &MosSequence) -> [f64; SEQ_LEN] {
        self.decode(&self.encode(seq))
    }

    // Full forward pass with caches; optional inverted dropout on the two
    // intermediate hidden streams. Returns the masked squared-error sum and
    // the mask count for this sequence; accumulates parameter gradients
    // when `grad` is given.
    fn forward_backward(
        &self,
        seq: &MosSequence,
        dropout: Option<(f64, &mut ChaCha12Rng)>,
        scratch: &mut Scratch,
        mut grad: Option<&mut [f64]>,
        inv_mask_count: f64,
    ) -> f64 {
        let inputs: Vec<f64> = (0..SEQ_LEN).map(|t| seq.input_at(t)).collect();
        nn::lstm_forward(&self.params, &self.enc1, &inputs, &mut scratch.c1);

        // dropout masks (inverted scaling) or pass-through
        let (rate, rng) = match dropout {
            Some((r, rng)) if r > 0.0 => (r, Some(rng)),
            _ => (0.0, None),
        };
        scratch.mask1.clear();
        scratch.mask2.clear();
        if let Some(rng) = rng {
            let keep = 1.0 - rate;
            for _ in 0..SEQ_LEN * ENC_HIDDEN {
                scratch
                    .mask1
                    .push(if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
            }
            for _ in 0..SEQ_LEN * BOTTLENECK {
                scratch
                    .mask2
                    .push(if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
            }
        }

        scratch.enc1_out.clear();
        scratch.enc1_out.extend_from_slice(&scratch.c1.h);
        if !scratch.mask1.is_empty() {
            for (v, m) in scratch.enc1_out.iter_mut().zip(&scratch.mask1) {
                *v *= m;
            }
        }
        nn::lstm_forward(&self.params, &self.enc2, &scratch.enc1_out, &mut scratch.c2);

        let code = &scratch.c2.h[(SEQ_LEN - 1) * BOTTLENECK..];
        scratch.dec_in.clear();
        for _ in 0..SEQ_LEN {
            scratch.dec_in.extend_from_slice(code);
        }
        nn::lstm_forward(&self.params, &self.dec1, &scratch.dec_in, &mut scratch.c3);

        scratch.dec1_out.clear();
        scratch.dec1_out.extend_from_slice(&scratch.c3.h);
        if !scratch.mask2.is_empty() {
            for (v, m) in scratch.dec1_out.iter_mut().zip(&scratch.mask2) {
                *v *= m;
            }
        }
        nn::lstm_forward(&self.params, &self.dec2, &scratch.dec1_out, &mut scratch.c4);
        nn::affine_forward(
            &self.params,
            &self.head,
            &scratch.c4.h,
            &mut scratch.outputs,
            &mut scratch.preacts,
        );

        let mut sq_sum = 0.0;
        let mut d_out = vec![0.0; SEQ_LEN];
        for t in 0..seq.valid_len {
            let r = scratch.outputs[t] - seq.values[t];
            sq_sum += r * r;
            d_out[t] = 2.0 * r * inv_mask_count;
        }

        let Some(grad) = grad.as_deref_mut() else {
            return sq_sum;
        };

        // backward through the stack
        let mut d_h4 = vec![0.0; SEQ_LEN * ENC_HIDDEN];
        nn::affine_backward(
            &self.params,
            &self.head,
            &scratch.c4.h,
            &scratch.preacts,
            &d_out,
            &mut d_h4,
            grad,
        );
        let mut d_dec1_out = vec![0.0; SEQ_LEN * BOTTLENECK];
        nn::lstm_backward(
            &self.params,
            &self.dec2,
            &scratch.c4,
            &d_h4,
            &mut d_dec1_out,
            grad,
        );
        if !scratch.mask2.is_empty() {
            for (v, m) in d_dec1_out.iter_mut().zip(&scratch.mask2) {
                *v *= m;
            }
        }
        let mut d_dec_in = vec![0.0; SEQ_LEN * BOTTLENECK];
        nn::lstm_backward(
            &self.params,
            &self.dec1,
            &scratch.c3,
            &d_dec1_out,
            &mut d_dec_in,
            grad,
        );
        // repeat stage: the code gradient is the sum over the 15 branches,
        // injected at the encoder's final step only
        let mut d_h2 = vec![0.0; SEQ_LEN * BOTTLENECK];
        for t in 0..SEQ_LEN {
            for k in 0..BOTTLENECK {
                d_h2[(SEQ_LEN - 1) * BOTTLENECK + k] += d_dec_in[t * BOTTLENECK + k];
            }
        }
        let mut d_enc1_out = vec![0.0; SEQ_LEN * ENC_HIDDEN];
        nn::lstm_backward(
            &self.params,
            &self.enc2,
            &scratch.c2,
            &d_h2,
            &mut d_enc1_out,
            grad,
        );
        if !scratch.mask1.is_empty() {
            for (v, m) in d_enc1_out.iter_mut().zip(&scratch.mask1) {
                *v *= m;
            }
        }
        let mut d_inputs = vec![0.0; SEQ_LEN];
        nn::lstm_backward(
            &self.params,
            &self.enc1,
            &scratch.c1,
            &d_enc1_out,
            &mut d_inputs,
            grad,
        );
        sq_sum
    }

    /// Masked mean squared reconstruction error over `seqs`, dropout off.
    pub fn mse(&self, seqs: &[MosSequence]) -> f64 {
        let mut scratch = Scratch::default();
        let mut sq = 0.0;
        let mut count = 0usize;
        for seq in seqs {
            sq += self.forward_backward(seq, None, &mut scratch, None, 0.0);
            count += seq.valid_len;
        }
        sq / count as f64
    }

    // Accumulates gradients of the batch-mean masked MSE; returns the loss.
    fn batch_grad(
        &self,
        batch: &[&MosSequence],
        dropout: f64,
        rng: &mut ChaCha12Rng,
        scratch: &mut Scratch,
        grad: &mut [f64],
    ) -> f64 {
        let mask_count: usize = batch.iter().map(|s| s.valid_len).sum();
        let inv = 1.0 / mask_count as f64;
        let mut sq = 0.0;
        for seq in batch {
            let d = (dropout > 0.0).then(|| (dropout, &mut *rng));
            sq += self.forward_backward(seq, d, scratch, Some(grad), inv);
        }
        sq * inv
    }
}

/// One epoch of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Validation outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyper: Hyper,
    pub val_mse: f64,
}

/// Session-level split bookkeeping stored with the model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub ratio: f64,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// A trained autoencoder with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub net: Autoencoder,
    pub hyper: Hyper,
    pub curve: Vec<EpochRecord>,
    pub grid: Vec<GridCell>,
    pub seed: u64,
    pub split: SplitRecord,
}

/// The denoised 15-point typical MOS trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalPattern {
    pub values: [f64; SEQ_LEN],
    pub n_sessions_aggregated: usize,
}

/// Divergence guard: aborts a run whose validation MSE exceeds 10x the
/// pre-training value for five consecutive epochs.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceMonitor {
    initial: f64,
    consecutive: usize,
}

impl DivergenceMonitor {
    pub fn new(initial_val_mse: f64) -> DivergenceMonitor {
        DivergenceMonitor {
            initial: initial_val_mse,
            consecutive: 0,
        }
    }

    /// Records one epoch's validation MSE; returns the abort error once the
    /// rule fires.
    pub fn observe(&mut self, epoch: usize, val_mse: f64) -> Result<()> {
        if val_mse > 10.0 * self.initial {
            self.consecutive += 1;
            if self.consecutive >= 5 {
                return Err(Error::Divergence {
                    epoch,
                    val_mse,
                    initial: self.initial,
                });
            }
        } else {
            self.consecutive = 0;
        }
        Ok(())
    }
}

// Step learning-rate schedule: two decays late in training let Adam settle
// at the minimum instead of oscillating around it.
const LR_DECAY_STEPS: [(f64, f64); 2] = [(0.7, 0.1), (0.9, 0.01)];

fn train_single(
    train: &[MosSequence],
    validation: &[MosSequence],
    hyper: Hyper,
    seed: u64,
) -> Result<(Autoencoder, Vec<EpochRecord>, f64)> {
    let mut net = Autoencoder::new_seeded(seed);
    let mut adam = Adam::new(net.n_params(), hyper.learning_rate);
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 0x7261_696e));
    let mut scratch = Scratch::default();
    let mut grad = vec![0.0; net.n_params()];
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut monitor = DivergenceMonitor::new(net.mse(validation));
    let mut curve = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 0..hyper.epochs {
        let mut factor = 1.0;
        for (at, f) in LR_DECAY_STEPS {
            if epoch as f64 >= at * hyper.epochs as f64 {
                factor = f;
            }
        }
        adam.learning_rate = hyper.learning_rate * factor;
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let batch: Vec<&MosSequence> = chunk.iter().map(|&i| &train[i]).collect();
            for g in grad.iter_mut() {
                *g = 0.0;
            }
            net.batch_grad(&batch, hyper.dropout, &mut rng, &mut scratch, &mut grad);
            adam.step(&mut net.params, &grad);
        }
        let train_mse = net.mse(train);
        let val_mse = net.mse(validation);
        curve.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });
        // keep the epoch checkpoint that minimizes the validation MSE
        if best.as_ref().map(|(b, _)| val_mse < *b).unwrap_or(true) {
            best = Some((val_mse, net.params.clone()));
        }
        monitor.observe(epoch, val_mse)?;
    }
    let (final_val, best_params) = best.expect("at least one epoch");
    net.params = best_params;
    Ok((net, curve, final_val))
}

/// Trains one model per grid cell (each with its own derived seed) and
/// keeps the cell with the lowest validation MSE, earliest cell on ties.
pub fn train_autoencoder(
    train: &[MosSequence],
    validation: &[MosSequence],
    grid: &HyperGrid,
    seed: u64,
) -> Result<AutoencoderModel> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::validation("train and validation sets must be non-empty"));
    }
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::validation("hyperparameter grid is empty"));
    }
    if cells.iter().any(|c| c.epochs == 0 || c.batch_size == 0) {
        return Err(Error::validation("epochs and batch size must be positive"));
    }
    let mut best: Option<(usize, Autoencoder, Vec<EpochRecord>, f64)> = None;
    let mut grid_results = Vec::with_capacity(cells.len());
    for (i, &hyper) in cells.iter().enumerate() {
        let cell_seed = mix_seed(seed, i as u64);
        let (net, curve, val_mse) = train_single(train, validation, hyper, cell_seed)?;
        grid_results.push(GridCell { hyper, val_mse });
        let better = best.as_ref().map(|b| val_mse < b.3).unwrap_or(true);
        if better {
            best = Some((i, net, curve, val_mse));
        }
    }
    let (best_idx, net, curve, _) = best.expect("at least one cell");
    Ok(AutoencoderModel {
        net,
        hyper: cells[best_idx],
        curve,
        grid: grid_results,
        seed,
        split: SplitRecord::default(),
    })
}

/// Deterministic reconstruction, clamped to the MOS scale at the reporting
/// boundary (raw values stay available via [`Autoencoder::reconstruct_raw`]).
pub fn reconstruct(model: &AutoencoderModel, seq: &MosSequence) -> [f64; SEQ_LEN] {
    let mut out = model.net.reconstruct_raw(seq);
    for v in out.iter_mut() {
        *v = v.clamp(MOS_RANGE.0, MOS_RANGE.1);
    }
    out
}

/// Pointwise mean of the reconstructions over `seqs`, clamped to [1,5].
pub fn typical_pattern(model: &AutoencoderModel, seqs: &[MosSequence]) -> Result<TypicalPattern> {
    if seqs.is_empty() {
        return Err(Error::validation("typical pattern over zero sequences"));
    }
    let mut acc = [0.0; SEQ_LEN];
    for seq in seqs {
        let rec = model.net.reconstruct_raw(seq);
        for (a, r) in acc.iter_mut().zip(&rec) {
            *a += r;
        }
    }
    let n = seqs.len() as f64;
    let mut values = [0.0; SEQ_LEN];
    for (v, a) in values.iter_mut().zip(&acc) {
        *v = (a / n).clamp(MOS_RANGE.0, MOS_RANGE.1);
    }
    Ok(TypicalPattern {
        values,
        n_sessions_aggregated: seqs.len(),
    })
}

/// Compares analytic gradients against central finite differences on at
/// least `n_samples` randomly chosen weights spread over every tensor.
///
/// Samples whose perturbation flips a ReLU activation state are re-drawn:
/// a central difference across a kink does not estimate the derivative.
/// Gradients below 3e-6 in both views are counted as matching, since the
/// difference quotient carries ~1e-10 of absolute noise.
pub fn gradient_check(
    net: &Autoencoder,
    batch: &[MosSequence],
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    assert!(
        (1e-6..=1e-4).contains(&epsilon),
        "epsilon outside the supported range"
    );
    let refs: Vec<&MosSequence> = batch.iter().collect();
    let mask_count: usize = batch.iter().map(|s| s.valid_len).sum();
    let inv = 1.0 / mask_count as f64;

    let mut grad = vec![0.0; net.n_params()];
    let mut scratch = Scratch::default();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let _ = net.batch_grad(&refs, 0.0, &mut rng, &mut scratch, &mut grad);

    let loss_and_relu_states = |params: &[f64]| -> (f64, Vec<bool>) {
        let mut probe = net.clone();
        probe.params = params.to_vec();
        let mut scratch = Scratch::default();
        let mut sq = 0.0;
        let mut states = Vec::new();
        for seq in batch {
            sq += probe.forward_backward(seq, None, &mut scratch, None, inv);
            states.extend(scratch.preacts.iter().map(|&p| p > 0.0));
        }
        (sq * inv, states)
    };

    let tensors = net.tensors();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut attempts = 0usize;
    let mut tensor_cursor = 0usize;
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 1));

    while checked < n_samples && attempts < n_samples * 10 {
        attempts += 1;
        let (_, start, len) = &tensors[tensor_cursor % tensors.len()];
        tensor_cursor += 1;
        let idx = start + rng.random_range(0..*len);

        let mut plus = net.params.clone();
        plus[idx] += epsilon;
        let mut minus = net.params.clone();
        minus[idx] -= epsilon;
        let (lp, sp) = loss_and_relu_states(&plus);
        let (lm, sm) = loss_and_relu_states(&minus);
        if sp != sm {
            continue; // kink crossed; resample
        }
        let numeric = (lp - lm) / (2.0 * epsilon);
        let analytic = grad[idx];
        checked += 1;
        if analytic.abs() < 3e-6 && numeric.abs() < 3e-6 {
            continue;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        max_rel = max_rel.max(rel);
    }
    max_rel
}

/// Serialized model envelope with an integrity hash.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    sha256: String,
    model: AutoencoderModel,
}

fn model_digest(model: &AutoencoderModel) -> Result<String> {
    let body = serde_json::to_vec(model)
        .map_err(|e| Error::validation(format!("model serialization: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(&body);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Writes the model as versioned JSON with a content hash.
pub fn save_model(model: &AutoencoderModel, path: &std::path::Path) -> Result<()> {
    let file = ModelFile {
        version: 1,
        sha256: model_digest(model)?,
        model: model.clone(),
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::validation(format!("model serialization: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Reads a model back, verifying version and content hash.
pub fn load_model(path: &std::path::Path) -> Result<AutoencoderModel> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&body)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    if file.version != 1 {
        return Err(Error::validation(format!(
            "{}: unsupported model version {}",
            path.display(),
            file.version
        )));
    }
    let digest = model_digest(&file.model)?;
    if digest != file.sha256 {
        return Err(Error::MissingArtifact {
            name: path.display().to_string(),
            reason: "model content hash mismatch".to_string(),
        });
    }
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::MosSample;

    fn session_with(values: &[f64]) -> Session {
        Session {
            id: "s".into(),
            kpi: vec![],
            mos: values
                .iter()
                .enumerate()
                .map(|(i, &mos)| MosSample {
                    t: 4.0 * (i + 1) as f64,
                    mos,
                })
                .collect(),
            meta: Default::default(),
        }
    }

    fn seq_constant(value: f64, valid_len: usize, id: &str) -> MosSequence {
        MosSequence {
            session_id: id.into(),
            values: [value; SEQ_LEN],
            valid_len,
        }
    }

    fn ramp_seqs(n: usize) -> Vec<MosSequence> {
        (0..n)
            .map(|i| {
                let mut values = [0.0; SEQ_LEN];
                for (t, v) in values.iter_mut().enumerate() {
                    let ramp = 1.9 + 2.5 * (t as f64 / 4.0).min(1.0);
                    *v = ramp + 0.05 * ((i * 7 + t) % 5) as f64;
                }
                MosSequence {
                    session_id: format!("r{i}"),
                    values,
                    valid_len: SEQ_LEN,
                }
            })
            .collect()
    }

    #[test]
    fn to_sequence_copies_pads_and_truncates() {
        let s15 = session_with(&[4.0; 15]);
        let q = to_sequence(&s15).unwrap();
        assert_eq!(q.valid_len, 15);
        assert_eq!(q.values, [4.0; 15]);

        let mut vals12 = vec![3.0; 11];
        vals12.push(4.3);
        let s12 = session_with(&vals12);
        let q = to_sequence(&s12).unwrap();
        assert_eq!(q.valid_len, 12);
        assert_eq!(q.values[11], 4.3);
        assert_eq!(q.values[12..], [4.3, 4.3, 4.3]);

        let s20 = session_with(&(0..20).map(|i| 1.0 + i as f64 * 0.1).collect::<Vec<_>>());
        let q = to_sequence(&s20).unwrap();
        assert_eq!(q.valid_len, 15);
        assert!((q.values[14] - 2.4).abs() < 1e-12);

        let s11 = session_with(&[4.0; 11]);
        assert!(to_sequence(&s11).is_err());
    }

    #[test]
    fn split_16_gives_9_3_4_and_partitions() {
        let seqs: Vec<MosSequence> = (0..16)
            .map(|i| seq_constant(4.0, 15, &format!("s{i}")))
            .collect();
        let (train, val, test) = split_sessions(&seqs, 0.75, 3).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (9, 3, 4));

        let mut all: Vec<&str> = train
            .iter()
            .chain(&val)
            .chain(&test)
            .map(|s| s.session_id.as_str())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 16);

        let again = split_sessions(&seqs, 0.75, 3).unwrap();
        assert_eq!(again.0, train);
        assert!(split_sessions(&seqs[..3], 0.75, 3).is_err());
    }

    #[test]
    fn zero_weight_net_outputs_head_bias() {
        let mut net = Autoencoder::new_seeded(1);
        for p in net.params.iter_mut() {
            *p = 0.0;
        }
        net.params[net.head.b0] = 0.7;
        let seq = seq_constant(4.0, 15, "z");
        let out = net.reconstruct_raw(&seq);
        assert!(out.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn reconstruction_is_deterministic_and_equals_decode_of_encode() {
        let net = Autoencoder::new_seeded(5);
        let seq = seq_constant(3.5, 13, "d");
        let a = net.reconstruct_raw(&seq);
        let b = net.reconstruct_raw(&seq);
        assert_eq!(a, b);
        let code = net.encode(&seq);
        assert_eq!(net.decode(&code), a);
    }

    #[test]
    fn same_seed_same_data_same_weights() {
        let seqs = ramp_seqs(12);
        let grid = HyperGrid::single(Hyper {
            epochs: 3,
            batch_size: 4,
            learning_rate: 1e-3,
            dropout: 0.1,
        });
        let a = train_autoencoder(&seqs[..8], &seqs[8..], &grid, 42).unwrap();
        let b = train_autoencoder(&seqs[..8], &seqs[8..], &grid, 42).unwrap();
        assert_eq!(a.net.params, b.net.params);
    }

    #[test]
    fn pad_slots_do_not_influence_loss_or_gradients() {
        let net = Autoencoder::new_seeded(9);
        let mut seq = seq_constant(4.0, 12, "p");
        let mut scratch = Scratch::default();
        let mut rng = ChaCha12Rng::seed_from_u64(0);

        let mut g1 = vec![0.0; net.n_params()];
        let l1 = net.batch_grad(&[&seq], 0.0, &mut rng, &mut scratch, &mut g1);

        // arbitrary garbage in the pad slots
        seq.values[12] = -7.0;
        seq.values[13] = 123.0;
        seq.values[14] = 0.0;
        let mut g2 = vec![0.0; net.n_params()];
        let l2 = net.batch_grad(&[&seq], 0.0, &mut rng, &mut scratch, &mut g2);

        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn training_learns_constant_sequences() {
        let seqs: Vec<MosSequence> = (0..20)
            .map(|i| seq_constant(4.0, 15, &format!("c{i}")))
            .collect();
        let grid = HyperGrid::single(Hyper {
            epochs: 300,
            batch_size: 8,
            learning_rate: 0.01,
            dropout: 0.0,
        });
        let model = train_autoencoder(&seqs[..16], &seqs[16..], &grid, 7).unwrap();
        let mse = model.net.mse(&seqs);
        assert!(mse < 1e-2, "constant reconstruction MSE {mse}");
        // training reduced the train loss
        let first = model.curve.first().unwrap().train_mse;
        let last = model.curve.last().unwrap().train_mse;
        assert!(last < first, "no improvement: {first} -> {last}");
    }

    #[test]
    fn typical_pattern_of_single_sequence_is_its_reconstruction() {
        let seqs = ramp_seqs(6);
        let grid = HyperGrid::single(Hyper {
            epochs: 5,
            batch_size: 4,
            learning_rate: 1e-3,
            dropout: 0.0,
        });
        let model = train_autoencoder(&seqs[..4], &seqs[4..], &grid, 3).unwrap();
        let tp = typical_pattern(&model, &seqs[..1]).unwrap();
        let rec = reconstruct(&model, &seqs[0]);
        for (a, b) in tp.values.iter().zip(&rec) {
            assert!((a - b).abs() < 1e-12);
        }
        // permutation invariance of the mean
        let fwd = typical_pattern(&model, &seqs).unwrap();
        let mut rev = seqs.clone();
        rev.reverse();
        let bwd = typical_pattern(&model, &rev).unwrap();
        for (a, b) in fwd.values.iter().zip(&bwd.values) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(typical_pattern(&model, &[]).is_err());
    }

    #[test]
    fn gradient_check_fresh_model_passes() {
        let net = Autoencoder::new_seeded(11);
        let batch = ramp_seqs(4);
        let err = gradient_check(&net, &batch, 1e-5, 200, 13);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_after_training_steps_passes() {
        let seqs = ramp_seqs(12);
        let grid = HyperGrid::single(Hyper {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-3,
            dropout: 0.0,
        });
        let model = train_autoencoder(&seqs[..8], &seqs[8..], &grid, 21).unwrap();
        let err = gradient_check(&model.net, &seqs[..4], 1e-5, 200, 17);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn divergence_monitor_aborts_after_five_consecutive_bad_epochs() {
        let mut m = DivergenceMonitor::new(0.5);
        for epoch in 0..4 {
            m.observe(epoch, 6.0).unwrap(); // above 10x, but not yet 5 in a row
        }
        match m.observe(4, 6.0) {
            Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 4),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn divergence_monitor_resets_on_recovery() {
        let mut m = DivergenceMonitor::new(0.5);
        for epoch in 0..4 {
            m.observe(epoch, 6.0).unwrap();
        }
        m.observe(4, 0.4).unwrap(); // recovery resets the streak
        for epoch in 5..9 {
            m.observe(epoch, 6.0).unwrap();
        }
        assert!(m.observe(9, 6.0).is_err());
    }

    #[test]
    fn model_file_roundtrip_and_hash_guard() {
        let seqs = ramp_seqs(8);
        let grid = HyperGrid::single(Hyper {
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            dropout: 0.0,
        });
        let model = train_autoencoder(&seqs[..6], &seqs[6..], &grid, 4).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save_model(&model, tmp.path()).unwrap();
        let back = load_model(tmp.path()).unwrap();
        assert_eq!(model, back);

        // corrupt one digit of a stored weight
        let body = std::fs::read_to_string(tmp.path()).unwrap();
        let tampered = body.replacen("0.0", "0.1", 1);
        std::fs::write(tmp.path(), tampered).unwrap();
        assert!(load_model(tmp.path()).is_err());
    }
}
