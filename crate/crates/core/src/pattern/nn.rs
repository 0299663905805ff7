//! Minimal neural core: LSTM and affine layers over one flat f64 parameter
//! vector, hand-rolled backpropagation, and Adam.
//!
//! Layers address their weights through layouts (absolute offsets into the
//! parameter vector), so gradients live in one equally-shaped vector and
//! finite-difference checks can perturb any single coordinate.

use serde::{Deserialize, Serialize};

// Gate order: input, forget, candidate, output.
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Offsets of one LSTM layer's weights inside the flat parameter vector.
///
/// `W` maps inputs to the four stacked gates, `U` maps the previous hidden
/// state, `b` is the per-gate bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmLayout {
    pub input: usize,
    pub hidden: usize,
    pub w0: usize,
    pub u0: usize,
    pub b0: usize,
}

impl LstmLayout {
    pub fn new(input: usize, hidden: usize, offset: usize) -> (LstmLayout, usize) {
        let w0 = offset;
        let u0 = w0 + 4 * hidden * input;
        let b0 = u0 + 4 * hidden * hidden;
        let end = b0 + 4 * hidden;
        (
            LstmLayout {
                input,
                hidden,
                w0,
                u0,
                b0,
            },
            end,
        )
    }

    #[inline]
    fn w(&self, gate: usize, h: usize, i: usize) -> usize {
        self.w0 + (gate * self.hidden + h) * self.input + i
    }

    #[inline]
    fn u(&self, gate: usize, h: usize, k: usize) -> usize {
        self.u0 + (gate * self.hidden + h) * self.hidden + k
    }

    #[inline]
    fn b(&self, gate: usize, h: usize) -> usize {
        self.b0 + gate * self.hidden + h
    }

    /// (name, start, len) triplets of this layer's weight tensors.
    pub fn tensors(&self, prefix: &str) -> Vec<(String, usize, usize)> {
        vec![
            (format!("{prefix}.w"), self.w0, 4 * self.hidden * self.input),
            (format!("{prefix}.u"), self.u0, 4 * self.hidden * self.hidden),
            (format!("{prefix}.b"), self.b0, 4 * self.hidden),
        ]
    }
}

/// Per-sequence activation cache of one LSTM layer.
#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    pub t_len: usize,
    inputs: Vec<f64>, // T x input
    gates: Vec<f64>,  // T x 4 x hidden, post-activation
    c: Vec<f64>,      // T x hidden
    tanh_c: Vec<f64>, // T x hidden
    pub h: Vec<f64>,  // T x hidden
}

impl LstmCache {
    fn reset(&mut self, layout: &LstmLayout, t_len: usize) {
        self.t_len = t_len;
        self.inputs.clear();
        self.inputs.resize(t_len * layout.input, 0.0);
        self.gates.clear();
        self.gates.resize(t_len * 4 * layout.hidden, 0.0);
        self.c.clear();
        self.c.resize(t_len * layout.hidden, 0.0);
        self.tanh_c.clear();
        self.tanh_c.resize(t_len * layout.hidden, 0.0);
        self.h.clear();
        self.h.resize(t_len * layout.hidden, 0.0);
    }
}

/// Runs the layer forward over `inputs` (T x input, row-major), filling the
/// cache; `cache.h` holds the per-step hidden states afterwards.
pub fn lstm_forward(params: &[f64], layout: &LstmLayout, inputs: &[f64], cache: &mut LstmCache) {
    let hsz = layout.hidden;
    let isz = layout.input;
    let t_len = inputs.len() / isz;
    cache.reset(layout, t_len);
    cache.inputs.copy_from_slice(inputs);

    let mut h_prev = vec![0.0; hsz];
    let mut c_prev = vec![0.0; hsz];

    for t in 0..t_len {
        let x = &inputs[t * isz..(t + 1) * isz];
        for gate in 0..4 {
            for h in 0..hsz {
                let mut a = params[layout.b(gate, h)];
                for (i, xi) in x.iter().enumerate() {
                    a += params[layout.w(gate, h, i)] * xi;
                }
                for (k, hk) in h_prev.iter().enumerate() {
                    a += params[layout.u(gate, h, k)] * hk;
                }
                let activated = if gate == GATE_G { a.tanh() } else { sigmoid(a) };
                cache.gates[(t * 4 + gate) * hsz + h] = activated;
            }
        }
        for h in 0..hsz {
            let gi = cache.gates[(t * 4 + GATE_I) * hsz + h];
            let gf = cache.gates[(t * 4 + GATE_F) * hsz + h];
            let gg = cache.gates[(t * 4 + GATE_G) * hsz + h];
            let go = cache.gates[(t * 4 + GATE_O) * hsz + h];
            let c = gf * c_prev[h] + gi * gg;
            let tc = c.tanh();
            cache.c[t * hsz + h] = c;
            cache.tanh_c[t * hsz + h] = tc;
            cache.h[t * hsz + h] = go * tc;
        }
        h_prev.copy_from_slice(&cache.h[t * hsz..(t + 1) * hsz]);
        c_prev.copy_from_slice(&cache.c[t * hsz..(t + 1) * hsz]);
    }
}

/// Backpropagates through the layer. `d_h` is the loss gradient w.r.t. each
/// step's hidden output (T x hidden); gradients accumulate into `grad`
/// (same shape as the parameter vector) and `d_inputs` (T x input).
pub fn lstm_backward(
    params: &[f64],
    layout: &LstmLayout,
    cache: &LstmCache,
    d_h: &[f64],
    d_inputs: &mut [f64],
    grad: &mut [f64],
) {
    let hsz = layout.hidden;
    let isz = layout.input;
    let t_len = cache.t_len;

    let mut dh_rec = vec![0.0; hsz];
    let mut dc = vec![0.0; hsz];
    let mut da = vec![0.0; 4 * hsz];

    for t in (0..t_len).rev() {
        let gates = &cache.gates[t * 4 * hsz..(t + 1) * 4 * hsz];
        let tanh_c = &cache.tanh_c[t * hsz..(t + 1) * hsz];
        let x = &cache.inputs[t * isz..(t + 1) * isz];

        for h in 0..hsz {
            let gi = gates[GATE_I * hsz + h];
            let gf = gates[GATE_F * hsz + h];
            let gg = gates[GATE_G * hsz + h];
            let go = gates[GATE_O * hsz + h];
            let c_prev = if t > 0 { cache.c[(t - 1) * hsz + h] } else { 0.0 };

            let dh = d_h[t * hsz + h] + dh_rec[h];
            let d_o = dh * tanh_c[h];
            let dc_h = dc[h] + dh * go * (1.0 - tanh_c[h] * tanh_c[h]);
            let d_i = dc_h * gg;
            let d_g = dc_h * gi;
            let d_f = dc_h * c_prev;

            da[GATE_I * hsz + h] = d_i * gi * (1.0 - gi);
            da[GATE_F * hsz + h] = d_f * gf * (1.0 - gf);
            da[GATE_G * hsz + h] = d_g * (1.0 - gg * gg);
            da[GATE_O * hsz + h] = d_o * go * (1.0 - go);

            dc[h] = dc_h * gf; // carried to step t-1
        }

        let h_prev_base = if t > 0 { Some((t - 1) * hsz) } else { None };
        for h in dh_rec.iter_mut() {
            *h = 0.0;
        }
        for gate in 0..4 {
            for h in 0..hsz {
                let a = da[gate * hsz + h];
                if a == 0.0 {
                    continue;
                }
                grad[layout.b(gate, h)] += a;
                for (i, xi) in x.iter().enumerate() {
                    grad[layout.w(gate, h, i)] += a * xi;
                }
                if let Some(base) = h_prev_base {
                    for k in 0..hsz {
                        grad[layout.u(gate, h, k)] += a * cache.h[base + k];
                        dh_rec[k] += params[layout.u(gate, h, k)] * a;
                    }
                } else {
                    for k in 0..hsz {
                        dh_rec[k] += params[layout.u(gate, h, k)] * a;
                    }
                }
                for (i, di) in d_inputs[t * isz..(t + 1) * isz].iter_mut().enumerate() {
                    *di += params[layout.w(gate, h, i)] * a;
                }
            }
        }
        // dh_rec now holds dL/dh_{t-1} contributions from this step's gates;
        // recurrent U gradients for t = 0 use the zero initial state, hence
        // the branch above.
    }
}

/// Scalar-output affine head applied per step, with optional ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineLayout {
    pub input: usize,
    pub w0: usize,
    pub b0: usize,
    pub relu: bool,
}

impl AffineLayout {
    pub fn new(input: usize, relu: bool, offset: usize) -> (AffineLayout, usize) {
        (
            AffineLayout {
                input,
                w0: offset,
                b0: offset + input,
                relu,
            },
            offset + input + 1,
        )
    }

    pub fn tensors(&self, prefix: &str) -> Vec<(String, usize, usize)> {
        vec![
            (format!("{prefix}.w"), self.w0, self.input),
            (format!("{prefix}.b"), self.b0, 1),
        ]
    }
}

/// Applies the head to each step of `h` (T x input); returns per-step
/// outputs and pre-activations.
pub fn affine_forward(
    params: &[f64],
    layout: &AffineLayout,
    h: &[f64],
    outputs: &mut Vec<f64>,
    preacts: &mut Vec<f64>,
) {
    let isz = layout.input;
    let t_len = h.len() / isz;
    outputs.clear();
    preacts.clear();
    for t in 0..t_len {
        let mut p = params[layout.b0];
        for i in 0..isz {
            p += params[layout.w0 + i] * h[t * isz + i];
        }
        preacts.push(p);
        outputs.push(if layout.relu { p.max(0.0) } else { p });
    }
}

/// Backward pass of the head: fills `d_h` (T x input) and accumulates
/// weight gradients.
pub fn affine_backward(
    params: &[f64],
    layout: &AffineLayout,
    h: &[f64],
    preacts: &[f64],
    d_out: &[f64],
    d_h: &mut [f64],
    grad: &mut [f64],
) {
    let isz = layout.input;
    for (t, &dy) in d_out.iter().enumerate() {
        let da = if layout.relu && preacts[t] <= 0.0 { 0.0 } else { dy };
        if da == 0.0 {
            continue;
        }
        grad[layout.b0] += da;
        for i in 0..isz {
            grad[layout.w0 + i] += da * h[t * isz + i];
            d_h[t * isz + i] += params[layout.w0 + i] * da;
        }
    }
}

/// Adam with bias correction over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Adam {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / b1t;
            let v_hat = *v / b2t;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
