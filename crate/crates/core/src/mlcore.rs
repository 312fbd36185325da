//! Deterministic classical building blocks: layers, activations, recurrent
//! cells, MSE loss, Adam and seeded parameter initialization.
//!
//! Blocks are stateless descriptions. Parameters live in flat `f64` slices
//! owned by the caller; `backward` recomputes whatever intermediate values it
//! needs from the block input and *accumulates* parameter gradients.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Error, Result};

pub trait DifferentiableBlock {
    fn param_count(&self) -> usize;

    /// How the block's parameters are initialized, in layout order.
    fn init_segments(&self) -> Vec<InitSegment>;

    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64>;

    /// Returns the input gradient; adds parameter gradients into `grad_params`.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        upstream: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// `Uniform[-1/√fan_in, 1/√fan_in]`
    FanIn(usize),
    /// Quantum rotation angle, `Uniform[0, 2π]`
    Angle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSegment {
    pub len: usize,
    pub init: Init,
}

impl InitSegment {
    pub fn new(len: usize, init: Init) -> Self {
        InitSegment { len, init }
    }
}

/// Draws a parameter vector for `segments`, fully determined by `seed`.
pub fn init_params(segments: &[InitSegment], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(segments.iter().map(|s| s.len).sum());
    for seg in segments {
        for _ in 0..seg.len {
            let v = match seg.init {
                Init::Zeros => 0.0,
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    rng.gen_range(-bound..=bound)
                }
                Init::Angle => rng.gen_range(0.0..=TAU),
            };
            out.push(v);
        }
    }
    out
}

/// Fully connected layer `W·x + b`; `W` is stored row-major (`out × in`), then `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub bias: bool,
}

pub fn linear(in_dim: usize, out_dim: usize, with_bias: bool) -> Linear {
    Linear {
        in_dim,
        out_dim,
        bias: with_bias,
    }
}

impl DifferentiableBlock for Linear {
    fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + if self.bias { self.out_dim } else { 0 }
    }

    fn init_segments(&self) -> Vec<InitSegment> {
        let mut s = vec![InitSegment::new(
            self.in_dim * self.out_dim,
            Init::FanIn(self.in_dim),
        )];
        if self.bias {
            s.push(InitSegment::new(self.out_dim, Init::Zeros));
        }
        s
    }

    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let (w, b) = params.split_at(self.in_dim * self.out_dim);
        (0..self.out_dim)
            .map(|o| {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                let acc: f64 = row.iter().zip(input).map(|(a, x)| a * x).sum();
                if self.bias {
                    acc + b[o]
                } else {
                    acc
                }
            })
            .collect()
    }

    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        upstream: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        let nw = self.in_dim * self.out_dim;
        let w = &params[..nw];
        let mut dx = vec![0.0; self.in_dim];
        let (gw, gb) = grad_params.split_at_mut(nw);
        for (o, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += u * input[i];
                dx[i] += u * row[i];
            }
            if self.bias {
                gb[o] += u;
            }
        }
        dx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Relu,
    Tanh,
    Sigmoid,
}

/// Elementwise nonlinearity; works on inputs of any length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activation(pub ActivationKind);

pub fn activation(kind: ActivationKind) -> Activation {
    Activation(kind)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at input `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

impl DifferentiableBlock for Activation {
    fn param_count(&self) -> usize {
        0
    }

    fn init_segments(&self) -> Vec<InitSegment> {
        Vec::new()
    }

    fn forward(&self, _params: &[f64], input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.0.apply(x)).collect()
    }

    fn backward(
        &self,
        _params: &[f64],
        input: &[f64],
        upstream: &[f64],
        _grad: &mut [f64],
    ) -> Vec<f64> {
        input
            .iter()
            .zip(upstream)
            .map(|(&x, &u)| u * self.0.derivative(x))
            .collect()
    }
}

/// A cell whose block input is `[x; state]` and output the next state.
/// The first `hidden_dim()` entries of the state are what the cell exposes.
pub trait RecurrentCell: DifferentiableBlock {
    fn input_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
}

/// Elman cell `h' = tanh(W_ih·x + b_ih + W_hh·h + b_hh)`.
///
/// Layout: `W_ih (h×i) | W_hh (h×h) | b_ih | b_hh`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RnnCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

pub fn rnn_cell(input_dim: usize, hidden_dim: usize) -> RnnCell {
    RnnCell {
        input_dim,
        hidden_dim,
    }
}

impl RnnCell {
    fn preactivation(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let (i, h) = (self.input_dim, self.hidden_dim);
        let (w_ih, rest) = params.split_at(h * i);
        let (w_hh, rest) = rest.split_at(h * h);
        let (b_ih, b_hh) = rest.split_at(h);
        let (x, hp) = input.split_at(i);
        (0..h)
            .map(|r| {
                let a: f64 = w_ih[r * i..(r + 1) * i]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum();
                let b: f64 = w_hh[r * h..(r + 1) * h]
                    .iter()
                    .zip(hp)
                    .map(|(w, v)| w * v)
                    .sum();
                a + b + b_ih[r] + b_hh[r]
            })
            .collect()
    }
}

impl DifferentiableBlock for RnnCell {
    fn param_count(&self) -> usize {
        self.hidden_dim * (self.input_dim + self.hidden_dim) + 2 * self.hidden_dim
    }

    fn init_segments(&self) -> Vec<InitSegment> {
        let (i, h) = (self.input_dim, self.hidden_dim);
        vec![
            InitSegment::new(h * i + h * h, Init::FanIn(h)),
            InitSegment::new(2 * h, Init::Zeros),
        ]
    }

    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        self.preactivation(params, input)
            .into_iter()
            .map(f64::tanh)
            .collect()
    }

    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        upstream: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        let (i, h) = (self.input_dim, self.hidden_dim);
        let pre = self.preactivation(params, input);
        let dz: Vec<f64> = pre
            .iter()
            .zip(upstream)
            .map(|(&z, &u)| u * (1.0 - z.tanh().powi(2)))
            .collect();
        let (w_ih, rest) = params.split_at(h * i);
        let w_hh = &rest[..h * h];
        let (g_ih, rest) = grad_params.split_at_mut(h * i);
        let (g_hh, rest) = rest.split_at_mut(h * h);
        let (g_bih, g_bhh) = rest.split_at_mut(h);
        let (x, hp) = input.split_at(i);
        let mut dinput = vec![0.0; i + h];
        for r in 0..h {
            let d = dz[r];
            if d == 0.0 {
                continue;
            }
            g_bih[r] += d;
            g_bhh[r] += d;
            for c in 0..i {
                g_ih[r * i + c] += d * x[c];
                dinput[c] += d * w_ih[r * i + c];
            }
            for c in 0..h {
                g_hh[r * h + c] += d * hp[c];
                dinput[i + c] += d * w_hh[r * h + c];
            }
        }
        dinput
    }
}

impl RecurrentCell for RnnCell {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
    fn state_dim(&self) -> usize {
        self.hidden_dim
    }
}

/// Four-gate LSTM cell over `[x; h; c] → [h'; c']`.
///
/// Layout: `W (4h × (i+h)) | b (4h)`, gate blocks ordered input, forget,
/// cell candidate, output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

pub fn lstm_cell(input_dim: usize, hidden_dim: usize) -> LstmCell {
    LstmCell {
        input_dim,
        hidden_dim,
    }
}

struct LstmGates {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
}

impl LstmCell {
    fn gates(&self, params: &[f64], input: &[f64]) -> LstmGates {
        let (id, h) = (self.input_dim, self.hidden_dim);
        let cols = id + h;
        let (w, b) = params.split_at(4 * h * cols);
        let xh = &input[..cols];
        let c_prev = &input[cols..cols + h];
        let z: Vec<f64> = (0..4 * h)
            .map(|r| {
                w[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(xh)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    + b[r]
            })
            .collect();
        let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        LstmGates { i, f, g, o, c }
    }
}

impl DifferentiableBlock for LstmCell {
    fn param_count(&self) -> usize {
        4 * (self.hidden_dim * (self.input_dim + self.hidden_dim) + self.hidden_dim)
    }

    fn init_segments(&self) -> Vec<InitSegment> {
        let h = self.hidden_dim;
        vec![
            InitSegment::new(4 * h * (self.input_dim + h), Init::FanIn(h)),
            InitSegment::new(4 * h, Init::Zeros),
        ]
    }

    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let gs = self.gates(params, input);
        let mut out: Vec<f64> = gs.c.iter().zip(&gs.o).map(|(c, o)| o * c.tanh()).collect();
        out.extend_from_slice(&gs.c);
        out
    }

    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        upstream: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        let (id, h) = (self.input_dim, self.hidden_dim);
        let cols = id + h;
        let gs = self.gates(params, input);
        let c_prev = &input[cols..cols + h];
        let (dh, dc_in) = upstream.split_at(h);
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let tc = gs.c[k].tanh();
            let do_ = dh[k] * tc;
            let dc = dc_in[k] + dh[k] * gs.o[k] * (1.0 - tc * tc);
            let di = dc * gs.g[k];
            let df = dc * c_prev[k];
            let dg = dc * gs.i[k];
            dc_prev[k] = dc * gs.f[k];
            dz[k] = di * gs.i[k] * (1.0 - gs.i[k]);
            dz[h + k] = df * gs.f[k] * (1.0 - gs.f[k]);
            dz[2 * h + k] = dg * (1.0 - gs.g[k] * gs.g[k]);
            dz[3 * h + k] = do_ * gs.o[k] * (1.0 - gs.o[k]);
        }
        let w = &params[..4 * h * cols];
        let (gw, gb) = grad_params.split_at_mut(4 * h * cols);
        let xh = &input[..cols];
        let mut dinput = vec![0.0; cols + h];
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[r] += d;
            let row = &w[r * cols..(r + 1) * cols];
            let grow = &mut gw[r * cols..(r + 1) * cols];
            for c in 0..cols {
                grow[c] += d * xh[c];
                dinput[c] += d * row[c];
            }
        }
        dinput[cols..].copy_from_slice(&dc_prev);
        dinput
    }
}

impl RecurrentCell for LstmCell {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
    fn state_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

/// Mean squared error over all entries and its gradient `2(p − t)/count`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(config_err!(
            "prediction has {} entries, target {}",
            pred.len(),
            target.len()
        ));
    }
    if pred.is_empty() {
        return Err(config_err!("empty prediction"));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            config,
        }
    }

    /// One bias-corrected Adam update. Non-finite gradients abort the step
    /// without touching `params` or the moments.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(config_err!(
                "Adam state for {} params got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Optimization(format!(
                "non-finite gradient at index {i}"
            )));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::DifferentiableBlock;

    /// Central finite differences of `Σ_k w_k · out_k` against analytic backward.
    /// Returns the worst relative error over parameters and inputs.
    pub fn block_grad_error(
        block: &dyn DifferentiableBlock,
        params: &[f64],
        input: &[f64],
        w: &[f64],
    ) -> f64 {
        let h = 1e-5;
        let scalar = |p: &[f64], x: &[f64]| -> f64 {
            block.forward(p, x).iter().zip(w).map(|(a, b)| a * b).sum()
        };
        let mut gp = vec![0.0; params.len()];
        let gx = block.backward(params, input, w, &mut gp);
        let mut worst: f64 = 0.0;
        let mut p = params.to_vec();
        for k in 0..params.len() {
            p[k] = params[k] + h;
            let up = scalar(&p, input);
            p[k] = params[k] - h;
            let dn = scalar(&p, input);
            p[k] = params[k];
            worst = worst.max(rel_err(gp[k], (up - dn) / (2.0 * h)));
        }
        let mut x = input.to_vec();
        for k in 0..input.len() {
            x[k] = input[k] + h;
            let up = scalar(params, &x);
            x[k] = input[k] - h;
            let dn = scalar(params, &x);
            x[k] = input[k];
            worst = worst.max(rel_err(gx[k], (up - dn) / (2.0 * h)));
        }
        worst
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }
}
