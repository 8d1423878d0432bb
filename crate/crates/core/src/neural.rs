//! Multilayer-perceptron vector field, reverse-mode gradients through the
//! unrolled RK4 solver, and the AdaBelief optimizer.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! row-major (`out x in`) followed by its bias.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{Trajectory, VectorField, DIVERGENCE_LIMIT};
use crate::util::{rng_from_seed, write_atomic};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("forward solve diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("batch item {index} has {points} observations; need at least 2")]
    TooShort { index: usize, points: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => fast_tanh(z),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => 1.0 - (-a).exp(),
        }
    }
}

/// `tanh` through one `exp`; agrees with `f64::tanh` to a few ulps and is
/// markedly cheaper in the training inner loop.
#[inline]
fn fast_tanh(z: f64) -> f64 {
    if z.abs() > 20.0 {
        return z.signum();
    }
    if z.abs() < 1e-3 {
        let z2 = z * z;
        return z * (1.0 - z2 / 3.0 + 2.0 * z2 * z2 / 15.0);
    }
    let e = (2.0 * z).exp();
    (e - 1.0) / (e + 1.0)
}

/// Layer shapes, activation and the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub flat: Vec<f64>,
}

impl MlpParams {
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(layer_dims: Vec<usize>, activation: Activation) -> Self {
        let n = Self::param_count(&layer_dims);
        Self {
            layer_dims,
            activation,
            flat: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(layer_dims: Vec<usize>, activation: Activation, seed: u64) -> Self {
        let mut p = Self::zeros(layer_dims, activation);
        let mut rng = rng_from_seed(seed);
        let mut off = 0;
        for w in p.layer_dims.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in &mut p.flat[off..off + fan_in * fan_out] {
                *x = rng.random_range(-limit..limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        p
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(NeuralError::Invalid(format!("bad layer dims {:?}", self.layer_dims)));
        }
        let n = Self::param_count(&self.layer_dims);
        if self.flat.len() != n {
            return Err(NeuralError::Invalid(format!(
                "parameter vector has {} entries, dims need {n}",
                self.flat.len()
            )));
        }
        if self.flat.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::Invalid("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    /// Size of the activation record kept per evaluation: the input plus
    /// every hidden layer output.
    fn record_len(&self) -> usize {
        self.layer_dims[..self.layer_dims.len() - 1].iter().sum()
    }

    /// Forward pass writing activations into `record` and the output into `out`.
    fn forward_recorded(&self, x: &[f64], record: &mut [f64], out: &mut [f64]) {
        let dims = &self.layer_dims;
        let last = dims.len() - 2;
        record[..dims[0]].copy_from_slice(x);
        let mut in_off = 0;
        let mut w_off = 0;
        for l in 0..=last {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let b_off = w_off + n_in * n_out;
            let out_off = in_off + n_in;
            for j in 0..n_out {
                let row = &self.flat[w_off + j * n_in..w_off + (j + 1) * n_in];
                let input = &record[in_off..in_off + n_in];
                let mut z = self.flat[b_off + j];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                if l == last {
                    out[j] = z;
                } else {
                    record[out_off + j] = self.activation.apply(z);
                }
            }
            in_off = out_off;
            w_off = b_off + n_out;
        }
    }

    /// Vector-Jacobian product of one recorded evaluation. Accumulates the
    /// parameter gradient into `grad` and writes the input cotangent.
    fn backward_recorded(&self, record: &[f64], out_bar: &[f64], grad: &mut [f64], input_bar: &mut [f64], scratch: &mut Scratch) {
        let dims = &self.layer_dims;
        let n_layers = dims.len() - 1;
        let mut in_off = record.len();
        let mut w_off = self.flat.len();
        scratch.cur.clear();
        scratch.cur.extend_from_slice(out_bar);
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            in_off -= n_in;
            w_off -= n_in * n_out + n_out;
            let b_off = w_off + n_in * n_out;
            let input = &record[in_off..in_off + n_in];
            // `cur` holds d/dz for this layer's pre-activation.
            scratch.prev.clear();
            scratch.prev.resize(n_in, 0.0);
            for j in 0..n_out {
                let zb = scratch.cur[j];
                if zb == 0.0 {
                    continue;
                }
                grad[b_off + j] += zb;
                let row = w_off + j * n_in;
                let g_row = &mut grad[row..row + n_in];
                let w_row = &self.flat[row..row + n_in];
                for ((g, p), (w, a)) in g_row.iter_mut().zip(scratch.prev.iter_mut()).zip(w_row.iter().zip(input)) {
                    *g += zb * a;
                    *p += w * zb;
                }
            }
            if l > 0 {
                for (p, a) in scratch.prev.iter_mut().zip(input) {
                    *p *= self.activation.derivative_from_output(*a);
                }
            }
            std::mem::swap(&mut scratch.cur, &mut scratch.prev);
        }
        input_bar.copy_from_slice(&scratch.cur);
    }
}

#[derive(Default)]
struct Scratch {
    cur: Vec<f64>,
    prev: Vec<f64>,
}

/// Plain network evaluation.
pub fn mlp_forward(params: &MlpParams, y: &[f64]) -> Result<Vec<f64>, NeuralError> {
    params.validate()?;
    if y.len() != params.input_dim() {
        return Err(NeuralError::DimMismatch {
            expected: params.input_dim(),
            got: y.len(),
        });
    }
    let mut record = vec![0.0; params.record_len()];
    let mut out = vec![0.0; params.output_dim()];
    params.forward_recorded(y, &mut record, &mut out);
    Ok(out)
}

/// Fixed affine maps around the network: the field evaluates
/// `out_scale * mlp((y - shift) / in_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub shift: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_scale: Vec<f64>,
}

impl Scaling {
    /// Per-component mean/std of the states and of finite-difference
    /// slopes across the given trajectories.
    pub fn from_data(trajs: &[&Trajectory]) -> Self {
        let dim = trajs.first().map_or(0, |t| t.dim);
        let mut shift = vec![0.0; dim];
        let mut in_scale = vec![1.0; dim];
        let mut out_scale = vec![1.0; dim];
        for k in 0..dim {
            let vals: Vec<f64> = trajs.iter().flat_map(|t| t.component(k)).collect();
            let slopes: Vec<f64> = trajs
                .iter()
                .flat_map(|t| {
                    (1..t.len())
                        .map(|i| (t.state(i)[k] - t.state(i - 1)[k]) / (t.times[i] - t.times[i - 1]))
                        .collect::<Vec<_>>()
                })
                .collect();
            let (m, s) = crate::util::mean_std(&vals);
            shift[k] = m;
            in_scale[k] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
            let rms = (slopes.iter().map(|d| d * d).sum::<f64>() / slopes.len().max(1) as f64).sqrt();
            out_scale[k] = if rms > 0.0 && rms.is_finite() { rms } else { 1.0 };
        }
        Self {
            shift,
            in_scale,
            out_scale,
        }
    }
}

/// The learned right-hand side `dy/dt = f(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField {
    pub mlp: MlpParams,
    pub scaling: Option<Scaling>,
}

impl NeuralField {
    pub fn new(mlp: MlpParams) -> Self {
        Self { mlp, scaling: None }
    }

    pub fn with_scaling(mut self, scaling: Option<Scaling>) -> Self {
        self.scaling = scaling;
        self
    }

    fn eval_recorded(&self, y: &[f64], record: &mut [f64], out: &mut [f64], x: &mut [f64]) {
        match &self.scaling {
            Some(s) => {
                for k in 0..y.len() {
                    x[k] = (y[k] - s.shift[k]) / s.in_scale[k];
                }
                self.mlp.forward_recorded(x, record, out);
                for k in 0..out.len() {
                    out[k] *= s.out_scale[k];
                }
            }
            None => self.mlp.forward_recorded(y, record, out),
        }
    }

    fn backward(&self, record: &[f64], out_bar: &[f64], grad: &mut [f64], y_bar: &mut [f64], ws: &mut Workspace) {
        match &self.scaling {
            Some(s) => {
                for k in 0..out_bar.len() {
                    ws.scaled_bar[k] = out_bar[k] * s.out_scale[k];
                }
                let scaled = std::mem::take(&mut ws.scaled_bar);
                self.mlp.backward_recorded(record, &scaled, grad, y_bar, &mut ws.scratch);
                ws.scaled_bar = scaled;
                for k in 0..y_bar.len() {
                    y_bar[k] /= s.in_scale[k];
                }
            }
            None => self.mlp.backward_recorded(record, out_bar, grad, y_bar, &mut ws.scratch),
        }
    }
}

impl VectorField for NeuralField {
    fn dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let mut record = vec![0.0; self.mlp.record_len()];
        let mut x = vec![0.0; y.len()];
        self.eval_recorded(y, &mut record, dydt, &mut x);
    }
}

/// One training series: the state the prediction starts from and the
/// observations it is compared with.
#[derive(Debug, Clone, Copy)]
pub struct Observed<'a> {
    pub y0: &'a [f64],
    pub traj: &'a Trajectory,
}

impl<'a> Observed<'a> {
    /// Prediction starts from the first observation.
    pub fn from_first(traj: &'a Trajectory) -> Self {
        Self {
            y0: traj.state(0),
            traj,
        }
    }
}

struct Workspace {
    scratch: Scratch,
    scaled_bar: Vec<f64>,
    x: Vec<f64>,
    tmp: Vec<f64>,
    k: [Vec<f64>; 4],
    kbar: [Vec<f64>; 4],
    ubar: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            scratch: Scratch::default(),
            scaled_bar: vec![0.0; dim],
            x: vec![0.0; dim],
            tmp: vec![0.0; dim],
            k: std::array::from_fn(|_| vec![0.0; dim]),
            kbar: std::array::from_fn(|_| vec![0.0; dim]),
            ubar: vec![0.0; dim],
        }
    }
}

/// Recorded primal computation of one unrolled RK4 solve: activations of
/// all four stages of every step, plus the predictions at observation times.
pub struct GradTape {
    record_len: usize,
    records: Vec<f64>,
    step_sizes: Vec<f64>,
    substeps: usize,
    predictions: Vec<f64>,
}

impl GradTape {
    fn stage(&self, step: usize, stage: usize) -> &[f64] {
        let off = (step * 4 + stage) * self.record_len;
        &self.records[off..off + self.record_len]
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }
}

fn forward_tape(field: &NeuralField, item: &Observed, substeps: usize, ws: &mut Workspace) -> Result<GradTape, NeuralError> {
    let traj = item.traj;
    let dim = traj.dim;
    let rl = field.mlp.record_len();
    let n_steps = (traj.len() - 1) * substeps;
    let mut tape = GradTape {
        record_len: rl,
        records: vec![0.0; n_steps * 4 * rl],
        step_sizes: Vec::with_capacity(traj.len() - 1),
        substeps,
        predictions: Vec::with_capacity(traj.len() * dim),
    };
    let mut y = item.y0.to_vec();
    tape.predictions.extend_from_slice(&y);
    let mut step = 0;
    for w in traj.times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        tape.step_sizes.push(h);
        for s in 0..substeps {
            let coeffs = [0.0, 0.5, 0.5, 1.0];
            for stage in 0..4 {
                if stage == 0 {
                    ws.tmp.copy_from_slice(&y);
                } else {
                    let c = coeffs[stage] * h;
                    for k in 0..dim {
                        ws.tmp[k] = y[k] + c * ws.k[stage - 1][k];
                    }
                }
                let off = (step * 4 + stage) * rl;
                let (k_all, rest) = (&mut ws.k, &mut ws.x);
                field.eval_recorded(&ws.tmp, &mut tape.records[off..off + rl], &mut k_all[stage], rest);
            }
            for k in 0..dim {
                y[k] += h / 6.0 * (ws.k[0][k] + 2.0 * ws.k[1][k] + 2.0 * ws.k[2][k] + ws.k[3][k]);
            }
            if y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(NeuralError::Divergence {
                    t: w[0] + (s + 1) as f64 * h,
                });
            }
            step += 1;
        }
        tape.predictions.extend_from_slice(&y);
    }
    Ok(tape)
}

/// Sum of squared errors and its gradient for one series.
fn item_sse_grad(field: &NeuralField, item: &Observed, substeps: usize) -> Result<(f64, Vec<f64>), NeuralError> {
    let traj = item.traj;
    let dim = traj.dim;
    let mut ws = Workspace::new(dim);
    let tape = forward_tape(field, item, substeps, &mut ws)?;
    let mut grad = vec![0.0; field.mlp.flat.len()];
    let mut sse = 0.0;
    for (p, o) in tape.predictions.iter().zip(&traj.states) {
        sse += (p - o) * (p - o);
    }
    let mut abar = vec![0.0; dim];
    let mut ybar = vec![0.0; dim];
    for i in (1..traj.len()).rev() {
        for k in 0..dim {
            abar[k] += 2.0 * (tape.predictions[i * dim + k] - traj.states[i * dim + k]);
        }
        let h = tape.step_sizes[i - 1];
        for s in (0..tape.substeps).rev() {
            let step = (i - 1) * tape.substeps + s;
            // Reverse of y1 = y0 + h/6 (k1 + 2 k2 + 2 k3 + k4).
            ybar.copy_from_slice(&abar);
            for k in 0..dim {
                ws.kbar[0][k] = h / 6.0 * abar[k];
                ws.kbar[1][k] = h / 3.0 * abar[k];
                ws.kbar[2][k] = h / 3.0 * abar[k];
                ws.kbar[3][k] = h / 6.0 * abar[k];
            }
            let feed = [0.0, 0.5 * h, 0.5 * h, h];
            for stage in (0..4).rev() {
                let kb = std::mem::take(&mut ws.kbar[stage]);
                let mut ub = std::mem::take(&mut ws.ubar);
                field.backward(tape.stage(step, stage), &kb, &mut grad, &mut ub, &mut ws);
                for k in 0..dim {
                    ybar[k] += ub[k];
                    if stage > 0 {
                        ws.kbar[stage - 1][k] += feed[stage] * ub[k];
                    }
                }
                ws.kbar[stage] = kb;
                ws.ubar = ub;
            }
            abar.copy_from_slice(&ybar);
        }
    }
    Ok((sse, grad))
}

/// Mean squared error between observations and RK4-integrated predictions
/// (`substeps` internal steps per observation interval), with its gradient
/// with respect to the flat network parameters. Items are evaluated in
/// parallel and reduced in index order.
pub fn loss_and_grad(field: &NeuralField, batch: &[Observed], substeps: usize) -> Result<(f64, Vec<f64>), NeuralError> {
    field.mlp.validate()?;
    let dim = field.mlp.input_dim();
    if field.mlp.output_dim() != dim {
        return Err(NeuralError::DimMismatch {
            expected: dim,
            got: field.mlp.output_dim(),
        });
    }
    let mut count = 0usize;
    for (index, item) in batch.iter().enumerate() {
        if item.traj.dim != dim || item.y0.len() != dim {
            return Err(NeuralError::DimMismatch {
                expected: dim,
                got: item.traj.dim,
            });
        }
        if item.traj.len() < 2 {
            return Err(NeuralError::TooShort {
                index,
                points: item.traj.len(),
            });
        }
        count += item.traj.len() * dim;
    }
    if batch.is_empty() {
        return Err(NeuralError::Invalid("empty batch".into()));
    }
    let substeps = substeps.max(1);
    let parts: Vec<Result<(f64, Vec<f64>), NeuralError>> =
        batch.par_iter().map(|item| item_sse_grad(field, item, substeps)).collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; field.mlp.flat.len()];
    for part in parts {
        let (sse, g) = part?;
        total += sse;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = count as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Loss only (no tape kept beyond the forward pass).
pub fn loss(field: &NeuralField, batch: &[Observed], substeps: usize) -> Result<f64, NeuralError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for item in batch {
        let mut ws = Workspace::new(item.traj.dim);
        let tape = forward_tape(field, item, substeps.max(1), &mut ws)?;
        total += tape
            .predictions
            .iter()
            .zip(&item.traj.states)
            .map(|(p, o)| (p - o) * (p - o))
            .sum::<f64>();
        count += item.traj.states.len();
    }
    Ok(total / count.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBeliefHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdaBeliefHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    pub hyper: AdaBeliefHyper,
}

impl OptimizerState {
    pub fn new(n: usize, hyper: AdaBeliefHyper) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            s: vec![0.0; n],
            hyper,
        }
    }
}

/// One AdaBelief update, in place.
pub fn adabelief_step(state: &mut OptimizerState, params: &mut [f64], grad: &[f64]) {
    assert_eq!(params.len(), grad.len(), "parameter/gradient length mismatch");
    assert_eq!(state.m.len(), params.len(), "optimizer state length mismatch");
    let AdaBeliefHyper { lr, beta1, beta2, eps } = state.hyper;
    state.step += 1;
    let bc1 = 1.0 - beta1.powf(state.step as f64);
    let bc2 = 1.0 - beta2.powf(state.step as f64);
    for i in 0..params.len() {
        let g = grad[i];
        let m = beta1 * state.m[i] + (1.0 - beta1) * g;
        let d = g - m;
        let s = beta2 * state.s[i] + (1.0 - beta2) * d * d;
        state.m[i] = m;
        state.s[i] = s;
        let m_hat = m / bc1;
        let s_hat = s / bc2;
        params[i] -= lr * m_hat / (s_hat.sqrt() + eps);
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DYNCKPT1";

/// Metadata stored in front of the parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub step: u64,
    pub hyper: AdaBeliefHyper,
    pub n_params: usize,
    #[serde(default)]
    pub scaling: Option<Scaling>,
    /// Whether optimizer moments follow the parameter block.
    #[serde(default)]
    pub has_moments: bool,
    #[serde(default)]
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
    pub moments: Option<(Vec<f64>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_field(field: &NeuralField, opt: &OptimizerState, config_hash: &str, with_moments: bool) -> Self {
        Self {
            header: CheckpointHeader {
                layer_dims: field.mlp.layer_dims.clone(),
                activation: field.mlp.activation,
                step: opt.step,
                hyper: opt.hyper,
                n_params: field.mlp.flat.len(),
                scaling: field.scaling.clone(),
                has_moments: with_moments,
                config_hash: config_hash.to_string(),
            },
            params: field.mlp.flat.clone(),
            moments: with_moments.then(|| (opt.m.clone(), opt.s.clone())),
        }
    }

    pub fn field(&self) -> NeuralField {
        NeuralField {
            mlp: MlpParams {
                layer_dims: self.header.layer_dims.clone(),
                activation: self.header.activation,
                flat: self.params.clone(),
            },
            scaling: self.header.scaling.clone(),
        }
    }

    /// `magic | u64 header length | header JSON | f64 LE params [| m | s]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.params.len() * 24);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |v: &[f64]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        put(&self.params);
        if let Some((m, s)) = &self.moments {
            put(m);
            put(s);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |msg: &str| NeuralError::Checkpoint(msg.to_string());
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
        let len = u64::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&r[..len]).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        r = &r[len..];
        let n = header.n_params;
        let blocks = if header.has_moments { 3 } else { 1 };
        if r.len() != n * 8 * blocks {
            return Err(bad("parameter block has the wrong size"));
        }
        let read = |chunk: &[u8]| -> Vec<f64> {
            chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        };
        let params = read(&r[..n * 8]);
        let moments = header
            .has_moments
            .then(|| (read(&r[n * 8..2 * n * 8]), read(&r[2 * n * 8..])));
        if MlpParams::param_count(&header.layer_dims) != n {
            return Err(bad("layer dims disagree with parameter count"));
        }
        Ok(Self { header, params, moments })
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        write_atomic(path, &self.to_bytes()).map_err(|source| NeuralError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| NeuralError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_bytes(&bytes)
    }
}
