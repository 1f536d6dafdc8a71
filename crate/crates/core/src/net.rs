//! Two-layer policy network (ReLU hidden layer, softmax over the two actions)
//! trained with categorical cross-entropy and Adam.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_HIDDEN: usize = 300;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
const LOG_FLOOR: f64 = 1e-12;

/// Network weights, also used for gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    /// `hidden × obs_dim`, row-major.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `2 × hidden`, row-major.
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Real> Params<T> {
    fn zeros(obs_dim: usize, hidden: usize) -> Self {
        Params {
            w1: vec![T::zero(); hidden * obs_dim],
            b1: vec![T::zero(); hidden],
            w2: vec![T::zero(); 2 * hidden],
            b2: vec![T::zero(); 2],
        }
    }

    fn tensors(&self) -> [&Vec<T>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<T>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub t: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Observations (row-major, one row per sample) with one-hot action targets.
#[derive(Clone, Debug, Default)]
pub struct TrainBatch<T> {
    obs_dim: usize,
    inputs: Vec<T>,
    targets: Vec<[T; 2]>,
}

impl<T: Real> TrainBatch<T> {
    pub fn new(obs_dim: usize) -> Self {
        TrainBatch { obs_dim, inputs: Vec::new(), targets: Vec::new() }
    }

    pub fn push(&mut self, obs: &[T], action: Action) -> Result<()> {
        let mut y = [T::zero(); 2];
        y[action.index()] = T::one();
        self.push_target(obs, y)
    }

    pub fn push_target(&mut self, obs: &[T], target: [T; 2]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.obs_dim, got: obs.len() });
        }
        self.inputs.extend_from_slice(obs);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.inputs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn target(&self, i: usize) -> [T; 2] {
        self.targets[i]
    }

    /// Copy of the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = TrainBatch::new(self.obs_dim);
        for &r in rows {
            out.inputs.extend_from_slice(self.row(r));
            out.targets.push(self.targets[r]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork<T> {
    obs_dim: usize,
    hidden: usize,
    seed: u64,
    params: Params<T>,
    adam: AdamState<T>,
    adam_config: AdamConfig,
}

impl<T: Real> PolicyNetwork<T> {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(obs_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(obs_dim, hidden);
        let l1 = (6.0 / (obs_dim + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + 2) as f64).sqrt();
        for w in params.w1.iter_mut() {
            *w = T::lit(rng.random_range(-l1..l1));
        }
        for w in params.w2.iter_mut() {
            *w = T::lit(rng.random_range(-l2..l2));
        }
        PolicyNetwork {
            obs_dim,
            hidden,
            seed,
            adam: AdamState { m: Params::zeros(obs_dim, hidden), v: Params::zeros(obs_dim, hidden), t: 0 },
            params,
            adam_config: AdamConfig::default(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    fn hidden_activations(&self, obs: &[T], out: &mut Vec<T>) {
        out.clear();
        let n = self.obs_dim;
        for h in 0..self.hidden {
            let row = &self.params.w1[h * n..(h + 1) * n];
            let mut a = self.params.b1[h];
            for (w, x) in row.iter().zip(obs) {
                a += *w * *x;
            }
            out.push(a.max(T::zero()));
        }
    }

    fn logits(&self, hidden: &[T]) -> [T; 2] {
        let mut z = [self.params.b2[0], self.params.b2[1]];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.params.w2[o * self.hidden..(o + 1) * self.hidden];
            for (w, h) in row.iter().zip(hidden) {
                *zo += *w * *h;
            }
        }
        z
    }

    /// `softmax(W2 · relu(W1 · obs + b1) + b2)`; index 0 is `Kick`.
    pub fn forward(&self, obs: &[T]) -> Result<[T; 2]> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.obs_dim, got: obs.len() });
        }
        let mut h = Vec::with_capacity(self.hidden);
        self.hidden_activations(obs, &mut h);
        Ok(softmax(self.logits(&h)))
    }

    /// Samples `Kick` with the network's probability, or `GoOn` when kicks are masked.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &Observation<T>, kick_allowed: bool, rng: &mut R) -> Result<Action> {
        let p = self.forward(obs.as_slice())?;
        Ok(sample_from(p, kick_allowed, rng))
    }

    /// Mean categorical cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(&self, batch: &TrainBatch<T>) -> Result<(T, Params<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if batch.obs_dim != self.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.obs_dim, got: batch.obs_dim });
        }
        let n = self.obs_dim;
        let inv = T::one() / T::lit(batch.len() as f64);
        let floor = T::lit(LOG_FLOOR);
        let mut grad = Params::zeros(n, self.hidden);
        let mut loss = T::zero();
        let mut h = Vec::with_capacity(self.hidden);
        let mut dh = vec![T::zero(); self.hidden];
        for i in 0..batch.len() {
            let x = batch.row(i);
            let y = batch.target(i);
            self.hidden_activations(x, &mut h);
            let p = softmax(self.logits(&h));
            loss -= y[0] * p[0].max(floor).ln() + y[1] * p[1].max(floor).ln();
            let ysum = y[0] + y[1];
            let dz = [(p[0] * ysum - y[0]) * inv, (p[1] * ysum - y[1]) * inv];
            for o in 0..2 {
                grad.b2[o] += dz[o];
                let row = &mut grad.w2[o * self.hidden..(o + 1) * self.hidden];
                for (g, hv) in row.iter_mut().zip(&h) {
                    *g += dz[o] * *hv;
                }
            }
            for k in 0..self.hidden {
                dh[k] = if h[k] > T::zero() {
                    dz[0] * self.params.w2[k] + dz[1] * self.params.w2[self.hidden + k]
                } else {
                    T::zero()
                };
            }
            for k in 0..self.hidden {
                let d = dh[k];
                if d == T::zero() {
                    continue;
                }
                grad.b1[k] += d;
                let row = &mut grad.w1[k * n..(k + 1) * n];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += d * *xv;
                }
            }
        }
        Ok((loss * inv, grad))
    }

    /// One Adam update on the batch; returns the loss before the update.
    pub fn train_step(&mut self, batch: &TrainBatch<T>, lr: f64) -> Result<T> {
        let (loss, grad) = self.loss_and_gradient(batch)?;
        self.apply_adam(&grad, lr);
        Ok(loss)
    }

    fn apply_adam(&mut self, grad: &Params<T>, lr: f64) {
        let cfg = self.adam_config;
        self.adam.t += 1;
        let t = self.adam.t as i32;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let c1 = T::one() / (T::one() - T::lit(cfg.beta1.powi(t)));
        let c2 = T::one() / (T::one() - T::lit(cfg.beta2.powi(t)));
        let (lr, eps) = (T::lit(lr), T::lit(cfg.eps));
        let params = self.params.tensors_mut();
        let ms = self.adam.m.tensors_mut();
        let vs = self.adam.v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grad.tensors()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] * c1;
                let vhat = v[i] * c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Text checkpoint: a header, then each tensor as `tensor <name> <shape…>`
    /// followed by its values, one row per line, in shortest exact decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qkick-policy-network 1");
        let _ = writeln!(out, "obs_dim {}", self.obs_dim);
        let _ = writeln!(out, "hidden {}", self.hidden);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "adam_t {}", self.adam.t);
        let groups: [(&str, &Params<T>); 3] = [("", &self.params), ("adam_m_", &self.adam.m), ("adam_v_", &self.adam.v)];
        for (prefix, p) in groups {
            write_tensor(&mut out, &format!("{prefix}w1"), &p.w1, Some(self.obs_dim));
            write_tensor(&mut out, &format!("{prefix}b1"), &p.b1, None);
            write_tensor(&mut out, &format!("{prefix}w2"), &p.w2, Some(self.hidden));
            write_tensor(&mut out, &format!("{prefix}b2"), &p.b2, None);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = || lines.next().ok_or_else(|| Error::Parse("unexpected end of checkpoint".into()));
        if next()?.trim() != "qkick-policy-network 1" {
            return Err(Error::Parse("not a policy-network checkpoint".into()));
        }
        let obs_dim: usize = header_value(next()?, "obs_dim")?;
        let hidden: usize = header_value(next()?, "hidden")?;
        let seed: u64 = header_value(next()?, "seed")?;
        let adam_t: u64 = header_value(next()?, "adam_t")?;
        let mut net = PolicyNetwork::new(obs_dim, hidden, seed);
        net.adam.t = adam_t;
        for prefix in ["", "adam_m_", "adam_v_"] {
            let mut p = Params::zeros(obs_dim, hidden);
            read_tensor(&mut next, &format!("{prefix}w1"), &mut p.w1, &[hidden, obs_dim])?;
            read_tensor(&mut next, &format!("{prefix}b1"), &mut p.b1, &[hidden])?;
            read_tensor(&mut next, &format!("{prefix}w2"), &mut p.w2, &[2, hidden])?;
            read_tensor(&mut next, &format!("{prefix}b2"), &mut p.b2, &[2])?;
            match prefix {
                "" => net.params = p,
                "adam_m_" => net.adam.m = p,
                _ => net.adam.v = p,
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub fn softmax<T: Real>(z: [T; 2]) -> [T; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Draws an action from `(p_kick, p_go_on)`; masked kicks always yield `GoOn`.
pub fn sample_from<T: Real, R: Rng + ?Sized>(p: [T; 2], kick_allowed: bool, rng: &mut R) -> Action {
    if !kick_allowed {
        return Action::GoOn;
    }
    let u: f64 = rng.random();
    if u < p[0].to_f64_lossy() {
        Action::Kick
    } else {
        Action::GoOn
    }
}

fn write_tensor<T: Real>(out: &mut String, name: &str, values: &[T], row_len: Option<usize>) {
    match row_len {
        Some(cols) => {
            let _ = writeln!(out, "tensor {name} {} {cols}", values.len() / cols.max(1));
            for row in values.chunks(cols.max(1)) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        None => {
            let _ = writeln!(out, "tensor {name} {}", values.len());
            let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
}

fn header_value<V: std::str::FromStr>(line: &str, key: &str) -> Result<V> {
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(Error::Parse(format!("expected '{key}', found '{line}'")));
    }
    it.next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad value for '{key}'")))
}

fn read_tensor<'a, T: Real>(
    next: &mut impl FnMut() -> Result<&'a str>,
    name: &str,
    dst: &mut [T],
    shape: &[usize],
) -> Result<()> {
    let header = next()?;
    let mut it = header.split_whitespace();
    if it.next() != Some("tensor") || it.next() != Some(name) {
        return Err(Error::Parse(format!("expected tensor '{name}', found '{header}'")));
    }
    let dims: Vec<usize> = it.map(|s| s.parse().map_err(|_| Error::Parse(format!("bad shape in '{header}'")))).collect::<Result<_>>()?;
    if dims != shape {
        return Err(Error::Parse(format!("tensor '{name}' has shape {dims:?}, expected {shape:?}")));
    }
    let rows = if shape.len() == 2 { shape[0] } else { 1 };
    let mut filled = 0;
    for _ in 0..rows {
        for tok in next()?.split_whitespace() {
            if filled >= dst.len() {
                return Err(Error::Parse(format!("tensor '{name}' has too many values")));
            }
            dst[filled] = tok.parse::<T>().map_err(|_| Error::Parse(format!("bad number '{tok}' in '{name}'")))?;
            filled += 1;
        }
    }
    if filled != dst.len() {
        return Err(Error::Parse(format!("tensor '{name}' has {filled} values, expected {}", dst.len())));
    }
    Ok(())
}
