//! Feed-forward stochastic policy with a value head.
//!
//! Two tanh hidden layers feed a softmax action head and a scalar value
//! head. Bernoulli dropout masks can be applied to both hidden layers using
//! inverted scaling, so a maskless pass is the no-dropout expectation.
//! Gradients are exact manual reverse-mode; tests pin them against central
//! finite differences.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

/// Layer widths: input -> h1 -> h2 -> {actions, value}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSizes {
    pub input: usize,
    pub h1: usize,
    pub h2: usize,
    pub actions: usize,
}

impl LayerSizes {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.input == 0 || self.h1 == 0 || self.h2 == 0 || self.actions == 0 {
            return Err(NetError::Config(format!("layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Total parameter count across weights and biases of all four heads.
    pub fn param_count(&self) -> usize {
        self.input * self.h1
            + self.h1
            + self.h1 * self.h2
            + self.h2
            + self.h2 * self.actions
            + self.actions
            + self.h2
            + 1
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// y = W x
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *out = acc;
        }
    }

    /// y = W^T v
    fn t_matvec(&self, v: &[f64], y: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        y.iter_mut().for_each(|o| *o = 0.0);
        for (r, vv) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in y.iter_mut().zip(row) {
                *o += w * vv;
            }
        }
    }

    /// W += scale * d x^T
    fn add_outer(&mut self, d: &[f64], x: &[f64], scale: f64) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, dv) in d.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let f = dv * scale;
            for (w, xv) in row.iter_mut().zip(x) {
                *w += f * xv;
            }
        }
    }
}

/// All weights and biases of the policy-value network. Also reused as the
/// container for gradients (same shapes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub sizes: LayerSizes,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub b3: Vec<f64>,
    pub w4: Vec<f64>,
    pub b4: f64,
}

impl NetworkParams {
    pub fn zeros(sizes: LayerSizes) -> Result<Self, NetError> {
        sizes.validate()?;
        Ok(Self {
            sizes,
            w1: Mat::zeros(sizes.h1, sizes.input),
            b1: vec![0.0; sizes.h1],
            w2: Mat::zeros(sizes.h2, sizes.h1),
            b2: vec![0.0; sizes.h2],
            w3: Mat::zeros(sizes.actions, sizes.h2),
            b3: vec![0.0; sizes.actions],
            w4: vec![0.0; sizes.h2],
            b4: 0.0,
        })
    }

    pub fn n_params(&self) -> usize {
        self.sizes.param_count()
    }

    /// Flatten in a fixed order: w1, b1, w2, b2, w3, b3, w4, b4.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(&self.w1.data);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2.data);
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(&self.w3.data);
        out.extend_from_slice(&self.b3);
        out.extend_from_slice(&self.w4);
        out.push(self.b4);
        out
    }

    /// Inverse of [`flatten`]; `flat` must have the matching length.
    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut i = 0;
        let mut take = |dst: &mut [f64], i: &mut usize| {
            dst.copy_from_slice(&flat[*i..*i + dst.len()]);
            *i += dst.len();
        };
        take(&mut self.w1.data, &mut i);
        take(&mut self.b1, &mut i);
        take(&mut self.w2.data, &mut i);
        take(&mut self.b2, &mut i);
        take(&mut self.w3.data, &mut i);
        take(&mut self.b3, &mut i);
        take(&mut self.w4, &mut i);
        self.b4 = flat[i];
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum()
    }
}

/// Weights drawn uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
pub fn init_params(sizes: LayerSizes, rng: &mut ChaCha12Rng) -> Result<NetworkParams, NetError> {
    let mut p = NetworkParams::zeros(sizes)?;
    let mut fill = |m: &mut Mat, fan_in: usize, rng: &mut ChaCha12Rng| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        for w in &mut m.data {
            *w = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
        }
    };
    fill(&mut p.w1, sizes.input, rng);
    fill(&mut p.w2, sizes.h1, rng);
    fill(&mut p.w3, sizes.h2, rng);
    let scale = 1.0 / (sizes.h2 as f64).sqrt();
    for w in &mut p.w4 {
        *w = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
    }
    Ok(p)
}

/// Bernoulli keep/drop indicators for both hidden layers, with the inverted
/// dropout scale baked in at sampling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutMask {
    pub keep1: Vec<f64>,
    pub keep2: Vec<f64>,
    pub scale: f64,
}

impl DropoutMask {
    /// Mask keeping every unit (identity pass).
    pub fn ones(h1: usize, h2: usize) -> Self {
        Self { keep1: vec![1.0; h1], keep2: vec![1.0; h2], scale: 1.0 }
    }

    /// Build from explicit keep indicators (each 0.0 or 1.0).
    pub fn from_parts(keep1: Vec<f64>, keep2: Vec<f64>, p_drop: f64) -> Self {
        Self { keep1, keep2, scale: 1.0 / (1.0 - p_drop) }
    }
}

/// Each unit is dropped independently with probability `p_drop`.
pub fn sample_mask(
    h1: usize,
    h2: usize,
    p_drop: f64,
    rng: &mut ChaCha12Rng,
) -> Result<DropoutMask, NetError> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(NetError::Config(format!("p_drop must be in [0, 1), got {p_drop}")));
    }
    let mut draw = |n: usize, rng: &mut ChaCha12Rng| {
        (0..n)
            .map(|_| if rng.gen::<f64>() < p_drop { 0.0 } else { 1.0 })
            .collect::<Vec<f64>>()
    };
    let keep1 = draw(h1, rng);
    let keep2 = draw(h2, rng);
    Ok(DropoutMask { keep1, keep2, scale: 1.0 / (1.0 - p_drop) })
}

/// Probabilities over the discrete action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, NetError> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(NetError::NonFinite("action probabilities".to_string()));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(NetError::Config(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    /// Empirical frequency distribution of a list of action indices.
    pub fn from_counts(actions: &[usize], n_actions: usize) -> Self {
        assert!(!actions.is_empty(), "from_counts needs at least one action");
        let mut probs = vec![0.0; n_actions];
        let w = 1.0 / actions.len() as f64;
        for &a in actions {
            probs[a] += w;
        }
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Natural-log entropy with 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
            .sum::<f64>()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Categorical sample consuming exactly one uniform draw.
    pub fn sample(&self, rng: &mut ChaCha12Rng) -> usize {
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub action_probs: ActionDistribution,
    pub value: f64,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub x: Vec<f64>,
    pub a1: Vec<f64>,
    pub a1m: Vec<f64>,
    pub a2: Vec<f64>,
    pub a2m: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn forward_cached(
    params: &NetworkParams,
    state: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<ForwardCache, NetError> {
    let s = params.sizes;
    if state.len() != s.input {
        return Err(NetError::DimMismatch(format!(
            "state length {} vs input size {}",
            state.len(),
            s.input
        )));
    }
    if let Some(m) = mask {
        if m.keep1.len() != s.h1 || m.keep2.len() != s.h2 {
            return Err(NetError::DimMismatch("dropout mask size".to_string()));
        }
    }

    let mut z1 = vec![0.0; s.h1];
    params.w1.matvec(state, &mut z1);
    for (z, b) in z1.iter_mut().zip(&params.b1) {
        *z += b;
    }
    let a1: Vec<f64> = z1.iter().map(|z| z.tanh()).collect();
    let a1m: Vec<f64> = match mask {
        Some(m) => a1.iter().zip(&m.keep1).map(|(a, k)| a * k * m.scale).collect(),
        None => a1.clone(),
    };

    let mut z2 = vec![0.0; s.h2];
    params.w2.matvec(&a1m, &mut z2);
    for (z, b) in z2.iter_mut().zip(&params.b2) {
        *z += b;
    }
    let a2: Vec<f64> = z2.iter().map(|z| z.tanh()).collect();
    let a2m: Vec<f64> = match mask {
        Some(m) => a2.iter().zip(&m.keep2).map(|(a, k)| a * k * m.scale).collect(),
        None => a2.clone(),
    };

    let mut logits = vec![0.0; s.actions];
    params.w3.matvec(&a2m, &mut logits);
    for (z, b) in logits.iter_mut().zip(&params.b3) {
        *z += b;
    }
    let probs = softmax(&logits);

    let mut value = params.b4;
    for (w, a) in params.w4.iter().zip(&a2m) {
        value += w * a;
    }

    Ok(ForwardCache { x: state.to_vec(), a1, a1m, a2, a2m, probs, value })
}

/// Forward pass. With a mask, hidden activations are multiplied elementwise
/// by the keep indicators and rescaled (inverted dropout); without one the
/// pass is deterministic.
pub fn forward(
    params: &NetworkParams,
    state: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<ForwardOutput, NetError> {
    let cache = forward_cached(params, state, mask)?;
    Ok(ForwardOutput {
        action_probs: ActionDistribution { probs: cache.probs },
        value: cache.value,
    })
}

/// Accumulate parameter gradients for one sample given the gradients of the
/// scalar objective with respect to the logits and the value output.
pub(crate) fn backward_sample(
    params: &NetworkParams,
    cache: &ForwardCache,
    mask: Option<&DropoutMask>,
    d_logits: &[f64],
    d_value: f64,
    grads: &mut NetworkParams,
) {
    let s = params.sizes;
    debug_assert_eq!(d_logits.len(), s.actions);

    grads.w3.add_outer(d_logits, &cache.a2m, 1.0);
    for (g, d) in grads.b3.iter_mut().zip(d_logits) {
        *g += d;
    }
    for (g, a) in grads.w4.iter_mut().zip(&cache.a2m) {
        *g += d_value * a;
    }
    grads.b4 += d_value;

    let mut da2m = vec![0.0; s.h2];
    params.w3.t_matvec(d_logits, &mut da2m);
    for (d, w) in da2m.iter_mut().zip(&params.w4) {
        *d += d_value * w;
    }
    let dz2: Vec<f64> = match mask {
        Some(m) => da2m
            .iter()
            .zip(&m.keep2)
            .zip(&cache.a2)
            .map(|((d, k), a)| d * k * m.scale * (1.0 - a * a))
            .collect(),
        None => da2m.iter().zip(&cache.a2).map(|(d, a)| d * (1.0 - a * a)).collect(),
    };

    grads.w2.add_outer(&dz2, &cache.a1m, 1.0);
    for (g, d) in grads.b2.iter_mut().zip(&dz2) {
        *g += d;
    }

    let mut da1m = vec![0.0; s.h1];
    params.w2.t_matvec(&dz2, &mut da1m);
    let dz1: Vec<f64> = match mask {
        Some(m) => da1m
            .iter()
            .zip(&m.keep1)
            .zip(&cache.a1)
            .map(|((d, k), a)| d * k * m.scale * (1.0 - a * a))
            .collect(),
        None => da1m.iter().zip(&cache.a1).map(|(d, a)| d * (1.0 - a * a)).collect(),
    };

    grads.w1.add_outer(&dz1, &cache.x, 1.0);
    for (g, d) in grads.b1.iter_mut().zip(&dz1) {
        *g += d;
    }
}
