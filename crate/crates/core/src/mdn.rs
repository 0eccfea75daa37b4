//! Feed-forward mixture density network with analytic gradients and Adam.
//!
//! Architecture: dense ReLU hidden layers followed by three linear heads that
//! parameterize a diagonal Gaussian mixture:
//!
//! * π head, `k` logits passed through a softmax;
//! * μ head, `k·d` unconstrained means (component-major);
//! * σ head, `k·d` pre-activations mapped through `ELU(x) + 1 + 1e-7`.
//!
//! All parameters live in one flat `Vec<f64>`; [`MdnModel::layers`] documents
//! the layout (hidden layers in order, then the π, μ and σ heads; each layer
//! stores its `input × output` weight matrix row-major followed by its bias).

use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{invalid, Error, Result};
use crate::gmm::{GaussianComponent, Mixture};
use crate::seed::derive_seed;

/// Offset added after `ELU(x) + 1` so σ stays strictly positive.
pub const SIGMA_EPS: f64 = 1e-7;

const HEAD_INIT_SCALE: f64 = 0.1;
/// Relative jitter when other components copy the first one's head weights.
const HEAD_COPY_JITTER: f64 = 0.1;
const SIGMA_FLOOR_INIT: f64 = 1e-3;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub const CHECKPOINT_FORMAT: &str = "mixmode-mdn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub n_components: usize,
    pub hidden_widths: Vec<usize>,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl MdnConfig {
    /// Three hidden layers of 64 units, Adam at 1e-3, batches of 100, 1000 epochs.
    pub fn new(input_dim: usize, output_dim: usize, n_components: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            n_components,
            hidden_widths: vec![64, 64, 64],
            seed: 0,
            learning_rate: 1e-3,
            batch_size: 100,
            epochs: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(invalid("input and output dimensions must be positive"));
        }
        if self.n_components == 0 {
            return Err(invalid("an MDN needs at least one component"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(invalid("hidden_widths must be non-empty and positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        Ok(())
    }
}

/// Position of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    fn end(&self) -> usize {
        self.bias_offset + self.output
    }
}

fn build_layout(cfg: &MdnConfig) -> Vec<LayerShape> {
    let k = cfg.n_components;
    let kd = k * cfg.output_dim;
    let mut shapes = Vec::new();
    let push = |name: String, input: usize, output: usize, shapes: &mut Vec<LayerShape>| {
        let start = shapes.last().map(LayerShape::end).unwrap_or(0);
        shapes.push(LayerShape {
            name,
            input,
            output,
            weight_offset: start,
            bias_offset: start + input * output,
        });
    };
    let mut width = cfg.input_dim;
    for (i, &h) in cfg.hidden_widths.iter().enumerate() {
        push(format!("hidden_{i}"), width, h, &mut shapes);
        width = h;
    }
    push("pi_head".into(), width, k, &mut shapes);
    push("mu_head".into(), width, kd, &mut shapes);
    push("sigma_head".into(), width, kd, &mut shapes);
    shapes
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// `ELU(x) + 1 + 1e-7`.
pub fn sigma_transform(pre: f64) -> f64 {
    elu(pre) + 1.0 + SIGMA_EPS
}

// exp that returns 0 instead of a subnormal; subnormal arithmetic is
// orders of magnitude slower and those terms are below any useful precision
fn flushed_exp(x: f64) -> f64 {
    if x < -700.0 {
        0.0
    } else {
        x.exp()
    }
}

/// Inverse of [`sigma_transform`] for `sigma > SIGMA_EPS`.
pub fn sigma_transform_inverse(sigma: f64) -> f64 {
    let v = sigma - 1.0 - SIGMA_EPS;
    if v >= 0.0 {
        v
    } else {
        (v + 1.0).ln()
    }
}

fn sigma_transform_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        pre.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdnModel {
    config: MdnConfig,
    layout: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Activations kept from a batch forward pass for backpropagation.
struct ForwardCache {
    // inputs to each layer: [x, h_0, ..., h_last]
    activations: Vec<Array2<f64>>,
    // hidden pre-activations
    pre: Vec<Array2<f64>>,
    logits: Array2<f64>,
    mu: Array2<f64>,
    sigma_pre: Array2<f64>,
}

impl MdnModel {
    /// Seeded initialization: He-uniform weights, zero biases, and μ-head
    /// biases spread over the midpoint quantiles of `[−1, 1]`.
    pub fn new(config: MdnConfig) -> Result<Self> {
        config.validate()?;
        let layout = build_layout(&config);
        let total = layout.last().map(LayerShape::end).unwrap_or(0);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0]));
        for layer in &layout {
            let bound = (6.0 / layer.input as f64).sqrt();
            for w in &mut params[layer.weight_offset..layer.bias_offset] {
                *w = rng.random_range(-bound..bound);
            }
        }
        let mu = &layout[layout.len() - 2];
        let (k, d) = (config.n_components, config.output_dim);
        for i in 0..k {
            let q = -1.0 + (2 * i + 1) as f64 / k as f64;
            for j in 0..d {
                params[mu.bias_offset + i * d + j] = q;
            }
        }
        Ok(Self { config, layout, params })
    }

    /// Data-aware start: every component becomes a jittered copy of the
    /// first one (head weights shrunk, then copied with ±10% relative noise)
    /// and starts at the per-dimension mean and standard deviation of
    /// `targets`. Components with independent heads map the input
    /// differently; the first to fit takes all the responsibility and the
    /// rest stop receiving gradient.
    pub fn match_target_marginals(&mut self, targets: &[Vec<f64>]) -> Result<()> {
        let (k, d) = (self.config.n_components, self.config.output_dim);
        if targets.is_empty() || targets.iter().any(|t| t.len() != d) {
            return Err(invalid(format!("targets must be non-empty rows of length {d}")));
        }
        let n_hidden = self.config.hidden_widths.len();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[2]));
        for (head, width) in self.layout[n_hidden..].iter().zip([1, d, d]) {
            for r in 0..head.input {
                let row = head.weight_offset + r * head.output;
                for j in 0..width {
                    self.params[row + j] *= HEAD_INIT_SCALE;
                }
                for i in 1..k {
                    for j in 0..width {
                        let jitter = 1.0 + HEAD_COPY_JITTER * rng.random_range(-1.0..1.0);
                        self.params[row + i * width + j] = self.params[row + j] * jitter;
                    }
                }
            }
        }
        let (mu, sigma) = (&self.layout[n_hidden + 1], &self.layout[n_hidden + 2]);
        for j in 0..d {
            let col: Vec<f64> = targets.iter().map(|t| t[j]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite target"));
            }
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            let pre = sigma_transform_inverse(std.max(SIGMA_FLOOR_INIT));
            for i in 0..k {
                self.params[mu.bias_offset + i * d + j] = mean;
                self.params[sigma.bias_offset + i * d + j] = pre;
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &MdnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, layer: &LayerShape) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (layer.input, layer.output),
            &self.params[layer.weight_offset..layer.bias_offset],
        )
        .expect("layout matches parameter vector")
    }

    fn bias(&self, layer: &LayerShape) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[layer.bias_offset..layer.end()])
    }

    fn affine(&self, layer: &LayerShape, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight(layer));
        z += &self.bias(layer);
        z
    }

    fn forward_cache(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        let n_hidden = self.config.hidden_widths.len();
        let mut activations = Vec::with_capacity(n_hidden + 1);
        let mut pre = Vec::with_capacity(n_hidden);
        activations.push(x.to_owned());
        for layer in &self.layout[..n_hidden] {
            let z = self.affine(layer, &activations.last().expect("input").view());
            activations.push(z.mapv(|v| v.max(0.0)));
            pre.push(z);
        }
        let h = activations.last().expect("hidden").view();
        let logits = self.affine(&self.layout[n_hidden], &h);
        let mu = self.affine(&self.layout[n_hidden + 1], &h);
        let sigma_pre = self.affine(&self.layout[n_hidden + 2], &h);
        ForwardCache {
            activations,
            pre,
            logits,
            mu,
            sigma_pre,
        }
    }

    fn rows_to_array(&self, rows: &[Vec<f64>], width: usize, what: &str) -> Result<Array2<f64>> {
        let mut a = Array2::zeros((rows.len(), width));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(invalid(format!("{what} row {i} has dimension {}, expected {width}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{what} row {i} is not finite")));
            }
            a.row_mut(i).assign(&ArrayView1::from(r.as_slice()));
        }
        Ok(a)
    }

    fn mixture_from_heads(&self, logits: ArrayView1<'_, f64>, mu: ArrayView1<'_, f64>, pre: ArrayView1<'_, f64>) -> Mixture {
        let (k, d) = (self.config.n_components, self.config.output_dim);
        let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let components = (0..k)
            .map(|i| {
                let mean = mu.slice(s![i * d..(i + 1) * d]).to_vec();
                let std = pre.slice(s![i * d..(i + 1) * d]).iter().map(|&p| sigma_transform(p)).collect();
                GaussianComponent::new(mean, std).expect("σ transform is positive")
            })
            .collect();
        Mixture::new(weights, components).expect("softmax weights are normalized")
    }

    /// Predictive mixture for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Mixture> {
        Ok(self.predict(std::slice::from_ref(&x.to_vec()))?.remove(0))
    }

    /// Predictive mixtures for a batch of inputs.
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<Mixture>> {
        let x = self.rows_to_array(inputs, self.config.input_dim, "input")?;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in x.axis_chunks_iter(Axis(0), 512) {
            let c = self.forward_cache(chunk);
            for n in 0..chunk.nrows() {
                out.push(self.mixture_from_heads(c.logits.row(n), c.mu.row(n), c.sigma_pre.row(n)));
            }
        }
        Ok(out)
    }

    /// Per-sample NLL plus, when `grad` is given, the gradient of the mean
    /// batch NLL accumulated into it.
    fn loss_and_grad(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, grad: Option<&mut [f64]>) -> f64 {
        let (k, d) = (self.config.n_components, self.config.output_dim);
        let b = x.nrows();
        let cache = self.forward_cache(x);
        let want_grad = grad.is_some();
        let mut d_logits = Array2::<f64>::zeros(if want_grad { (b, k) } else { (0, 0) });
        let mut d_mu = Array2::<f64>::zeros(if want_grad { (b, k * d) } else { (0, 0) });
        let mut d_pre = Array2::<f64>::zeros(if want_grad { (b, k * d) } else { (0, 0) });
        let mut log_terms = vec![0.0; k];
        let mut total = 0.0;
        let scale = 1.0 / b as f64;
        for n in 0..b {
            let logits = cache.logits.row(n);
            let mu = cache.mu.row(n);
            let pre = cache.sigma_pre.row(n);
            let yn = y.row(n);
            let lmax = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse_logits = lmax + logits.iter().map(|v| (v - lmax).exp()).sum::<f64>().ln();
            for (i, term) in log_terms.iter_mut().enumerate() {
                let mut acc = logits[i] - lse_logits;
                for j in 0..d {
                    let s = sigma_transform(pre[i * d + j]);
                    let z = (yn[j] - mu[i * d + j]) / s;
                    acc -= 0.5 * z * z + s.ln() + HALF_LN_2PI;
                }
                *term = acc;
            }
            let amax = log_terms.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = amax + log_terms.iter().map(|v| (v - amax).exp()).sum::<f64>().ln();
            total -= lse;
            if !want_grad {
                continue;
            }
            for i in 0..k {
                let resp = flushed_exp(log_terms[i] - lse);
                let weight = flushed_exp(logits[i] - lse_logits);
                d_logits[[n, i]] = (weight - resp) * scale;
                for j in 0..d {
                    let idx = i * d + j;
                    let s = sigma_transform(pre[idx]);
                    let diff = yn[j] - mu[idx];
                    let inv_var = 1.0 / (s * s);
                    d_mu[[n, idx]] = -resp * diff * inv_var * scale;
                    let d_sigma = -resp * (diff * diff * inv_var / s - 1.0 / s);
                    d_pre[[n, idx]] = d_sigma * sigma_transform_grad(pre[idx]) * scale;
                }
            }
        }
        if let Some(grad) = grad {
            self.backprop(&cache, &d_logits, &d_mu, &d_pre, grad);
        }
        total
    }

    fn backprop(&self, cache: &ForwardCache, d_logits: &Array2<f64>, d_mu: &Array2<f64>, d_pre: &Array2<f64>, grad: &mut [f64]) {
        let n_hidden = self.config.hidden_widths.len();
        let h = cache.activations.last().expect("hidden");
        let heads = [
            (&self.layout[n_hidden], d_logits),
            (&self.layout[n_hidden + 1], d_mu),
            (&self.layout[n_hidden + 2], d_pre),
        ];
        let mut d_h = Array2::<f64>::zeros(h.raw_dim());
        for (layer, delta) in heads {
            accumulate_layer_grad(layer, h, delta, grad);
            d_h += &delta.dot(&self.weight(layer).t());
        }
        for l in (0..n_hidden).rev() {
            let mut d_z = d_h;
            d_z.zip_mut_with(&cache.pre[l], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            let layer = &self.layout[l];
            accumulate_layer_grad(layer, &cache.activations[l], &d_z, grad);
            d_h = if l > 0 { d_z.dot(&self.weight(layer).t()) } else { Array2::zeros((0, 0)) };
        }
    }

    /// Mean NLL over a batch and its exact gradient with respect to every parameter.
    pub fn gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let (x, y) = self.batch_arrays(inputs, targets)?;
        let mut grad = vec![0.0; self.params.len()];
        let total = self.loss_and_grad(x.view(), y.view(), Some(&mut grad));
        Ok((total / x.nrows() as f64, grad))
    }

    /// Mean NLL over a batch.
    pub fn mean_nll(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        let (x, y) = self.batch_arrays(inputs, targets)?;
        let mut total = 0.0;
        for start in (0..x.nrows()).step_by(512) {
            let end = (start + 512).min(x.nrows());
            total += self.loss_and_grad(x.slice(s![start..end, ..]), y.slice(s![start..end, ..]), None);
        }
        Ok(total / x.nrows() as f64)
    }

    fn batch_arrays(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(Array2<f64>, Array2<f64>)> {
        if inputs.is_empty() {
            return Err(invalid("batch must be non-empty"));
        }
        if inputs.len() != targets.len() {
            return Err(invalid(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        Ok((
            self.rows_to_array(inputs, self.config.input_dim, "input")?,
            self.rows_to_array(targets, self.config.output_dim, "target")?,
        ))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            layers: self
                .layout
                .iter()
                .map(|l| LayerParams {
                    name: l.name.clone(),
                    input_dim: l.input,
                    output_dim: l.output,
                    weights: self.params[l.weight_offset..l.bias_offset].to_vec(),
                    biases: self.params[l.bias_offset..l.end()].to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not an MDN checkpoint (format {:?})", ckpt.format)));
        }
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        ckpt.config.validate()?;
        let layout = build_layout(&ckpt.config);
        if layout.len() != ckpt.layers.len() {
            return Err(Error::Format("checkpoint layer count does not match its config".into()));
        }
        let mut params = Vec::with_capacity(layout.last().map(LayerShape::end).unwrap_or(0));
        for (shape, layer) in layout.iter().zip(&ckpt.layers) {
            if shape.name != layer.name
                || shape.input != layer.input_dim
                || shape.output != layer.output_dim
                || layer.weights.len() != shape.input * shape.output
                || layer.biases.len() != shape.output
            {
                return Err(Error::Format(format!("layer {} does not match its config", layer.name)));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.biases);
        }
        Ok(Self {
            config: ckpt.config,
            layout,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

fn accumulate_layer_grad(layer: &LayerShape, input: &Array2<f64>, delta: &Array2<f64>, grad: &mut [f64]) {
    let (w, b) = grad[layer.weight_offset..layer.end()].split_at_mut(layer.input * layer.output);
    let mut gw = ArrayViewMut2::from_shape((layer.input, layer.output), w).expect("layout");
    ndarray::linalg::general_mat_mul(1.0, &input.t(), delta, 1.0, &mut gw);
    for (gb, col) in b.iter_mut().zip(delta.columns()) {
        *gb += col.sum();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerParams {
    pub name: String,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Row-major `input_dim × output_dim`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// On-disk model: config echo plus flat per-layer parameter arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub config: MdnConfig,
    pub layers: Vec<LayerParams>,
}

/// Negative log-likelihood of `y` under `m`.
pub fn nll(m: &Mixture, y: &[f64]) -> Result<f64> {
    Ok(-m.log_pdf(y)?)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

fn flush(x: f64) -> f64 {
    if x.is_normal() {
        x
    } else {
        0.0
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(invalid(format!(
            "adam shapes differ: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = flush(ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
        *v = flush(ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g);
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean NLL over each epoch's minibatches, measured before each update.
    pub epoch_nll: Vec<f64>,
    /// Mean NLL over the full training set after the last epoch.
    pub final_nll: f64,
    pub seed: u64,
    pub config: MdnConfig,
}

/// Trains a fresh model with Adam over seeded, shuffled minibatches, after
/// matching the initial output to the target marginals.
pub fn train(config: &MdnConfig, data: &Dataset) -> Result<(MdnModel, TrainHistory)> {
    let mut model = MdnModel::new(config.clone())?;
    model.match_target_marginals(&data.targets)?;
    let history = train_model(&mut model, data)?;
    Ok((model, history))
}

/// Continues training `model` for `model.config().epochs` epochs.
pub fn train_model(model: &mut MdnModel, data: &Dataset) -> Result<TrainHistory> {
    if data.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    let config = model.config.clone();
    let (x, y) = model.batch_arrays(&data.inputs, &data.targets)?;
    let n = x.nrows();
    let bs = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[1]));
    let mut adam = AdamState::new(model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut bx = Array2::<f64>::zeros((bs, config.input_dim));
    let mut by = Array2::<f64>::zeros((bs, config.output_dim));
    let mut epoch_nll = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(bs) {
            let (mut cx, mut cy) = (bx.slice_mut(s![..chunk.len(), ..]), by.slice_mut(s![..chunk.len(), ..]));
            for (r, &idx) in chunk.iter().enumerate() {
                cx.row_mut(r).assign(&x.row(idx));
                cy.row_mut(r).assign(&y.row(idx));
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            total += model.loss_and_grad(
                bx.slice(s![..chunk.len(), ..]),
                by.slice(s![..chunk.len(), ..]),
                Some(&mut grad),
            );
            adam_step(&mut model.params, &grad, &mut adam, config.learning_rate)?;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "training diverged at epoch {epoch} (seed {})",
                config.seed
            )));
        }
        epoch_nll.push(mean);
    }
    let final_nll = model.mean_nll(&data.inputs, &data.targets)?;
    Ok(TrainHistory {
        epoch_nll,
        final_nll,
        seed: config.seed,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_inverse_sine, Dataset};
    use rand_distr::{Distribution, Normal};

    fn small_config(k: usize, d: usize) -> MdnConfig {
        MdnConfig {
            hidden_widths: vec![6, 5],
            seed: 3,
            ..MdnConfig::new(2, d, k)
        }
    }

    #[test]
    fn sigma_transform_values() {
        assert_eq!(sigma_transform(0.0), 1.0 + 1e-7);
        let tiny = sigma_transform(-40.0);
        assert!(tiny > 0.0 && tiny.is_finite());
        assert!((tiny - 1e-7).abs() < 1e-15);
        assert_eq!(sigma_transform(2.5), 3.5 + 1e-7);
    }

    #[test]
    fn sigma_inverse_round_trips() {
        for s in [1e-3, 0.05, 0.7, 1.0, 5.77, 40.0] {
            assert!((sigma_transform(sigma_transform_inverse(s)) - s).abs() < 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn marginal_matching_start() {
        let targets: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64, 2.0 * (i % 2) as f64]).collect();
        let mut model = MdnModel::new(MdnConfig { hidden_widths: vec![8], seed: 1, ..MdnConfig::new(1, 2, 4) }).unwrap();
        model.match_target_marginals(&targets).unwrap();
        let n_hidden = model.config().hidden_widths.len();
        let (mu, sigma) = (&model.layers()[n_hidden + 1], &model.layers()[n_hidden + 2]);
        let mu_b = &model.params()[mu.bias_offset..mu.end()];
        assert_eq!(mu_b, &[499.5, 1.0, 499.5, 1.0, 499.5, 1.0, 499.5, 1.0]);
        let sig_b = &model.params()[sigma.bias_offset..sigma.end()];
        assert!((sigma_transform(sig_b[0]) - 288.675).abs() < 1e-2);
        assert!((sigma_transform(sig_b[1]) - 1.0).abs() < 1e-9);
        // Head weights are jittered copies of the first component's.
        let w = model.weight(mu);
        for r in 0..w.nrows() {
            for i in 1..4 {
                for j in 0..2 {
                    let (a, b) = (w[[r, j]], w[[r, i * 2 + j]]);
                    assert!((b - a).abs() <= 0.1 * a.abs() + 1e-15);
                }
            }
        }
        assert!(model.match_target_marginals(&[vec![1.0]]).is_err());
    }

    #[test]
    fn fresh_model_emits_valid_mixtures() {
        let model = MdnModel::new(small_config(4, 2)).unwrap();
        for x in [[0.0, 0.0], [3.0, -7.0], [100.0, 100.0]] {
            let m = model.forward(&x).unwrap();
            assert_eq!((m.k(), m.dim()), (4, 2));
            assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.components().iter().all(|c| c.std().iter().all(|s| *s >= 1e-7)));
        }
        assert!(model.forward(&[f64::NAN, 0.0]).is_err());
        assert!(model.forward(&[0.0]).is_err());
    }

    #[test]
    fn extreme_preactivations_stay_valid() {
        let mut model = MdnModel::new(small_config(3, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            for p in model.params_mut() {
                *p = if trial % 2 == 0 { rng.random_range(-50.0..50.0) } else { [-50.0, 50.0][rng.random_range(0..2)] };
            }
            let m = model.forward(&[1.0, -1.0]).unwrap();
            assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.components().iter().all(|c| c.std()[0] > 0.0 && c.std()[0].is_finite()));
        }
    }

    #[test]
    fn nll_matches_log_pdf() {
        let single = Mixture::univariate(&[(1.0, 0.0, 1.0)]).unwrap();
        assert!((nll(&single, &[0.0]).unwrap() - 0.918939).abs() < 1e-6);
        let dup = Mixture::univariate(&[(0.5, 0.0, 1.0), (0.5, 0.0, 1.0)]).unwrap();
        assert!((nll(&dup, &[0.7]).unwrap() - nll(&single, &[0.7]).unwrap()).abs() < 1e-12);
        let m = Mixture::univariate(&[(0.2, -1.0, 0.3), (0.8, 2.0, 1.1)]).unwrap();
        assert_eq!(nll(&m, &[0.4]).unwrap().to_bits(), (-m.log_pdf(&[0.4]).unwrap()).to_bits());
        assert!(nll(&m, &[0.4, 1.0]).is_err());
    }

    #[test]
    fn batch_loss_agrees_with_forward_mixture() {
        let model = MdnModel::new(small_config(3, 2)).unwrap();
        let xs = vec![vec![0.3, -0.2], vec![1.5, 0.7]];
        let ys = vec![vec![0.1, 0.2], vec![-1.0, 0.5]];
        let direct: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| nll(&model.forward(x).unwrap(), y).unwrap())
            .sum::<f64>()
            / 2.0;
        assert!((model.mean_nll(&xs, &ys).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut model = MdnModel::new(small_config(3, 2)).unwrap();
        let xs = vec![vec![0.3, -0.2], vec![1.5, 0.7], vec![-0.4, 0.9]];
        let ys = vec![vec![0.1, 0.2], vec![-1.0, 0.5], vec![0.6, -0.3]];
        let (_, grad) = model.gradient(&xs, &ys).unwrap();
        let h = 1e-5;
        for i in 0..model.param_count() {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let up = model.mean_nll(&xs, &ys).unwrap();
            model.params_mut()[i] = orig - h;
            let down = model.mean_nll(&xs, &ys).unwrap();
            model.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn duplicated_batch_has_same_mean_gradient() {
        let model = MdnModel::new(small_config(2, 1)).unwrap();
        let (x, y) = (vec![vec![0.5, 0.5]], vec![vec![0.2]]);
        let (_, once) = model.gradient(&x, &y).unwrap();
        let (_, twice) = model.gradient(&[x[0].clone(), x[0].clone()], &[y[0].clone(), y[0].clone()]).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn symmetric_components_get_equal_logit_gradients() {
        let mut model = MdnModel::new(small_config(3, 1)).unwrap();
        let n_hidden = model.config().hidden_widths.len();
        let layout = model.layers().to_vec();
        // make all three components identical: same head columns and biases
        for head in &layout[n_hidden..] {
            let per = head.output / 3;
            for r in 0..head.input {
                for c in 0..head.output {
                    let src = head.weight_offset + r * head.output + c % per;
                    let v = model.params()[src];
                    model.params_mut()[head.weight_offset + r * head.output + c] = v;
                }
            }
            for c in 0..head.output {
                let v = model.params()[head.bias_offset + c % per];
                model.params_mut()[head.bias_offset + c] = v;
            }
        }
        let xs = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let ys = vec![vec![0.5], vec![-0.5]];
        let (_, grad) = model.gradient(&xs, &ys).unwrap();
        let pi = &layout[n_hidden];
        let b = &grad[pi.bias_offset..pi.bias_offset + 3];
        assert!((b[0] - b[1]).abs() < 1e-15 && (b[1] - b[2]).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.0];
        let before = p.clone();
        let mut st = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut st, 1e-3).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step(), 5);
        assert!(adam_step(&mut p, &[0.0; 2], &mut st, 1e-3).is_err());
    }

    #[test]
    fn adam_first_step_by_hand() {
        let g = 0.3;
        let lr = 1e-2;
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[g], &mut st, lr).unwrap();
        // m̂ = g, v̂ = g², update = lr·g / (|g| + ε)
        let expected = 1.0 - lr * g / (g.abs() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_step_tends_to_lr() {
        let lr = 1e-3;
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        let mut last = p.clone();
        for _ in 0..5000 {
            last.copy_from_slice(&p);
            adam_step(&mut p, &[2.5, -1e-3], &mut st, lr).unwrap();
        }
        assert!(((last[0] - p[0]) - lr).abs() < 1e-9);
        assert!(((p[1] - last[1]) - lr).abs() < 1e-6);
    }

    #[test]
    fn unimodal_target_recovers_mean_and_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(3.0, 2.0).unwrap();
        let n = 4000;
        let data = Dataset::new(
            (0..n).map(|i| vec![(i % 7) as f64 / 7.0]).collect(),
            (0..n).map(|_| vec![normal.sample(&mut rng)]).collect(),
            "normal",
            9,
        )
        .unwrap();
        let emp_mean = data.targets.iter().map(|t| t[0]).sum::<f64>() / n as f64;
        let emp_std = (data.targets.iter().map(|t| (t[0] - emp_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let cfg = MdnConfig {
            hidden_widths: vec![16],
            learning_rate: 3e-3,
            epochs: 150,
            ..MdnConfig::new(1, 1, 1)
        };
        let (model, hist) = train(&cfg, &data).unwrap();
        assert_eq!(hist.epoch_nll.len(), 150);
        let m = model.forward(&[0.5]).unwrap();
        let c = &m.components()[0];
        assert!((c.mean()[0] - emp_mean).abs() < 0.1, "{:?} vs {emp_mean}", c.mean());
        assert!((c.std()[0] - emp_std).abs() < 0.1, "{:?} vs {emp_std}", c.std());
        assert!((emp_mean - 3.0).abs() < 0.1 && (emp_std - 2.0).abs() < 0.1);
    }

    #[test]
    fn training_is_deterministic() {
        let data = gen_inverse_sine(300, 4);
        let cfg = MdnConfig {
            hidden_widths: vec![8, 8],
            epochs: 3,
            seed: 11,
            ..MdnConfig::new(1, 1, 3)
        };
        let (m1, h1) = train(&cfg, &data).unwrap();
        let (m2, h2) = train(&cfg, &data).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        let bits: Vec<u64> = h1.epoch_nll.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, h2.epoch_nll.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let cfg = MdnConfig::new(1, 1, 2);
        assert!(Dataset::new(vec![], vec![], "empty", 0).is_err());
        let mut model = MdnModel::new(cfg).unwrap();
        let empty = Dataset {
            inputs: vec![],
            targets: vec![],
            meta: crate::datasets::DatasetMeta::new("empty", 0),
        };
        assert!(train_model(&mut model, &empty).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_version_check() {
        let model = MdnModel::new(small_config(2, 1)).unwrap();
        let ckpt = model.to_checkpoint();
        let text = serde_json::to_string(&ckpt).unwrap();
        let back = MdnModel::from_checkpoint(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, model);
        let mut wrong = ckpt.clone();
        wrong.format_version = 99;
        assert!(matches!(MdnModel::from_checkpoint(wrong), Err(Error::Format(_))));
        let mut truncated = ckpt;
        truncated.layers[0].weights.pop();
        assert!(MdnModel::from_checkpoint(truncated).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = MdnConfig::new(1, 1, 0);
        assert!(c.validate().is_err());
        c.n_components = 1;
        c.hidden_widths.clear();
        assert!(c.validate().is_err());
        c.hidden_widths = vec![4];
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c.learning_rate = 1e-3;
        assert!(c.validate().is_ok());
    }
}
