//! The tagger: a two-stage strided encoder feeding a multi-head attention
//! pooling classifier, or a single affine map over time-averaged features.
//!
//! Attention head `h` at encoded frame `t` for class `c`:
//!
//! ```text
//! s[t, c]   = sigmoid(Wa_h z_t + ba_h)[c]
//! alpha     = s[t, c] / sum_t s[t, c]
//! head_h[c] = sum_t alpha[t, c] * (Wc_h z_t + bc_h)[c]
//! logit[c]  = sum_h softmax(gates)_h * head_h[c]
//! ```
//!
//! and the output probability is `sigmoid(logit)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParameterVector, TensorSpec};
use super::ModelError;
use crate::corpus::FeatureShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Time-mean pooling followed by one affine map to logits.
    Linear,
    Attention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub feature_shape: FeatureShape,
    /// Frames merged by the first and second encoder stage.
    pub time_strides: [usize; 2],
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Attention,
            num_classes: 527,
            feature_shape: FeatureShape::default(),
            time_strides: [4, 8],
            hidden_dim: 64,
            embed_dim: 64,
            num_heads: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.num_classes == 0 || self.feature_shape.is_empty() {
            return bad("num_classes and feature shape must be nonzero".into());
        }
        if self.architecture == Architecture::Attention {
            let [a, b] = self.time_strides;
            if a == 0 || b == 0 {
                return bad("time strides must be >= 1".into());
            }
            if !self.feature_shape.time_frames.is_multiple_of(a * b) {
                return bad(format!(
                    "time_frames {} not divisible by total stride {}",
                    self.feature_shape.time_frames,
                    a * b
                ));
            }
            if self.num_heads == 0 || self.hidden_dim == 0 || self.embed_dim == 0 {
                return bad("num_heads, hidden_dim and embed_dim must be >= 1".into());
            }
        }
        Ok(())
    }

    /// Encoded sequence length.
    pub fn encoded_frames(&self) -> usize {
        self.feature_shape.time_frames / (self.time_strides[0] * self.time_strides[1])
    }

    pub fn manifest(&self) -> Vec<TensorSpec> {
        let c = self.num_classes;
        let f = self.feature_shape.freq_bins;
        match self.architecture {
            Architecture::Linear => vec![
                TensorSpec::new("classifier.weight", &[c, f]),
                TensorSpec::new("classifier.bias", &[c]),
            ],
            Architecture::Attention => {
                let [s1, s2] = self.time_strides;
                let (h1, d) = (self.hidden_dim, self.embed_dim);
                let mut m = vec![
                    TensorSpec::new("encoder.stage1.weight", &[h1, s1 * f]),
                    TensorSpec::new("encoder.stage1.bias", &[h1]),
                    TensorSpec::new("encoder.stage2.weight", &[d, s2 * h1]),
                    TensorSpec::new("encoder.stage2.bias", &[d]),
                ];
                for h in 0..self.num_heads {
                    m.push(TensorSpec::new(format!("head{h}.attention.weight"), &[c, d]));
                    m.push(TensorSpec::new(format!("head{h}.attention.bias"), &[c]));
                    m.push(TensorSpec::new(format!("head{h}.classifier.weight"), &[c, d]));
                    m.push(TensorSpec::new(format!("head{h}.classifier.bias"), &[c]));
                }
                m.push(TensorSpec::new("head.gates", &[self.num_heads]));
                m
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.manifest().iter().map(TensorSpec::size).sum()
    }
}

/// Glorot-uniform initialization for one tensor; biases and gates start at 0.
pub(crate) fn init_tensor(spec: &TensorSpec, rng: &mut impl Rng) -> Vec<f64> {
    if spec.shape.len() == 2 && spec.name.ends_with("weight") {
        let (fan_out, fan_in) = (spec.shape[0], spec.shape[1]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..spec.size()).map(|_| rng.random_range(-a..a)).collect()
    } else {
        vec![0.0; spec.size()]
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W x + b` for row-major `W` of shape `[out.len(), x.len()]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(x.len()).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// Accumulates gradients of `out = W x + b` given `d_out`: `dW += d_out x^T`,
/// `db += d_out`, and, when requested, `dx += W^T d_out`.
fn affine_backward(
    w: &[f64],
    x: &[f64],
    d_out: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let n = x.len();
    for (o, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        for (a, v) in dw[o * n..(o + 1) * n].iter_mut().zip(x) {
            *a += g * v;
        }
    }
    if let Some(dx) = dx {
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (a, wv) in dx.iter_mut().zip(&w[o * n..(o + 1) * n]) {
                *a += g * wv;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    len: usize,
}

impl Span {
    fn of<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.start..self.start + self.len]
    }

    fn of_mut<'a>(&self, v: &'a mut [f64]) -> &'a mut [f64] {
        &mut v[self.start..self.start + self.len]
    }
}

#[derive(Debug, Clone, Copy)]
struct HeadSpans {
    att_w: Span,
    att_b: Span,
    cla_w: Span,
    cla_b: Span,
}

#[derive(Debug, Clone)]
enum Layout {
    Linear {
        w: Span,
        b: Span,
    },
    Attention {
        w1: Span,
        b1: Span,
        w2: Span,
        b2: Span,
        heads: Vec<HeadSpans>,
        gates: Span,
    },
}

/// Stateless model definition; parameters are passed in per call.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    num_params: usize,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Per head, `encoded_frames x num_classes` normalized attention weights.
    /// Empty for the linear variant.
    pub attention: Vec<Vec<f64>>,
    input: Vec<f64>,
    h1: Vec<f64>,
    z: Vec<f64>,
    sig: Vec<Vec<f64>>,
    cla: Vec<Vec<f64>>,
    heads: Vec<Vec<f64>>,
    gate_weights: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let manifest = config.manifest();
        let mut spans = Vec::with_capacity(manifest.len());
        let mut offset = 0;
        for spec in &manifest {
            spans.push(Span {
                start: offset,
                len: spec.size(),
            });
            offset += spec.size();
        }
        let layout = match config.architecture {
            Architecture::Linear => Layout::Linear {
                w: spans[0],
                b: spans[1],
            },
            Architecture::Attention => Layout::Attention {
                w1: spans[0],
                b1: spans[1],
                w2: spans[2],
                b2: spans[3],
                heads: spans[4..4 + 4 * config.num_heads]
                    .chunks_exact(4)
                    .map(|s| HeadSpans {
                        att_w: s[0],
                        att_b: s[1],
                        cla_w: s[2],
                        cla_b: s[3],
                    })
                    .collect(),
                gates: spans[4 + 4 * config.num_heads],
            },
        };
        Ok(Self {
            config,
            layout,
            num_params: offset,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn manifest(&self) -> Vec<TensorSpec> {
        self.config.manifest()
    }

    pub fn init(&self, rng: &mut impl Rng) -> ParameterVector {
        let manifest = self.manifest();
        let values = manifest.iter().flat_map(|s| init_tensor(s, rng)).collect();
        ParameterVector::new(manifest, values).expect("init matches manifest")
    }

    fn check_params(&self, params: &ParameterVector) -> Result<(), ModelError> {
        if params.manifest() != self.manifest().as_slice() {
            return Err(ModelError::Manifest(
                "parameter manifest does not match the model config".into(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParameterVector, x: &[f64]) -> Result<ForwardPass, ModelError> {
        self.check_params(params)?;
        self.forward_raw(params.values(), x)
    }

    fn forward_raw(&self, p: &[f64], x: &[f64]) -> Result<ForwardPass, ModelError> {
        let shape = self.config.feature_shape;
        if x.len() != shape.len() {
            return Err(ModelError::Shape(format!(
                "input has {} values, model expects {shape}",
                x.len()
            )));
        }
        let c = self.config.num_classes;
        let mut pass = ForwardPass {
            logits: vec![0.0; c],
            probs: vec![0.0; c],
            attention: Vec::new(),
            input: x.to_vec(),
            h1: Vec::new(),
            z: Vec::new(),
            sig: Vec::new(),
            cla: Vec::new(),
            heads: Vec::new(),
            gate_weights: Vec::new(),
        };
        match &self.layout {
            Layout::Linear { w, b } => {
                let mean = time_mean(x, shape);
                affine(w.of(p), b.of(p), &mean, &mut pass.logits);
            }
            Layout::Attention {
                w1,
                b1,
                w2,
                b2,
                heads,
                gates,
            } => {
                let [s1, s2] = self.config.time_strides;
                let (hd, d) = (self.config.hidden_dim, self.config.embed_dim);
                let t1 = shape.time_frames / s1;
                let tz = t1 / s2;
                // frames are contiguous rows, so a block of s1 frames is one slice
                let mut h1 = vec![0.0; t1 * hd];
                for (blk, out) in x.chunks_exact(s1 * shape.freq_bins).zip(h1.chunks_exact_mut(hd)) {
                    affine(w1.of(p), b1.of(p), blk, out);
                    out.iter_mut().for_each(|v| *v = v.tanh());
                }
                let mut z = vec![0.0; tz * d];
                for (blk, out) in h1.chunks_exact(s2 * hd).zip(z.chunks_exact_mut(d)) {
                    affine(w2.of(p), b2.of(p), blk, out);
                    out.iter_mut().for_each(|v| *v = v.tanh());
                }
                let g = softmax(gates.of(p));
                for hs in heads {
                    let mut sig = vec![0.0; tz * c];
                    let mut cla = vec![0.0; tz * c];
                    for t in 0..tz {
                        let zt = &z[t * d..(t + 1) * d];
                        affine(hs.att_w.of(p), hs.att_b.of(p), zt, &mut sig[t * c..(t + 1) * c]);
                        affine(hs.cla_w.of(p), hs.cla_b.of(p), zt, &mut cla[t * c..(t + 1) * c]);
                    }
                    sig.iter_mut().for_each(|v| *v = sigmoid(*v));
                    let mut alpha = sig.clone();
                    let mut head = vec![0.0; c];
                    for k in 0..c {
                        let total: f64 = (0..tz).map(|t| sig[t * c + k]).sum();
                        for t in 0..tz {
                            alpha[t * c + k] /= total;
                            head[k] += alpha[t * c + k] * cla[t * c + k];
                        }
                    }
                    pass.sig.push(sig);
                    pass.cla.push(cla);
                    pass.attention.push(alpha);
                    pass.heads.push(head);
                }
                for (head, &gh) in pass.heads.iter().zip(&g) {
                    for (l, v) in pass.logits.iter_mut().zip(head) {
                        *l += gh * v;
                    }
                }
                pass.h1 = h1;
                pass.z = z;
                pass.gate_weights = g;
            }
        }
        if pass.logits.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("logits".into()));
        }
        for (prob, &l) in pass.probs.iter_mut().zip(&pass.logits) {
            *prob = sigmoid(l);
        }
        Ok(pass)
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d logits`.
    pub fn backward(&self, params: &ParameterVector, pass: &ForwardPass, d_logits: &[f64], grad: &mut [f64]) {
        self.backward_raw(params.values(), pass, d_logits, grad);
    }

    fn backward_raw(&self, p: &[f64], pass: &ForwardPass, d_logits: &[f64], grad: &mut [f64]) {
        let shape = self.config.feature_shape;
        let c = self.config.num_classes;
        match &self.layout {
            Layout::Linear { w, b } => {
                let mean = time_mean(&pass.input, shape);
                let (gw, gb) = split_two(grad, *w, *b);
                affine_backward(w.of(p), &mean, d_logits, gw, gb, None);
            }
            Layout::Attention {
                w1,
                b1,
                w2,
                b2,
                heads,
                gates,
            } => {
                let [s1, s2] = self.config.time_strides;
                let (hd, d) = (self.config.hidden_dim, self.config.embed_dim);
                let t1 = shape.time_frames / s1;
                let tz = t1 / s2;
                let g = &pass.gate_weights;
                // gates: d logit / d g_h through the softmax
                let d_pi: Vec<f64> = pass
                    .heads
                    .iter()
                    .map(|head| head.iter().zip(d_logits).map(|(a, b)| a * b).sum())
                    .collect();
                let mean_d: f64 = g.iter().zip(&d_pi).map(|(a, b)| a * b).sum();
                for (h, gg) in gates.of_mut(grad).iter_mut().enumerate() {
                    *gg += g[h] * (d_pi[h] - mean_d);
                }
                let mut dz = vec![0.0; tz * d];
                for (h, hs) in heads.iter().enumerate() {
                    let sig = &pass.sig[h];
                    let cla = &pass.cla[h];
                    let alpha = &pass.attention[h];
                    let mut d_att = vec![0.0; tz * c];
                    let mut d_cla = vec![0.0; tz * c];
                    for k in 0..c {
                        let d_head = d_logits[k] * g[h];
                        if d_head == 0.0 {
                            continue;
                        }
                        let total: f64 = (0..tz).map(|t| sig[t * c + k]).sum();
                        // d head / d alpha[t] = cla[t]; back through alpha = s / sum(s)
                        let weighted: f64 = (0..tz).map(|t| alpha[t * c + k] * cla[t * c + k]).sum();
                        for t in 0..tz {
                            let i = t * c + k;
                            d_cla[i] = d_head * alpha[i];
                            let d_sig = d_head * (cla[i] - weighted) / total;
                            d_att[i] = d_sig * sig[i] * (1.0 - sig[i]);
                        }
                    }
                    for t in 0..tz {
                        let zt = &pass.z[t * d..(t + 1) * d];
                        let dzt = &mut dz[t * d..(t + 1) * d];
                        let (gw, gb) = split_two(grad, hs.att_w, hs.att_b);
                        affine_backward(hs.att_w.of(p), zt, &d_att[t * c..(t + 1) * c], gw, gb, Some(&mut *dzt));
                        let (gw, gb) = split_two(grad, hs.cla_w, hs.cla_b);
                        affine_backward(hs.cla_w.of(p), zt, &d_cla[t * c..(t + 1) * c], gw, gb, Some(dzt));
                    }
                }
                // stage 2 tanh
                for (dv, zv) in dz.iter_mut().zip(&pass.z) {
                    *dv *= 1.0 - zv * zv;
                }
                let mut dh1 = vec![0.0; t1 * hd];
                for (j, blk) in pass.h1.chunks_exact(s2 * hd).enumerate() {
                    let (gw, gb) = split_two(grad, *w2, *b2);
                    affine_backward(
                        w2.of(p),
                        blk,
                        &dz[j * d..(j + 1) * d],
                        gw,
                        gb,
                        Some(&mut dh1[j * s2 * hd..(j + 1) * s2 * hd]),
                    );
                }
                for (dv, hv) in dh1.iter_mut().zip(&pass.h1) {
                    *dv *= 1.0 - hv * hv;
                }
                for (j, blk) in pass.input.chunks_exact(s1 * shape.freq_bins).enumerate() {
                    let (gw, gb) = split_two(grad, *w1, *b1);
                    affine_backward(w1.of(p), blk, &dh1[j * hd..(j + 1) * hd], gw, gb, None);
                }
            }
        }
    }

    /// Loss and gradient for one (possibly soft-labeled) example.
    pub fn loss_and_grad(
        &self,
        params: &ParameterVector,
        x: &[f64],
        targets: &[f64],
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        let pass = self.forward_raw(params.values(), x)?;
        let value = loss(&pass.probs, targets);
        let d_logits = loss_grad_logits(&pass.probs, targets);
        self.backward_raw(params.values(), &pass, &d_logits, grad);
        Ok(value)
    }
}

fn split_two(grad: &mut [f64], a: Span, b: Span) -> (&mut [f64], &mut [f64]) {
    // weight spans always precede their bias spans
    debug_assert!(a.start + a.len <= b.start);
    let (lo, hi) = grad.split_at_mut(b.start);
    (a.of_mut(lo), &mut hi[..b.len])
}

fn time_mean(x: &[f64], shape: FeatureShape) -> Vec<f64> {
    let mut mean = vec![0.0; shape.freq_bins];
    for frame in x.chunks_exact(shape.freq_bins) {
        for (m, v) in mean.iter_mut().zip(frame) {
            *m += v;
        }
    }
    let n = shape.time_frames as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Probability clamp used by the loss.
pub const LOSS_EPS: f64 = 1e-7;

/// Binary cross-entropy averaged over classes, probabilities clamped to
/// `[LOSS_EPS, 1 - LOSS_EPS]`. Targets may be soft.
pub fn loss(probs: &[f64], targets: &[f64]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / probs.len() as f64
}

/// `d loss / d logit`; zero where the clamp is active.
pub fn loss_grad_logits(probs: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            if p <= LOSS_EPS || p >= 1.0 - LOSS_EPS {
                0.0
            } else {
                (p - y) / n
            }
        })
        .collect()
}

/// Largest relative difference between the analytic gradient and central
/// finite differences (step `1e-5`) of the loss at `params`. Relative error
/// for one coordinate is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    model: &Model,
    params: &ParameterVector,
    x: &[f64],
    targets: &[f64],
) -> Result<f64, ModelError> {
    const STEP: f64 = 1e-5;
    let mut analytic = vec![0.0; model.num_params()];
    model.loss_and_grad(params, x, targets, &mut analytic)?;
    let mut probe = params.values().to_vec();
    let eval = |v: &[f64]| -> Result<f64, ModelError> {
        let pass = model.forward_raw(v, x)?;
        Ok(loss(&pass.probs, targets))
    };
    let mut worst = 0.0_f64;
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + STEP;
        let up = eval(&probe)?;
        probe[i] = orig - STEP;
        let down = eval(&probe)?;
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Elementwise logistic function.
pub fn sigmoid_probs(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&l| sigmoid(l)).collect()
}

#[cfg(test)]
impl ForwardPass {
    pub(crate) fn heads_for_test(&self) -> &[Vec<f64>] {
        &self.heads
    }
}
