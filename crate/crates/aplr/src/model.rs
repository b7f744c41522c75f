//! Small feedforward classifier (relu feature layers + linear head) with
//! manual backpropagation, Adam with decoupled weight decay, and a
//! portable binary checkpoint format.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// One dense layer: out = act(input * weights^T + bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out_dim x in_dim, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    /// He-uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    pub fn he_uniform(in_dim: usize, out_dim: usize, stream: &mut RngStream) -> Layer {
        let limit = (6.0 / in_dim as f64).sqrt();
        let data: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| stream.uniform(-limit, limit))
            .collect();
        Layer {
            weights: Matrix::from_vec(out_dim, in_dim, data).unwrap(),
            bias: vec![0.0; out_dim],
        }
    }

    fn linear(&self, input: &Matrix) -> Result<Matrix> {
        input.matmul(&self.weights.transpose())?.add_bias(&self.bias)
    }
}

/// Feature extractor (relu layers) plus linear classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub feature_layers: Vec<Layer>,
    pub head: Layer,
    pub input_dim: usize,
    pub num_classes: usize,
}

/// Activations captured during forward, consumed by backward.
pub struct ForwardCache {
    /// Input batch plus post-relu output of every feature layer.
    activations: Vec<Matrix>,
    /// Pre-activation of every feature layer.
    pre_activations: Vec<Matrix>,
    batch_rows: usize,
}

/// Gradients mirroring the model's parameter structure.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub feature_layers: Vec<(Matrix, Vec<f64>)>,
    pub head: (Matrix, Vec<f64>),
}

impl ModelGrads {
    pub fn is_finite(&self) -> bool {
        self.head.0.is_finite()
            && self.head.1.iter().all(|v| v.is_finite())
            && self
                .feature_layers
                .iter()
                .all(|(w, b)| w.is_finite() && b.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.feature_layers {
            for v in &mut w.data {
                *v *= s;
            }
            for v in b {
                *v *= s;
            }
        }
        for v in &mut self.head.0.data {
            *v *= s;
        }
        for v in &mut self.head.1 {
            *v *= s;
        }
    }
}

impl ClassifierModel {
    /// Builds a model with the given hidden widths; all parameters drawn
    /// He-uniform from the stream, biases zero.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        stream: &mut RngStream,
    ) -> ClassifierModel {
        let mut feature_layers = Vec::with_capacity(hidden.len());
        let mut prev = input_dim;
        for &width in hidden {
            feature_layers.push(Layer::he_uniform(prev, width, stream));
            prev = width;
        }
        let head = Layer::he_uniform(prev, num_classes, stream);
        ClassifierModel {
            feature_layers,
            head,
            input_dim,
            num_classes,
        }
    }

    /// Re-initializes only the head, keeping feature layers intact. The
    /// fresh head is a scaled-down He-uniform draw so that initial logits
    /// sit near zero: the first consensus snapshots then start from
    /// near-uniform probabilities instead of confidently random ones.
    pub fn reinit_head(&mut self, stream: &mut RngStream) {
        let in_dim = self.head.in_dim();
        let mut head = Layer::he_uniform(in_dim, self.num_classes, stream);
        for w in head.weights.data.iter_mut() {
            *w *= 0.05;
        }
        for b in head.bias.iter_mut() {
            *b *= 0.05;
        }
        self.head = head;
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.feature_layers.iter().map(|l| l.out_dim()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.feature_layers
            .iter()
            .map(|l| l.weights.data.len() + l.bias.len())
            .sum::<usize>()
            + self.head.weights.data.len()
            + self.head.bias.len()
    }

    /// Forward pass producing pre-softmax logits and the backward cache.
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if batch.cols != self.input_dim {
            return Err(Error::Dimension(format!(
                "batch cols {} != input_dim {}",
                batch.cols, self.input_dim
            )));
        }
        let mut activations = vec![batch.clone()];
        let mut pre_activations = Vec::with_capacity(self.feature_layers.len());
        let mut current = batch.clone();
        for layer in &self.feature_layers {
            let z = layer.linear(&current)?;
            current = z.relu();
            pre_activations.push(z);
            activations.push(current.clone());
        }
        let logits = self.head.linear(&current)?;
        let cache = ForwardCache {
            activations,
            pre_activations,
            batch_rows: batch.rows,
        };
        Ok((logits, cache))
    }

    /// Logits only, no cache.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.0)
    }

    /// Backpropagates grad_logits through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Matrix) -> Result<ModelGrads> {
        if grad_logits.rows != cache.batch_rows || grad_logits.cols != self.num_classes {
            return Err(Error::State(format!(
                "grad_logits {}x{} does not match cached forward ({} rows, C={})",
                grad_logits.rows, grad_logits.cols, cache.batch_rows, self.num_classes
            )));
        }
        if cache.activations.len() != self.feature_layers.len() + 1 {
            return Err(Error::State("stale forward cache".into()));
        }
        let last_act = cache.activations.last().unwrap();
        let head_w_grad = grad_logits.transpose().matmul(last_act)?;
        let head_b_grad = column_sums(grad_logits);
        let mut grad_act = grad_logits.matmul(&self.head.weights)?;

        let mut feature_grads = vec![None; self.feature_layers.len()];
        for idx in (0..self.feature_layers.len()).rev() {
            // relu backward through this layer's pre-activation
            let pre = &cache.pre_activations[idx];
            let mut grad_z = grad_act.clone();
            for (g, z) in grad_z.data.iter_mut().zip(&pre.data) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
            let input = &cache.activations[idx];
            let w_grad = grad_z.transpose().matmul(input)?;
            let b_grad = column_sums(&grad_z);
            grad_act = grad_z.matmul(&self.feature_layers[idx].weights)?;
            feature_grads[idx] = Some((w_grad, b_grad));
        }
        Ok(ModelGrads {
            feature_layers: feature_grads.into_iter().map(|g| g.unwrap()).collect(),
            head: (head_w_grad, head_b_grad),
        })
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for r in 0..m.rows {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}

/// Adam hyperparameters. Feature layers use the reduced learning rate,
/// the head uses the base rate. Weight decay is decoupled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr_head: f64,
    pub lr_feature: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr_head: 1e-4,
            lr_feature: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Moments {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Per-model Adam state (first/second moments for every parameter tensor).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    feature_w: Vec<Moments>,
    feature_b: Vec<Moments>,
    head_w: Moments,
    head_b: Moments,
}

impl AdamState {
    pub fn new(model: &ClassifierModel, config: AdamConfig) -> AdamState {
        AdamState {
            config,
            t: 0,
            feature_w: model
                .feature_layers
                .iter()
                .map(|l| Moments::zeros(l.weights.data.len()))
                .collect(),
            feature_b: model
                .feature_layers
                .iter()
                .map(|l| Moments::zeros(l.bias.len()))
                .collect(),
            head_w: Moments::zeros(model.head.weights.data.len()),
            head_b: Moments::zeros(model.head.bias.len()),
        }
    }

    /// One bias-corrected Adam step with decoupled weight decay applied
    /// as theta <- theta - lr * lambda * theta before the Adam delta.
    /// Refuses non-finite gradients without touching the model.
    pub fn step(&mut self, model: &mut ClassifierModel, grads: &ModelGrads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient, step refused".into()));
        }
        if grads.feature_layers.len() != model.feature_layers.len() {
            return Err(Error::Dimension("gradient/model layer count mismatch".into()));
        }
        self.t += 1;
        let t = self.t;
        let cfg = self.config;
        for (i, layer) in model.feature_layers.iter_mut().enumerate() {
            update_tensor(
                &mut layer.weights.data,
                &grads.feature_layers[i].0.data,
                &mut self.feature_w[i],
                cfg.lr_feature,
                &cfg,
                t,
            )?;
            update_tensor(
                &mut layer.bias,
                &grads.feature_layers[i].1,
                &mut self.feature_b[i],
                cfg.lr_feature,
                &cfg,
                t,
            )?;
        }
        update_tensor(
            &mut model.head.weights.data,
            &grads.head.0.data,
            &mut self.head_w,
            cfg.lr_head,
            &cfg,
            t,
        )?;
        update_tensor(
            &mut model.head.bias,
            &grads.head.1,
            &mut self.head_b,
            cfg.lr_head,
            &cfg,
            t,
        )?;
        Ok(())
    }
}

fn update_tensor(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    lr: f64,
    cfg: &AdamConfig,
    t: u64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension("gradient tensor shape mismatch".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        params[i] -= lr * cfg.weight_decay * params[i];
        let g = grads[i];
        moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
        moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = moments.m[i] / bc1;
        let v_hat = moments.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoint format: ASCII magic "APLR1\n", u32 little-endian JSON length,
// JSON metadata, then all parameters as little-endian f64 in declaration
// order (feature layer weights row-major then bias, per layer; head
// weights then bias).
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"APLR1\n";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    input_dim: usize,
    num_classes: usize,
    hidden_widths: Vec<usize>,
    activation: String,
    creation_seed: u64,
}

/// Serializes a model into the checkpoint byte format.
pub fn checkpoint_to_bytes(model: &ClassifierModel, creation_seed: u64) -> Vec<u8> {
    let meta = CheckpointMeta {
        input_dim: model.input_dim,
        num_classes: model.num_classes,
        hidden_widths: model.hidden_widths(),
        activation: "relu".into(),
        creation_seed,
    };
    let meta_json = serde_json::to_vec(&meta).expect("metadata serialization");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    let mut push = |vals: &[f64]| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for layer in &model.feature_layers {
        push(&layer.weights.data);
        push(&layer.bias);
    }
    push(&model.head.weights.data);
    push(&model.head.bias);
    out
}

/// Parses a checkpoint from bytes; rejects bad magic, malformed metadata,
/// and truncated or oversized payloads.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ClassifierModel> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 {
        return Err(Error::Format("checkpoint too short".into()));
    }
    if &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let mut off = CHECKPOINT_MAGIC.len();
    let json_len = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    off += 4;
    if bytes.len() < off + json_len {
        return Err(Error::Format("truncated metadata block".into()));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[off..off + json_len])
        .map_err(|e| Error::Format(format!("metadata parse: {}", e)))?;
    off += json_len;
    if meta.activation != "relu" {
        return Err(Error::Format(format!(
            "unknown activation '{}'",
            meta.activation
        )));
    }
    if meta.num_classes < 2 || meta.input_dim == 0 {
        return Err(Error::Format("degenerate model shape in metadata".into()));
    }

    let widths = &meta.hidden_widths;
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::Format("zero-width layer in metadata".into()));
    }
    let mut dims = Vec::new();
    let mut prev = meta.input_dim;
    for &w in widths {
        dims.push((prev, w));
        prev = w;
    }
    dims.push((prev, meta.num_classes));
    let expected: usize = dims.iter().map(|(i, o)| i * o + o).sum();
    let payload = &bytes[off..];
    if payload.len() != expected * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            expected * 8
        )));
    }
    let mut cursor = 0usize;
    let mut read_vec = |n: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(f64::from_le_bytes(
                payload[cursor..cursor + 8].try_into().unwrap(),
            ));
            cursor += 8;
        }
        out
    };
    let mut feature_layers = Vec::new();
    for &(in_dim, out_dim) in &dims[..dims.len() - 1] {
        let weights = Matrix::from_vec(out_dim, in_dim, read_vec(in_dim * out_dim))?;
        let bias = read_vec(out_dim);
        feature_layers.push(Layer { weights, bias });
    }
    let (hin, hout) = dims[dims.len() - 1];
    let head = Layer {
        weights: Matrix::from_vec(hout, hin, read_vec(hin * hout))?,
        bias: read_vec(hout),
    };
    let model = ClassifierModel {
        feature_layers,
        head,
        input_dim: meta.input_dim,
        num_classes: meta.num_classes,
    };
    if !model.head.weights.is_finite()
        || model.feature_layers.iter().any(|l| !l.weights.is_finite())
    {
        return Err(Error::Format("non-finite parameter in payload".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ClassifierModel, creation_seed: u64, path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(model, creation_seed);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}
