//! Layer graph with masked forward propagation and backpropagation.
//!
//! A batch is a matrix with one sample per row. Convolutional activations are
//! stored channel-major inside each row, so fully connected layers consume
//! them without an explicit flatten.

use std::collections::HashSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::{col2im_accumulate, im2col, matmul, matmul_nt, matmul_tn, KernelSpec, Matrix, Shape3};
use crate::surgery::MaskedParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    FullyConnected { outputs: usize },
    Convolution(KernelSpec),
    MaxPool { size: usize, stride: usize },
    Sigmoid,
    Relu,
    /// Softmax over the inputs followed by cross-entropy.
    SoftmaxXent,
    /// Logistic sigmoid of a single input followed by binary cross-entropy.
    SigmoidXent,
}

impl LayerKind {
    pub fn is_learnable(&self) -> bool {
        matches!(self, LayerKind::FullyConnected { .. } | LayerKind::Convolution(_))
    }

    pub fn is_loss(&self) -> bool {
        matches!(self, LayerKind::SoftmaxXent | LayerKind::SigmoidXent)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::FullyConnected { .. } => "fully_connected",
            LayerKind::Convolution(_) => "convolution",
            LayerKind::MaxPool { .. } => "max_pool",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Relu => "relu",
            LayerKind::SoftmaxXent => "softmax_xent_loss",
            LayerKind::SigmoidXent => "sigmoid_xent_loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Ignored for non-learnable layers.
    pub has_bias: bool,
}

impl LayerSpec {
    fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            has_bias: kind.is_learnable(),
        }
    }

    pub fn fully_connected(name: impl Into<String>, outputs: usize) -> Self {
        Self::new(name, LayerKind::FullyConnected { outputs })
    }

    pub fn convolution(name: impl Into<String>, kernel: KernelSpec) -> Self {
        Self::new(name, LayerKind::Convolution(kernel))
    }

    pub fn max_pool(name: impl Into<String>, size: usize, stride: usize) -> Self {
        Self::new(name, LayerKind::MaxPool { size, stride })
    }

    pub fn sigmoid(name: impl Into<String>) -> Self {
        Self::new(name, LayerKind::Sigmoid)
    }

    pub fn relu(name: impl Into<String>) -> Self {
        Self::new(name, LayerKind::Relu)
    }

    pub fn softmax_xent(name: impl Into<String>) -> Self {
        Self::new(name, LayerKind::SoftmaxXent)
    }

    pub fn sigmoid_xent(name: impl Into<String>) -> Self {
        Self::new(name, LayerKind::SigmoidXent)
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }
}

/// A validated layer chain with resolved activation shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    input: Shape3,
    layers: Vec<LayerSpec>,
    /// Output shape of each layer.
    shapes: Vec<Shape3>,
}

impl Architecture {
    pub fn new(input: Shape3, layers: Vec<LayerSpec>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::config("network input must be non-empty"));
        }
        let mut names = HashSet::new();
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input;
        for (i, layer) in layers.iter().enumerate() {
            if layer.name.is_empty() || !names.insert(layer.name.as_str()) {
                return Err(Error::config(format!(
                    "layer {i}: names must be unique and non-empty, got {:?}",
                    layer.name
                )));
            }
            let last = i + 1 == layers.len();
            if layer.kind.is_loss() != last {
                return Err(Error::config(format!(
                    "layer {:?}: the loss layer must appear exactly once, last",
                    layer.name
                )));
            }
            current = match layer.kind {
                LayerKind::FullyConnected { outputs } => {
                    if outputs == 0 {
                        return Err(Error::config(format!("layer {:?} has no outputs", layer.name)));
                    }
                    Shape3::flat(outputs)
                }
                LayerKind::Convolution(k) => k
                    .output_shape(current)
                    .map_err(|e| Error::config(format!("layer {:?}: {e}", layer.name)))?,
                LayerKind::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 || size > current.height || size > current.width {
                        return Err(Error::config(format!(
                            "layer {:?}: pooling window {size} (stride {stride}) does not fit {current}",
                            layer.name
                        )));
                    }
                    Shape3::new(
                        current.channels,
                        (current.height - size) / stride + 1,
                        (current.width - size) / stride + 1,
                    )
                }
                LayerKind::Sigmoid | LayerKind::Relu => current,
                LayerKind::SoftmaxXent => {
                    if current.len() < 2 {
                        return Err(Error::config("softmax loss needs at least two inputs"));
                    }
                    Shape3::flat(current.len())
                }
                LayerKind::SigmoidXent => {
                    if current.len() != 1 {
                        return Err(Error::config(format!(
                            "sigmoid loss takes exactly one input, got {current}"
                        )));
                    }
                    current
                }
            };
            shapes.push(current);
        }
        if layers.is_empty() {
            return Err(Error::config("network has no layers"));
        }
        if !layers.iter().any(|l| l.kind.is_learnable()) {
            return Err(Error::config("network has no learnable layers"));
        }
        Ok(Architecture {
            input,
            layers,
            shapes,
        })
    }

    pub fn input(&self) -> Shape3 {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn output_shape(&self, layer: usize) -> Shape3 {
        self.shapes[layer]
    }

    pub fn input_shape(&self, layer: usize) -> Shape3 {
        if layer == 0 {
            self.input
        } else {
            self.shapes[layer - 1]
        }
    }

    /// Number of classes the loss layer distinguishes.
    pub fn n_classes(&self) -> usize {
        match self.layers.last().map(|l| l.kind) {
            Some(LayerKind::SigmoidXent) => 2,
            _ => self.shapes.last().map_or(0, |s| s.len()),
        }
    }

    /// `(rows, cols)` of a learnable layer's weight matrix.
    pub fn weight_shape(&self, layer: usize) -> Option<(usize, usize)> {
        match self.layers[layer].kind {
            LayerKind::FullyConnected { outputs } => Some((outputs, self.input_shape(layer).len())),
            LayerKind::Convolution(k) => Some((k.out_channels, k.patch_len())),
            _ => None,
        }
    }

    /// Indices of learnable layers, in order.
    pub fn learnable(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].kind.is_learnable())
            .collect()
    }
}

/// Weights, masks and biases for an [`Architecture`].
#[derive(Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    /// One entry per learnable layer.
    pub params: Vec<MaskedParams>,
    /// One entry per learnable layer; empty for layers without bias.
    pub biases: Vec<Vec<f64>>,
    /// Maps layer index to its slot in `params`/`biases`.
    slots: Vec<Option<usize>>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("input", &self.arch.input)
            .field("layers", &self.arch.layers.iter().map(|l| &l.name).collect::<Vec<_>>())
            .finish()
    }
}

/// Builds a network with Gaussian weights (std `sqrt(2/fan_in)` for layers
/// feeding a ReLU, `sqrt(1/fan_in)` otherwise), zero biases and all-ones masks.
pub fn init_network(arch: Architecture, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    let mut biases = Vec::new();
    for i in arch.learnable() {
        let (rows, cols) = arch.weight_shape(i).expect("learnable layer");
        let feeds_relu = matches!(arch.layers.get(i + 1).map(|l| l.kind), Some(LayerKind::Relu));
        let gain = if feeds_relu { 2.0 } else { 1.0 };
        let std = (gain / cols as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let w: Vec<f64> = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        params.push(MaskedParams::new(Matrix::from_vec(rows, cols, w).expect("sized")));
        biases.push(if arch.layers[i].has_bias { vec![0.0; rows] } else { Vec::new() });
    }
    Network::assemble(arch, params, biases).expect("shapes derived from the architecture")
}

impl Network {
    /// Assembles a network from explicit parameters, checking every shape.
    pub fn assemble(arch: Architecture, params: Vec<MaskedParams>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let learnable = arch.learnable();
        if params.len() != learnable.len() || biases.len() != learnable.len() {
            return Err(Error::shape(format!(
                "{} learnable layers but {} parameter and {} bias entries",
                learnable.len(),
                params.len(),
                biases.len()
            )));
        }
        let mut slots = vec![None; arch.layers.len()];
        for (slot, &i) in learnable.iter().enumerate() {
            let shape = arch.weight_shape(i).expect("learnable");
            let p = &params[slot];
            if p.w.shape() != shape || p.t.shape() != shape {
                return Err(Error::shape(format!(
                    "layer {:?}: expected {shape:?} weights, got {:?} with mask {:?}",
                    arch.layers[i].name,
                    p.w.shape(),
                    p.t.shape()
                )));
            }
            let want_bias = if arch.layers[i].has_bias { shape.0 } else { 0 };
            if biases[slot].len() != want_bias {
                return Err(Error::shape(format!(
                    "layer {:?}: expected {want_bias} biases, got {}",
                    arch.layers[i].name,
                    biases[slot].len()
                )));
            }
            slots[i] = Some(slot);
        }
        Ok(Network {
            arch,
            params,
            biases,
            slots,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.arch.layers
    }

    /// Name of each learnable layer, in slot order.
    pub fn learnable_names(&self) -> Vec<&str> {
        self.arch
            .learnable()
            .into_iter()
            .map(|i| self.arch.layers[i].name.as_str())
            .collect()
    }

    /// Learnable layer kinds, in slot order.
    pub fn learnable_kinds(&self) -> Vec<LayerKind> {
        self.arch.learnable().into_iter().map(|i| self.arch.layers[i].kind).collect()
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.arch
            .layers
            .iter()
            .position(|l| l.name == name)
            .and_then(|i| self.slots[i])
    }

    /// Sets every mask back to ones and unfreezes thresholds.
    pub fn reset_masks(&mut self) {
        for p in &mut self.params {
            p.reset_mask();
        }
    }

    /// Connection weights (masks excluded) over all learnable layers.
    pub fn weight_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn kept_weight_count(&self) -> usize {
        self.params.iter().map(|p| p.kept()).sum()
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct BatchActivations {
    pub input: Matrix,
    /// Output of each layer; the loss layer's output holds class probabilities.
    pub outputs: Vec<Matrix>,
    /// For max-pool layers, the flat input index chosen for each output entry.
    pool_argmax: Vec<Vec<usize>>,
    pub loss: f64,
    pub correct: usize,
}

impl BatchActivations {
    pub fn probabilities(&self) -> &Matrix {
        self.outputs.last().expect("at least one layer")
    }
}

/// Gradients with respect to the masked products `W ⊙ T`, and the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_labels(net: &Network, batch: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != batch.rows() {
        return Err(Error::shape(format!(
            "{} labels for a batch of {} samples",
            labels.len(),
            batch.rows()
        )));
    }
    let classes = net.arch.n_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::shape(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Runs the batch through the network using `W ⊙ T` as effective weights.
pub fn forward(net: &Network, batch: &Matrix, labels: &[usize]) -> Result<BatchActivations> {
    let input_len = net.arch.input.len();
    if batch.cols() != input_len {
        return Err(Error::shape(format!(
            "batch has {} features, network expects {} ({})",
            batch.cols(),
            input_len,
            net.arch.input
        )));
    }
    check_labels(net, batch, labels)?;
    let n = batch.rows();
    let mut outputs: Vec<Matrix> = Vec::with_capacity(net.arch.layers.len());
    let mut pool_argmax = Vec::with_capacity(net.arch.layers.len());
    let mut loss = 0.0;
    let mut correct = 0;

    for (i, layer) in net.arch.layers.iter().enumerate() {
        let x = if i == 0 { batch } else { &outputs[i - 1] };
        let in_shape = net.arch.input_shape(i);
        let out_shape = net.arch.shapes[i];
        let mut argmax = Vec::new();
        let y = match layer.kind {
            LayerKind::FullyConnected { .. } => {
                let slot = net.slots[i].expect("learnable");
                let mut y = matmul_nt(x, &net.params[slot].masked())?;
                add_row_bias(&mut y, &net.biases[slot]);
                y
            }
            LayerKind::Convolution(k) => {
                let slot = net.slots[i].expect("learnable");
                let weff = net.params[slot].masked();
                let bias = &net.biases[slot];
                let positions = out_shape.height * out_shape.width;
                let mut y = Matrix::zeros(n, out_shape.len());
                for s in 0..n {
                    let cols = im2col(x.row(s), in_shape, &k)?;
                    let ys = matmul(&weff, &cols)?;
                    let dst = y.row_mut(s);
                    dst.copy_from_slice(ys.as_slice());
                    if !bias.is_empty() {
                        for (oc, &b) in bias.iter().enumerate() {
                            for v in &mut dst[oc * positions..(oc + 1) * positions] {
                                *v += b;
                            }
                        }
                    }
                }
                y
            }
            LayerKind::MaxPool { size, stride } => {
                let mut y = Matrix::zeros(n, out_shape.len());
                argmax = vec![0; n * out_shape.len()];
                for s in 0..n {
                    let src = x.row(s);
                    let dst = y.row_mut(s);
                    let arg = &mut argmax[s * out_shape.len()..(s + 1) * out_shape.len()];
                    for c in 0..out_shape.channels {
                        for oy in 0..out_shape.height {
                            for ox in 0..out_shape.width {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0;
                                for dy in 0..size {
                                    for dx in 0..size {
                                        let idx = (c * in_shape.height + oy * stride + dy) * in_shape.width
                                            + ox * stride
                                            + dx;
                                        if src[idx] > best {
                                            best = src[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                let o = (c * out_shape.height + oy) * out_shape.width + ox;
                                dst[o] = best;
                                arg[o] = best_idx;
                            }
                        }
                    }
                }
                y
            }
            LayerKind::Sigmoid => x.map(sigmoid),
            LayerKind::Relu => x.map(|v| v.max(0.0)),
            LayerKind::SoftmaxXent => {
                let mut p = x.clone();
                for s in 0..n {
                    let row = p.row_mut(s);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                    // log-softmax computed from the logits for stability
                    let logits = x.row(s);
                    loss += -(logits[labels[s]] - max - sum.ln());
                    if argmax_first(row) == labels[s] {
                        correct += 1;
                    }
                }
                p
            }
            LayerKind::SigmoidXent => {
                let mut p = Matrix::zeros(n, 1);
                for s in 0..n {
                    let z = x.get(s, 0);
                    let y = labels[s] as f64;
                    loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                    p.set(s, 0, sigmoid(z));
                    if (z > 0.0) == (labels[s] == 1) {
                        correct += 1;
                    }
                }
                p
            }
        };
        pool_argmax.push(argmax);
        outputs.push(y);
    }
    if n > 0 {
        loss /= n as f64;
    }
    Ok(BatchActivations {
        input: batch.clone(),
        outputs,
        pool_argmax,
        loss,
        correct,
    })
}

fn add_row_bias(y: &mut Matrix, bias: &[f64]) {
    if bias.is_empty() {
        return;
    }
    for s in 0..y.rows() {
        for (v, &b) in y.row_mut(s).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Backpropagates the loss of `acts` and returns gradients averaged over the
/// batch. Weight gradients are taken with respect to `W ⊙ T` and are *not*
/// multiplied by the mask.
pub fn backward(net: &Network, acts: &BatchActivations, labels: &[usize]) -> Result<Gradients> {
    let n = acts.input.rows();
    if acts.outputs.len() != net.arch.layers.len()
        || acts.pool_argmax.len() != net.arch.layers.len()
        || acts.input.cols() != net.arch.input.len()
        || acts
            .outputs
            .iter()
            .zip(&net.arch.shapes)
            .any(|(o, s)| o.rows() != n || o.cols() != s.len())
    {
        return Err(Error::State(
            "activation cache does not match this network".to_string(),
        ));
    }
    if labels.len() != n {
        return Err(Error::State(format!(
            "{} labels for cached batch of {n}",
            labels.len()
        )));
    }
    check_labels(net, &acts.input, labels)?;

    let mut weight_grads: Vec<Option<Matrix>> = vec![None; net.params.len()];
    let mut bias_grads: Vec<Vec<f64>> = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let scale = if n > 0 { 1.0 / n as f64 } else { 0.0 };

    let last = net.arch.layers.len() - 1;
    // Gradient with respect to the input of the loss layer.
    let mut delta = acts.outputs[last].clone();
    match net.arch.layers[last].kind {
        LayerKind::SoftmaxXent => {
            for (s, &label) in labels.iter().enumerate() {
                let row = delta.row_mut(s);
                row[label] -= 1.0;
                for v in row.iter_mut() {
                    *v *= scale;
                }
            }
        }
        LayerKind::SigmoidXent => {
            for (s, &label) in labels.iter().enumerate() {
                let v = delta.get(s, 0);
                delta.set(s, 0, (v - label as f64) * scale);
            }
        }
        _ => unreachable!("architecture ends in a loss layer"),
    }

    for i in (0..last).rev() {
        let x = if i == 0 { &acts.input } else { &acts.outputs[i - 1] };
        let y = &acts.outputs[i];
        let in_shape = net.arch.input_shape(i);
        let out_shape = net.arch.shapes[i];
        let need_input_grad = i > 0;
        delta = match net.arch.layers[i].kind {
            LayerKind::Sigmoid => {
                let d = delta.as_mut_slice();
                for (g, &o) in d.iter_mut().zip(y.as_slice()) {
                    *g *= o * (1.0 - o);
                }
                delta
            }
            LayerKind::Relu => {
                let d = delta.as_mut_slice();
                for (g, &o) in d.iter_mut().zip(y.as_slice()) {
                    if o <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta
            }
            LayerKind::MaxPool { .. } => {
                let mut dx = Matrix::zeros(n, in_shape.len());
                let per = out_shape.len();
                for s in 0..n {
                    let arg = &acts.pool_argmax[i][s * per..(s + 1) * per];
                    let src = delta.row(s);
                    let dst = dx.row_mut(s);
                    for (o, &idx) in arg.iter().enumerate() {
                        dst[idx] += src[o];
                    }
                }
                dx
            }
            LayerKind::FullyConnected { .. } => {
                let slot = net.slots[i].expect("learnable");
                weight_grads[slot] = Some(matmul_tn(&delta, x)?);
                let db = &mut bias_grads[slot];
                if !db.is_empty() {
                    for s in 0..n {
                        for (b, &g) in db.iter_mut().zip(delta.row(s)) {
                            *b += g;
                        }
                    }
                }
                if need_input_grad {
                    matmul(&delta, &net.params[slot].masked())?
                } else {
                    Matrix::zeros(0, 0)
                }
            }
            LayerKind::Convolution(k) => {
                let slot = net.slots[i].expect("learnable");
                let weff = net.params[slot].masked();
                let positions = out_shape.height * out_shape.width;
                let mut dw = Matrix::zeros(weff.rows(), weff.cols());
                let mut dx = if need_input_grad {
                    Matrix::zeros(n, in_shape.len())
                } else {
                    Matrix::zeros(0, 0)
                };
                let db = &mut bias_grads[slot];
                for s in 0..n {
                    let cols = im2col(x.row(s), in_shape, &k)?;
                    let dy = Matrix::from_vec(k.out_channels, positions, delta.row(s).to_vec())?;
                    let contrib = matmul_nt(&dy, &cols)?;
                    for (a, &b) in dw.as_mut_slice().iter_mut().zip(contrib.as_slice()) {
                        *a += b;
                    }
                    if !db.is_empty() {
                        for (oc, b) in db.iter_mut().enumerate() {
                            *b += dy.row(oc).iter().sum::<f64>();
                        }
                    }
                    if need_input_grad {
                        let dcols = matmul_tn(&weff, &dy)?;
                        col2im_accumulate(&dcols, in_shape, &k, dx.row_mut(s))?;
                    }
                }
                weight_grads[slot] = Some(dw);
                dx
            }
            LayerKind::SoftmaxXent | LayerKind::SigmoidXent => unreachable!("loss layer is last"),
        };
    }

    Ok(Gradients {
        weights: weight_grads
            .into_iter()
            .map(|g| g.expect("every learnable layer visited"))
            .collect(),
        biases: bias_grads,
    })
}

/// Top-1 error and mean loss over a labelled dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub error: f64,
    pub loss: f64,
    pub samples: usize,
}

/// Evaluates in chunks of `chunk` samples to bound memory.
pub fn evaluate(net: &Network, features: &Matrix, labels: &[usize], chunk: usize) -> Result<Evaluation> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} samples", labels.len())));
    }
    let chunk = chunk.max(1);
    let mut correct = 0;
    let mut loss = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let acts = forward(net, &features.select_rows(&idx), &labels[start..end])?;
        correct += acts.correct;
        loss += acts.loss * (end - start) as f64;
        start = end;
    }
    let denom = n.max(1) as f64;
    Ok(Evaluation {
        error: (n - correct) as f64 / denom,
        loss: loss / denom,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(input: usize, hidden: usize, out: usize, act: fn(&'static str) -> LayerSpec) -> Architecture {
        Architecture::new(
            Shape3::flat(input),
            vec![
                LayerSpec::fully_connected("fc1", hidden),
                act("act1"),
                LayerSpec::fully_connected("fc2", out),
                LayerSpec::softmax_xent("loss"),
            ],
        )
        .unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> (Matrix, Vec<usize>) {
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        (x, y)
    }

    #[test]
    fn architecture_validation() {
        let bad_loss_position = Architecture::new(
            Shape3::flat(2),
            vec![LayerSpec::softmax_xent("loss"), LayerSpec::fully_connected("fc", 2)],
        );
        assert!(matches!(bad_loss_position, Err(Error::Config(_))));

        let no_loss = Architecture::new(Shape3::flat(2), vec![LayerSpec::fully_connected("fc", 2)]);
        assert!(no_loss.is_err());

        let dup = Architecture::new(
            Shape3::flat(2),
            vec![
                LayerSpec::fully_connected("fc", 2),
                LayerSpec::fully_connected("fc", 2),
                LayerSpec::softmax_xent("loss"),
            ],
        );
        assert!(dup.is_err());

        let sigmoid_loss_width = Architecture::new(
            Shape3::flat(2),
            vec![LayerSpec::fully_connected("fc", 2), LayerSpec::sigmoid_xent("loss")],
        );
        assert!(sigmoid_loss_width.is_err());
    }

    #[test]
    fn init_sets_all_masks_and_is_deterministic() {
        let arch = toy(4, 6, 3, LayerSpec::relu);
        let a = init_network(arch.clone(), 9);
        let b = init_network(arch.clone(), 9);
        assert!(a == b);
        assert!(a.params.iter().all(|p| p.t.as_slice().iter().all(|&v| v == 1.0)));
        assert!(a.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let c = init_network(arch, 10);
        assert!(a != c);
    }

    #[test]
    fn init_std_matches_fan_in() {
        let arch = Architecture::new(
            Shape3::flat(100),
            vec![
                LayerSpec::fully_connected("fc", 1000),
                LayerSpec::sigmoid("act"),
                LayerSpec::fully_connected("out", 2),
                LayerSpec::softmax_xent("loss"),
            ],
        )
        .unwrap();
        let net = init_network(arch, 1);
        let w = net.params[0].w.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        assert!((std - 0.1).abs() < 0.01, "std {std}");
    }

    #[test]
    fn sigmoid_neuron_at_zero() {
        let arch = Architecture::new(
            Shape3::flat(2),
            vec![LayerSpec::fully_connected("fc", 1), LayerSpec::sigmoid_xent("loss")],
        )
        .unwrap();
        let mut net = init_network(arch, 0);
        net.params[0].w = Matrix::zeros(1, 2);
        let x = Matrix::from_rows(&[[0.3, -4.0], [10.0, 2.0]]).unwrap();
        let acts = forward(&net, &x, &[0, 1]).unwrap();
        assert_eq!(acts.probabilities().as_slice(), &[0.5, 0.5]);
        assert!((acts.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_masks_zero_preactivations() {
        let arch = Architecture::new(
            Shape3::flat(3),
            vec![
                LayerSpec::fully_connected("fc1", 4),
                LayerSpec::sigmoid("s1"),
                LayerSpec::fully_connected("fc2", 1),
                LayerSpec::sigmoid_xent("loss"),
            ],
        )
        .unwrap();
        let mut net = init_network(arch, 3);
        for p in &mut net.params {
            p.t = Matrix::zeros(p.t.rows(), p.t.cols());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, _) = random_batch(&mut rng, 5, 3, 2);
        let acts = forward(&net, &x, &[0, 1, 0, 1, 1]).unwrap();
        assert!(acts.outputs[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(acts.outputs[2].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_prediction_has_zero_loss_gradient() {
        // Saturated logits make softmax exactly one-hot in f64.
        let arch = Architecture::new(
            Shape3::flat(2),
            vec![LayerSpec::fully_connected("fc", 2), LayerSpec::softmax_xent("loss")],
        )
        .unwrap();
        let mut net = init_network(arch, 0);
        net.params[0].w = Matrix::zeros(2, 2);
        net.biases[0] = vec![1000.0, 0.0];
        let x = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let acts = forward(&net, &x, &[0]).unwrap();
        assert_eq!(acts.probabilities().as_slice(), &[1.0, 0.0]);
        let g = backward(&net, &acts, &[0]).unwrap();
        assert!(g.weights[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(g.biases[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let arch = toy(3, 4, 2, LayerSpec::sigmoid);
        let net = init_network(arch, 0);
        let other = init_network(toy(3, 5, 2, LayerSpec::sigmoid), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, y) = random_batch(&mut rng, 4, 3, 2);
        let acts = forward(&other, &x, &y).unwrap();
        assert!(matches!(backward(&net, &acts, &y), Err(Error::State(_))));
        let acts = forward(&net, &x, &y).unwrap();
        assert!(matches!(backward(&net, &acts, &y[..2]), Err(Error::State(_))));
    }

    #[test]
    fn forward_rejects_wrong_width_and_labels() {
        let net = init_network(toy(3, 4, 2, LayerSpec::sigmoid), 0);
        assert!(matches!(forward(&net, &Matrix::zeros(2, 4), &[0, 1]), Err(Error::Shape(_))));
        assert!(matches!(forward(&net, &Matrix::zeros(2, 3), &[0, 2]), Err(Error::Shape(_))));
        assert!(matches!(forward(&net, &Matrix::zeros(2, 3), &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let arch = Architecture::new(
            Shape3::new(1, 2, 2),
            vec![
                LayerSpec::max_pool("pool", 2, 2),
                LayerSpec::fully_connected("fc", 2),
                LayerSpec::softmax_xent("loss"),
            ],
        )
        .unwrap();
        let net = init_network(arch, 2);
        let x = Matrix::from_rows(&[[0.1, 0.9, -0.3, 0.2]]).unwrap();
        let acts = forward(&net, &x, &[1]).unwrap();
        assert_eq!(acts.outputs[0].as_slice(), &[0.9]);
        let g = backward(&net, &acts, &[1]).unwrap();
        // fc gradient sees the pooled activation as its only input
        let d = &g.weights[0];
        assert_eq!(d.shape(), (2, 1));
        assert!((d.get(0, 0) - acts.probabilities().get(0, 0) * 0.9).abs() < 1e-15);
    }
}
