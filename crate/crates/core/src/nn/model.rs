use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{LayerSpec, NetworkSpec, NnError, Shape};
use crate::data::Dataset;
use crate::linalg::Matrix;
use crate::math;
use crate::rng;
use crate::svcca::ActivationMatrix;

/// Batches evaluated at once during inference-only passes.
const EVAL_CHUNK: usize = 256;

/// A network with materialized parameters. Parameter vectors are aligned
/// to layer indices; parameterless layers hold empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Cached per-layer outputs of one forward pass, plus max-pool routing.
#[derive(Debug)]
pub struct ForwardPass {
    /// `outputs[i]` is the activation after layer `i` (batch-major); the
    /// last entry holds the logits.
    outputs: Vec<Vec<f64>>,
    /// For each max-pool layer: the flat input index chosen per output cell.
    switches: Vec<Vec<usize>>,
    batch: usize,
}

impl ForwardPass {
    #[inline]
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().unwrap()
    }

    #[inline]
    pub fn layer_output(&self, layer: usize) -> &[f64] {
        &self.outputs[layer]
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Per-layer parameter gradients, shaped like the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Model {
    /// Deterministic He/fan-in initialization: weights drawn from
    /// `N(0, 2/fan_in)` in fixed layer order, biases zero. The same
    /// `(spec, seed)` always yields bit-identical parameters.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Model {
        let mut stream = rng::stream(seed, rng::TAG_INIT);
        let mut weights = Vec::with_capacity(spec.layers().len());
        let mut biases = Vec::with_capacity(spec.layers().len());
        for layer in spec.layers() {
            match *layer {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let fan_in = in_channels * kernel * kernel;
                    let std = math::sqrt(2.0 / fan_in as f64);
                    let w = (0..out_channels * fan_in)
                        .map(|_| std * rng::normal(&mut stream))
                        .collect();
                    weights.push(w);
                    biases.push(vec![0.0; out_channels]);
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let std = math::sqrt(2.0 / inputs as f64);
                    let w = (0..outputs * inputs)
                        .map(|_| std * rng::normal(&mut stream))
                        .collect();
                    weights.push(w);
                    biases.push(vec![0.0; outputs]);
                }
                _ => {
                    weights.push(Vec::new());
                    biases.push(Vec::new());
                }
            }
        }
        Model {
            spec: spec.clone(),
            weights,
            biases,
        }
    }

    #[inline]
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Mutable access to (weights, biases), e.g. for optimizers or
    /// finite-difference probes.
    pub fn params_mut(&mut self) -> (&mut [Vec<f64>], &mut [Vec<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    /// Flattens all parameters (layer order, weights then bias) for
    /// checkpoint serialization.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.parameter_count());
        for i in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[i]);
            out.extend_from_slice(&self.biases[i]);
        }
        out
    }

    /// Rebuilds a model from a flat checkpoint produced by `to_flat`.
    pub fn from_flat(spec: &NetworkSpec, flat: &[f64]) -> Result<Model, NnError> {
        if flat.len() != spec.parameter_count() {
            return Err(NnError::BadCheckpoint {
                expected: spec.parameter_count(),
                found: flat.len(),
            });
        }
        let mut model = Model::init(spec, 0);
        let mut offset = 0;
        for i in 0..model.weights.len() {
            let wlen = model.weights[i].len();
            model.weights[i].copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = model.biases[i].len();
            model.biases[i].copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        Ok(model)
    }

    /// Forward pass over a batch, caching every layer output so taps and
    /// backprop can read them.
    pub fn forward(&self, input: &[f64], batch: usize) -> Result<ForwardPass, NnError> {
        let in_len = self.spec.input().len();
        if batch == 0 || input.len() != batch * in_len {
            return Err(NnError::InvalidHyper { name: "batch" });
        }
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.spec.layers().len());
        let mut switches: Vec<Vec<usize>> = Vec::new();
        let mut shape = self.spec.input();
        let mut current: &[f64] = input;

        for (idx, layer) in self.spec.layers().iter().enumerate() {
            let out = match *layer {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let (h, w) = image_dims(shape);
                    conv_forward(
                        current,
                        batch,
                        in_channels,
                        h,
                        w,
                        out_channels,
                        kernel,
                        &self.weights[idx],
                        &self.biases[idx],
                    )
                }
                LayerSpec::Relu => current
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { 0.0 })
                    .collect(),
                LayerSpec::MaxPool2x2 => {
                    let (h, w) = image_dims(shape);
                    let channels = match shape {
                        Shape::Image { channels, .. } => channels,
                        Shape::Flat(_) => unreachable!("validated at spec construction"),
                    };
                    let (out, sw) = maxpool_forward(current, batch, channels, h, w);
                    switches.push(sw);
                    out
                }
                LayerSpec::Flatten => current.to_vec(),
                LayerSpec::Dense { inputs, outputs } => dense_forward(
                    current,
                    batch,
                    inputs,
                    outputs,
                    &self.weights[idx],
                    &self.biases[idx],
                ),
            };
            outputs.push(out);
            shape = self.spec.shape_after(idx);
            current = outputs.last().unwrap();
        }
        Ok(ForwardPass {
            outputs,
            switches,
            batch,
        })
    }

    /// Backward pass, given `d_logits = dLoss/dLogits` for the batch.
    pub fn backward(&self, input: &[f64], fp: &ForwardPass, d_logits: &[f64]) -> Gradients {
        let batch = fp.batch;
        let mut grads = Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let mut d_out: Vec<f64> = d_logits.to_vec();
        let mut pool_cursor = fp.switches.len();

        for idx in (0..self.spec.layers().len()).rev() {
            let layer_input: &[f64] = if idx == 0 {
                input
            } else {
                &fp.outputs[idx - 1]
            };
            let in_shape = if idx == 0 {
                self.spec.input()
            } else {
                self.spec.shape_after(idx - 1)
            };
            d_out = match self.spec.layers()[idx] {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let (h, w) = image_dims(in_shape);
                    conv_backward(
                        layer_input,
                        &d_out,
                        batch,
                        in_channels,
                        h,
                        w,
                        out_channels,
                        kernel,
                        &self.weights[idx],
                        &mut grads.weights[idx],
                        &mut grads.biases[idx],
                    )
                }
                LayerSpec::Relu => layer_input
                    .iter()
                    .zip(&d_out)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
                LayerSpec::MaxPool2x2 => {
                    pool_cursor -= 1;
                    let mut d_in = vec![0.0; layer_input.len()];
                    for (cell, &src) in fp.switches[pool_cursor].iter().enumerate() {
                        d_in[src] += d_out[cell];
                    }
                    d_in
                }
                LayerSpec::Flatten => d_out,
                LayerSpec::Dense { inputs, outputs } => dense_backward(
                    layer_input,
                    &d_out,
                    batch,
                    inputs,
                    outputs,
                    &self.weights[idx],
                    &mut grads.weights[idx],
                    &mut grads.biases[idx],
                ),
            };
        }
        grads
    }

    /// Softmax probabilities over the full dataset as an `N x C` matrix.
    pub fn predict_probs(&self, ds: &Dataset) -> Result<Matrix, NnError> {
        check_dataset(&self.spec, ds)?;
        let classes = self.spec.output_dim();
        let mut probs = Vec::with_capacity(ds.samples * classes);
        let stride = ds.pixels_per_sample();
        let mut n = 0;
        while n < ds.samples {
            let chunk = EVAL_CHUNK.min(ds.samples - n);
            let fp = self.forward(&ds.images[n * stride..(n + chunk) * stride], chunk)?;
            probs.extend(softmax_rows(fp.logits(), chunk, classes));
            n += chunk;
        }
        Ok(Matrix::new(ds.samples, classes, probs)?)
    }

    /// Activation matrices (neurons by samples) for every declared tap
    /// point, evaluated over the full dataset.
    pub fn capture_taps(&self, ds: &Dataset) -> Result<Vec<(String, ActivationMatrix)>, NnError> {
        check_dataset(&self.spec, ds)?;
        let stride = ds.pixels_per_sample();
        let mut mats: Vec<(String, Matrix)> = self
            .spec
            .taps()
            .iter()
            .map(|(name, layer)| {
                let neurons = self.spec.shape_after(*layer).len();
                (name.clone(), Matrix::zeros(neurons, ds.samples))
            })
            .collect();

        let mut n = 0;
        while n < ds.samples {
            let chunk = EVAL_CHUNK.min(ds.samples - n);
            let fp = self.forward(&ds.images[n * stride..(n + chunk) * stride], chunk)?;
            for ((_, layer), (_, mat)) in self.spec.taps().iter().zip(mats.iter_mut()) {
                let out = fp.layer_output(*layer);
                let neurons = mat.rows();
                for b in 0..chunk {
                    for j in 0..neurons {
                        mat.set(j, n + b, out[b * neurons + j]);
                    }
                }
            }
            n += chunk;
        }

        mats.into_iter()
            .map(|(name, mat)| {
                let act = ActivationMatrix::new(name.clone(), mat, ds.fingerprint)
                    .map_err(|_| NnError::EmptyDataset)?;
                Ok((name, act))
            })
            .collect()
    }

    /// Argmax labels over the dataset (ties toward the lowest class).
    pub fn predict_labels(&self, ds: &Dataset) -> Result<Vec<usize>, NnError> {
        check_dataset(&self.spec, ds)?;
        let classes = self.spec.output_dim();
        let stride = ds.pixels_per_sample();
        let mut labels = Vec::with_capacity(ds.samples);
        let mut n = 0;
        while n < ds.samples {
            let chunk = EVAL_CHUNK.min(ds.samples - n);
            let fp = self.forward(&ds.images[n * stride..(n + chunk) * stride], chunk)?;
            let logits = fp.logits();
            for b in 0..chunk {
                labels.push(argmax(&logits[b * classes..(b + 1) * classes]));
            }
            n += chunk;
        }
        Ok(labels)
    }
}

pub(super) fn check_dataset(spec: &NetworkSpec, ds: &Dataset) -> Result<(), NnError> {
    if ds.samples == 0 {
        return Err(NnError::EmptyDataset);
    }
    match spec.input() {
        Shape::Image {
            channels,
            height,
            width,
        } => {
            if (channels, height, width) != (ds.channels, ds.height, ds.width) {
                return Err(NnError::InputMismatch {
                    expected: (channels, height, width),
                    found: (ds.channels, ds.height, ds.width),
                });
            }
        }
        Shape::Flat(_) => unreachable!("network input is always image-shaped"),
    }
    Ok(())
}

pub(super) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &[f64], batch: usize, classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * classes);
    for b in 0..batch {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exps: Vec<f64> = row.iter().map(|&v| math::exp(v - max)).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / sum));
    }
    out
}

/// Mean cross-entropy of softmax probabilities against integer labels.
pub fn cross_entropy(probs: &[f64], labels: &[usize], classes: usize) -> f64 {
    let batch = labels.len();
    let mut total = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        total -= math::ln(probs[b * classes + label]);
    }
    total / batch as f64
}

/// `dLoss/dLogits` for softmax cross-entropy: `(probs - onehot) / batch`.
pub fn cross_entropy_grad(probs: &[f64], labels: &[usize], classes: usize) -> Vec<f64> {
    let batch = labels.len();
    let mut grad = probs.to_vec();
    for (b, &label) in labels.iter().enumerate() {
        grad[b * classes + label] -= 1.0;
    }
    for g in &mut grad {
        *g /= batch as f64;
    }
    grad
}

fn image_dims(shape: Shape) -> (usize, usize) {
    match shape {
        Shape::Image { height, width, .. } => (height, width),
        Shape::Flat(_) => unreachable!("validated at spec construction"),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &[f64],
    batch: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    k: usize,
    weights: &[f64],
    biases: &[f64],
) -> Vec<f64> {
    let oh = h - k + 1;
    let ow = w - k + 1;
    let mut out = vec![0.0; batch * out_ch * oh * ow];
    for b in 0..batch {
        let in_base = b * in_ch * h * w;
        let out_base = b * out_ch * oh * ow;
        for oc in 0..out_ch {
            let w_base = oc * in_ch * k * k;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = biases[oc];
                    for ic in 0..in_ch {
                        let plane = in_base + ic * h * w;
                        let w_plane = w_base + ic * k * k;
                        for ky in 0..k {
                            let row = plane + (oy + ky) * w + ox;
                            let w_row = w_plane + ky * k;
                            for kx in 0..k {
                                acc += weights[w_row + kx] * input[row + kx];
                            }
                        }
                    }
                    out[out_base + oc * oh * ow + oy * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    d_out: &[f64],
    batch: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    k: usize,
    weights: &[f64],
    d_weights: &mut [f64],
    d_biases: &mut [f64],
) -> Vec<f64> {
    let oh = h - k + 1;
    let ow = w - k + 1;
    let mut d_in = vec![0.0; batch * in_ch * h * w];
    for b in 0..batch {
        let in_base = b * in_ch * h * w;
        let out_base = b * out_ch * oh * ow;
        for oc in 0..out_ch {
            let w_base = oc * in_ch * k * k;
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = d_out[out_base + oc * oh * ow + oy * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    d_biases[oc] += g;
                    for ic in 0..in_ch {
                        let plane = in_base + ic * h * w;
                        let w_plane = w_base + ic * k * k;
                        for ky in 0..k {
                            let row = plane + (oy + ky) * w + ox;
                            let w_row = w_plane + ky * k;
                            for kx in 0..k {
                                d_weights[w_row + kx] += g * input[row + kx];
                                d_in[row + kx] += g * weights[w_row + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// Returns (output, switches); each switch is the flat input index of the
/// window maximum, first-scan-order wins on ties.
fn maxpool_forward(
    input: &[f64],
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<usize>) {
    let oh = h / 2;
    let ow = w / 2;
    let mut out = vec![0.0; batch * channels * oh * ow];
    let mut switches = vec![0usize; out.len()];
    for b in 0..batch {
        for c in 0..channels {
            let plane = (b * channels + c) * h * w;
            let out_plane = (b * channels + c) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = plane + (2 * oy) * w + 2 * ox;
                    let mut best = input[best_idx];
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let idx = plane + (2 * oy + ky) * w + 2 * ox + kx;
                            if input[idx] > best {
                                best = input[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let cell = out_plane + oy * ow + ox;
                    out[cell] = best;
                    switches[cell] = best_idx;
                }
            }
        }
    }
    (out, switches)
}

fn dense_forward(
    input: &[f64],
    batch: usize,
    inputs: usize,
    outputs: usize,
    weights: &[f64],
    biases: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; batch * outputs];
    for b in 0..batch {
        let x = &input[b * inputs..(b + 1) * inputs];
        let y = &mut out[b * outputs..(b + 1) * outputs];
        y.copy_from_slice(biases);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &weights[o * inputs..(o + 1) * inputs];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *yo += acc;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    input: &[f64],
    d_out: &[f64],
    batch: usize,
    inputs: usize,
    outputs: usize,
    weights: &[f64],
    d_weights: &mut [f64],
    d_biases: &mut [f64],
) -> Vec<f64> {
    let mut d_in = vec![0.0; batch * inputs];
    for b in 0..batch {
        let x = &input[b * inputs..(b + 1) * inputs];
        let g = &d_out[b * outputs..(b + 1) * outputs];
        let dx = &mut d_in[b * inputs..(b + 1) * inputs];
        for (o, &go) in g.iter().enumerate() {
            d_biases[o] += go;
            if go == 0.0 {
                continue;
            }
            let w_row = &weights[o * inputs..(o + 1) * inputs];
            let dw_row = &mut d_weights[o * inputs..(o + 1) * inputs];
            for i in 0..inputs {
                dw_row[i] += go * x[i];
                dx[i] += go * w_row[i];
            }
        }
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn dense_only(classes: usize) -> NetworkSpec {
        NetworkSpec::new(
            1,
            2,
            2,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: classes,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = NetworkSpec::desk(1, 12, 12, 3).unwrap();
        let a = Model::init(&spec, 7);
        let b = Model::init(&spec, 7);
        assert_eq!(a.to_flat(), b.to_flat());
        let c = Model::init(&spec, 8);
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn he_init_std_matches_fan_in() {
        // dense(4, 2500) gives 10k weight draws for the std estimate.
        let spec = NetworkSpec::new(
            1,
            2,
            2,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: 2500,
                },
            ],
        )
        .unwrap();
        let model = Model::init(&spec, 3);
        let w = &model.weights()[1];
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
        let std = var.sqrt();
        let expected = (2.0f64 / 4.0).sqrt();
        assert!(
            (std - expected).abs() < 0.3 * expected,
            "std {std} vs expected {expected}"
        );
        assert!(model.biases()[1].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_emits_uniform_probs() {
        let spec = dense_only(4);
        let mut model = Model::init(&spec, 1);
        for w in &mut model.weights {
            for v in w.iter_mut() {
                *v = 0.0;
            }
        }
        let fp = model.forward(&[0.3, 0.1, 0.9, 0.4], 1).unwrap();
        let probs = softmax_rows(fp.logits(), 1, 4);
        for &p in &probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_dense_argmax_tracks_input() {
        let spec = dense_only(4);
        let mut model = Model::init(&spec, 1);
        model.weights[1] = Matrix::identity(4).into_data();
        for (hot, input) in [
            (2usize, [0.0, 0.0, 1.0, 0.0]),
            (0, [1.0, 0.0, 0.0, 0.0]),
            (3, [0.0, 0.0, 0.0, 1.0]),
        ] {
            let fp = model.forward(&input, 1).unwrap();
            assert_eq!(argmax(fp.logits()), hot);
        }
    }

    // Independent scalar-reference forward: per-output-value recursion with
    // no shared code or loop structure with the production pass.
    mod reference {
        use super::*;

        pub fn forward_value(model: &Model, input: &[f64], layer: usize, flat_index: usize) -> f64 {
            let spec = model.spec();
            let get_in = |i: usize| -> f64 {
                if layer == 0 {
                    input[i]
                } else {
                    forward_value(model, input, layer - 1, i)
                }
            };
            let in_shape = if layer == 0 {
                spec.input()
            } else {
                spec.shape_after(layer - 1)
            };
            match spec.layers()[layer] {
                LayerSpec::Relu => get_in(flat_index).max(0.0),
                LayerSpec::Flatten => get_in(flat_index),
                LayerSpec::Dense { inputs, outputs: _ } => {
                    let w = &model.weights()[layer];
                    let mut acc = model.biases()[layer][flat_index];
                    for i in 0..inputs {
                        acc += w[flat_index * inputs + i] * get_in(i);
                    }
                    acc
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels: _,
                    kernel,
                } => {
                    let (h, w) = match in_shape {
                        Shape::Image { height, width, .. } => (height, width),
                        _ => unreachable!(),
                    };
                    let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                    let oc = flat_index / (oh * ow);
                    let oy = (flat_index / ow) % oh;
                    let ox = flat_index % ow;
                    let mut acc = model.biases()[layer][oc];
                    for ic in 0..in_channels {
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                                let ii = ic * h * w + (oy + ky) * w + (ox + kx);
                                acc += model.weights()[layer][wi] * get_in(ii);
                            }
                        }
                    }
                    acc
                }
                LayerSpec::MaxPool2x2 => {
                    let (h, w) = match in_shape {
                        Shape::Image { height, width, .. } => (height, width),
                        _ => unreachable!(),
                    };
                    let (oh, ow) = (h / 2, w / 2);
                    let c = flat_index / (oh * ow);
                    let oy = (flat_index / ow) % oh;
                    let ox = flat_index % ow;
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let ii = c * h * w + (2 * oy + ky) * w + (2 * ox + kx);
                            best = best.max(get_in(ii));
                        }
                    }
                    best
                }
            }
        }
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let spec = NetworkSpec::desk(1, 10, 10, 3).unwrap();
        let model = Model::init(&spec, 5);
        let mut stream = crate::rng::stream(6, 0x21);
        let input: Vec<f64> = (0..100).map(|_| stream.gen::<f64>()).collect();
        let fp = model.forward(&input, 1).unwrap();
        let last = spec.layers().len() - 1;
        for c in 0..3 {
            let expected = reference::forward_value(&model, &input, last, c);
            assert!(
                (fp.logits()[c] - expected).abs() < 1e-10,
                "logit {c}: {} vs {expected}",
                fp.logits()[c]
            );
        }
    }

    #[test]
    fn batched_forward_equals_per_sample() {
        let spec = NetworkSpec::desk(1, 10, 10, 2).unwrap();
        let model = Model::init(&spec, 9);
        let mut stream = crate::rng::stream(10, 0x22);
        let batch: Vec<f64> = (0..3 * 100).map(|_| stream.gen::<f64>()).collect();
        let joint = model.forward(&batch, 3).unwrap();
        for b in 0..3 {
            let single = model.forward(&batch[b * 100..(b + 1) * 100], 1).unwrap();
            for (x, y) in single
                .logits()
                .iter()
                .zip(&joint.logits()[b * 2..(b + 1) * 2])
            {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax_only() {
        let spec = NetworkSpec::new(
            1,
            2,
            2,
            vec![
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 1,
                    outputs: 2,
                },
            ],
        )
        .unwrap();
        let model = Model::init(&spec, 1);
        let input = [0.1, 0.9, 0.4, 0.2];
        let fp = model.forward(&input, 1).unwrap();
        assert_eq!(fp.layer_output(0), &[0.9]);

        let probs = softmax_rows(fp.logits(), 1, 2);
        let d_logits = cross_entropy_grad(&probs, &[0], 2);
        let grads = model.backward(&input, &fp, &d_logits);
        // Only position 1 (the argmax) receives routed gradient.
        assert_eq!(fp.switches[0][0], 1);
        assert!(grads.weights[2].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn loss_matches_negative_log_prob() {
        let probs = [0.7, 0.2, 0.1];
        let loss = cross_entropy(&probs, &[0], 3);
        assert!((loss - (-(0.7f64).ln())).abs() < 1e-10);
        assert!(loss >= 0.0);
    }

    #[test]
    fn cross_entropy_loss_non_negative_on_random_models() {
        let spec = dense_only(3);
        let model = Model::init(&spec, 11);
        let mut stream = crate::rng::stream(12, 0x23);
        for _ in 0..20 {
            let input: Vec<f64> = (0..4).map(|_| stream.gen::<f64>()).collect();
            let fp = model.forward(&input, 1).unwrap();
            let probs = softmax_rows(fp.logits(), 1, 3);
            assert!(cross_entropy(&probs, &[1], 3) >= 0.0);
        }
    }

    #[test]
    fn flat_roundtrip() {
        let spec = NetworkSpec::desk(1, 12, 12, 3).unwrap();
        let model = Model::init(&spec, 13);
        let flat = model.to_flat();
        assert_eq!(flat.len(), spec.parameter_count());
        let back = Model::from_flat(&spec, &flat).unwrap();
        assert_eq!(model, back);
        assert!(matches!(
            Model::from_flat(&spec, &flat[1..]),
            Err(NnError::BadCheckpoint { .. })
        ));
    }

    #[test]
    fn predict_probs_rows_normalized() {
        let spec = NetworkSpec::desk(1, 10, 10, 3).unwrap();
        let model = Model::init(&spec, 2);
        let data = crate::data::generate_synthetic(
            &crate::data::SyntheticSpec {
                classes: 3,
                samples: 10,
                image_size: 10,
                noise: 0.2,
            },
            1,
            Split::Test,
        )
        .unwrap();
        let probs = model.predict_probs(&data).unwrap();
        for n in 0..10 {
            let sum: f64 = probs.row(n).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    use rand::Rng;
}
