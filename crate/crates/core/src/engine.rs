//! Forward inference, response collection and classification metrics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::model::{
    Activation, BatchNorm, Conv2d, Dense, Layer, Lrn, Network, Pool2d, PoolMode, Shape,
};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Flattened input, channel-major for spatial inputs.
    pub input: Vec<f64>,
    pub label: Option<usize>,
}

impl Sample {
    pub fn new(input: Vec<f64>, label: Option<usize>) -> Self {
        Sample { input, label }
    }

    pub fn labeled(input: Vec<f64>, label: usize) -> Self {
        Sample {
            input,
            label: Some(label),
        }
    }
}

/// Per-layer responses for one sample: `responses[0]` is the input and
/// `responses[l + 1]` is the output of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub responses: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn input(&self) -> &[f64] {
        &self.responses[0]
    }

    /// Response of layer `l`.
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.responses[l + 1]
    }

    pub fn output(&self) -> &[f64] {
        self.responses.last().expect("trace holds the input")
    }
}

/// `M × N` responses of one layer over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub layer_id: usize,
    pub data: Matrix,
}

impl ResponseMatrix {
    pub fn samples(&self) -> usize {
        self.data.rows()
    }

    pub fn features(&self) -> usize {
        self.data.cols()
    }
}

/// Neuron masks on layer outputs, keyed by layer id; `false` forces the
/// neuron's response to zero.
pub type Masks = BTreeMap<usize, Vec<bool>>;

/// Splits a flat channel-major response into `[channel][row][col]`.
pub fn unflatten(shape: Shape, flat: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
    check_len(shape.len(), flat.len(), "response")?;
    let (channels, size) = match shape {
        Shape::Flat(n) => (n, 1),
        Shape::Map { channels, size } => (channels, size),
    };
    Ok((0..channels)
        .map(|c| {
            (0..size)
                .map(|r| {
                    let start = (c * size + r) * size;
                    flat[start..start + size].to_vec()
                })
                .collect()
        })
        .collect())
}

pub fn flatten(tensor: &[Vec<Vec<f64>>]) -> Vec<f64> {
    tensor
        .iter()
        .flat_map(|ch| ch.iter().flat_map(|row| row.iter().copied()))
        .collect()
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "{} has {} values, expected {}",
            what, got, expected
        )));
    }
    Ok(())
}

/// Final output of the network.
pub fn forward(net: &Network, input: &[f64]) -> Result<Vec<f64>> {
    forward_range(net, 0, net.len() - 1, input, None)
}

/// Full activation trace for one sample.
pub fn forward_trace(net: &Network, input: &[f64]) -> Result<ActivationTrace> {
    trace_range(net, 0, net.len() - 1, input, None)
}

/// Forward pass with the masked neurons of each listed layer output forced to
/// zero (after any skip addition at that layer).
pub fn forward_masked(net: &Network, input: &[f64], masks: &Masks) -> Result<Vec<f64>> {
    forward_range(net, 0, net.len() - 1, input, Some(masks))
}

/// Runs layers `start..=end`, starting from the response consumed by `start`.
pub fn forward_range(
    net: &Network,
    start: usize,
    end: usize,
    input: &[f64],
    masks: Option<&Masks>,
) -> Result<Vec<f64>> {
    let mut trace = trace_range(net, start, end, input, masks)?;
    Ok(trace.responses.pop().expect("trace holds the input"))
}

fn trace_range(
    net: &Network,
    start: usize,
    end: usize,
    input: &[f64],
    masks: Option<&Masks>,
) -> Result<ActivationTrace> {
    if end >= net.len() || start > end {
        return Err(Error::OutOfRange {
            index: end.max(start),
            limit: net.len(),
        });
    }
    check_len(net.input_shape_of(start).len(), input.len(), "input")?;
    if let Some(&(s, m)) = net
        .skip_edges()
        .iter()
        .find(|&&(s, m)| s < start && m >= start && m <= end)
    {
        return Err(Error::Unsupported(format!(
            "skip edge ({}, {}) enters the range {}..={} from outside",
            s, m, start, end
        )));
    }
    if let Some(masks) = masks {
        for (&l, mask) in masks {
            if l >= net.len() {
                return Err(Error::OutOfRange {
                    index: l,
                    limit: net.len(),
                });
            }
            check_len(net.output_shape(l).len(), mask.len(), "mask")?;
        }
    }
    let mut responses = Vec::with_capacity(end - start + 2);
    responses.push(input.to_vec());
    for l in start..=end {
        let x = responses.last().expect("non-empty");
        let mut y = layer_forward(net.layer(l), net.input_shape_of(l), x);
        for src in net.skip_sources(l) {
            let add = &responses[src - start + 1];
            for (yi, a) in y.iter_mut().zip(add) {
                *yi += a;
            }
        }
        if let Some(mask) = masks.and_then(|m| m.get(&l)) {
            for (yi, &keep) in y.iter_mut().zip(mask) {
                if !keep {
                    *yi = 0.0;
                }
            }
        }
        responses.push(y);
    }
    Ok(ActivationTrace { responses })
}

/// Applies one layer to a response of shape `input` (assumed to match).
pub fn layer_forward(layer: &Layer, input: Shape, x: &[f64]) -> Vec<f64> {
    match layer {
        Layer::Dense(d) => dense_forward(d, x),
        Layer::Conv2d(c) => conv_forward(c, x),
        Layer::Pool2d(p) => pool_forward(p, x),
        Layer::Lrn(l) => lrn_forward(l, input, x),
        Layer::BatchNorm(b) => batchnorm_forward(b, input, x),
        Layer::Activation(a) => x.iter().map(|&v| a.activation.apply(v)).collect(),
    }
}

fn dense_forward(d: &Dense, x: &[f64]) -> Vec<f64> {
    (0..d.outputs())
        .map(|i| {
            let z: f64 = d.weights.row(i).iter().zip(x).map(|(w, v)| w * v).sum();
            d.activation.apply(z + d.bias[i])
        })
        .collect()
}

fn conv_forward(c: &Conv2d, x: &[f64]) -> Vec<f64> {
    let g = &c.geometry;
    let k = &c.kernel;
    let (xs, ys) = (g.input_size, g.output_size);
    let mut out = vec![0.0; k.out_channels * ys * ys];
    for co in 0..k.out_channels {
        for oy in 0..ys {
            for ox in 0..ys {
                let mut z = c.bias[co];
                for ky in 0..k.size {
                    let Some(iy) = (oy * g.stride + ky).checked_sub(g.padding) else {
                        continue;
                    };
                    if iy >= xs {
                        continue;
                    }
                    for kx in 0..k.size {
                        let Some(ix) = (ox * g.stride + kx).checked_sub(g.padding) else {
                            continue;
                        };
                        if ix >= xs {
                            continue;
                        }
                        for ci in 0..k.in_channels {
                            z += k.get(ky, kx, ci, co) * x[(ci * xs + iy) * xs + ix];
                        }
                    }
                }
                out[(co * ys + oy) * ys + ox] = c.activation.apply(z);
            }
        }
    }
    out
}

fn pool_forward(p: &Pool2d, x: &[f64]) -> Vec<f64> {
    let g = &p.geometry;
    let (xs, ys) = (g.input_size, g.output_size);
    let area = (g.kernel * g.kernel) as f64;
    let mut out = vec![0.0; g.channels * ys * ys];
    for c in 0..g.channels {
        for oy in 0..ys {
            for ox in 0..ys {
                let mut max = f64::NEG_INFINITY;
                let mut sum = 0.0;
                for ky in 0..g.kernel {
                    for kx in 0..g.kernel {
                        let iy = (oy * g.stride + ky).checked_sub(g.padding);
                        let ix = (ox * g.stride + kx).checked_sub(g.padding);
                        if let (Some(iy), Some(ix)) = (iy, ix) {
                            if iy < xs && ix < xs {
                                let v = x[(c * xs + iy) * xs + ix];
                                // Strict comparison keeps the first maximum.
                                if v > max {
                                    max = v;
                                }
                                sum += v;
                            }
                        }
                    }
                }
                out[(c * ys + oy) * ys + ox] = match p.mode {
                    PoolMode::Max => max,
                    PoolMode::Average => sum / area,
                };
            }
        }
    }
    out
}

fn lrn_forward(l: &Lrn, input: Shape, x: &[f64]) -> Vec<f64> {
    let Shape::Map { channels, size } = input else {
        return x.to_vec();
    };
    let plane = size * size;
    let half = l.local_size / 2;
    let coef = Lrn::ALPHA / l.local_size as f64;
    let mut out = vec![0.0; x.len()];
    for c in 0..channels {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(channels - 1);
        for p in 0..plane {
            let sq: f64 = (lo..=hi).map(|cc| x[cc * plane + p] * x[cc * plane + p]).sum();
            out[c * plane + p] = x[c * plane + p] / math::powf(Lrn::BIAS + coef * sq, Lrn::BETA);
        }
    }
    out
}

fn batchnorm_forward(b: &BatchNorm, input: Shape, x: &[f64]) -> Vec<f64> {
    let per = input.unit_len();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let u = i / per;
            b.scale[u] * v + b.shift[u]
        })
        .collect()
}

/// Row `m` is the flattened response of `layer_id` for sample `m`.
pub fn batch_responses(net: &Network, data: &[Sample], layer_id: usize) -> Result<ResponseMatrix> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if layer_id >= net.len() {
        return Err(Error::OutOfRange {
            index: layer_id,
            limit: net.len(),
        });
    }
    let n = net.output_shape(layer_id).len();
    let mut flat = Vec::with_capacity(data.len() * n);
    for s in data {
        flat.extend(forward_range(net, 0, layer_id, &s.input, None)?);
    }
    Ok(ResponseMatrix {
        layer_id,
        data: Matrix::from_vec(data.len(), n, flat)?,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(net: &Network, input: &[f64]) -> Result<usize> {
    Ok(argmax(&forward(net, input)?))
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(net: &Network, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (i, s) in data.iter().enumerate() {
        let label = s.label.ok_or(Error::Unlabeled(i))?;
        if predict(net, &s.input)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Fraction of samples on which both networks predict the same class.
pub fn top1_agreement(a: &Network, b: &Network, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (wa, wb) = (a.final_shape().len(), b.final_shape().len());
    if wa != wb {
        return Err(Error::Shape(format!(
            "output widths differ: {} and {}",
            wa, wb
        )));
    }
    let mut same = 0usize;
    for s in data {
        if predict(a, &s.input)? == predict(b, &s.input)? {
            same += 1;
        }
    }
    Ok(same as f64 / data.len() as f64)
}

/// Lipschitz constant `C_σ` of an activation.
pub fn lipschitz_constant(kind: Activation) -> f64 {
    match kind {
        Activation::Identity | Activation::Relu | Activation::Tanh => 1.0,
        Activation::Sigmoid => 0.25,
    }
}

/// Lipschitz factor a layer contributes on top of its absolute weights.
///
/// Weighted layers report their activation's constant; batch-norm reports
/// `max |scale|`; average pooling 1 and max pooling `k²` (its propagation
/// matrix spreads `1/k²` per input). LRN has no constant of this form.
pub fn layer_lipschitz(layer: &Layer) -> Result<f64> {
    match layer {
        Layer::Dense(d) => Ok(lipschitz_constant(d.activation)),
        Layer::Conv2d(c) => Ok(lipschitz_constant(c.activation)),
        Layer::Activation(a) => Ok(lipschitz_constant(a.activation)),
        Layer::BatchNorm(b) => Ok(b.scale.iter().fold(0.0_f64, |m, s| m.max(s.abs()))),
        Layer::Pool2d(p) => Ok(match p.mode {
            PoolMode::Average => 1.0,
            PoolMode::Max => (p.geometry.kernel * p.geometry.kernel) as f64,
        }),
        Layer::Lrn(_) => Err(Error::Unsupported(
            "LRN has no Lipschitz bound in terms of its propagation matrix".into(),
        )),
    }
}
