//! Minibatch SGD on softmax cross-entropy for dense networks, and synthetic
//! Gaussian-blob datasets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine::{accuracy, forward_trace, Sample};
use crate::math;
use crate::model::{Activation, Dense, Layer, Network, NetworkDef};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Training(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Training("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Same schedule at a tenth of the learning rate.
    pub fn for_finetune(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate / 10.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_accuracy: f64,
}

/// One point per completed epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Center of class `c`: the `c`-th unit vector, so every pair of centers
    /// is `√2` apart.
    pub fn center(&self, class: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        c[class] = 1.0;
        c
    }
}

/// Gaussian blobs around the simplex vertices, class-major order.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<Sample>> {
    if spec.n_classes == 0 || spec.samples_per_class == 0 {
        return Err(Error::Invalid("synthetic dataset needs classes and samples".into()));
    }
    if spec.dim < spec.n_classes {
        return Err(Error::Invalid(format!(
            "{} classes need at least {} dimensions, got {}",
            spec.n_classes, spec.n_classes, spec.dim
        )));
    }
    if !(spec.cluster_spread.is_finite() && spec.cluster_spread >= 0.0) {
        return Err(Error::Invalid(format!(
            "cluster spread {} must be finite and non-negative",
            spec.cluster_spread
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for class in 0..spec.n_classes {
        let center = spec.center(class);
        for _ in 0..spec.samples_per_class {
            let input = center
                .iter()
                .map(|&c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + spec.cluster_spread * z
                })
                .collect();
            out.push(Sample::labeled(input, class));
        }
    }
    Ok(out)
}

fn glorot(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Matrix {
    let a = math::sqrt(6.0 / (inputs + outputs) as f64);
    Matrix::from_fn(outputs, inputs, |_, _| rng.random_range(-a..=a))
}

/// Fully connected network with layer widths `sizes` (input first), hidden
/// activation `hidden` and an identity output layer. The final response layer
/// is the last hidden layer.
pub fn init_dense(sizes: &[usize], hidden: Activation, seed: u64) -> Result<Network> {
    if sizes.len() < 3 {
        return Err(Error::Invalid(
            "need an input, at least one hidden layer and an output".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sizes.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let activation = if i + 1 == n { Activation::Identity } else { hidden };
            Layer::dense(glorot(&mut rng, sizes[i], sizes[i + 1]), vec![0.0; sizes[i + 1]], activation)
        })
        .collect();
    NetworkDef {
        layers,
        skip_edges: vec![],
        frl_index: n - 2,
    }
    .build()
}

/// Same architecture with freshly drawn weights and zero biases.
pub fn reinitialize(net: &Network, seed: u64) -> Result<Network> {
    check_trainable(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = net
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Dense(d) => Layer::dense(
                glorot(&mut rng, d.inputs(), d.outputs()),
                vec![0.0; d.outputs()],
                d.activation,
            ),
            other => other.clone(),
        })
        .collect();
    NetworkDef {
        layers,
        skip_edges: vec![],
        frl_index: net.frl_index(),
    }
    .build()
}

fn check_trainable(net: &Network) -> Result<()> {
    if let Some(l) = net
        .layers()
        .iter()
        .position(|l| !matches!(l, Layer::Dense(_) | Layer::Activation(_)))
    {
        return Err(Error::Training(format!(
            "layer {} is a {} layer; only dense and activation layers train",
            l,
            net.layer(l).kind().name()
        )));
    }
    if !net.skip_edges().is_empty() {
        return Err(Error::Training("skip edges are not trainable".into()));
    }
    Ok(())
}

fn check_labels(net: &Network, data: &[Sample]) -> Result<()> {
    let classes = net.final_shape().len();
    for (i, s) in data.iter().enumerate() {
        match s.label {
            None => return Err(Error::Unlabeled(i)),
            Some(c) if c >= classes => {
                return Err(Error::Training(format!(
                    "sample {} has label {} but the network has {} outputs",
                    i, c, classes
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Loss gradient for each dense layer (`None` for activation layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<(Matrix, Vec<f64>)>>,
}

/// Softmax cross-entropy of logits `z` against `label`, and `softmax(z) − e_label`.
fn softmax_ce(z: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = z.iter().map(|v| math::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = math::ln(sum) + max - z[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean softmax cross-entropy over `data`.
pub fn loss(net: &Network, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(net, data)?;
    let mut total = 0.0;
    for s in data {
        let out = crate::engine::forward(net, &s.input)?;
        total += softmax_ce(&out, s.label.expect("checked")).0;
    }
    Ok(total / data.len() as f64)
}

/// Mean loss and mean gradients over a batch.
pub fn loss_and_gradients(net: &Network, batch: &[Sample]) -> Result<(f64, Gradients)> {
    check_trainable(net)?;
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(net, batch)?;
    let mut grads: Vec<Option<(Matrix, Vec<f64>)>> = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => Some((Matrix::zeros(d.outputs(), d.inputs()), vec![0.0; d.outputs()])),
            _ => None,
        })
        .collect();
    let mut total = 0.0;
    for s in batch {
        let trace = forward_trace(net, &s.input)?;
        let (l, mut delta) = softmax_ce(trace.output(), s.label.expect("checked"));
        total += l;
        for idx in (0..net.len()).rev() {
            let y = trace.layer(idx);
            let x = &trace.responses[idx];
            match net.layer(idx) {
                Layer::Dense(d) => {
                    for (g, &yi) in delta.iter_mut().zip(y) {
                        *g *= d.activation.derivative_from_output(yi);
                    }
                    let (gw, gb) = grads[idx].as_mut().expect("dense gradient slot");
                    for (i, &dz) in delta.iter().enumerate() {
                        gb[i] += dz;
                        if dz == 0.0 {
                            continue;
                        }
                        for (j, &xj) in x.iter().enumerate() {
                            gw[(i, j)] += dz * xj;
                        }
                    }
                    if idx > 0 {
                        delta = d.weights.vecmat(&delta)?;
                    }
                }
                Layer::Activation(a) => {
                    for (g, &yi) in delta.iter_mut().zip(y) {
                        *g *= a.activation.derivative_from_output(yi);
                    }
                }
                _ => unreachable!("checked trainable"),
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for (gw, gb) in grads.iter_mut().flatten() {
        gw.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        gb.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((total * scale, Gradients { layers: grads }))
}

fn apply_step(layers: &mut [Layer], grads: &Gradients, lr: f64) {
    for (layer, g) in layers.iter_mut().zip(&grads.layers) {
        if let (Layer::Dense(Dense { weights, bias, .. }), Some((gw, gb))) = (layer, g) {
            for (w, d) in weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *w -= lr * d;
            }
            for (b, d) in bias.iter_mut().zip(gb) {
                *b -= lr * d;
            }
        }
    }
}

/// Trains on `train` and reports accuracy on `eval` after every epoch.
pub fn train_with_eval(
    net: &Network,
    train: &[Sample],
    eval: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Network, LearningCurve)> {
    cfg.check()?;
    check_trainable(net)?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(net, train)?;
    check_labels(net, eval)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = net.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = LearningCurve::default();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut def = current.into_def();
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            // Gradients need a validated view; shapes never change here.
            let view = def.clone().build()?;
            let (_, grads) = loss_and_gradients(&view, &batch)?;
            apply_step(&mut def.layers, &grads, cfg.learning_rate);
        }
        current = def.build()?;
        curve.points.push(CurvePoint {
            epoch: epoch + 1,
            train_loss: loss(&current, train)?,
            eval_accuracy: accuracy(&current, eval)?,
        });
    }
    Ok((current, curve))
}

/// Trains and evaluates on the same data.
pub fn train(net: &Network, data: &[Sample], cfg: &TrainConfig) -> Result<(Network, LearningCurve)> {
    train_with_eval(net, data, data, cfg)
}

/// [`train`] at a tenth of the configured learning rate.
pub fn finetune(net: &Network, data: &[Sample], cfg: &TrainConfig) -> Result<(Network, LearningCurve)> {
    train(net, data, &cfg.for_finetune())
}

/// [`train_with_eval`] at a tenth of the configured learning rate.
pub fn finetune_with_eval(
    net: &Network,
    train: &[Sample],
    eval: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Network, LearningCurve)> {
    train_with_eval(net, train, eval, &cfg.for_finetune())
}
