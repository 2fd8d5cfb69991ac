#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nisp_core::model::{
    Activation, ActivationLayer, BatchNorm, Conv2d, Geometry, Kernel, Layer, Lrn, Network,
    NetworkDef, Pool2d, PoolMode, Shape,
};
use nisp_core::trainer::{init_dense, synth_dataset, train, SynthSpec, TrainConfig};
use nisp_core::{Matrix, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nisp::dataset::dataset_csv;
use nisp::model_format::save_model;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weights spread over many binades, with the odd signed zero and subnormal.
pub fn wild(r: &mut ChaCha8Rng) -> f64 {
    match r.random_range(0..20) {
        0 => -0.0,
        1 => f64::MIN_POSITIVE / 3.0,
        2 => -1.0 / 3.0,
        _ => {
            let m: f64 = r.random_range(-1.0..1.0);
            m * 10f64.powi(r.random_range(-30..30))
        }
    }
}

fn wild_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| wild(r)).collect()
}

fn activation(r: &mut ChaCha8Rng) -> Activation {
    [Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh][r.random_range(0..4)]
}

pub fn dense(r: &mut ChaCha8Rng, inputs: usize, outputs: usize, act: Activation) -> Layer {
    let w = Matrix::from_fn(outputs, inputs, |_, _| wild(r));
    Layer::dense(w, wild_vec(r, outputs), act)
}

/// Dense chain with `depth` layers.
pub fn random_dense(r: &mut ChaCha8Rng, depth: usize) -> Network {
    let mut width = r.random_range(1..=6);
    let mut layers = Vec::new();
    for _ in 0..depth {
        let next = r.random_range(1..=6);
        let act = activation(r);
        layers.push(dense(r, width, next, act));
        width = next;
    }
    let frl_index = if depth == 1 { 0 } else { depth - 2 };
    NetworkDef {
        layers,
        skip_edges: vec![],
        frl_index,
    }
    .build()
    .unwrap()
}

/// Every layer kind in one network.
pub fn random_mixed(r: &mut ChaCha8Rng) -> Network {
    let c0 = r.random_range(1..=2);
    let c1 = 3;
    let x = r.random_range(4..=6);
    let mut kernel = Kernel::zeros(3, c0, c1);
    for ky in 0..3 {
        for kx in 0..3 {
            for ci in 0..c0 {
                for co in 0..c1 {
                    kernel.set(ky, kx, ci, co, wild(r));
                }
            }
        }
    }
    let pooled = x / 2;
    let layers = vec![
        Layer::Conv2d(Conv2d {
            geometry: Geometry {
                input_size: x,
                output_size: x,
                kernel: 3,
                stride: 1,
                padding: 1,
                channels: c0,
            },
            kernel,
            bias: wild_vec(r, c1),
            activation: activation(r),
        }),
        Layer::BatchNorm(BatchNorm {
            scale: wild_vec(r, c1),
            shift: wild_vec(r, c1),
            shape: Some(Shape::Map { channels: c1, size: x }),
        }),
        Layer::Activation(ActivationLayer {
            activation: Activation::Relu,
            shape: None,
        }),
        Layer::Lrn(Lrn {
            local_size: 3,
            shape: None,
        }),
        Layer::Pool2d(Pool2d {
            geometry: Geometry {
                input_size: x,
                output_size: pooled,
                kernel: 2,
                stride: 2,
                padding: 0,
                channels: c1,
            },
            mode: if r.random_bool(0.5) { PoolMode::Max } else { PoolMode::Average },
        }),
        dense(r, c1 * pooled * pooled, 4, Activation::Tanh),
        dense(r, 4, 4, Activation::Relu),
        dense(r, 4, 4, Activation::Sigmoid),
        dense(r, 4, 2, Activation::Identity),
    ];
    let skip = r.random_bool(0.5);
    NetworkDef {
        layers,
        skip_edges: if skip { vec![(5, 7)] } else { vec![] },
        frl_index: 7,
    }
    .build()
    .unwrap()
}

pub fn blobs(classes: usize, dim: usize, per_class: usize, seed: u64) -> Vec<Sample> {
    synth_dataset(&SynthSpec {
        n_classes: classes,
        dim,
        samples_per_class: per_class,
        cluster_spread: 0.4,
        seed,
    })
    .unwrap()
}

/// A small trained MLP on 3-class blobs in 6 dimensions.
pub fn trained_mlp(hidden: &[usize], act: Activation, seed: u64) -> (Network, Vec<Sample>) {
    let data = blobs(3, 6, 30, seed);
    let mut sizes = vec![6];
    sizes.extend_from_slice(hidden);
    sizes.push(3);
    let net = init_dense(&sizes, act, seed).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 5,
        batch_size: 16,
        seed,
    };
    (train(&net, &data, &cfg).unwrap().0, data)
}

/// Writes `model.json` and `data.csv` into `dir`.
pub fn write_inputs(dir: &Path, net: &Network, data: &[Sample]) -> (PathBuf, PathBuf) {
    let model = dir.join("model.json");
    let csv = dir.join("data.csv");
    std::fs::write(&model, save_model(net)).unwrap();
    std::fs::write(&csv, dataset_csv(data).unwrap()).unwrap();
    (model, csv)
}

pub fn nisp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nisp")).args(args).output().unwrap()
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}
