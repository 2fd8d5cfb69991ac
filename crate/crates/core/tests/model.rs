mod common;

use common::*;
use nisp_core::engine::{forward, forward_trace};
use nisp_core::model::{
    validate, Activation, ActivationLayer, Conv2d, Geometry, Kernel, Layer, Lrn, NetworkDef,
    Pool2d, PoolMode,
};
use nisp_core::{Error, Matrix};
use proptest::prelude::*;

fn lenet_like() -> NetworkDef {
    let conv = |x, y, k, cin, cout| {
        Layer::Conv2d(Conv2d {
            geometry: Geometry {
                input_size: x,
                output_size: y,
                kernel: k,
                stride: 1,
                padding: 0,
                channels: cin,
            },
            kernel: Kernel::zeros(k, cin, cout),
            bias: vec![0.0; cout],
            activation: Activation::Relu,
        })
    };
    let pool = |x, c| {
        Layer::Pool2d(Pool2d {
            geometry: Geometry {
                input_size: x,
                output_size: x / 2,
                kernel: 2,
                stride: 2,
                padding: 0,
                channels: c,
            },
            mode: PoolMode::Max,
        })
    };
    NetworkDef {
        layers: vec![
            conv(28, 24, 5, 1, 6),
            pool(24, 6),
            conv(12, 8, 5, 6, 16),
            pool(8, 16),
            Layer::Lrn(Lrn {
                local_size: 5,
                shape: None,
            }),
            Layer::dense(Matrix::zeros(120, 256), vec![0.0; 120], Activation::Relu),
            Layer::dense(Matrix::zeros(10, 120), vec![0.0; 10], Activation::Identity),
        ],
        skip_edges: vec![],
        frl_index: 5,
    }
}

#[test]
fn lenet_like_validates() {
    let report = validate(&lenet_like());
    assert!(report.ok, "{}", report);
    assert!(report.violations.is_empty());
}

#[test]
fn invalid_network_refuses_to_build() {
    let mut def = lenet_like();
    def.skip_edges.push((0, 2));
    match def.build() {
        Err(Error::InvalidNetwork(r)) => assert!(!r.ok && !r.violations.is_empty()),
        other => panic!("expected a validation error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn every_violation_is_reported() {
    let mut def = lenet_like();
    def.frl_index = 6;
    def.skip_edges.push((5, 9));
    if let Layer::Lrn(l) = &mut def.layers[4] {
        l.local_size = 4;
    }
    let report = validate(&def);
    assert!(!report.ok);
    assert_eq!(report.violations.len(), 3, "{}", report);
}

#[test]
fn activation_first_layer_needs_shape() {
    let def = NetworkDef {
        layers: vec![
            Layer::Activation(ActivationLayer {
                activation: Activation::Relu,
                shape: None,
            }),
            Layer::dense(Matrix::identity(2), vec![0.0; 2], Activation::Identity),
        ],
        skip_edges: vec![],
        frl_index: 0,
    };
    assert!(!validate(&def).ok);
}

#[test]
fn whole_slice_equals_forward() {
    let mut r = rng(1);
    for _ in 0..20 {
        let net = random_dense_net(&mut r, 4, 8, &[Activation::Relu, Activation::Tanh]);
        let x = random_vec(&mut r, net.input_shape().len(), -1.0, 1.0);
        let whole = net.slice(0, net.len() - 1).unwrap();
        assert_eq!(whole.forward(&x).unwrap(), forward(&net, &x).unwrap());
        let first = net.slice(0, 0).unwrap();
        assert_eq!(first.forward(&x).unwrap(), forward_trace(&net, &x).unwrap().layer(0));
    }
}

#[test]
fn tail_slice_matches_trace() {
    let mut r = rng(2);
    let net = random_dense_net(&mut r, 5, 8, &[Activation::Sigmoid]);
    let x = random_vec(&mut r, net.input_shape().len(), -1.0, 1.0);
    let trace = forward_trace(&net, &x).unwrap();
    let tail = net.slice(2, 4).unwrap();
    assert_eq!(tail.input_shape(), net.output_shape(1));
    assert_eq!(tail.forward(trace.layer(1)).unwrap(), trace.layer(4));
}

#[test]
fn slice_out_of_range() {
    let mut r = rng(3);
    let net = random_dense_net(&mut r, 3, 4, &[Activation::Relu]);
    assert!(matches!(net.slice(0, 3), Err(Error::OutOfRange { .. })));
    assert!(matches!(net.slice(2, 1), Err(Error::OutOfRange { .. })));
}

proptest! {
    #[test]
    fn slice_composition(seed in 0u64..1000, i in 0usize..5, j in 0usize..5, k in 0usize..5) {
        let mut v = [i, j, k];
        v.sort();
        let [i, j, k] = v;
        prop_assume!(j < k);
        let mut r = rng(seed);
        let net = random_dense_net(&mut r, 5, 6, &[Activation::Relu, Activation::Tanh, Activation::Sigmoid]);
        let x = random_vec(&mut r, net.input_shape_of(i).len(), -1.0, 1.0);
        let direct = net.slice(i, k).unwrap().forward(&x).unwrap();
        let mid = net.slice(i, j).unwrap().forward(&x).unwrap();
        let composed = net.slice(j + 1, k).unwrap().forward(&mid).unwrap();
        prop_assert_eq!(direct, composed);
    }

    #[test]
    fn validate_never_panics(
        sizes in proptest::collection::vec((0usize..4, 0usize..4), 0..5),
        skips in proptest::collection::vec((0usize..6, 0usize..6), 0..3),
        frl in 0usize..7,
    ) {
        let layers = sizes
            .iter()
            .map(|&(o, i)| Layer::dense(Matrix::zeros(o, i), vec![0.0; o], Activation::Relu))
            .collect();
        let report = validate(&NetworkDef { layers, skip_edges: skips, frl_index: frl });
        prop_assert_eq!(report.ok, report.violations.is_empty());
    }
}
