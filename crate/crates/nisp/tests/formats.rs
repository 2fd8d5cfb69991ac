mod common;

use std::path::Path;

use common::*;
use nisp::dataset::{dataset_csv, load_dataset, manifest_json, manifest_path, parse_dataset};
use nisp::model_format::{load_model, save_model};
use nisp::plan_format::{load_plan, save_plan};
use nisp::report::ranking_csv;
use nisp::Error;
use nisp_core::model::{Activation, Layer, NetworkDef, Shape};
use nisp_core::propagation::nisp_backward;
use nisp_core::surgery::random_plan;
use nisp_core::{ImportanceVector, Matrix, PruneConfig, Sample};
use proptest::prelude::*;
use rand::Rng;

fn bits(net: &nisp_core::Network) -> Vec<u64> {
    let mut out = Vec::new();
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                out.extend(d.weights.as_slice().iter().map(|w| w.to_bits()));
                out.extend(d.bias.iter().map(|w| w.to_bits()));
            }
            Layer::Conv2d(c) => {
                let k = &c.kernel;
                for ky in 0..k.size {
                    for kx in 0..k.size {
                        for ci in 0..k.in_channels {
                            for co in 0..k.out_channels {
                                out.push(k.get(ky, kx, ci, co).to_bits());
                            }
                        }
                    }
                }
                out.extend(c.bias.iter().map(|w| w.to_bits()));
            }
            Layer::BatchNorm(b) => {
                out.extend(b.scale.iter().chain(&b.shift).map(|w| w.to_bits()));
            }
            _ => {}
        }
    }
    out
}

#[test]
fn dense_model_round_trips_bit_for_bit() {
    let mut r = rng(1);
    let net = random_dense(&mut r, 4);
    let text = save_model(&net);
    let back = load_model(&text).unwrap();
    assert_eq!(back, net);
    assert_eq!(bits(&back), bits(&net));
    assert_eq!(save_model(&back), text);
}

#[test]
fn every_layer_kind_round_trips() {
    let mut r = rng(2);
    for _ in 0..20 {
        let net = random_mixed(&mut r);
        let back = load_model(&save_model(&net)).unwrap();
        assert_eq!(back, net);
        assert_eq!(bits(&back), bits(&net));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn save_load_save_is_a_fixed_point(seed in any::<u64>(), depth in 1usize..=5, mixed in any::<bool>()) {
        let mut r = rng(seed);
        let net = if mixed { random_mixed(&mut r) } else { random_dense(&mut r, depth) };
        let once = save_model(&net);
        let twice = save_model(&load_model(&once).unwrap());
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn single_identity_layer() {
    let net = NetworkDef {
        layers: vec![Layer::dense(Matrix::identity(3), vec![0.0; 3], Activation::Identity)],
        skip_edges: vec![],
        frl_index: 0,
    }
    .build()
    .unwrap();
    let text = save_model(&net);
    assert!(text.starts_with(r#"{"layers":[{"kind":"dense","weights":[[1.0000000000000000e0,0.0000000000000000e0"#));
    assert_eq!(load_model(&text).unwrap(), net);
}

#[test]
fn mismatched_widths_are_rejected() {
    let text = r#"{"layers":[
        {"kind":"dense","weights":[[1,0,0],[0,1,0]],"bias":[0,0],"activation":"relu"},
        {"kind":"dense","weights":[[1,1,1]],"bias":[0],"activation":"identity"}],
        "skip_edges":[],"frl_index":0}"#;
    match load_model(text) {
        Err(Error::Core(nisp_core::Error::InvalidNetwork(report))) => {
            assert!(report.to_string().contains("layer 1"), "{}", report);
        }
        other => panic!("expected a validation error, got {:?}", other),
    }
}

#[test]
fn malformed_models_are_format_errors() {
    for text in [
        "",
        "{",
        r#"{"layers":[],"skip_edges":[],"frl_index":0,"extra":1}"#,
        r#"{"layers":[{"kind":"dense","weights":[[1]],"bias":[0],"activation":"softsign"}],"skip_edges":[],"frl_index":0}"#,
        r#"{"layers":[{"kind":"pool2d","mode":"median","geometry":{"input_size":2,"output_size":1,"kernel":2,"stride":2,"padding":0,"channels":1}}],"skip_edges":[],"frl_index":0}"#,
        r#"{"layers":[{"kind":"dense","weights":[[1,2],[3]],"bias":[0,0],"activation":"relu"}],"skip_edges":[],"frl_index":0}"#,
    ] {
        assert!(matches!(load_model(text), Err(Error::Format(_))), "{:?}", text);
    }
}

#[test]
fn plans_round_trip() {
    let mut r = rng(3);
    for _ in 0..10 {
        let net = random_mixed(&mut r);
        let frl = net.frl_index();
        let s_n: Vec<f64> = (0..net.output_shape(frl).len()).map(|_| r.random_range(0.0..2.0)).collect();
        let s_n = ImportanceVector::new(frl, s_n).unwrap();
        let cfg = PruneConfig::uniform(&net, 0.5).unwrap();
        for plan in [nisp_backward(&net, &s_n, &cfg).unwrap(), random_plan(&net, &cfg, r.random()).unwrap()] {
            let text = save_plan(&plan);
            assert_eq!(load_plan(&text).unwrap(), plan);
            assert_eq!(save_plan(&load_plan(&text).unwrap()), text);
        }
    }
}

#[test]
fn plan_marks_unpruned_layers_with_null_mask() {
    let mut r = rng(4);
    let net = random_dense(&mut r, 3);
    let s_n = ImportanceVector::new(1, vec![1.0; net.output_shape(1).len()]).unwrap();
    let plan = nisp_backward(&net, &s_n, &PruneConfig::keep_all()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&save_plan(&plan)).unwrap();
    for e in v.as_array().unwrap() {
        assert!(e["mask"].is_null());
        assert!(e.get("channel_scores").is_none());
    }
}

#[test]
fn bad_plans_are_rejected() {
    assert!(load_plan(r#"[{"layer_id":0,"scores":[1,2],"mask":[true]}]"#).is_err());
    assert!(load_plan(r#"[{"layer_id":0,"scores":[-1],"mask":null}]"#).is_err());
    assert!(load_plan(r#"[{"layer_id":1,"scores":[1],"mask":null},{"layer_id":0,"scores":[1],"mask":null}]"#).is_err());
}

#[test]
fn datasets_round_trip() {
    let data = blobs(3, 5, 7, 9);
    let text = dataset_csv(&data).unwrap();
    assert!(text.starts_with("x0,x1,x2,x3,x4,label\n"));
    let back = parse_dataset(&text, Path::new("mem.csv")).unwrap();
    assert_eq!(back.samples, data);
    assert_eq!(back.dim, 5);

    let unlabeled: Vec<Sample> = data.iter().map(|s| Sample::new(s.input.clone(), None)).collect();
    let text = dataset_csv(&unlabeled).unwrap();
    assert!(text.starts_with("x0,x1,x2,x3,x4\n"));
    let back = parse_dataset(&text, Path::new("mem.csv")).unwrap();
    assert_eq!(back.samples, unlabeled);
    assert!(!back.is_labeled());
}

#[test]
fn bad_datasets_are_rejected() {
    let p = Path::new("mem.csv");
    for text in [
        "a,b\n1,2\n",
        "x0,x2\n1,2\n",
        "x0,label\n1,-1\n",
        "x0,x1\n1,zz\n",
        "x0,x1\n1,2,3\n",
        "x0\nNaN\n",
        "label\n1\n",
    ] {
        assert!(matches!(parse_dataset(text, p), Err(Error::Parse { .. })), "{:?}", text);
    }
}

#[test]
fn manifest_declares_shape() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("maps.csv");
    let shape = Shape::Map { channels: 2, size: 2 };
    let data = vec![Sample::labeled(vec![0.5; 8], 1)];
    std::fs::write(&csv, dataset_csv(&data).unwrap()).unwrap();
    std::fs::write(manifest_path(&csv), manifest_json(shape)).unwrap();
    assert_eq!(manifest_path(&csv), dir.path().join("maps.manifest.json"));
    let loaded = load_dataset(&csv).unwrap();
    assert_eq!(loaded.shape, Some(shape));

    std::fs::write(manifest_path(&csv), manifest_json(Shape::Map { channels: 3, size: 2 })).unwrap();
    assert!(matches!(load_dataset(&csv), Err(Error::Parse { .. })));
}

#[test]
fn ranking_csv_orders_by_score_then_index() {
    let s = ImportanceVector::new(0, vec![0.5, 2.0, 0.5, 1.0]).unwrap();
    assert_eq!(
        ranking_csv(&s).unwrap(),
        "neuron_index,score\n1,2.0\n3,1.0\n0,0.5\n2,0.5\n"
    );
}
