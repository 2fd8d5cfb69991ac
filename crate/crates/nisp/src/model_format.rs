//! Canonical JSON model format.
//!
//! ```json
//! {"layers":[{"kind":"dense","weights":[[...]],"bias":[...],"activation":"relu"}, ...],
//!  "skip_edges":[[0,2]],"frl_index":1}
//! ```
//!
//! Dense weights are `[out][in]`, convolution weights `[ky][kx][in][out]`.
//! Batch-norm layers store their scale as `weights` and shift as `bias`.
//! Every weight is written with 17 significant digits so that loading a saved
//! model reproduces it bit for bit.

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use nisp_core::model::{
    Activation, ActivationLayer, BatchNorm, Conv2d, Geometry, Kernel, Layer, Lrn, Network,
    NetworkDef, Pool2d, PoolMode, Shape,
};
use nisp_core::Matrix;

use crate::{Error, Result};

/// `f64` written as `{:.16e}`.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("non-finite number {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().map(|&x| Num(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeDoc {
    Map { channels: usize, size: usize },
    Flat { flat: usize },
}

impl From<Shape> for ShapeDoc {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Flat(flat) => ShapeDoc::Flat { flat },
            Shape::Map { channels, size } => ShapeDoc::Map { channels, size },
        }
    }
}

impl From<ShapeDoc> for Shape {
    fn from(s: ShapeDoc) -> Self {
        match s {
            ShapeDoc::Flat { flat } => Shape::Flat(flat),
            ShapeDoc::Map { channels, size } => Shape::Map { channels, size },
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryDoc {
    input_size: usize,
    output_size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    channels: usize,
}

impl From<Geometry> for GeometryDoc {
    fn from(g: Geometry) -> Self {
        GeometryDoc {
            input_size: g.input_size,
            output_size: g.output_size,
            kernel: g.kernel,
            stride: g.stride,
            padding: g.padding,
            channels: g.channels,
        }
    }
}

impl From<GeometryDoc> for Geometry {
    fn from(g: GeometryDoc) -> Self {
        Geometry {
            input_size: g.input_size,
            output_size: g.output_size,
            kernel: g.kernel,
            stride: g.stride,
            padding: g.padding,
            channels: g.channels,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerDoc<N> {
    Dense {
        weights: Vec<Vec<N>>,
        bias: Vec<N>,
        activation: String,
    },
    Conv2d {
        weights: Vec<Vec<Vec<Vec<N>>>>,
        bias: Vec<N>,
        geometry: GeometryDoc,
        activation: String,
    },
    Pool2d {
        mode: String,
        geometry: GeometryDoc,
    },
    Lrn {
        local_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<ShapeDoc>,
    },
    Batchnorm {
        weights: Vec<N>,
        bias: Vec<N>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<ShapeDoc>,
    },
    Activation {
        activation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<ShapeDoc>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc<N> {
    layers: Vec<LayerDoc<N>>,
    skip_edges: Vec<(usize, usize)>,
    frl_index: usize,
}

fn layer_doc(layer: &Layer) -> LayerDoc<Num> {
    match layer {
        Layer::Dense(d) => LayerDoc::Dense {
            weights: (0..d.weights.rows()).map(|i| nums(d.weights.row(i))).collect(),
            bias: nums(&d.bias),
            activation: d.activation.name().into(),
        },
        Layer::Conv2d(c) => {
            let k = &c.kernel;
            let weights = (0..k.size)
                .map(|ky| {
                    (0..k.size)
                        .map(|kx| {
                            (0..k.in_channels)
                                .map(|ci| (0..k.out_channels).map(|co| Num(k.get(ky, kx, ci, co))).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect();
            LayerDoc::Conv2d {
                weights,
                bias: nums(&c.bias),
                geometry: c.geometry.into(),
                activation: c.activation.name().into(),
            }
        }
        Layer::Pool2d(p) => LayerDoc::Pool2d {
            mode: match p.mode {
                PoolMode::Max => "max",
                PoolMode::Average => "average",
            }
            .into(),
            geometry: p.geometry.into(),
        },
        Layer::Lrn(l) => LayerDoc::Lrn {
            local_size: l.local_size,
            shape: l.shape.map(Into::into),
        },
        Layer::BatchNorm(b) => LayerDoc::Batchnorm {
            weights: nums(&b.scale),
            bias: nums(&b.shift),
            shape: b.shape.map(Into::into),
        },
        Layer::Activation(a) => LayerDoc::Activation {
            activation: a.activation.name().into(),
            shape: a.shape.map(Into::into),
        },
    }
}

fn activation(l: usize, name: &str) -> Result<Activation> {
    Activation::from_name(name).ok_or_else(|| Error::Format(format!("layer {}: unknown activation {:?}", l, name)))
}

fn layer_from_doc(l: usize, doc: LayerDoc<f64>) -> Result<Layer> {
    Ok(match doc {
        LayerDoc::Dense {
            weights,
            bias,
            activation: act,
        } => {
            let weights = if weights.is_empty() {
                Matrix::zeros(0, 0)
            } else {
                Matrix::from_rows(&weights).map_err(|e| Error::Format(format!("layer {}: {}", l, e)))?
            };
            Layer::Dense(nisp_core::Dense {
                weights,
                bias,
                activation: activation(l, &act)?,
            })
        }
        LayerDoc::Conv2d {
            weights,
            bias,
            geometry,
            activation: act,
        } => {
            let size = weights.len();
            let cin = weights.first().and_then(|r| r.first()).map_or(0, |c| c.len());
            let cout = weights
                .first()
                .and_then(|r| r.first())
                .and_then(|c| c.first())
                .map_or(0, |o| o.len());
            let mut kernel = Kernel::zeros(size, cin, cout);
            for (ky, row) in weights.iter().enumerate() {
                if row.len() != size {
                    return Err(Error::Format(format!("layer {}: kernel is not square", l)));
                }
                for (kx, cell) in row.iter().enumerate() {
                    if cell.len() != cin || cell.iter().any(|o| o.len() != cout) {
                        return Err(Error::Format(format!("layer {}: ragged kernel", l)));
                    }
                    for (ci, outs) in cell.iter().enumerate() {
                        for (co, &w) in outs.iter().enumerate() {
                            kernel.set(ky, kx, ci, co, w);
                        }
                    }
                }
            }
            Layer::Conv2d(Conv2d {
                geometry: geometry.into(),
                kernel,
                bias,
                activation: activation(l, &act)?,
            })
        }
        LayerDoc::Pool2d { mode, geometry } => Layer::Pool2d(Pool2d {
            geometry: geometry.into(),
            mode: match mode.as_str() {
                "max" => PoolMode::Max,
                "average" => PoolMode::Average,
                other => return Err(Error::Format(format!("layer {}: unknown pooling mode {:?}", l, other))),
            },
        }),
        LayerDoc::Lrn { local_size, shape } => Layer::Lrn(Lrn {
            local_size,
            shape: shape.map(Into::into),
        }),
        LayerDoc::Batchnorm { weights, bias, shape } => Layer::BatchNorm(BatchNorm {
            scale: weights,
            shift: bias,
            shape: shape.map(Into::into),
        }),
        LayerDoc::Activation {
            activation: act,
            shape,
        } => Layer::Activation(ActivationLayer {
            activation: activation(l, &act)?,
            shape: shape.map(Into::into),
        }),
    })
}

/// Canonical text of a network; identical networks give identical bytes.
pub fn save_model(net: &Network) -> String {
    let doc = ModelDoc {
        layers: net.layers().iter().map(layer_doc).collect(),
        skip_edges: net.skip_edges().to_vec(),
        frl_index: net.frl_index(),
    };
    let mut text = serde_json::to_string(&doc).expect("validated networks hold finite weights");
    text.push('\n');
    text
}

/// Parses and validates a model. Malformed text is a [`Error::Format`];
/// structural problems come back as the validation report.
pub fn load_model(text: &str) -> Result<Network> {
    let doc: ModelDoc<f64> = serde_json::from_str(text).map_err(|e| Error::Format(format!("model: {}", e)))?;
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(l, d)| layer_from_doc(l, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkDef {
        layers,
        skip_edges: doc.skip_edges,
        frl_index: doc.frl_index,
    }
    .build()?)
}
