//! Network representation: layer chain with optional add-skip edges.
//!
//! Dense weights are stored `[out][in]`, so output `i` is
//! `σ(Σ_j w[i][j]·x_j + b_i)`. Tensor activations are flattened channel-major,
//! then row-major over the square spatial map. Layer ids are positional.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + crate::math::exp(-x)),
            Activation::Tanh => crate::math::tanh(x),
        }
    }

    /// Derivative expressed through the activation output `y = σ(z)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Average,
}

/// Shape of one layer response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    /// `channels` square maps of side `size`.
    Map { channels: usize, size: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Map { channels, size } => channels * size * size,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of prunable units: neurons for flat responses, channels for maps.
    pub fn units(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Map { channels, .. } => channels,
        }
    }

    /// Neurons per unit.
    pub fn unit_len(&self) -> usize {
        match *self {
            Shape::Flat(_) => 1,
            Shape::Map { size, .. } => size * size,
        }
    }

    /// Same spatial layout with a different unit count.
    pub fn with_units(&self, units: usize) -> Shape {
        match *self {
            Shape::Flat(_) => Shape::Flat(units),
            Shape::Map { size, .. } => Shape::Map {
                channels: units,
                size,
            },
        }
    }

    /// Expands a per-unit mask to a per-neuron mask.
    pub fn expand_units(&self, unit_mask: &[bool]) -> Vec<bool> {
        let per = self.unit_len();
        unit_mask
            .iter()
            .flat_map(|&k| core::iter::repeat_n(k, per))
            .collect()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Flat(n) => write!(f, "[{}]", n),
            Shape::Map { channels, size } => write!(f, "[{}x{}x{}]", channels, size, size),
        }
    }
}

/// Spatial geometry of a convolution or pooling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub input_size: usize,
    pub output_size: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Input channels (also output channels for pooling).
    pub channels: usize,
}

impl Geometry {
    /// `floor((X + 2p - k) / s) + 1`, or `None` when the window does not fit.
    pub fn expected_output(&self) -> Option<usize> {
        let padded = self.input_size + 2 * self.padding;
        if self.stride == 0 || self.kernel == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn check(&self) -> Result<()> {
        match self.expected_output() {
            None => Err(Error::Geometry(format!(
                "kernel {} with stride {} does not fit input {} padded by {}",
                self.kernel, self.stride, self.input_size, self.padding
            ))),
            Some(y) if y != self.output_size => Err(Error::Geometry(format!(
                "output size {} but (X + 2p - k)/s + 1 = {}",
                self.output_size, y
            ))),
            Some(_) if self.channels == 0 || self.input_size == 0 => {
                Err(Error::Geometry("empty input".into()))
            }
            Some(_) => Ok(()),
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape::Map {
            channels: self.channels,
            size: self.input_size,
        }
    }
}

/// Convolution kernel, `k × k × C_in × C_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn zeros(size: usize, in_channels: usize, out_channels: usize) -> Self {
        Kernel {
            size,
            in_channels,
            out_channels,
            data: vec![0.0; size * size * in_channels * out_channels],
        }
    }

    #[inline]
    pub fn index(&self, ky: usize, kx: usize, ci: usize, co: usize) -> usize {
        ((ky * self.size + kx) * self.in_channels + ci) * self.out_channels + co
    }

    #[inline]
    pub fn get(&self, ky: usize, kx: usize, ci: usize, co: usize) -> f64 {
        self.data[self.index(ky, kx, ci, co)]
    }

    #[inline]
    pub fn set(&mut self, ky: usize, kx: usize, ci: usize, co: usize, v: f64) {
        let i = self.index(ky, kx, ci, co);
        self.data[i] = v;
    }

    fn expected_len(&self) -> usize {
        self.size * self.size * self.in_channels * self.out_channels
    }

    /// Keeps the flagged input and output channels.
    pub fn select(&self, keep_in: &[bool], keep_out: &[bool]) -> Kernel {
        let ins: Vec<usize> = (0..self.in_channels).filter(|&c| keep_in[c]).collect();
        let outs: Vec<usize> = (0..self.out_channels).filter(|&c| keep_out[c]).collect();
        let mut k = Kernel::zeros(self.size, ins.len(), outs.len());
        for ky in 0..self.size {
            for kx in 0..self.size {
                for (ni, &ci) in ins.iter().enumerate() {
                    for (no, &co) in outs.iter().enumerate() {
                        k.set(ky, kx, ni, no, self.get(ky, kx, ci, co));
                    }
                }
            }
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out][in]`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub geometry: Geometry,
    pub kernel: Kernel,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Conv2d {
    pub fn output_shape(&self) -> Shape {
        Shape::Map {
            channels: self.kernel.out_channels,
            size: self.geometry.output_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool2d {
    pub geometry: Geometry,
    pub mode: PoolMode,
}

/// Cross-channel local response normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Lrn {
    pub local_size: usize,
    /// Declared input shape; required only when this is the first layer.
    pub shape: Option<Shape>,
}

impl Lrn {
    pub const BIAS: f64 = 1.0;
    pub const ALPHA: f64 = 1e-4;
    pub const BETA: f64 = 0.75;
}

/// Inference-time batch normalisation: per-unit `scale * x + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub shape: Option<Shape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationLayer {
    pub activation: Activation,
    pub shape: Option<Shape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
    Pool2d,
    Lrn,
    BatchNorm,
    Activation,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Pool2d => "pool2d",
            LayerKind::Lrn => "lrn",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Activation => "activation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Pool2d(Pool2d),
    Lrn(Lrn),
    BatchNorm(BatchNorm),
    Activation(ActivationLayer),
}

impl Layer {
    pub fn dense(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Layer {
        Layer::Dense(Dense {
            weights,
            bias,
            activation,
        })
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Pool2d(_) => LayerKind::Pool2d,
            Layer::Lrn(_) => LayerKind::Lrn,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Activation(_) => LayerKind::Activation,
        }
    }

    /// Dense and convolution layers create a new set of units; every other
    /// kind maps unit `c` of its input to unit `c` of its output.
    pub fn is_producer(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    pub fn activation(&self) -> Option<Activation> {
        match self {
            Layer::Dense(d) => Some(d.activation),
            Layer::Conv2d(c) => Some(c.activation),
            Layer::Activation(a) => Some(a.activation),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.rows() * d.weights.cols() + d.bias.len(),
            Layer::Conv2d(c) => c.kernel.data.len() + c.bias.len(),
            Layer::BatchNorm(b) => b.scale.len() + b.shift.len(),
            _ => 0,
        }
    }

    /// Input shape implied by the layer on its own, if any.
    pub fn implied_input(&self) -> Option<Shape> {
        match self {
            Layer::Dense(d) => Some(Shape::Flat(d.inputs())),
            Layer::Conv2d(c) => Some(c.geometry.input_shape()),
            Layer::Pool2d(p) => Some(p.geometry.input_shape()),
            Layer::Lrn(l) => l.shape,
            Layer::BatchNorm(b) => b.shape.or(Some(Shape::Flat(b.scale.len()))),
            Layer::Activation(a) => a.shape,
        }
    }

    /// Output shape for the given input, or a description of the mismatch.
    pub fn output_shape(&self, input: Shape) -> core::result::Result<Shape, String> {
        match self {
            Layer::Dense(d) => {
                if input.len() != d.inputs() {
                    return Err(format!(
                        "dense layer expects {} inputs, previous response is {}",
                        d.inputs(),
                        input
                    ));
                }
                Ok(Shape::Flat(d.outputs()))
            }
            Layer::Conv2d(c) => {
                let want = c.geometry.input_shape();
                if input != want {
                    return Err(format!(
                        "conv2d expects input {}, previous response is {}",
                        want, input
                    ));
                }
                Ok(c.output_shape())
            }
            Layer::Pool2d(p) => {
                let want = p.geometry.input_shape();
                if input != want {
                    return Err(format!(
                        "pool2d expects input {}, previous response is {}",
                        want, input
                    ));
                }
                Ok(Shape::Map {
                    channels: p.geometry.channels,
                    size: p.geometry.output_size,
                })
            }
            Layer::Lrn(l) => {
                let Shape::Map { channels, .. } = input else {
                    return Err(format!("lrn needs a spatial input, got {}", input));
                };
                if l.local_size > channels {
                    return Err(format!(
                        "lrn local size {} exceeds {} channels",
                        l.local_size, channels
                    ));
                }
                check_declared(l.shape, input)?;
                Ok(input)
            }
            Layer::BatchNorm(b) => {
                if input.units() != b.scale.len() {
                    return Err(format!(
                        "batchnorm has {} units, previous response is {}",
                        b.scale.len(),
                        input
                    ));
                }
                check_declared(b.shape, input)?;
                Ok(input)
            }
            Layer::Activation(a) => {
                check_declared(a.shape, input)?;
                Ok(input)
            }
        }
    }

    fn intrinsic_violations(&self, out: &mut Vec<String>) {
        match self {
            Layer::Dense(d) => {
                if d.weights.rows() == 0 || d.weights.cols() == 0 {
                    out.push("dense layer has an empty weight matrix".into());
                }
                if d.bias.len() != d.weights.rows() {
                    out.push(format!(
                        "dense bias has {} entries for {} outputs",
                        d.bias.len(),
                        d.weights.rows()
                    ));
                }
                if !d.weights.is_finite() || d.bias.iter().any(|v| !v.is_finite()) {
                    out.push("dense layer has non-finite parameters".into());
                }
            }
            Layer::Conv2d(c) => {
                if let Err(e) = c.geometry.check() {
                    out.push(format!("{}", e));
                }
                let k = &c.kernel;
                if k.size != c.geometry.kernel {
                    out.push(format!(
                        "kernel is {}x{} but geometry says {}",
                        k.size, k.size, c.geometry.kernel
                    ));
                }
                if k.in_channels != c.geometry.channels {
                    out.push(format!(
                        "kernel has {} input channels, geometry says {}",
                        k.in_channels, c.geometry.channels
                    ));
                }
                if k.out_channels == 0 {
                    out.push("conv2d has no output channels".into());
                }
                if k.data.len() != k.expected_len() {
                    out.push(format!(
                        "kernel holds {} values, expected {}",
                        k.data.len(),
                        k.expected_len()
                    ));
                }
                if c.bias.len() != k.out_channels {
                    out.push(format!(
                        "conv2d bias has {} entries for {} output channels",
                        c.bias.len(),
                        k.out_channels
                    ));
                }
                if k.data.iter().chain(&c.bias).any(|v| !v.is_finite()) {
                    out.push("conv2d has non-finite parameters".into());
                }
            }
            Layer::Pool2d(p) => {
                if let Err(e) = p.geometry.check() {
                    out.push(format!("{}", e));
                }
            }
            Layer::Lrn(l) => {
                if l.local_size == 0 || l.local_size % 2 == 0 {
                    out.push(format!("lrn local size {} must be odd", l.local_size));
                }
            }
            Layer::BatchNorm(b) => {
                if b.scale.is_empty() || b.scale.len() != b.shift.len() {
                    out.push(format!(
                        "batchnorm has {} scales and {} shifts",
                        b.scale.len(),
                        b.shift.len()
                    ));
                }
                if b.scale.iter().chain(&b.shift).any(|v| !v.is_finite()) {
                    out.push("batchnorm has non-finite parameters".into());
                }
                if let Some(s) = b.shape {
                    if s.units() != b.scale.len() {
                        out.push(format!(
                            "batchnorm declares shape {} but has {} units",
                            s,
                            b.scale.len()
                        ));
                    }
                }
            }
            Layer::Activation(_) => {}
        }
    }
}

fn check_declared(declared: Option<Shape>, input: Shape) -> core::result::Result<(), String> {
    match declared {
        Some(s) if s != input => Err(format!(
            "layer declares input {} but previous response is {}",
            s, input
        )),
        _ => Ok(()),
    }
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// `None` for network-level problems.
    pub layer: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            match v.layer {
                Some(l) => write!(f, "layer {}: {}", l, v.message)?,
                None => write!(f, "{}", v.message)?,
            }
        }
        Ok(())
    }
}

/// Unvalidated network description. Build a [`Network`] from it with
/// [`NetworkDef::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDef {
    pub layers: Vec<Layer>,
    /// `(source, merge)`: the source layer's response is added to the merge
    /// layer's response.
    pub skip_edges: Vec<(usize, usize)>,
    /// Final response layer: the layer feeding the classifier.
    pub frl_index: usize,
}

impl NetworkDef {
    pub fn build(self) -> Result<Network> {
        Network::new(self)
    }
}

/// Checks every structural invariant and reports all violations.
pub fn validate(def: &NetworkDef) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |layer: Option<usize>, message: String| violations.push(Violation { layer, message });

    if def.layers.is_empty() {
        push(None, "network has no layers".into());
    }
    let mut msgs = Vec::new();
    for (i, layer) in def.layers.iter().enumerate() {
        msgs.clear();
        layer.intrinsic_violations(&mut msgs);
        for m in msgs.drain(..) {
            push(Some(i), m);
        }
    }

    let (shapes, problems) = chain_shapes(&def.layers);
    for (i, m) in problems {
        push(Some(i), m);
    }

    let n = def.layers.len();
    if n > 0 {
        if def.frl_index >= n {
            push(
                None,
                format!("frl_index {} is not a layer index (have {})", def.frl_index, n),
            );
        } else if n > 1 && def.frl_index == n - 1 {
            push(
                Some(def.frl_index),
                "final response layer must precede the classifier layer".into(),
            );
        }
    }

    for &(src, dst) in &def.skip_edges {
        if src >= n || dst >= n {
            push(None, format!("skip edge ({}, {}) references a missing layer", src, dst));
            continue;
        }
        if src >= dst {
            push(Some(dst), format!("skip edge ({}, {}) must point forward", src, dst));
            continue;
        }
        if let (Some(a), Some(b)) = (shapes[src], shapes[dst]) {
            if a != b {
                push(
                    Some(dst),
                    format!(
                        "skip edge ({}, {}) joins responses of shape {} and {}",
                        src, dst, a, b
                    ),
                );
            }
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

// Output shape per layer (`None` when unknown) plus shape violations. After a
// mismatch the chain resynchronises on the next layer's own input shape so
// later layers are still checked.
fn chain_shapes(layers: &[Layer]) -> (Vec<Option<Shape>>, Vec<(usize, String)>) {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut problems = Vec::new();
    let mut prev = layers.first().and_then(Layer::implied_input);
    if prev.is_none() && !layers.is_empty() {
        problems.push((0, "cannot infer the network input shape from the first layer".into()));
    }
    for (i, layer) in layers.iter().enumerate() {
        let own = || {
            layer
                .implied_input()
                .and_then(|input| layer.output_shape(input).ok())
        };
        let shape = match prev {
            Some(input) => match layer.output_shape(input) {
                Ok(s) => Some(s),
                Err(m) => {
                    problems.push((i, m));
                    own()
                }
            },
            None => own(),
        };
        shapes.push(shape);
        prev = shape;
    }
    (shapes, problems)
}

/// Unit space of a layer response, after merging spaces tied by skip edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Space {
    /// The network input; never pruned.
    Input,
    /// Units created by the given producer layer (the highest-indexed
    /// producer of a tied group).
    Producer(usize),
}

/// A validated network. Immutable; surgery returns new values.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    def: NetworkDef,
    input_shape: Shape,
    shapes: Vec<Shape>,
    spaces: Vec<Space>,
}

impl Network {
    pub fn new(def: NetworkDef) -> Result<Self> {
        let report = validate(&def);
        if !report.ok {
            return Err(Error::InvalidNetwork(report));
        }
        let input_shape = def.layers[0]
            .implied_input()
            .expect("validated first layer implies its input shape");
        let mut shapes = Vec::with_capacity(def.layers.len());
        let mut prev = input_shape;
        for layer in &def.layers {
            prev = layer
                .output_shape(prev)
                .expect("validated layer chain is consistent");
            shapes.push(prev);
        }
        let spaces = resolve_spaces(&def);
        Ok(Network {
            def,
            input_shape,
            shapes,
            spaces,
        })
    }

    pub fn def(&self) -> &NetworkDef {
        &self.def
    }

    pub fn into_def(self) -> NetworkDef {
        self.def
    }

    pub fn layers(&self) -> &[Layer] {
        &self.def.layers
    }

    pub fn layer(&self, id: usize) -> &Layer {
        &self.def.layers[id]
    }

    pub fn len(&self) -> usize {
        self.def.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.def.layers.is_empty()
    }

    pub fn skip_edges(&self) -> &[(usize, usize)] {
        &self.def.skip_edges
    }

    pub fn frl_index(&self) -> usize {
        self.def.frl_index
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self, layer: usize) -> Shape {
        self.shapes[layer]
    }

    /// Shape of the response consumed by `layer`.
    pub fn input_shape_of(&self, layer: usize) -> Shape {
        if layer == 0 {
            self.input_shape
        } else {
            self.shapes[layer - 1]
        }
    }

    pub fn final_shape(&self) -> Shape {
        *self.shapes.last().expect("validated network is non-empty")
    }

    /// Unit space of `layer`'s response.
    pub fn space(&self, layer: usize) -> Space {
        self.spaces[layer]
    }

    /// Unit space of the response consumed by `layer`.
    pub fn input_space(&self, layer: usize) -> Space {
        if layer == 0 {
            Space::Input
        } else {
            self.spaces[layer - 1]
        }
    }

    /// Producer layers whose response lives in `space`, ascending.
    pub fn producers_in(&self, space: Space) -> Vec<usize> {
        (0..self.len())
            .filter(|&l| self.layer(l).is_producer() && self.spaces[l] == space)
            .collect()
    }

    /// Producers at or below the final response layer whose unit space can
    /// be pruned: not tied to the input and not shared with layers past the
    /// final response layer.
    pub fn is_prunable(&self, layer: usize) -> bool {
        if layer > self.frl_index() || !self.layer(layer).is_producer() {
            return false;
        }
        let space = self.spaces[layer];
        if space == Space::Input {
            return false;
        }
        self.producers_in(space)
            .iter()
            .all(|&p| p <= self.frl_index())
    }

    pub fn prunable_layers(&self) -> Vec<usize> {
        (0..self.len()).filter(|&l| self.is_prunable(l)).collect()
    }

    /// Skip sources added into `layer`'s response.
    pub fn skip_sources(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.def
            .skip_edges
            .iter()
            .filter(move |&&(_, m)| m == layer)
            .map(|&(s, _)| s)
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(Layer::param_count).sum()
    }

    /// `G^(i,j)`: layers `i..=j` as a sub-network.
    pub fn slice(&self, start: usize, end: usize) -> Result<SubNetwork<'_>> {
        if end >= self.len() {
            return Err(Error::OutOfRange {
                index: end,
                limit: self.len(),
            });
        }
        if start > end {
            return Err(Error::OutOfRange {
                index: start,
                limit: end + 1,
            });
        }
        Ok(SubNetwork {
            parent: self,
            start,
            end,
        })
    }
}

fn resolve_spaces(def: &NetworkDef) -> Vec<Space> {
    let n = def.layers.len();
    // Node 0 is the input, node l + 1 is producer layer l.
    let mut raw = Vec::with_capacity(n);
    let mut current = 0usize;
    for (l, layer) in def.layers.iter().enumerate() {
        if layer.is_producer() {
            current = l + 1;
        }
        raw.push(current);
    }
    let mut parent: Vec<usize> = (0..=n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(src, dst) in &def.skip_edges {
        let a = find(&mut parent, raw[src]);
        let b = find(&mut parent, raw[dst]);
        if a != b {
            // Input (node 0) wins; otherwise the higher producer is the root.
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo == 0 {
                parent[hi] = 0;
            } else {
                parent[lo] = hi;
            }
        }
    }
    let mut root_of = BTreeMap::new();
    raw.iter()
        .map(|&node| {
            let r = *root_of
                .entry(node)
                .or_insert_with(|| find(&mut parent, node));
            if r == 0 {
                Space::Input
            } else {
                Space::Producer(r - 1)
            }
        })
        .collect()
}

/// Layers `start..=end` of a parent network.
#[derive(Debug, Clone, Copy)]
pub struct SubNetwork<'a> {
    pub parent: &'a Network,
    pub start: usize,
    pub end: usize,
}

impl SubNetwork<'_> {
    pub fn input_shape(&self) -> Shape {
        self.parent.input_shape_of(self.start)
    }

    pub fn output_shape(&self) -> Shape {
        self.parent.output_shape(self.end)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.parent.layers()[self.start..=self.end]
    }

    /// Forward pass over the slice.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        crate::engine::forward_range(self.parent, self.start, self.end, input, None)
    }
}
