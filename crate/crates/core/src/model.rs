//! Generator and discriminator networks as layer stacks over the autodiff
//! engine.
//!
//! The generator is a VGG-16-style convolutional encoder (four pooling
//! stages) mirrored by an upsampling decoder, ending in a 1x1 sigmoid projection so
//! the output map matches the input resolution. The discriminator takes the
//! 4-channel image+saliency stack through six convolutions, three poolings,
//! and a tanh/tanh/sigmoid dense head.
//!
//! A `scale_divisor` shrinks every regular convolution width by an integer
//! factor for desk-scale runs; the RGBS mixer (depth 3), the output map
//! (depth 1), and the dense head sizes stay fixed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Activation, Tensor};

/// Layer role within a network stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Pool,
    Upsample,
    Dense,
    /// Final 1x1 convolution producing the saliency map.
    Output,
}

/// One row of a network table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Output channels (conv) or units (dense); 0 for pool/upsample rows.
    pub depth: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
    pub activation: Option<Activation>,
    /// Convolution block number, used by the frozen-prefix rule.
    pub block: usize,
    /// Whether `depth` is divided by the scale divisor.
    pub scaled: bool,
}

impl LayerSpec {
    fn conv(name: &str, block: usize, depth: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv,
            depth,
            kernel: (3, 3),
            stride: 1,
            pad: 1,
            activation: Some(Activation::Relu),
            block,
            scaled: true,
        }
    }

    fn pool(name: &str, block: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Pool,
            depth: 0,
            kernel: (2, 2),
            stride: 2,
            pad: 0,
            activation: None,
            block,
            scaled: false,
        }
    }

    fn upsample(name: &str, block: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Upsample,
            depth: 0,
            kernel: (2, 2),
            stride: 2,
            pad: 0,
            activation: None,
            block,
            scaled: false,
        }
    }

    fn dense(name: &str, block: usize, depth: usize, activation: Activation) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Dense,
            depth,
            kernel: (0, 0),
            stride: 0,
            pad: 0,
            activation: Some(activation),
            block,
            scaled: false,
        }
    }
}

/// Structural description of a network: its table rows, width divisor,
/// expected input shape (channels, height, width), and how many leading
/// convolution blocks are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub specs: Vec<LayerSpec>,
    pub scale_divisor: usize,
    pub input_shape: (usize, usize, usize),
    pub frozen_prefix: usize,
}

impl NetConfig {
    /// Encoder-decoder generator table for a (3, height, width) input.
    /// Blocks conv1-conv3 are frozen; conv4, conv5 and the decoder train.
    pub fn generator(scale_divisor: usize, height: usize, width: usize) -> Result<Self> {
        if height % 16 != 0 || width % 16 != 0 {
            return Err(Error::InvalidArgument(format!(
                "generator input dims must be divisible by 16, got {width}x{height}"
            )));
        }
        let mut specs = Vec::new();
        // Encoder: conv1_1 uses a 3x3 kernel like the rest of the VGG stack.
        for (block, count, depth) in [
            (1, 2, 64),
            (2, 2, 128),
            (3, 3, 256),
            (4, 3, 512),
            (5, 3, 512),
        ] {
            for i in 1..=count {
                specs.push(LayerSpec::conv(&format!("conv{block}_{i}"), block, depth));
            }
            if block < 5 {
                specs.push(LayerSpec::pool(&format!("pool{block}"), block));
            }
        }
        // Decoder mirrors the encoder with upsampling between blocks.
        for (block, count, depth) in [
            (6, 3, 512),
            (7, 3, 512),
            (8, 3, 256),
            (9, 2, 128),
            (10, 2, 64),
        ] {
            for i in 1..=count {
                specs.push(LayerSpec::conv(&format!("conv{block}_{i}"), block, depth));
            }
            if block < 10 {
                specs.push(LayerSpec::upsample(&format!("upsample{block}"), block));
            }
        }
        specs.push(LayerSpec {
            name: "output".into(),
            kind: LayerKind::Output,
            depth: 1,
            kernel: (1, 1),
            stride: 1,
            pad: 0,
            activation: Some(Activation::Sigmoid),
            block: 11,
            scaled: false,
        });
        let config = NetConfig {
            specs,
            scale_divisor,
            input_shape: (3, height, width),
            frozen_prefix: 3,
        };
        config.validate()?;
        Ok(config)
    }

    /// Discriminator table for a (4, height, width) RGBS input. The leading
    /// 1x1 convolution mixes the four input channels down to three and is
    /// exempt from width scaling, as is the 100/2/1 dense head.
    pub fn discriminator(scale_divisor: usize, height: usize, width: usize) -> Result<Self> {
        if height % 8 != 0 || width % 8 != 0 {
            return Err(Error::InvalidArgument(format!(
                "discriminator input dims must be divisible by 8, got {width}x{height}"
            )));
        }
        let mut specs = vec![LayerSpec {
            name: "conv1_1".into(),
            kind: LayerKind::Conv,
            depth: 3,
            kernel: (1, 1),
            stride: 1,
            pad: 0,
            activation: Some(Activation::Relu),
            block: 1,
            scaled: false,
        }];
        specs.push(LayerSpec::conv("conv1_2", 1, 32));
        specs.push(LayerSpec::pool("pool1", 1));
        for block in [2, 3] {
            specs.push(LayerSpec::conv(&format!("conv{block}_1"), block, 64));
            specs.push(LayerSpec::conv(&format!("conv{block}_2"), block, 64));
            specs.push(LayerSpec::pool(&format!("pool{block}"), block));
        }
        specs.push(LayerSpec::dense("fc4", 4, 100, Activation::Tanh));
        specs.push(LayerSpec::dense("fc5", 5, 2, Activation::Tanh));
        specs.push(LayerSpec::dense("fc6", 6, 1, Activation::Sigmoid));
        let config = NetConfig {
            specs,
            scale_divisor,
            input_shape: (4, height, width),
            frozen_prefix: 0,
        };
        config.validate()?;
        Ok(config)
    }

    /// Effective output width of a row under the scale divisor.
    pub fn scaled_depth(&self, spec: &LayerSpec) -> usize {
        if spec.scaled {
            spec.depth / self.scale_divisor
        } else {
            spec.depth
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_divisor == 0 {
            return Err(Error::InvalidArgument("scale divisor must be >= 1".into()));
        }
        for spec in &self.specs {
            if spec.scaled && spec.kind == LayerKind::Conv {
                if spec.depth % self.scale_divisor != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "conv depth {} of {} not divisible by scale divisor {}",
                        spec.depth, spec.name, self.scale_divisor
                    )));
                }
                if spec.depth / self.scale_divisor == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "scaled depth of {} would be zero",
                        spec.name
                    )));
                }
            }
        }
        // Dry-run the shape propagation so structural problems surface here.
        self.propagate_shapes().map(|_| ())
    }

    /// Walks the rows and returns (name, param shapes) for every
    /// parameterized layer plus the final feature shape.
    fn propagate_shapes(&self) -> Result<Vec<(String, Vec<usize>, Vec<usize>)>> {
        let (mut c, mut h, mut w) = self.input_shape;
        let mut flat: Option<usize> = None;
        let mut out = Vec::new();
        for spec in &self.specs {
            match spec.kind {
                LayerKind::Conv | LayerKind::Output => {
                    let depth = self.scaled_depth(spec);
                    let (kh, kw) = spec.kernel;
                    out.push((spec.name.clone(), vec![depth, c, kh, kw], vec![depth]));
                    h = (h + 2 * spec.pad - kh) / spec.stride + 1;
                    w = (w + 2 * spec.pad - kw) / spec.stride + 1;
                    c = depth;
                }
                LayerKind::Pool => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::InvalidArgument(format!(
                            "{}: odd spatial dims {h}x{w} before pooling",
                            spec.name
                        )));
                    }
                    h /= 2;
                    w /= 2;
                }
                LayerKind::Upsample => {
                    h *= 2;
                    w *= 2;
                }
                LayerKind::Dense => {
                    let in_dim = flat.unwrap_or(c * h * w);
                    out.push((
                        spec.name.clone(),
                        vec![spec.depth, in_dim],
                        vec![spec.depth],
                    ));
                    flat = Some(spec.depth);
                }
            }
        }
        Ok(out)
    }
}

/// A named weight tensor with its trainable flag.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// A parameterized network: config plus weights in a fixed order.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetConfig,
    pub params: Vec<Param>,
}

/// Node ids of one network's parameters inside a graph, aligned with
/// `Network::params`. Weights are inserted once per graph and can back any
/// number of forward applications in it.
#[derive(Debug, Clone)]
pub struct Binding {
    pub param_ids: Vec<NodeId>,
}

impl Network {
    /// Builds a network with Glorot-uniform weights and zero biases drawn
    /// from the seed. Layers in the frozen prefix are marked non-trainable.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        // Parameter shapes from the shape propagation; fan-in/fan-out for
        // the init are recoverable from those shapes.
        for (name, wshape, bshape) in config.propagate_shapes()? {
            let frozen = {
                let spec = config
                    .specs
                    .iter()
                    .find(|s| s.name == name)
                    .expect("propagated name exists");
                spec.kind == LayerKind::Conv && spec.block <= config.frozen_prefix
            };
            let (fan_in, fan_out) = if wshape.len() == 4 {
                let rf = wshape[2] * wshape[3];
                (wshape[1] * rf, wshape[0] * rf)
            } else {
                (wshape[1], wshape[0])
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = wshape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
            params.push(Param {
                name: format!("{name}.weight"),
                value: Tensor::from_vec(&wshape, data)?,
                trainable: !frozen,
            });
            params.push(Param {
                name: format!("{name}.bias"),
                value: Tensor::zeros(&bshape),
                trainable: !frozen,
            });
        }
        Ok(Network { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Inserts every parameter as a graph leaf, trainable per its own flag.
    pub fn bind(&self, graph: &mut Graph) -> Binding {
        self.bind_with(graph, true)
    }

    /// Inserts every parameter as a frozen (non-trainable) leaf: gradients
    /// still flow through the network but none are collected for it.
    pub fn bind_frozen(&self, graph: &mut Graph) -> Binding {
        self.bind_with(graph, false)
    }

    fn bind_with(&self, graph: &mut Graph, respect_flags: bool) -> Binding {
        let param_ids = self
            .params
            .iter()
            .map(|p| {
                if respect_flags && p.trainable {
                    graph.param(p.value.clone())
                } else {
                    graph.leaf(p.value.clone())
                }
            })
            .collect();
        Binding { param_ids }
    }

    /// Runs the layer stack on `input` using an existing binding. The input
    /// must be rank 4 with this network's channel count; spatial dims are
    /// free as long as the pooling structure divides them.
    pub fn apply(&self, graph: &mut Graph, binding: &Binding, input: NodeId) -> Result<NodeId> {
        let shape = graph.value(input).shape().to_vec();
        if shape.len() != 4 || shape[1] != self.config.input_shape.0 {
            return Err(Error::ShapeMismatch(format!(
                "network expects (B, {}, H, W) input, got {shape:?}",
                self.config.input_shape.0
            )));
        }
        let mut cur = input;
        let mut pi = 0usize;
        let mut flattened = false;
        for spec in &self.config.specs {
            match spec.kind {
                LayerKind::Conv | LayerKind::Output => {
                    let w = binding.param_ids[pi];
                    let b = binding.param_ids[pi + 1];
                    pi += 2;
                    cur = graph.conv2d(cur, w, b, spec.stride, spec.pad)?;
                }
                LayerKind::Pool => {
                    cur = graph.maxpool2(cur)?;
                }
                LayerKind::Upsample => {
                    cur = graph.upsample2(cur)?;
                }
                LayerKind::Dense => {
                    if !flattened {
                        cur = graph.flatten(cur)?;
                        flattened = true;
                    }
                    let w = binding.param_ids[pi];
                    let b = binding.param_ids[pi + 1];
                    pi += 2;
                    cur = graph.dense(cur, w, b)?;
                }
            }
            if let Some(kind) = spec.activation {
                cur = graph.activate(cur, kind)?;
            }
        }
        Ok(cur)
    }

    /// Binds the network into the graph and runs one forward pass. The input
    /// shape must match the configured input shape exactly (batch free).
    pub fn forward(&self, graph: &mut Graph, input: &Tensor) -> Result<(NodeId, Binding)> {
        let (c, h, w) = self.config.input_shape;
        if input.rank() != 4 || input.shape()[1..] != [c, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "input shape {:?} does not match network input (B, {c}, {h}, {w})",
                input.shape()
            )));
        }
        let binding = self.bind(graph);
        let id = graph.leaf(input.clone());
        let out = self.apply(graph, &binding, id)?;
        Ok((out, binding))
    }

    /// Copies updated values back from a graph binding.
    pub fn read_back(&mut self, graph: &Graph, binding: &Binding) {
        for (param, &id) in self.params.iter_mut().zip(&binding.param_ids) {
            param.value = graph.value(id).clone();
        }
    }

    /// Runs a (3, H, W) image through a generator and returns the predicted
    /// saliency map. H and W may differ from the configured size as long as
    /// they survive the pooling structure (divisible by 16).
    pub fn predict_map(&self, image: &Tensor) -> Result<crate::metrics::SaliencyMap> {
        let shape = image.shape();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "predict expects a (3, H, W) image, got {shape:?}"
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::InvalidArgument(format!(
                "image dims must be divisible by 16, got {w}x{h}"
            )));
        }
        let mut graph = Graph::new();
        let binding = self.bind_frozen(&mut graph);
        let input = graph.leaf(image.reshape(&[1, 3, h, w])?);
        let out = self.apply(&mut graph, &binding, input)?;
        crate::metrics::SaliencyMap::new(w, h, graph.value(out).data().to_vec())
    }
}

/// Builds the generator for `config`, validating it describes a generator.
pub fn build_generator(config: &NetConfig, seed: u64) -> Result<Network> {
    if config.input_shape.0 != 3 {
        return Err(Error::InvalidArgument(
            "generator config must have 3 input channels".into(),
        ));
    }
    Network::new(config.clone(), seed)
}

/// Builds the discriminator for `config`, validating the RGBS input.
pub fn build_discriminator(config: &NetConfig, seed: u64) -> Result<Network> {
    if config.input_shape.0 != 4 {
        return Err(Error::InvalidArgument(
            "discriminator config must have 4 input channels".into(),
        ));
    }
    Network::new(config.clone(), seed)
}
