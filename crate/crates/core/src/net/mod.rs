//! Layered convolutional network: specification, parameters, forward pass
//! with activation caching, reverse-mode backward with gradient injection,
//! and SGD training steps.

mod backward;
mod forward;

pub use backward::{backward_injected, loss_and_grads, softmax_cross_entropy, LayerGrads, ParamGrads};
pub use forward::{forward, forward_to, ActivationCache};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One layer of the sequential graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    ReLU,
    MaxPool { kernel: usize, stride: usize, padding: usize },
    GlobalAvgPool,
    Dense { out_units: usize },
}

impl LayerSpec {
    pub fn label(&self) -> String {
        match self {
            LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                format!("Conv(out={out_channels},k={kernel},s={stride},p={padding})")
            }
            LayerSpec::ReLU => "ReLU".to_string(),
            LayerSpec::MaxPool { kernel, stride, padding } => {
                format!("MaxPool(k={kernel},s={stride},p={padding})")
            }
            LayerSpec::GlobalAvgPool => "GlobalAvgPool".to_string(),
            LayerSpec::Dense { out_units } => format!("Dense(out={out_units})"),
        }
    }

    /// True for layers whose output keeps a (channel, row, col) grid.
    pub fn is_spatial(&self) -> bool {
        !matches!(self, LayerSpec::GlobalAvgPool | LayerSpec::Dense { .. })
    }
}

/// (channels, rows, cols) of one layer's output for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatShape {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl FeatShape {
    pub fn count(&self) -> usize {
        self.channels * self.rows * self.cols
    }
}

/// Learnable tensors of one layer. Conv weights are (out, in, k, k);
/// Dense weights are (out, in, 1, 1); biases are (1, out, 1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Address of a single node: one channel at one spatial position of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef {
    pub layer: usize,
    pub channel: usize,
    pub row: usize,
    pub col: usize,
}

/// Where the backward pass is seeded: gradient 1.0 at every target of the
/// chosen layer, 0.0 everywhere else in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Injection {
    /// Explicit (channel, row, col) targets.
    Nodes { layer: usize, targets: Vec<(usize, usize, usize)> },
    /// Every spatial position of one channel.
    Channel { layer: usize, channel: usize },
}

impl Injection {
    pub fn single(node: NodeRef) -> Injection {
        Injection::Nodes { layer: node.layer, targets: vec![(node.channel, node.row, node.col)] }
    }

    pub fn layer(&self) -> usize {
        match self {
            Injection::Nodes { layer, .. } | Injection::Channel { layer, .. } => *layer,
        }
    }

    pub fn validate(&self, model: &ModelGraph) -> Result<()> {
        let layer = self.layer();
        let shape = model
            .layer_output_shape(layer)
            .ok_or_else(|| Error::OutOfRange(format!("injection layer {layer} out of range")))?;
        match self {
            Injection::Nodes { targets, .. } => {
                if targets.is_empty() {
                    return Err(Error::InvalidParam("injection with no targets".into()));
                }
                for &(c, r, col) in targets {
                    if c >= shape.channels || r >= shape.rows || col >= shape.cols {
                        return Err(Error::OutOfRange(format!(
                            "injection target ({c},{r},{col}) outside layer {layer} output \
                             {}x{}x{}",
                            shape.channels, shape.rows, shape.cols
                        )));
                    }
                }
            }
            Injection::Channel { channel, .. } => {
                if *channel >= shape.channels {
                    return Err(Error::OutOfRange(format!(
                        "injection channel {channel} outside layer {layer} ({} channels)",
                        shape.channels
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sequential convolutional network with owned parameters.
///
/// `linearize` switches the piecewise-linear layers to their linear
/// counterparts (ReLU becomes identity, MaxPool becomes a window sum) so
/// that gradient support is free of dead units and argmax sparsity. Used
/// by the receptive-field oracle, never during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: FeatShape,
    layers: Vec<LayerSpec>,
    params: Vec<Option<LayerParams>>,
    output_shapes: Vec<FeatShape>,
    pub linearize: bool,
}

/// Computes every layer's output shape, validating the chain.
pub fn infer_shapes(input: FeatShape, layers: &[LayerSpec]) -> Result<Vec<FeatShape>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut cur = input;
    if cur.channels == 0 || cur.rows == 0 || cur.cols == 0 {
        return Err(Error::InvalidParam(format!("empty input shape {cur:?}")));
    }
    for (i, spec) in layers.iter().enumerate() {
        cur = match *spec {
            LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                if out_channels == 0 {
                    return Err(Error::InvalidParam(format!("layer {i}: zero out_channels")));
                }
                let (rows, cols) =
                    conv_output_dims(i, cur.rows, cur.cols, kernel, stride, padding)?;
                FeatShape { channels: out_channels, rows, cols }
            }
            LayerSpec::MaxPool { kernel, stride, padding } => {
                if padding > kernel / 2 {
                    return Err(Error::InvalidParam(format!(
                        "layer {i}: MaxPool padding {padding} exceeds kernel/2"
                    )));
                }
                let (rows, cols) =
                    conv_output_dims(i, cur.rows, cur.cols, kernel, stride, padding)?;
                FeatShape { channels: cur.channels, rows, cols }
            }
            LayerSpec::ReLU => cur,
            LayerSpec::GlobalAvgPool => FeatShape { channels: cur.channels, rows: 1, cols: 1 },
            LayerSpec::Dense { out_units } => {
                if out_units == 0 {
                    return Err(Error::InvalidParam(format!("layer {i}: zero out_units")));
                }
                FeatShape { channels: out_units, rows: 1, cols: 1 }
            }
        };
        shapes.push(cur);
    }
    Ok(shapes)
}

fn conv_output_dims(
    layer: usize,
    rows: usize,
    cols: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    if kernel < 1 || stride < 1 {
        return Err(Error::InvalidParam(format!(
            "layer {layer}: kernel {kernel}, stride {stride}"
        )));
    }
    let out = |dim: usize| -> Result<usize> {
        let padded = dim + 2 * padding;
        if padded < kernel {
            return Err(Error::InvalidParam(format!(
                "layer {layer}: kernel {kernel} larger than padded input {padded}"
            )));
        }
        Ok((padded - kernel) / stride + 1)
    };
    Ok((out(rows)?, out(cols)?))
}

impl ModelGraph {
    /// Builds a model with He-uniform weights drawn deterministically from
    /// `seed`; biases start at zero.
    pub fn build(input_shape: FeatShape, layers: Vec<LayerSpec>, seed: u64) -> Result<ModelGraph> {
        let output_shapes = infer_shapes(input_shape, &layers)?;
        let mut rng = Rng::new(seed);
        let mut params = Vec::with_capacity(layers.len());
        let mut in_shape = input_shape;
        for spec in &layers {
            let p = match *spec {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    let fan_in = in_shape.channels * kernel * kernel;
                    let weight = he_uniform(
                        &mut rng,
                        [out_channels, in_shape.channels, kernel, kernel],
                        fan_in,
                    );
                    Some(LayerParams { weight, bias: Tensor::zeros([1, out_channels, 1, 1]) })
                }
                LayerSpec::Dense { out_units } => {
                    let fan_in = in_shape.count();
                    let weight = he_uniform(&mut rng, [out_units, fan_in, 1, 1], fan_in);
                    Some(LayerParams { weight, bias: Tensor::zeros([1, out_units, 1, 1]) })
                }
                _ => None,
            };
            params.push(p);
            in_shape = output_shapes[params.len() - 1];
        }
        Ok(ModelGraph { input_shape, layers, params, output_shapes, linearize: false })
    }

    /// Rebuilds a model from explicit parameters (deserialization path).
    pub fn from_parts(
        input_shape: FeatShape,
        layers: Vec<LayerSpec>,
        params: Vec<Option<LayerParams>>,
    ) -> Result<ModelGraph> {
        let output_shapes = infer_shapes(input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers but {} parameter slots",
                layers.len(),
                params.len()
            )));
        }
        let model =
            ModelGraph { input_shape, layers, params, output_shapes, linearize: false };
        for (i, expect) in model.expected_param_shapes().into_iter().enumerate() {
            let got = model.params[i].as_ref().map(|p| (p.weight.shape(), p.bias.shape()));
            if got != expect {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: parameter shapes {got:?} do not match spec {expect:?}"
                )));
            }
        }
        for p in model.params.iter().flatten() {
            p.weight.validate_finite("model weight")?;
            p.bias.validate_finite("model bias")?;
        }
        Ok(model)
    }

    /// The reference architecture used throughout the toolkit: a 64x64 RGB
    /// input with three pooled stages and a deep final stage whose RF
    /// (70 px) exceeds the image, then GlobalAvgPool and a classifier head.
    pub fn rfnet64(num_classes: usize, seed: u64) -> Result<ModelGraph> {
        let layers = vec![
            LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::ReLU,
            LayerSpec::MaxPool { kernel: 2, stride: 2, padding: 0 },
            LayerSpec::Conv { out_channels: 32, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::ReLU,
            LayerSpec::MaxPool { kernel: 2, stride: 2, padding: 0 },
            LayerSpec::Conv { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::ReLU,
            LayerSpec::MaxPool { kernel: 2, stride: 2, padding: 0 },
            LayerSpec::Conv { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::ReLU,
            LayerSpec::Conv { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::ReLU,
            LayerSpec::Conv { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::ReLU,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { out_units: num_classes },
        ];
        ModelGraph::build(FeatShape { channels: 3, rows: 64, cols: 64 }, layers, seed)
    }

    /// Layer index of the first Conv ("layer 1" in reports).
    pub fn first_conv_layer(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, LayerSpec::Conv { .. }))
    }

    /// Layer index of the deepest Conv.
    pub fn last_conv_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, LayerSpec::Conv { .. }))
    }

    pub fn input_shape(&self) -> FeatShape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_output_shape(&self, layer: usize) -> Option<FeatShape> {
        self.output_shapes.get(layer).copied()
    }

    pub fn output_shapes(&self) -> &[FeatShape] {
        &self.output_shapes
    }

    /// Per-layer (weight shape, bias shape) implied by the specs alone.
    pub fn expected_param_shapes(&self) -> Vec<Option<([usize; 4], [usize; 4])>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut in_shape = self.input_shape;
        for (i, spec) in self.layers.iter().enumerate() {
            out.push(match *spec {
                LayerSpec::Conv { out_channels, kernel, .. } => Some((
                    [out_channels, in_shape.channels, kernel, kernel],
                    [1, out_channels, 1, 1],
                )),
                LayerSpec::Dense { out_units } => {
                    Some(([out_units, in_shape.count(), 1, 1], [1, out_units, 1, 1]))
                }
                _ => None,
            });
            in_shape = self.output_shapes[i];
        }
        out
    }

    pub fn validate_node(&self, node: NodeRef) -> Result<()> {
        Injection::single(node).validate(self)
    }

    /// In-place SGD update: params <- params - lr * grads.
    pub fn sgd_step(&mut self, grads: &ParamGrads, lr: f32) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidParam(format!("sgd_step: lr must be > 0, got {lr}")));
        }
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "sgd_step: {} gradient slots for {} layers",
                grads.len(),
                self.params.len()
            )));
        }
        for (i, (p, g)) in self.params.iter_mut().zip(grads.iter()).enumerate() {
            match (p, g) {
                (Some(p), Some(g)) => {
                    g.weight.validate_finite(&format!("layer {i} weight grad"))?;
                    g.bias.validate_finite(&format!("layer {i} bias grad"))?;
                    if g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape() {
                        return Err(Error::ShapeMismatch(format!("sgd_step: layer {i}")));
                    }
                    for (w, gw) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
                        *w -= lr * gw;
                    }
                    for (b, gb) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
                        *b -= lr * gb;
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "sgd_step: gradient/parameter mismatch at layer {i}"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Replaces every weight with |w| + floor, making all paths through the
    /// network strictly positive. Combined with `linearize`, gradient
    /// support then equals the geometric receptive field exactly.
    pub fn make_weights_positive(&mut self, floor: f32) {
        for p in self.params.iter_mut().flatten() {
            for w in p.weight.data_mut() {
                *w = w.abs() + floor;
            }
        }
    }
}

fn he_uniform(rng: &mut Rng, shape: [usize; 4], fan_in: usize) -> Tensor {
    let limit = (6.0 / fan_in as f32).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform_f32(-limit, limit);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfnet64_shapes() {
        let m = ModelGraph::rfnet64(4, 1).unwrap();
        let shapes = m.output_shapes();
        assert_eq!(shapes[0], FeatShape { channels: 16, rows: 64, cols: 64 });
        assert_eq!(shapes[2], FeatShape { channels: 16, rows: 32, cols: 32 });
        assert_eq!(shapes[13], FeatShape { channels: 64, rows: 8, cols: 8 });
        assert_eq!(shapes[16], FeatShape { channels: 4, rows: 1, cols: 1 });
        assert_eq!(m.first_conv_layer(), Some(0));
        assert_eq!(m.last_conv_layer(), Some(13));
    }

    #[test]
    fn build_is_seed_deterministic() {
        let a = ModelGraph::rfnet64(4, 7).unwrap();
        let b = ModelGraph::rfnet64(4, 7).unwrap();
        assert_eq!(a, b);
        let c = ModelGraph::rfnet64(4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_chain_rejected() {
        // 5x5 kernel cannot fit a 2x2 input even with padding 1.
        let r = ModelGraph::build(
            FeatShape { channels: 1, rows: 2, cols: 2 },
            vec![LayerSpec::Conv { out_channels: 1, kernel: 5, stride: 1, padding: 0 }],
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn injection_validation() {
        let m = ModelGraph::rfnet64(4, 1).unwrap();
        let ok = Injection::Nodes { layer: 0, targets: vec![(15, 63, 63)] };
        assert!(ok.validate(&m).is_ok());
        let bad = Injection::Nodes { layer: 0, targets: vec![(16, 0, 0)] };
        assert!(bad.validate(&m).is_err());
        let empty = Injection::Nodes { layer: 0, targets: vec![] };
        assert!(empty.validate(&m).is_err());
        let chan = Injection::Channel { layer: 13, channel: 63 };
        assert!(chan.validate(&m).is_ok());
    }

    #[test]
    fn sgd_step_arithmetic() {
        // Single Dense "scalar" parameter: w=1, grad=2, lr=0.1 -> 0.8.
        let mut m = ModelGraph::build(
            FeatShape { channels: 1, rows: 1, cols: 1 },
            vec![LayerSpec::Dense { out_units: 1 }],
            0,
        )
        .unwrap();
        m.params_mut()[0].as_mut().unwrap().weight.data_mut()[0] = 1.0;
        let grads: ParamGrads = vec![Some(LayerGrads {
            weight: Tensor::from_vec([1, 1, 1, 1], vec![2.0]).unwrap(),
            bias: Tensor::zeros([1, 1, 1, 1]),
        })];
        m.sgd_step(&grads, 0.1).unwrap();
        let w = m.params()[0].as_ref().unwrap().weight.data()[0];
        assert!((w - 0.8).abs() < 1e-7);
    }

    #[test]
    fn sgd_step_rejects_zero_lr() {
        let mut m = ModelGraph::rfnet64(4, 1).unwrap();
        let grads: ParamGrads = m
            .params()
            .iter()
            .map(|p| {
                p.as_ref().map(|p| LayerGrads {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                })
            })
            .collect();
        assert!(m.sgd_step(&grads, 0.0).is_err());
        let before = m.clone();
        m.sgd_step(&grads, 0.5).unwrap();
        assert_eq!(m, before); // all-zero grads leave the model unchanged
    }
}
