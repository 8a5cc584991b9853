use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvGeom};
use super::Tensor;
use crate::{Error, GridMap, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Odd, square.
    pub kernel_size: usize,
    /// Zero-pad so the output keeps the input size.
    pub same_padding: bool,
    pub lr_multiplier: f64,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize, lr_multiplier: f64) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_size,
            same_padding: true,
            lr_multiplier,
        }
    }

    pub(crate) fn geom(&self) -> ConvGeom {
        ConvGeom {
            in_c: self.in_channels,
            out_c: self.out_channels,
            k: self.kernel_size,
            pad: if self.same_padding { self.kernel_size / 2 } else { 0 },
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_size * self.kernel_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv(ConvSpec),
    ReLU,
    /// 2x2 window, stride 2.
    MaxPool,
}

/// Weights `[out][in][ky][kx]` and one bias per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Present exactly for convolutions.
    pub params: Option<ConvParams>,
}

/// Weight initialization for convolution layers; biases start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Zero-mean Gaussian with this standard deviation for every layer.
    Gaussian(f64),
    /// Gaussian with std `sqrt(2 / fan_in)` for layers whose lr multiplier is
    /// below 1 (the trunk), and the given std for the rest (the head).
    HeTrunk { head_sigma: f64 },
}

/// Default init std for new layers.
pub const INIT_SIGMA: f64 = 0.01;

/// Learning-rate multipliers for the trunk and head of [`FcnModel::toy`].
pub const TRUNK_LR_MULTIPLIER: f64 = 0.1;
pub const HEAD_LR_MULTIPLIER: f64 = 1.0;

/// Fully-convolutional network ending in a single-channel response map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnModel {
    layers: Vec<Layer>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of every layer, followed by the final output.
    activations: Vec<Tensor>,
    /// Per layer: ReLU masks or pool selections, replayable by
    /// [`FcnModel::forward_replay`].
    pattern: Vec<Switch>,
}

#[derive(Debug, Clone, PartialEq)]
enum Switch {
    None,
    Relu(Vec<bool>),
    Pool(Vec<usize>),
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace has at least the input")
    }

    /// Response map (channel 0 of the output).
    pub fn response(&self) -> Result<GridMap> {
        self.output().channel(0)
    }
}

/// Per-layer parameter gradients, aligned with [`FcnModel::layers`]. `None`
/// for parameter-free or frozen layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<ConvParams>>,
}

impl Gradients {
    pub fn zeros_like(model: &FcnModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| {
                    l.params.as_ref().map(|p| ConvParams {
                        weights: alloc::vec![0.0; p.weights.len()],
                        bias: alloc::vec![0.0; p.bias.len()],
                    })
                })
                .collect(),
        }
    }

    /// `self += scale * other` over the layers both carry.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                    *x += scale * y;
                }
                for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                    *x += scale * y;
                }
            }
        }
    }
}

impl FcnModel {
    /// Validates the layer chain and draws initial weights.
    pub fn new(specs: &[LayerSpec], init: Init, seed: u64) -> Result<Self> {
        let mut channels: Option<usize> = None;
        let mut last_conv_out = None;
        for spec in specs {
            if let LayerSpec::Conv(c) = spec {
                if c.kernel_size % 2 == 0 || c.in_channels == 0 || c.out_channels == 0 {
                    return Err(Error::InvalidParameter("convolutions need odd kernels and channels"));
                }
                if let Some(prev) = channels {
                    if prev != c.in_channels {
                        return Err(Error::InvalidParameter("channel counts do not chain"));
                    }
                }
                channels = Some(c.out_channels);
                last_conv_out = Some(c.out_channels);
            }
        }
        if last_conv_out != Some(1) {
            return Err(Error::InvalidParameter("final convolution must output one channel"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|spec| {
                let params = match spec {
                    LayerSpec::Conv(c) => {
                        let sigma = match init {
                            Init::Gaussian(s) => s,
                            Init::HeTrunk { head_sigma } => {
                                if c.lr_multiplier < 1.0 {
                                    libm::sqrt(2.0 / (c.in_channels * c.kernel_size * c.kernel_size) as f64)
                                } else {
                                    head_sigma
                                }
                            }
                        };
                        let normal = Normal::new(0.0, sigma)
                            .map_err(|_| Error::InvalidParameter("init sigma must be non-negative"))?;
                        Some(ConvParams {
                            weights: (0..c.weight_count()).map(|_| normal.sample(&mut rng)).collect(),
                            bias: alloc::vec![0.0; c.out_channels],
                        })
                    }
                    _ => None,
                };
                Ok(Layer { spec: *spec, params })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FcnModel { layers })
    }

    /// Rebuilds a model from stored layers (checkpoints).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        // Reuse the structural checks with throwaway weights.
        Self::new(&specs, Init::Gaussian(0.0), 0)?;
        for l in &layers {
            match (&l.spec, &l.params) {
                (LayerSpec::Conv(c), Some(p))
                    if p.weights.len() == c.weight_count() && p.bias.len() == c.out_channels => {}
                (LayerSpec::Conv(_), _) => {
                    return Err(Error::InvalidParameter("convolution parameters have wrong size"))
                }
                (_, None) => {}
                (_, Some(_)) => {
                    return Err(Error::InvalidParameter("only convolutions carry parameters"))
                }
            }
            if l.params.iter().flat_map(|p| p.weights.iter().chain(&p.bias)).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(FcnModel { layers })
    }

    /// Default small saliency network:
    /// trunk `conv3(C->16) relu pool conv3(16->16) relu pool conv3(16->16) relu`
    /// at lr multiplier 0.1, head `conv3(16->8) relu conv3(8->1)` at 1.0.
    /// Downsampling factor 4.
    pub fn toy_specs(in_channels: usize) -> Vec<LayerSpec> {
        let t = TRUNK_LR_MULTIPLIER;
        let h = HEAD_LR_MULTIPLIER;
        alloc::vec![
            LayerSpec::Conv(ConvSpec::new(in_channels, 16, 3, t)),
            LayerSpec::ReLU,
            LayerSpec::MaxPool,
            LayerSpec::Conv(ConvSpec::new(16, 16, 3, t)),
            LayerSpec::ReLU,
            LayerSpec::MaxPool,
            LayerSpec::Conv(ConvSpec::new(16, 16, 3, t)),
            LayerSpec::ReLU,
            LayerSpec::Conv(ConvSpec::new(16, 8, 3, h)),
            LayerSpec::ReLU,
            LayerSpec::Conv(ConvSpec::new(8, 1, 3, h)),
        ]
    }

    pub fn toy(in_channels: usize, init: Init, seed: u64) -> Result<Self> {
        Self::new(&Self::toy_specs(in_channels), init, seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l.spec {
                LayerSpec::Conv(c) => Some(c.in_channels),
                _ => None,
            })
            .expect("model has a convolution")
    }

    /// Product of pool strides.
    pub fn downsample_factor(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.spec, LayerSpec::MaxPool))
            .fold(1, |d, _| d * 2)
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| l.params.is_some()).count()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(|p| p.weights.len() + p.bias.len())
            .sum()
    }

    /// Response-map size for an input of `height x width`.
    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let (mut h, mut w) = (height, width);
        for l in &self.layers {
            match l.spec {
                LayerSpec::Conv(c) => (h, w) = c.geom().out_dims(h, w),
                LayerSpec::MaxPool => (h, w) = (h / 2, w / 2),
                LayerSpec::ReLU => {}
            }
        }
        (h, w)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.channels() != self.in_channels() {
            return Err(Error::InvalidParameter("image channels do not match the first layer"));
        }
        let d = self.downsample_factor();
        if !image.height().is_multiple_of(d) || !image.width().is_multiple_of(d) {
            return Err(Error::InvalidParameter("image size must be divisible by the downsample factor"));
        }
        Ok(())
    }

    pub fn forward_trace(&self, image: &Tensor) -> Result<Trace> {
        self.check_input(image)?;
        Ok(self.run(image, None))
    }

    /// Forward pass with the ReLU/pool switches of `trace` held fixed, i.e.
    /// the network restricted to the linear piece `trace` was computed on.
    pub fn forward_replay(&self, image: &Tensor, trace: &Trace) -> Result<Trace> {
        self.check_input(image)?;
        Ok(self.run(image, Some(&trace.pattern)))
    }

    fn run(&self, image: &Tensor, pattern: Option<&[Switch]>) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut switches = Vec::with_capacity(self.layers.len());
        activations.push(image.clone());
        for (li, layer) in self.layers.iter().enumerate() {
            let input = activations.last().expect("non-empty");
            let (out, sw) = match (&layer.spec, &layer.params) {
                (LayerSpec::Conv(c), Some(p)) => {
                    (layers::conv_forward(&c.geom(), input, &p.weights, &p.bias), Switch::None)
                }
                (LayerSpec::ReLU, _) => {
                    let mask = match pattern.map(|p| &p[li]) {
                        Some(Switch::Relu(m)) => Some(m.as_slice()),
                        _ => None,
                    };
                    let (o, m) = layers::relu_forward(input, mask);
                    (o, Switch::Relu(m))
                }
                (LayerSpec::MaxPool, _) => {
                    let choice = match pattern.map(|p| &p[li]) {
                        Some(Switch::Pool(c)) => Some(c.as_slice()),
                        _ => None,
                    };
                    let (o, c) = layers::pool_forward(input, choice);
                    (o, Switch::Pool(c))
                }
                (LayerSpec::Conv(_), None) => unreachable!("conv layers always carry parameters"),
            };
            activations.push(out);
            switches.push(sw);
        }
        Trace {
            activations,
            pattern: switches,
        }
    }

    /// Single-channel response map `x^p` at reduced resolution.
    pub fn forward(&self, image: &Tensor) -> Result<GridMap> {
        self.forward_trace(image)?.response()
    }

    /// Reverse-mode gradients of a scalar whose gradient with respect to the
    /// response map is `grad_response`. The first `frozen_prefix`
    /// convolutions get no gradient, and backpropagation stops below the
    /// lowest trainable one.
    pub fn backward(&self, trace: &Trace, grad_response: &GridMap, frozen_prefix: usize) -> Result<Gradients> {
        let out = trace.output();
        if out.channels() != 1 || (out.height(), out.width()) != grad_response.shape() {
            return Err(Error::ShapeMismatch {
                expected: (out.height(), out.width()),
                found: grad_response.shape(),
            });
        }
        // Index of the first layer whose parameters train.
        let mut conv_seen = 0;
        let mut lowest_trainable = None;
        for (i, l) in self.layers.iter().enumerate() {
            if l.params.is_some() {
                if conv_seen >= frozen_prefix {
                    lowest_trainable = Some(i);
                    break;
                }
                conv_seen += 1;
            }
        }
        let mut grads = Gradients {
            layers: alloc::vec![None; self.layers.len()],
        };
        let Some(lowest) = lowest_trainable else {
            return Ok(grads);
        };

        let mut grad = Tensor::new(1, out.height(), out.width(), grad_response.values().to_vec())?;
        for li in (lowest..self.layers.len()).rev() {
            let input = &trace.activations[li];
            let layer = &self.layers[li];
            grad = match (&layer.spec, &layer.params, &trace.pattern[li]) {
                (LayerSpec::Conv(c), Some(p), _) => {
                    let (gin, gw, gb) =
                        layers::conv_backward(&c.geom(), input, &p.weights, &grad, li > lowest);
                    grads.layers[li] = Some(ConvParams {
                        weights: gw,
                        bias: gb,
                    });
                    match gin {
                        Some(g) => g,
                        None => break,
                    }
                }
                (LayerSpec::ReLU, _, Switch::Relu(mask)) => layers::relu_backward(&grad, mask),
                (LayerSpec::MaxPool, _, Switch::Pool(picks)) => {
                    layers::pool_backward(&grad, picks, input.channels(), input.height(), input.width())
                }
                _ => unreachable!("trace does not match the model"),
            };
        }
        Ok(grads)
    }
}
