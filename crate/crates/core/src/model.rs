//! The two evaluated architectures and their client/server partitioning.
//!
//! Cut indices count learnable layers only (dense and convolution); a
//! max-pool layer travels with the learnable layer it follows.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, Conv1d, Dense, ForwardCache, Layer, LayerGrads, MaxPool1d};
use crate::tensor::Tensor;

pub const ECG_INPUT_LEN: usize = 124;
pub const ECG_CLASSES: usize = 5;
pub const MNIST_INPUT_LEN: usize = 784;
pub const MNIST_CLASSES: usize = 10;

/// Hidden widths of the ten-layer MNIST feed-forward network.
pub const MNIST_HIDDEN: [usize; 9] = [512, 256, 128, 128, 64, 64, 32, 32, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        in_features: usize,
        out_features: usize,
        activation: Activation,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        activation: Activation,
    },
    MaxPool1d {
        window: usize,
    },
}

impl LayerSpec {
    pub fn is_learnable(&self) -> bool {
        !matches!(self, LayerSpec::MaxPool1d { .. })
    }

    fn instantiate(&self, rng: &mut ChaCha8Rng) -> Layer {
        match *self {
            LayerSpec::Dense {
                in_features,
                out_features,
                activation,
            } => Layer::Dense(Dense::new(in_features, out_features, activation, rng)),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_width,
                activation,
            } => Layer::Conv1d(Conv1d::new(
                in_channels,
                out_channels,
                kernel_width,
                activation,
                rng,
            )),
            LayerSpec::MaxPool1d { window } => Layer::MaxPool1d(MaxPool1d { window }),
        }
    }
}

/// Architecture description: layer plan, per-sample input shape and class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Per-sample input shape, e.g. `[784]` or `[1, 124]`.
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn input_size(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn learnable_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_learnable()).count()
    }

    /// Checks that consecutive layers compose and the head emits `num_classes` logits.
    pub fn validate(&self) -> Result<()> {
        // Shape propagation needs concrete layers; a zero-seed instance is cheap enough.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut shape = self.input_shape.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            shape = spec.instantiate(&mut rng).output_shape(&shape).map_err(|e| {
                Error::Config(format!("{}: layer {i} does not compose: {e}", self.name))
            })?;
        }
        if shape != [self.num_classes] {
            return Err(Error::Config(format!(
                "{}: head emits {shape:?}, expected [{}]",
                self.name, self.num_classes
            )));
        }
        Ok(())
    }

    /// Draws initial parameters, layer by layer in order, from a seeded PRNG.
    pub fn init(&self, seed: u64) -> Result<Model> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = self.layers.iter().map(|l| l.instantiate(&mut rng)).collect();
        Ok(Model {
            spec: self.clone(),
            layers,
        })
    }

    /// Position in `layers` where the server segment begins for a cut after
    /// `cut_index` learnable layers.
    pub fn cut_position(&self, cut_index: usize) -> Result<usize> {
        let learnable = self.learnable_count();
        if cut_index == 0 || cut_index >= learnable {
            return Err(Error::InvalidSplit(format!(
                "cut index {cut_index} outside 1..{learnable} for {}",
                self.name
            )));
        }
        let mut seen = 0;
        let mut pos = 0;
        while pos < self.layers.len() {
            if self.layers[pos].is_learnable() {
                if seen == cut_index {
                    break;
                }
                seen += 1;
            }
            pos += 1;
        }
        Ok(pos)
    }
}

/// Channel plan of the 1-D CNN: four convolutions, pools after the second and
/// fourth, then two dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcgPlan {
    pub input_len: usize,
    pub channels: [usize; 4],
    pub kernel_width: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Default for EcgPlan {
    fn default() -> Self {
        Self {
            input_len: ECG_INPUT_LEN,
            channels: [16, 16, 32, 32],
            kernel_width: 5,
            hidden: 64,
            num_classes: ECG_CLASSES,
        }
    }
}

pub fn build_ecg_model() -> ModelSpec {
    build_ecg_model_with(&EcgPlan::default())
}

pub fn build_ecg_model_with(plan: &EcgPlan) -> ModelSpec {
    let k = plan.kernel_width;
    let conv = |i, o| LayerSpec::Conv1d {
        in_channels: i,
        out_channels: o,
        kernel_width: k,
        activation: Activation::Relu,
    };
    let [c1, c2, c3, c4] = plan.channels;
    let mut len = plan.input_len;
    len = (len - k + 1 - k + 1) / 2;
    len = (len - k + 1 - k + 1) / 2;
    ModelSpec {
        name: "ecg-cnn".into(),
        input_shape: vec![1, plan.input_len],
        num_classes: plan.num_classes,
        layers: vec![
            conv(1, c1),
            conv(c1, c2),
            LayerSpec::MaxPool1d { window: 2 },
            conv(c2, c3),
            conv(c3, c4),
            LayerSpec::MaxPool1d { window: 2 },
            LayerSpec::Dense {
                in_features: c4 * len,
                out_features: plan.hidden,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                in_features: plan.hidden,
                out_features: plan.num_classes,
                activation: Activation::None,
            },
        ],
    }
}

pub fn build_mnist_model() -> ModelSpec {
    build_mnist_model_with(MNIST_INPUT_LEN, &MNIST_HIDDEN, MNIST_CLASSES)
}

/// Feed-forward network with ReLU between hidden layers and raw logits out.
pub fn build_mnist_model_with(input: usize, hidden: &[usize], num_classes: usize) -> ModelSpec {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.push(num_classes);
    let last = widths.len() - 2;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::Dense {
            in_features: w[0],
            out_features: w[1],
            activation: if i == last {
                Activation::None
            } else {
                Activation::Relu
            },
        })
        .collect();
    ModelSpec {
        name: "mnist-ffn".into(),
        input_shape: vec![input],
        num_classes,
        layers,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    Mnist,
    Ecg,
}

/// Named split configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVersion {
    #[serde(rename = "MNISTv1")]
    MnistV1,
    #[serde(rename = "MNISTv2")]
    MnistV2,
    #[serde(rename = "ECGv1")]
    EcgV1,
    #[serde(rename = "ECGv2")]
    EcgV2,
}

impl ModelVersion {
    pub const ALL: [ModelVersion; 4] = [
        ModelVersion::MnistV1,
        ModelVersion::MnistV2,
        ModelVersion::EcgV1,
        ModelVersion::EcgV2,
    ];

    pub fn architecture(self) -> Architecture {
        match self {
            ModelVersion::MnistV1 | ModelVersion::MnistV2 => Architecture::Mnist,
            ModelVersion::EcgV1 | ModelVersion::EcgV2 => Architecture::Ecg,
        }
    }

    pub fn split_point(self) -> SplitPoint {
        let cut_index = match self {
            ModelVersion::MnistV1 => 2,
            ModelVersion::MnistV2 => 4,
            ModelVersion::EcgV1 => 2,
            ModelVersion::EcgV2 => 3,
        };
        SplitPoint { cut_index }
    }

    pub fn default_spec(self) -> ModelSpec {
        match self.architecture() {
            Architecture::Mnist => build_mnist_model(),
            Architecture::Ecg => build_ecg_model(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVersion::MnistV1 => "MNISTv1",
            ModelVersion::MnistV2 => "MNISTv2",
            ModelVersion::EcgV1 => "ECGv1",
            ModelVersion::EcgV2 => "ECGv2",
        }
    }
}

impl fmt::Display for ModelVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVersion::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model version {s:?}")))
    }
}

/// The first `cut_index` learnable layers belong to the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub cut_index: usize,
}

/// A full model with parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Reshapes `[B, input_size]` rows to `[B, input_shape...]` where needed.
    pub fn shape_batch(&self, batch: Tensor) -> Result<Tensor> {
        shape_batch(&self.spec, batch)
    }
}

pub fn shape_batch(spec: &ModelSpec, batch: Tensor) -> Result<Tensor> {
    if batch.sample_shape() == spec.input_shape.as_slice() {
        return Ok(batch);
    }
    let mut shape = vec![batch.batch_size()];
    shape.extend_from_slice(&spec.input_shape);
    batch.reshape(shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Client,
    Server,
}

/// One party's share of a model. Every parameter change bumps `generation`,
/// which invalidates forward caches taken earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSegment {
    pub side: Side,
    layers: Vec<Layer>,
    generation: u64,
}

/// Forward cache tagged with the segment generation it was taken at.
#[derive(Debug, Clone)]
pub struct SegmentCache {
    cache: ForwardCache,
    generation: u64,
}

impl SegmentCache {
    pub fn inner(&self) -> &ForwardCache {
        &self.cache
    }
}

impl ModelSegment {
    pub fn new(side: Side, layers: Vec<Layer>) -> Self {
        Self {
            side,
            layers,
            generation: 0,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn learnable_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_learnable()).count()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, SegmentCache)> {
        let (out, cache) = nn::forward(&self.layers, batch)?;
        Ok((
            out,
            SegmentCache {
                cache,
                generation: self.generation,
            },
        ))
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        nn::predict(&self.layers, batch)
    }

    pub fn backward(
        &self,
        cache: &SegmentCache,
        upstream: &Tensor,
    ) -> Result<(Vec<Option<LayerGrads>>, Tensor)> {
        if cache.generation != self.generation {
            return Err(Error::CacheMismatch(format!(
                "stale cache from generation {} (segment at {})",
                cache.generation, self.generation
            )));
        }
        nn::backward(&self.layers, &cache.cache, upstream)
    }

    pub fn sgd_step(&mut self, grads: &[Option<LayerGrads>], lr: f64) -> Result<()> {
        nn::sgd_step(&mut self.layers, grads, lr)?;
        self.generation += 1;
        Ok(())
    }

    /// Replaces all parameters, e.g. with an aggregate. Layer structure must match.
    pub fn replace_layers(&mut self, layers: Vec<Layer>) -> Result<()> {
        let same = layers.len() == self.layers.len()
            && layers.iter().zip(&self.layers).all(|(a, b)| {
                a.kind() == b.kind()
                    && a.params().map(|(w, b)| (w.shape().to_vec(), b.shape().to_vec()))
                        == b.params().map(|(w, b)| (w.shape().to_vec(), b.shape().to_vec()))
            });
        if !same {
            return Err(Error::Aggregation("replacement layers do not match segment".into()));
        }
        self.layers = layers;
        self.generation += 1;
        Ok(())
    }
}

/// Partitions `model` into client and server segments.
pub fn split_at(model: &Model, point: SplitPoint) -> Result<(ModelSegment, ModelSegment)> {
    let pos = model.spec.cut_position(point.cut_index)?;
    let client = model.layers[..pos].to_vec();
    let server = model.layers[pos..].to_vec();
    Ok((
        ModelSegment::new(Side::Client, client),
        ModelSegment::new(Side::Server, server),
    ))
}

/// Reassembles a full model from its two segments.
pub fn compose(spec: &ModelSpec, client: &ModelSegment, server: &ModelSegment) -> Model {
    let layers = client.layers.iter().chain(&server.layers).cloned().collect();
    Model {
        spec: spec.clone(),
        layers,
    }
}
