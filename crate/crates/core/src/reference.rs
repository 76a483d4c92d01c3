//! Fixed-seed reference models standing in for pretrained backbones.
//!
//! Weights come from ChaCha8 seeded with `seed_from_u64(seed)`. Parameters
//! are drawn layer by layer, weight before bias, in row-major order. Each
//! draw takes one `u32`, keeps its top 24 bits as `u = bits / 2^24` in
//! `[0, 1)` and maps it to `(2u - 1) * bound`, where `bound` is
//! `sqrt(6 / fan_in)` for weights and `0.05` for biases.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Conv2d, LayerSpec, Linear, Pool};
use crate::model::Model;
use crate::tensor::Tensor;

pub const PRESETS: [&str; 2] = ["tiny8", "mid16"];

const BIAS_BOUND: f32 = 0.05;

struct WeightStream(ChaCha8Rng);

impl WeightStream {
    fn new(seed: u64) -> Self {
        WeightStream(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self, bound: f32) -> f32 {
        let u = (self.0.next_u32() >> 8) as f32 / (1u32 << 24) as f32;
        (2.0 * u - 1.0) * bound
    }

    fn tensor(&mut self, shape: &[usize], bound: f32) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.uniform(bound)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape and data agree")
    }

    fn conv(
        &mut self,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> LayerSpec {
        let bound = (6.0 / (in_channels * kernel * kernel) as f32).sqrt();
        let weight = self.tensor(&[out_channels, in_channels, kernel, kernel], bound);
        let bias = self.tensor(&[out_channels], BIAS_BOUND);
        LayerSpec::Conv2d(Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias: Some(bias),
        })
    }

    fn linear(&mut self, in_features: usize, out_features: usize) -> LayerSpec {
        let bound = (6.0 / in_features as f32).sqrt();
        let weight = self.tensor(&[out_features, in_features], bound);
        let bias = self.tensor(&[out_features], BIAS_BOUND);
        LayerSpec::Linear(Linear {
            in_features,
            out_features,
            weight,
            bias: Some(bias),
        })
    }
}

fn max_pool2() -> LayerSpec {
    LayerSpec::MaxPool2d(Pool {
        kernel: 2,
        stride: 2,
        padding: 0,
    })
}

/// Builds a preset with deterministic weights.
///
/// * `tiny8`: 3x32x32 input, 8 layers, 16x4x4 feature map after layer 5,
///   global-average-pool + linear head, 10 classes.
/// * `mid16`: 3x64x64 input, 16 layers, 64x8x8 feature map after layer 10,
///   two-layer MLP head ending in softmax, 10 classes.
pub fn make_reference_model(seed: u64, preset: &str) -> Result<Model> {
    let mut w = WeightStream::new(seed);
    let (layers, input) = match preset {
        "tiny8" => (
            vec![
                w.conv(3, 8, 3, 2, 1),
                LayerSpec::Relu,
                max_pool2(),
                w.conv(8, 16, 3, 1, 1),
                LayerSpec::Relu,
                max_pool2(),
                LayerSpec::GlobalAvgPool,
                w.linear(16, 10),
            ],
            vec![3, 32, 32],
        ),
        "mid16" => (
            vec![
                w.conv(3, 16, 3, 1, 1),
                LayerSpec::Relu,
                max_pool2(),
                w.conv(16, 32, 3, 1, 1),
                LayerSpec::Relu,
                max_pool2(),
                w.conv(32, 64, 3, 1, 1),
                LayerSpec::Relu,
                max_pool2(),
                w.conv(64, 64, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                w.linear(64, 64),
                LayerSpec::Relu,
                w.linear(64, 10),
                LayerSpec::Softmax,
            ],
            vec![3, 64, 64],
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Model::new(preset, layers, input, None)
}

/// The `mid16` trunk (to 64x8x8) followed by a 1x1 convolution to `channels`
/// maps, ReLU, global average pooling and a 10-way linear classifier.
///
/// Only the split feature width changes with `channels`, which makes the
/// family suitable for measuring how explanation cost scales with `K`.
pub fn make_channel_sweep_model(seed: u64, channels: usize) -> Result<Model> {
    let mut w = WeightStream::new(seed);
    let layers = vec![
        w.conv(3, 16, 3, 1, 1),
        LayerSpec::Relu,
        max_pool2(),
        w.conv(16, 32, 3, 1, 1),
        LayerSpec::Relu,
        max_pool2(),
        w.conv(32, 64, 3, 1, 1),
        LayerSpec::Relu,
        max_pool2(),
        w.conv(64, channels, 1, 1, 0),
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        w.linear(channels, 10),
    ];
    Model::new(format!("sweep{channels}"), layers, vec![3, 64, 64], None)
}

/// Deterministic pseudo-random input in `[-1, 1)` of the given shape.
pub fn seeded_input(seed: u64, shape: &[usize]) -> Tensor {
    WeightStream::new(seed ^ 0x5EED_1A9E_0000_0000).tensor(shape, 1.0)
}

/// Deterministic uniform `[0, 1)` map of shape `h x w`, for random-map
/// baselines.
pub fn seeded_uniform_map(seed: u64, h: usize, w: usize) -> Tensor {
    let mut stream = WeightStream::new(seed ^ 0x000D_DCA3_0000_0000);
    let data = (0..h * w)
        .map(|_| (stream.uniform(1.0) + 1.0) * 0.5)
        .collect();
    Tensor::new(vec![h, w], data).expect("h * w values")
}
