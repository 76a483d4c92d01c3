//! Saliency map generators.
//!
//! Reciprocal CAM masks the split feature map one spatial position at a
//! time, runs the head on every masked copy and uses the softmax score of
//! the target class at each position as the saliency value. The remaining
//! generators (CAM, Grad-CAM, Score-CAM, Ablation-CAM, Fake-CAM) are the
//! baselines it is compared against.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::backward_head;
use crate::cost::CostTally;
use crate::error::{Error, Result};
use crate::layers::{forward_chain_at, logit_layers, softmax, LayerSpec};
use crate::model::{Model, SplitModel};
use crate::preprocess::resize_bilinear;
use crate::tensor::{hadamard_into, Tensor};

/// Profile of a spatial mask around its active position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskKernel {
    /// Only the position itself is kept.
    #[default]
    Dirac,
    /// 3x3 neighbourhood weighted `[[.25, .5, .25], [.5, 1, .5], [.25, .5, .25]]`.
    Gaussian3x3,
}

pub const GAUSSIAN_3X3: [[f32; 3]; 3] = [[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]];

impl MaskKernel {
    pub fn name(self) -> &'static str {
        match self {
            MaskKernel::Dirac => "dirac",
            MaskKernel::Gaussian3x3 => "gauss3",
        }
    }
}

impl FromStr for MaskKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirac" => Ok(MaskKernel::Dirac),
            "gauss3" | "gaussian3x3" => Ok(MaskKernel::Gaussian3x3),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel `{other}` (expected dirac or gauss3)"
            ))),
        }
    }
}

impl fmt::Display for MaskKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Recipro,
    Cam,
    GradCam,
    ScoreCam,
    AblationCam,
    FakeCam,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Recipro,
        Method::Cam,
        Method::GradCam,
        Method::ScoreCam,
        Method::AblationCam,
        Method::FakeCam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Recipro => "recipro",
            Method::Cam => "cam",
            Method::GradCam => "grad",
            Method::ScoreCam => "score",
            Method::AblationCam => "ablation",
            Method::FakeCam => "fake",
        }
    }

    /// Human-readable label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Recipro => "Recipro-CAM",
            Method::Cam => "CAM",
            Method::GradCam => "Grad-CAM",
            Method::ScoreCam => "Score-CAM",
            Method::AblationCam => "Ablation-CAM",
            Method::FakeCam => "Fake-CAM",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMask {
    /// `(row, column)` of the active position.
    pub position: (usize, usize),
    /// `H x W`
    pub values: Tensor,
    pub kernel: MaskKernel,
}

/// One mask per feature-map position, in row-major order.
pub fn generate_spatial_masks(h: usize, w: usize, kernel: MaskKernel) -> Vec<SpatialMask> {
    let mut masks = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let mut values = vec![0f32; h * w];
            match kernel {
                MaskKernel::Dirac => values[u * w + v] = 1.0,
                MaskKernel::Gaussian3x3 => {
                    for (dy, row) in GAUSSIAN_3X3.iter().enumerate() {
                        for (dx, &g) in row.iter().enumerate() {
                            let (y, x) = ((u + dy).checked_sub(1), (v + dx).checked_sub(1));
                            if let (Some(y), Some(x)) = (y, x) {
                                if y < h && x < w {
                                    values[y * w + x] = g;
                                }
                            }
                        }
                    }
                }
            }
            masks.push(SpatialMask {
                position: (u, v),
                values: Tensor::new(vec![h, w], values).expect("h * w values"),
                kernel,
            });
        }
    }
    masks
}

/// An `H x W` map in `[0, 1]` with the provenance of its generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: Tensor,
    pub method: Method,
    pub class_index: usize,
    pub split_index: Option<usize>,
    /// Set when the raw map was constant; `values` is then all zeros.
    pub degenerate: bool,
}

impl SaliencyMap {
    pub fn from_raw(
        raw: &Tensor,
        method: Method,
        class_index: usize,
        split_index: Option<usize>,
    ) -> Self {
        let (values, degenerate) = normalize_map(raw);
        SaliencyMap {
            values,
            method,
            class_index,
            split_index,
            degenerate,
        }
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Min-max normalization to `[0, 1]`.
///
/// Returns the normalized values and whether the input was degenerate
/// (constant, empty or non-finite), in which case the values are all zero.
pub fn normalize_map(raw: &Tensor) -> (Tensor, bool) {
    let zeros = || (Tensor::zeros(raw.shape()), true);
    if raw.is_empty() || !raw.is_finite() {
        return zeros();
    }
    let (min, max) = (raw.min() as f64, raw.max() as f64);
    if max == min {
        return zeros();
    }
    let range = max - min;
    (raw.map(|x| ((x as f64 - min) / range) as f32), false)
}

/// Bilinear upsampling with half-pixel centers to `(height, width)`.
pub fn upsample_map(map: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (h, w) = map.hw()?;
    if target.0 < h || target.1 < w {
        return Err(Error::Shape(format!(
            "cannot upsample {h}x{w} to smaller {}x{}",
            target.0, target.1
        )));
    }
    if (h, w) == target {
        return Ok(map.clone());
    }
    Tensor::new(
        vec![target.0, target.1],
        resize_bilinear(map.data(), h, w, target.0, target.1),
    )
}

/// Per-position class scores of the masked head passes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores(pub Vec<f32>);

/// Softmax score of `class_index` for every masked copy of the feature map.
///
/// All `H * W` masked maps are stacked into one batch and pushed through the
/// head in a single call.
pub fn recipro_scores(
    split: &SplitModel,
    input: &Tensor,
    class_index: usize,
    kernel: MaskKernel,
    tally: &mut CostTally,
) -> Result<ClassScores> {
    split.check_class(class_index)?;
    let feature = split.features(input, tally)?;
    let (k, h, w) = feature.chw()?;
    let masks = generate_spatial_masks(h, w, kernel);
    let mut batch = Vec::with_capacity(masks.len() * feature.len());
    for m in &masks {
        hadamard_into(&feature, &m.values, &mut batch)?;
    }
    let batch = Tensor::new(vec![masks.len(), k, h, w], batch)?;
    let logits = split.head_logits_batch(&batch, tally)?;
    let classes = logits.shape()[1];
    Ok(ClassScores(
        logits
            .data()
            .chunks_exact(classes)
            .map(|row| softmax(row)[class_index])
            .collect(),
    ))
}

pub fn recipro_cam(
    split: &SplitModel,
    input: &Tensor,
    class_index: usize,
    kernel: MaskKernel,
    tally: &mut CostTally,
) -> Result<SaliencyMap> {
    let scores = recipro_scores(split, input, class_index, kernel, tally)?;
    let (_, h, w) = split.feature_dims();
    let raw = Tensor::new(vec![h, w], scores.0)?;
    Ok(SaliencyMap::from_raw(
        &raw,
        Method::Recipro,
        class_index,
        Some(split.split_index),
    ))
}

/// Index of the global pooling layer when the model ends in
/// `global_avg_pool -> linear (-> softmax)`.
pub fn cam_pooling_index(model: &Model) -> Result<usize> {
    let layers = logit_layers(&model.layers);
    let n = layers.len();
    match layers {
        [.., LayerSpec::GlobalAvgPool, LayerSpec::Linear(_)] if n >= 2 => {
            let gap = n - 2;
            let (before, _) = model.layers.split_at(gap);
            let shape = crate::layers::chain_output_shape(before, 0, &model.input_shape)?;
            if shape.len() == 3 {
                Ok(gap)
            } else {
                Err(Error::CamUnsupported(format!(
                    "input to the pooling layer has shape {shape:?}"
                )))
            }
        }
        _ => Err(Error::CamUnsupported(format!(
            "model `{}` does not end in global_avg_pool -> linear",
            model.name
        ))),
    }
}

/// Class activation map: the class's classifier weights applied to the
/// feature maps at every position, `S(u, v) = sum_k w[c, k] f_k(u, v)`.
pub fn cam(
    model: &Model,
    input: &Tensor,
    class_index: usize,
    tally: &mut CostTally,
) -> Result<SaliencyMap> {
    let gap = cam_pooling_index(model)?;
    model.check_class(class_index)?;
    let LayerSpec::Linear(fc) = &model.layers[gap + 1] else {
        unreachable!("checked by cam_pooling_index")
    };
    tally.full_forwards += 1;
    let feature = forward_chain_at(&model.layers[..gap], 0, input)?;
    let (k, h, w) = feature.chw()?;
    let weights = &fc.weight.data()[class_index * k..(class_index + 1) * k];
    let raw = weighted_channel_sum(&feature, weights.iter().map(|&v| v as f64), false);
    Ok(SaliencyMap::from_raw(
        &Tensor::new(vec![h, w], raw)?,
        Method::Cam,
        class_index,
        Some(gap),
    ))
}

/// `sum_k weight_k * feature_k`, optionally clamped at zero, as an `H * W`
/// vector.
fn weighted_channel_sum(
    feature: &Tensor,
    weights: impl Iterator<Item = f64>,
    relu: bool,
) -> Vec<f32> {
    let (_, h, w) = feature.chw().expect("feature map is K x H x W");
    let mut acc = vec![0f64; h * w];
    for (channel, wk) in feature.data().chunks_exact(h * w).zip(weights) {
        for (a, &v) in acc.iter_mut().zip(channel) {
            *a += wk * v as f64;
        }
    }
    acc.into_iter()
        .map(|v| if relu { v.max(0.0) } else { v } as f32)
        .collect()
}

/// Gradient-weighted class activation map on the pre-softmax logit.
pub fn grad_cam(
    split: &SplitModel,
    input: &Tensor,
    class_index: usize,
    tally: &mut CostTally,
) -> Result<SaliencyMap> {
    split.check_class(class_index)?;
    let feature = split.features(input, tally)?;
    let (_, h, w) = feature.chw()?;
    tally.backward_passes += 1;
    let grad = backward_head(&split.head, &feature, class_index)?;
    let z = (h * w) as f64;
    let alphas: Vec<f64> = grad
        .values
        .data()
        .chunks_exact(h * w)
        .map(|g| g.iter().map(|&v| v as f64).sum::<f64>() / z)
        .collect();
    let raw = weighted_channel_sum(&feature, alphas.into_iter(), true);
    Ok(SaliencyMap::from_raw(
        &Tensor::new(vec![h, w], raw)?,
        Method::GradCam,
        class_index,
        Some(split.split_index),
    ))
}

/// Score-CAM: every feature channel, upsampled and normalized, masks the
/// input for one full forward; the softmax of the class logits over
/// channels weighs the channels.
///
/// Constant channels cannot form a mask. They still cost one forward (on
/// the all-zero mask) but get weight zero.
pub fn score_cam(
    split: &SplitModel,
    input: &Tensor,
    class_index: usize,
    tally: &mut CostTally,
) -> Result<SaliencyMap> {
    split.check_class(class_index)?;
    let (c_in, in_h, in_w) = input.chw()?;
    let (feature, _) = split.full_logits(input, tally)?;
    let (k, h, w) = feature.chw()?;

    let mut logits = Vec::with_capacity(k);
    let mut usable = Vec::with_capacity(k);
    for channel in feature.data().chunks_exact(h * w) {
        let up = upsample_map(&Tensor::new(vec![h, w], channel.to_vec())?, (in_h, in_w))?;
        let (mask, degenerate) = normalize_map(&up);
        let mut masked = input.clone();
        for plane in masked.data_mut().chunks_exact_mut(in_h * in_w).take(c_in) {
            for (x, m) in plane.iter_mut().zip(mask.data()) {
                *x *= m;
            }
        }
        let (_, out) = split.full_logits(&masked, tally)?;
        logits.push(out[class_index]);
        usable.push(!degenerate);
    }

    let kept: Vec<f32> = logits
        .iter()
        .zip(&usable)
        .filter(|(_, &u)| u)
        .map(|(&l, _)| l)
        .collect();
    let mut weights = vec![0f64; k];
    if !kept.is_empty() {
        let mut soft = softmax(&kept).into_iter();
        for (wk, _) in weights.iter_mut().zip(&usable).filter(|(_, &u)| u) {
            *wk = soft.next().expect("one weight per usable channel") as f64;
        }
    }
    let raw = weighted_channel_sum(&feature, weights.into_iter(), true);
    Ok(SaliencyMap::from_raw(
        &Tensor::new(vec![h, w], raw)?,
        Method::ScoreCam,
        class_index,
        Some(split.split_index),
    ))
}

/// Logits with magnitude below this make the relative drop undefined.
pub const ABLATION_EPSILON: f32 = 1e-8;

/// Ablation-CAM: channel weight is the relative drop of the class logit when
/// that channel is zeroed, `(y - y_k) / y`.
pub fn ablation_cam(
    split: &SplitModel,
    input: &Tensor,
    class_index: usize,
    tally: &mut CostTally,
) -> Result<SaliencyMap> {
    split.check_class(class_index)?;
    let feature = split.features(input, tally)?;
    let (k, h, w) = feature.chw()?;
    let base = split.head_logits(&feature, tally)?[class_index];

    let ablated: Vec<Tensor> = (0..k)
        .map(|ch| {
            let mut t = feature.clone();
            t.data_mut()[ch * h * w..(ch + 1) * h * w].fill(0.0);
            t
        })
        .collect();
    let logits = split.head_logits_batch(&Tensor::stack(&ablated)?, tally)?;
    let classes = logits.shape()[1];
    let slopes: Vec<f64> = logits
        .data()
        .chunks_exact(classes)
        .map(|row| ablation_slope(base, row[class_index]))
        .collect();
    let raw = weighted_channel_sum(&feature, slopes.into_iter(), true);
    Ok(SaliencyMap::from_raw(
        &Tensor::new(vec![h, w], raw)?,
        Method::AblationCam,
        class_index,
        Some(split.split_index),
    ))
}

pub fn ablation_slope(base: f32, ablated: f32) -> f64 {
    if base.abs() < ABLATION_EPSILON {
        0.0
    } else {
        (base as f64 - ablated as f64) / base as f64
    }
}

/// All ones except a zero at `(0, 0)`; ignores the model entirely.
pub fn fake_cam(h: usize, w: usize) -> Result<SaliencyMap> {
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "fake map needs a non-empty shape, got {h}x{w}"
        )));
    }
    let mut values = Tensor::full(&[h, w], 1.0);
    values.data_mut()[0] = 0.0;
    Ok(SaliencyMap {
        degenerate: h * w == 1,
        values: if h * w == 1 {
            Tensor::zeros(&[1, 1])
        } else {
            values
        },
        method: Method::FakeCam,
        class_index: 0,
        split_index: None,
    })
}

/// Runs `method` on one input. Fake-CAM maps are produced at input
/// resolution; every other method returns a map at feature resolution.
pub fn generate(
    method: Method,
    kernel: MaskKernel,
    model: &Model,
    split: &SplitModel,
    input: &Tensor,
    class_index: usize,
    tally: &mut CostTally,
) -> Result<SaliencyMap> {
    match method {
        Method::Recipro => recipro_cam(split, input, class_index, kernel, tally),
        Method::Cam => cam(model, input, class_index, tally),
        Method::GradCam => grad_cam(split, input, class_index, tally),
        Method::ScoreCam => score_cam(split, input, class_index, tally),
        Method::AblationCam => ablation_cam(split, input, class_index, tally),
        Method::FakeCam => {
            let (_, h, w) = input.chw()?;
            let mut map = fake_cam(h, w)?;
            map.class_index = class_index;
            Ok(map)
        }
    }
}
