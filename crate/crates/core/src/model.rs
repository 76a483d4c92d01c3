//! Sequential CNN models and their split into feature extractor and head.

use crate::cost::CostTally;
use crate::error::{Error, Result};
use crate::layers::{
    chain_output_shape, forward_chain_at, forward_chain_batch, logit_layers, softmax, LayerSpec,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// `C x H x W`
    pub input_shape: Vec<usize>,
    pub class_names: Option<Vec<String>>,
}

/// Per-layer input and output shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShapes {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

impl Model {
    /// Builds a model, checking that every layer accepts its predecessor's
    /// output for an input of `input_shape`.
    pub fn new(
        name: impl Into<String>,
        layers: Vec<LayerSpec>,
        input_shape: Vec<usize>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let model = Model {
            name: name.into(),
            layers,
            input_shape,
            class_names,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.input_shape.len() != 3 || self.input_shape.contains(&0) {
            return Err(Error::Manifest(format!(
                "input shape must be a non-empty C x H x W, got {:?}",
                self.input_shape
            )));
        }
        let out = chain_output_shape(logit_layers(&self.layers), 0, &self.input_shape)?;
        if out.len() != 1 {
            return Err(Error::Manifest(format!(
                "model must produce a logit vector, final shape is {out:?}"
            )));
        }
        if let Some(names) = &self.class_names {
            if names.len() != out[0] {
                return Err(Error::Manifest(format!(
                    "{} class names for {} outputs",
                    names.len(),
                    out[0]
                )));
            }
        }
        // full chain including trailing softmax
        chain_output_shape(&self.layers, 0, &self.input_shape)?;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        chain_output_shape(logit_layers(&self.layers), 0, &self.input_shape)
            .map(|s| s[0])
            .unwrap_or(0)
    }

    pub fn layer_shapes(&self) -> Vec<LayerShapes> {
        let mut shape = self.input_shape.clone();
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let output = layer.output_shape(i, &shape).unwrap_or_default();
                let input = std::mem::replace(&mut shape, output.clone());
                LayerShapes { input, output }
            })
            .collect()
    }

    /// Split indices whose boundary tensor is `K x H x W`.
    pub fn valid_split_points(&self) -> Vec<usize> {
        self.layer_shapes()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.output.len() == 3)
            .map(|(i, _)| i + 1)
            .filter(|&s| s < self.layers.len())
            .collect()
    }

    /// The last valid split point, i.e. the deepest spatial feature map.
    pub fn default_split(&self) -> Option<usize> {
        self.valid_split_points().last().copied()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Output of the full layer sequence.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        forward_chain_at(&self.layers, 0, input)
    }

    /// Pre-softmax class scores.
    pub fn logits(&self, input: &Tensor) -> Result<Vec<f32>> {
        Ok(forward_chain_at(logit_layers(&self.layers), 0, input)?.into_data())
    }

    pub fn probabilities(&self, input: &Tensor) -> Result<Vec<f32>> {
        Ok(softmax(&self.logits(input)?))
    }

    pub fn check_class(&self, class_index: usize) -> Result<()> {
        check_class(class_index, self.num_classes())
    }
}

pub(crate) fn check_class(index: usize, classes: usize) -> Result<()> {
    if index < classes {
        Ok(())
    } else {
        Err(Error::ClassOutOfRange { index, classes })
    }
}

/// A model divided into a feature network `[0, split)` and a head
/// `[split, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel {
    pub feature_net: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
    pub split_index: usize,
    pub input_shape: Vec<usize>,
    /// `K x H x W`
    pub feature_shape: Vec<usize>,
    pub num_classes: usize,
}

pub fn split_model(model: &Model, split_index: usize) -> Result<SplitModel> {
    let valid = model.valid_split_points();
    if split_index == 0 || split_index >= model.layers.len() || !valid.contains(&split_index) {
        let reason = if split_index == 0 {
            "the feature network must not be empty".to_string()
        } else if split_index >= model.layers.len() {
            format!("the head must not be empty ({} layers)", model.layers.len())
        } else {
            "the boundary tensor is not K x H x W".to_string()
        };
        return Err(Error::InvalidSplit {
            index: split_index,
            reason: format!("{reason}; valid split points: {valid:?}"),
        });
    }
    let feature_shape = chain_output_shape(&model.layers[..split_index], 0, &model.input_shape)?;
    Ok(SplitModel {
        feature_net: model.layers[..split_index].to_vec(),
        head: model.layers[split_index..].to_vec(),
        split_index,
        input_shape: model.input_shape.clone(),
        feature_shape,
        num_classes: model.num_classes(),
    })
}

impl SplitModel {
    /// `(K, H, W)` of the split feature map.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        (
            self.feature_shape[0],
            self.feature_shape[1],
            self.feature_shape[2],
        )
    }

    pub fn check_class(&self, class_index: usize) -> Result<()> {
        check_class(class_index, self.num_classes)
    }

    /// `f(input)`. Counted as one full forward: it starts from the image.
    pub fn features(&self, input: &Tensor, tally: &mut CostTally) -> Result<Tensor> {
        tally.full_forwards += 1;
        forward_chain_at(&self.feature_net, 0, input)
    }

    /// Pre-softmax logits of `g(feature)`.
    pub fn head_logits(&self, feature: &Tensor, tally: &mut CostTally) -> Result<Vec<f32>> {
        tally.head_forwards += 1;
        Ok(forward_chain_at(logit_layers(&self.head), self.split_index, feature)?.into_data())
    }

    /// Pre-softmax logits for a stack of feature maps, `N x classes`.
    pub fn head_logits_batch(&self, features: &Tensor, tally: &mut CostTally) -> Result<Tensor> {
        tally.head_forwards += features.shape().first().copied().unwrap_or(0);
        forward_chain_batch(logit_layers(&self.head), self.split_index, features)
    }

    /// `g(f(input))` as one full forward, returning the feature map as well.
    pub fn full_logits(&self, input: &Tensor, tally: &mut CostTally) -> Result<(Tensor, Vec<f32>)> {
        tally.full_forwards += 1;
        let feature = forward_chain_at(&self.feature_net, 0, input)?;
        let logits = forward_chain_at(logit_layers(&self.head), self.split_index, &feature)?;
        Ok((feature, logits.into_data()))
    }
}
