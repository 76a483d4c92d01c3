//! Reverse-mode gradients of a class logit through the head of a split model.
//!
//! Only the head is differentiated and only with respect to its input (the
//! feature map at the split). Trailing softmax layers are dropped so the
//! differentiated quantity is the pre-softmax logit.

use crate::error::{Error, Result};
use crate::layers::{
    for_each_tap, logit_layers, run_chain, valid_outputs, window_count, LayerSpec, Pool,
};
use crate::tensor::Tensor;

/// Derivative of a class logit with respect to the split feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub class_index: usize,
    /// Same shape as the feature map.
    pub values: Tensor,
}

/// `d logit[class_index] / d feature` by backpropagation through `head`.
///
/// Max-pooling routes the gradient to the first maximal element of each
/// window in row-major scan order.
pub fn backward_head(head: &[LayerSpec], feature: &Tensor, class_index: usize) -> Result<Gradient> {
    let layers = logit_layers(head);
    for (i, layer) in layers.iter().enumerate() {
        layer.validate(i)?;
    }

    // forward, keeping every layer input
    let mut shapes = Vec::with_capacity(layers.len() + 1);
    let mut inputs: Vec<Vec<f32>> = Vec::with_capacity(layers.len());
    let mut shape = feature.shape().to_vec();
    let mut data = feature.data().to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let (s, d) = layer.apply(i, &shape, &data, 1)?;
        shapes.push(std::mem::replace(&mut shape, s));
        inputs.push(std::mem::replace(&mut data, d));
    }
    let classes = logit_count(&shape)?;
    if class_index >= classes {
        return Err(Error::ClassOutOfRange {
            index: class_index,
            classes,
        });
    }

    let mut grad = vec![0f64; classes];
    grad[class_index] = 1.0;
    let mut out = data;
    for ((layer, in_shape), input) in layers.iter().zip(&shapes).zip(&inputs).rev() {
        grad = layer_backward(layer, in_shape, input, &out, &grad);
        out = input.clone();
    }

    Ok(Gradient {
        class_index,
        values: Tensor::new(
            feature.shape().to_vec(),
            grad.into_iter().map(|g| g as f32).collect(),
        )?,
    })
}

/// Central-difference estimate of the same derivative as [`backward_head`].
///
/// The head is evaluated in `f64` with the model's `f32` weights, so the
/// estimate is not limited by single-precision rounding of the logit.
pub fn finite_diff_grad(
    head: &[LayerSpec],
    feature: &Tensor,
    class_index: usize,
    epsilon: f64,
) -> Result<Gradient> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let layers = logit_layers(head);
    for (i, layer) in layers.iter().enumerate() {
        layer.validate(i)?;
    }
    let base: Vec<f64> = feature.data().iter().map(|&v| v as f64).collect();
    let logit = |x: Vec<f64>| -> Result<f64> {
        let (shape, out) = run_chain(layers, 0, feature.shape().to_vec(), x, 1)?;
        let classes = logit_count(&shape)?;
        out.get(class_index).copied().ok_or(Error::ClassOutOfRange {
            index: class_index,
            classes,
        })
    };
    // surfaces shape and class errors before the sweep
    logit(base.clone())?;

    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += epsilon;
        let mut minus = base.clone();
        minus[i] -= epsilon;
        let step = plus[i] - minus[i];
        grad.push(((logit(plus)? - logit(minus)?) / step) as f32);
    }
    Ok(Gradient {
        class_index,
        values: Tensor::new(feature.shape().to_vec(), grad)?,
    })
}

fn logit_count(shape: &[usize]) -> Result<usize> {
    match *shape {
        [n] => Ok(n),
        _ => Err(Error::Shape(format!(
            "head must end in a logit vector, got shape {shape:?}"
        ))),
    }
}

/// Gradient with respect to the layer input, given the gradient with respect
/// to its output.
fn layer_backward(
    layer: &LayerSpec,
    in_shape: &[usize],
    input: &[f32],
    output: &[f32],
    grad_out: &[f64],
) -> Vec<f64> {
    let in_size: usize = in_shape.iter().product();
    match layer {
        LayerSpec::Relu => input
            .iter()
            .zip(grad_out)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
        LayerSpec::Flatten => grad_out.to_vec(),
        LayerSpec::GlobalAvgPool => {
            let plane = in_shape[1] * in_shape[2];
            grad_out
                .iter()
                .flat_map(|&g| std::iter::repeat_n(g / plane as f64, plane))
                .collect()
        }
        LayerSpec::Linear(l) => {
            let mut grad = vec![0f64; l.in_features];
            for (row, &g) in l.weight.data().chunks_exact(l.in_features).zip(grad_out) {
                for (gi, &w) in grad.iter_mut().zip(row) {
                    *gi += w as f64 * g;
                }
            }
            grad
        }
        LayerSpec::Softmax => {
            let dot: f64 = output
                .iter()
                .zip(grad_out)
                .map(|(&s, &g)| s as f64 * g)
                .sum();
            output
                .iter()
                .zip(grad_out)
                .map(|(&s, &g)| s as f64 * (g - dot))
                .collect()
        }
        LayerSpec::MaxPool2d(p) => {
            let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh_len, ow_len) = pooled_size(in_shape, p);
            let mut grad = vec![0f64; in_size];
            for c in 0..ch {
                let plane = &input[c * h * w..(c + 1) * h * w];
                for oh in 0..oh_len {
                    for ow in 0..ow_len {
                        let mut best: Option<usize> = None;
                        for_each_tap(p, h, w, oh, ow, |idx| {
                            if best.is_none_or(|b| plane[idx] > plane[b]) {
                                best = Some(idx);
                            }
                        });
                        if let Some(b) = best {
                            grad[c * h * w + b] += grad_out[(c * oh_len + oh) * ow_len + ow];
                        }
                    }
                }
            }
            grad
        }
        LayerSpec::AvgPool2d(p) => {
            let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh_len, ow_len) = pooled_size(in_shape, p);
            let area = (p.kernel * p.kernel) as f64;
            let mut grad = vec![0f64; in_size];
            for c in 0..ch {
                for oh in 0..oh_len {
                    for ow in 0..ow_len {
                        let g = grad_out[(c * oh_len + oh) * ow_len + ow] / area;
                        for_each_tap(p, h, w, oh, ow, |idx| grad[c * h * w + idx] += g);
                    }
                }
            }
            grad
        }
        LayerSpec::Conv2d(c) => {
            let (h, w) = (in_shape[1], in_shape[2]);
            let oh_len = window_count(h, c.kernel, c.stride, c.padding).unwrap_or(0);
            let ow_len = window_count(w, c.kernel, c.stride, c.padding).unwrap_or(0);
            let k = c.kernel;
            let weights = c.weight.data();
            let mut grad = vec![0f64; in_size];
            for o in 0..c.out_channels {
                let g_plane = &grad_out[o * oh_len * ow_len..(o + 1) * oh_len * ow_len];
                for ci in 0..c.in_channels {
                    let dst = &mut grad[ci * h * w..(ci + 1) * h * w];
                    for kh in 0..k {
                        for kw in 0..k {
                            let wv = weights[((o * c.in_channels + ci) * k + kh) * k + kw] as f64;
                            for oh in valid_outputs(oh_len, h, c.stride, kh, c.padding) {
                                let ih = oh * c.stride + kh - c.padding;
                                for ow in valid_outputs(ow_len, w, c.stride, kw, c.padding) {
                                    let iw = ow * c.stride + kw - c.padding;
                                    dst[ih * w + iw] += wv * g_plane[oh * ow_len + ow];
                                }
                            }
                        }
                    }
                }
            }
            grad
        }
    }
}

fn pooled_size(in_shape: &[usize], p: &Pool) -> (usize, usize) {
    (
        window_count(in_shape[1], p.kernel, p.stride, p.padding).unwrap_or(0),
        window_count(in_shape[2], p.kernel, p.stride, p.padding).unwrap_or(0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Conv2d, Linear};

    fn linear(weight: Vec<f32>, out: usize, bias: Option<Vec<f32>>) -> LayerSpec {
        let inp = weight.len() / out;
        LayerSpec::Linear(Linear {
            in_features: inp,
            out_features: out,
            weight: Tensor::new(vec![out, inp], weight).unwrap(),
            bias: bias.map(|b| Tensor::new(vec![out], b).unwrap()),
        })
    }

    #[test]
    fn gap_identity_head_has_uniform_gradient() {
        let head = [LayerSpec::GlobalAvgPool, linear(vec![1.0], 1, None)];
        let feature = Tensor::new(vec![1, 2, 2], vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let g = backward_head(&head, &feature, 0).unwrap();
        assert_eq!(g.values.shape(), &[1, 2, 2]);
        assert!(g.values.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn zero_weight_gives_zero_gradient() {
        let head = [
            LayerSpec::Flatten,
            linear(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], 2, None),
        ];
        let feature = Tensor::new(vec![1, 2, 2], vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let g = backward_head(&head, &feature, 0).unwrap();
        assert!(g.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trailing_softmax_is_ignored() {
        let head = [
            LayerSpec::GlobalAvgPool,
            linear(vec![2.0, -1.0], 2, None),
            LayerSpec::Softmax,
        ];
        let feature = Tensor::new(vec![1, 1, 2], vec![0.5, 0.5]).unwrap();
        let g = backward_head(&head, &feature, 0).unwrap();
        assert_eq!(g.values.data(), &[1.0, 1.0]);
    }

    #[test]
    fn class_out_of_range() {
        let head = [LayerSpec::GlobalAvgPool, linear(vec![1.0], 1, None)];
        let feature = Tensor::zeros(&[1, 2, 2]);
        assert!(matches!(
            backward_head(&head, &feature, 1),
            Err(Error::ClassOutOfRange {
                index: 1,
                classes: 1
            })
        ));
        assert!(finite_diff_grad(&head, &feature, 1, 1e-3).is_err());
    }

    #[test]
    fn finite_difference_of_linear_head() {
        let head = [LayerSpec::Flatten, linear(vec![2.0], 1, None)];
        let feature = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let g = finite_diff_grad(&head, &feature, 0, 1e-3).unwrap();
        assert!((g.values.data()[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_of_constant_head() {
        let head = [LayerSpec::Flatten, linear(vec![0.0; 4], 1, Some(vec![3.0]))];
        let feature = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = finite_diff_grad(&head, &feature, 0, 1e-3).unwrap();
        assert!(g.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epsilon_must_be_positive() {
        let head = [LayerSpec::Flatten];
        let feature = Tensor::zeros(&[1, 1, 1]);
        assert!(finite_diff_grad(&head, &feature, 0, 0.0).is_err());
        assert!(finite_diff_grad(&head, &feature, 0, f64::NAN).is_err());
    }

    #[test]
    fn max_pool_tie_routes_to_first_element() {
        let head = [
            LayerSpec::MaxPool2d(Pool {
                kernel: 2,
                stride: 2,
                padding: 0,
            }),
            LayerSpec::Flatten,
            linear(vec![1.0], 1, None),
        ];
        let feature = Tensor::new(vec![1, 2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let g = backward_head(&head, &feature, 0).unwrap();
        assert_eq!(g.values.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_avgpool_head_matches_finite_differences() {
        let w: Vec<f32> = (0..36)
            .map(|v| ((v * 13 % 17) as f32 - 8.0) / 9.0)
            .collect();
        let head = [
            LayerSpec::Conv2d(Conv2d {
                in_channels: 2,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                padding: 1,
                weight: Tensor::new(vec![2, 2, 3, 3], w).unwrap(),
                bias: Some(Tensor::new(vec![2], vec![0.1, -0.1]).unwrap()),
            }),
            LayerSpec::AvgPool2d(Pool {
                kernel: 2,
                stride: 1,
                padding: 1,
            }),
            LayerSpec::Flatten,
            linear((0..64).map(|v| (v as f32 * 0.37).sin()).collect(), 2, None),
        ];
        let feature = Tensor::new(
            vec![2, 5, 5],
            (0..50).map(|v| (v as f32 * 0.71).cos()).collect(),
        )
        .unwrap();
        let a = backward_head(&head, &feature, 1).unwrap();
        let b = finite_diff_grad(&head, &feature, 1, 1e-3).unwrap();
        for (x, y) in a.values.data().iter().zip(b.values.data()) {
            assert!((x - y).abs() <= 1e-5 * y.abs().max(1e-3), "{x} vs {y}");
        }
    }
}
