//! Layer definitions and forward kernels.
//!
//! Every kernel operates on a batch: a contiguous buffer holding `n` samples
//! of identical shape. Samples are processed independently with the same
//! accumulation order, so a batched call is bit-identical to calling the
//! kernel once per sample. Sums are accumulated in `f64`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Storage element of a forward pass. Tensors are `f32`; the `f64`
/// instantiation evaluates the same network at higher precision.
pub(crate) trait Elem: Copy + PartialOrd + Send + Sync + 'static {
    const NEG_INFINITY: Self;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Elem for f32 {
    const NEG_INFINITY: Self = f32::NEG_INFINITY;
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Elem for f64 {
    const NEG_INFINITY: Self = f64::NEG_INFINITY;
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `out_channels x in_channels x kernel x kernel`
    pub weight: Tensor,
    /// `out_channels`
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `out_features x in_features`
    pub weight: Tensor,
    /// `out_features`
    pub bias: Option<Tensor>,
}

/// One layer of a sequential CNN.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d(Conv2d),
    Relu,
    /// Padded positions never win the max.
    MaxPool2d(Pool),
    /// Zero padding counts towards the divisor (`kernel * kernel`).
    AvgPool2d(Pool),
    GlobalAvgPool,
    Linear(Linear),
    Softmax,
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d(_) => "maxpool2d",
            LayerSpec::AvgPool2d(_) => "avgpool2d",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Linear(_) => "linear",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d(c) => c.weight.len() + c.bias.as_ref().map_or(0, Tensor::len),
            LayerSpec::Linear(l) => l.weight.len() + l.bias.as_ref().map_or(0, Tensor::len),
            _ => 0,
        }
    }

    /// Checks hyperparameters and weight shapes.
    pub fn validate(&self, index: usize) -> Result<()> {
        let invalid = |reason: String| Error::InvalidLayer {
            index,
            kind: self.kind(),
            reason,
        };
        match self {
            LayerSpec::Conv2d(c) => {
                if c.kernel == 0 || c.stride == 0 {
                    return Err(invalid("kernel and stride must be at least 1".into()));
                }
                let want = [c.out_channels, c.in_channels, c.kernel, c.kernel];
                if c.weight.shape() != want {
                    return Err(invalid(format!(
                        "weight shape {:?}, expected {want:?}",
                        c.weight.shape()
                    )));
                }
                if let Some(b) = &c.bias {
                    if b.shape() != [c.out_channels] {
                        return Err(invalid(format!(
                            "bias shape {:?}, expected [{}]",
                            b.shape(),
                            c.out_channels
                        )));
                    }
                }
            }
            LayerSpec::MaxPool2d(p) | LayerSpec::AvgPool2d(p) => {
                if p.kernel == 0 || p.stride == 0 {
                    return Err(invalid("kernel and stride must be at least 1".into()));
                }
                if 2 * p.padding > p.kernel {
                    return Err(invalid("padding must not exceed half the kernel".into()));
                }
            }
            LayerSpec::Linear(l) => {
                let want = [l.out_features, l.in_features];
                if l.weight.shape() != want {
                    return Err(invalid(format!(
                        "weight shape {:?}, expected {want:?}",
                        l.weight.shape()
                    )));
                }
                if let Some(b) = &l.bias {
                    if b.shape() != [l.out_features] {
                        return Err(invalid(format!(
                            "bias shape {:?}, expected [{}]",
                            b.shape(),
                            l.out_features
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape of a single sample.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::LayerShape {
            index,
            kind: self.kind(),
            expected,
            actual: input.to_vec(),
        };
        match self {
            LayerSpec::Conv2d(c) => match *input {
                [ch, h, w] if ch == c.in_channels => {
                    let oh = window_count(h, c.kernel, c.stride, c.padding);
                    let ow = window_count(w, c.kernel, c.stride, c.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => Ok(vec![c.out_channels, oh, ow]),
                        _ => Err(mismatch(format!(
                            "spatial size of at least {} after padding",
                            c.kernel
                        ))),
                    }
                }
                _ => Err(mismatch(format!("[{}, H, W]", c.in_channels))),
            },
            LayerSpec::MaxPool2d(p) | LayerSpec::AvgPool2d(p) => match *input {
                [ch, h, w] => {
                    let oh = window_count(h, p.kernel, p.stride, p.padding);
                    let ow = window_count(w, p.kernel, p.stride, p.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => Ok(vec![ch, oh, ow]),
                        _ => Err(mismatch(format!(
                            "spatial size of at least {} after padding",
                            p.kernel
                        ))),
                    }
                }
                _ => Err(mismatch("[C, H, W]".into())),
            },
            LayerSpec::GlobalAvgPool => match *input {
                [ch, h, w] if h * w > 0 => Ok(vec![ch]),
                _ => Err(mismatch("[C, H, W]".into())),
            },
            LayerSpec::Linear(l) => match *input {
                [n] if n == l.in_features => Ok(vec![l.out_features]),
                _ => Err(mismatch(format!("[{}]", l.in_features))),
            },
            LayerSpec::Softmax => match *input {
                [n] if n > 0 => Ok(vec![n]),
                _ => Err(mismatch("a non-empty vector".into())),
            },
            LayerSpec::Flatten => {
                if input.is_empty() {
                    Err(mismatch("a tensor of rank >= 1".into()))
                } else {
                    Ok(vec![input.iter().product()])
                }
            }
            LayerSpec::Relu => Ok(input.to_vec()),
        }
    }

    /// Runs the layer on `batch` samples of shape `in_shape`.
    pub(crate) fn apply<T: Elem>(
        &self,
        index: usize,
        in_shape: &[usize],
        input: &[T],
        batch: usize,
    ) -> Result<(Vec<usize>, Vec<T>)> {
        let out_shape = self.output_shape(index, in_shape)?;
        let in_size: usize = in_shape.iter().product();
        let out_size: usize = out_shape.iter().product();
        debug_assert_eq!(input.len(), in_size * batch);
        let mut out = Vec::with_capacity(out_size * batch);
        for sample in input.chunks_exact(in_size.max(1)).take(batch) {
            match self {
                LayerSpec::Conv2d(c) => conv2d(c, in_shape, &out_shape, sample, &mut out),
                LayerSpec::Relu => out.extend(sample.iter().map(|&x| {
                    if x > T::from_f64(0.0) {
                        x
                    } else {
                        T::from_f64(0.0)
                    }
                })),
                LayerSpec::MaxPool2d(p) => max_pool(p, in_shape, &out_shape, sample, &mut out),
                LayerSpec::AvgPool2d(p) => avg_pool(p, in_shape, &out_shape, sample, &mut out),
                LayerSpec::GlobalAvgPool => {
                    let plane = in_shape[1] * in_shape[2];
                    out.extend(sample.chunks_exact(plane).map(|ch| {
                        let sum: f64 = ch.iter().map(|x| x.to_f64()).sum();
                        T::from_f64(sum / plane as f64)
                    }));
                }
                LayerSpec::Linear(l) => linear(l, sample, &mut out),
                LayerSpec::Softmax => softmax_into(sample, &mut out),
                LayerSpec::Flatten => out.extend_from_slice(sample),
            }
        }
        Ok((out_shape, out))
    }
}

/// Number of window positions along one axis, `None` if the padded input is
/// smaller than the window.
pub(crate) fn window_count(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = len + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Output positions `o` whose tap `o * stride + offset - padding` lands in
/// `[0, len)`.
#[inline]
pub(crate) fn valid_outputs(
    out_len: usize,
    len: usize,
    stride: usize,
    offset: usize,
    padding: usize,
) -> std::ops::Range<usize> {
    let lo = if padding > offset {
        (padding - offset).div_ceil(stride)
    } else {
        0
    };
    let hi = if len + padding > offset {
        ((len + padding - offset - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    lo..hi.max(lo)
}

fn conv2d<T: Elem>(c: &Conv2d, in_shape: &[usize], out_shape: &[usize], x: &[T], out: &mut Vec<T>) {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh_len, ow_len) = (out_shape[1], out_shape[2]);
    let k = c.kernel;
    let positions = oh_len * ow_len;

    // one row per (input channel, kh, kw): the input value under that tap for
    // every output position, zero where the tap falls in the padding
    let taps = c.in_channels * k * k;
    let mut cols = vec![0f64; taps * positions];
    for ci in 0..c.in_channels {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for kh in 0..k {
            let rows = valid_outputs(oh_len, h, c.stride, kh, c.padding);
            for kw in 0..k {
                let row = &mut cols[((ci * k + kh) * k + kw) * positions..][..positions];
                let span = valid_outputs(ow_len, w, c.stride, kw, c.padding);
                for oh in rows.clone() {
                    let src = &plane[(oh * c.stride + kh - c.padding) * w..][..w];
                    let dst = &mut row[oh * ow_len..(oh + 1) * ow_len];
                    for ow in span.clone() {
                        dst[ow] = src[ow * c.stride + kw - c.padding].to_f64();
                    }
                }
            }
        }
    }

    let weights = c.weight.data();
    let mut acc = vec![0f64; positions];
    for o in 0..c.out_channels {
        acc.fill(c.bias.as_ref().map_or(0.0, |b| b.data()[o] as f64));
        for (&wv, row) in weights[o * taps..(o + 1) * taps]
            .iter()
            .zip(cols.chunks_exact(positions))
        {
            let wv = wv as f64;
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += wv * v;
            }
        }
        out.extend(acc.iter().map(|&v| T::from_f64(v)));
    }
}

fn max_pool<T: Elem>(p: &Pool, in_shape: &[usize], out_shape: &[usize], x: &[T], out: &mut Vec<T>) {
    let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh_len, ow_len) = (out_shape[1], out_shape[2]);
    for c in 0..ch {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for oh in 0..oh_len {
            for ow in 0..ow_len {
                let mut best = T::NEG_INFINITY;
                for_each_tap(p, h, w, oh, ow, |idx| {
                    if plane[idx] > best {
                        best = plane[idx];
                    }
                });
                out.push(best);
            }
        }
    }
}

fn avg_pool<T: Elem>(p: &Pool, in_shape: &[usize], out_shape: &[usize], x: &[T], out: &mut Vec<T>) {
    let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh_len, ow_len) = (out_shape[1], out_shape[2]);
    let area = (p.kernel * p.kernel) as f64;
    for c in 0..ch {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for oh in 0..oh_len {
            for ow in 0..ow_len {
                let mut sum = 0f64;
                for_each_tap(p, h, w, oh, ow, |idx| sum += plane[idx].to_f64());
                out.push(T::from_f64(sum / area));
            }
        }
    }
}

/// Visits in-bounds input indices of one pooling window in row-major order.
#[inline]
pub(crate) fn for_each_tap(
    p: &Pool,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    mut f: impl FnMut(usize),
) {
    for kh in 0..p.kernel {
        let Some(ih) = (oh * p.stride + kh).checked_sub(p.padding) else {
            continue;
        };
        if ih >= h {
            continue;
        }
        for kw in 0..p.kernel {
            let Some(iw) = (ow * p.stride + kw).checked_sub(p.padding) else {
                continue;
            };
            if iw < w {
                f(ih * w + iw);
            }
        }
    }
}

fn linear<T: Elem>(l: &Linear, x: &[T], out: &mut Vec<T>) {
    let weights = l.weight.data();
    for o in 0..l.out_features {
        let row = &weights[o * l.in_features..(o + 1) * l.in_features];
        let mut acc = l.bias.as_ref().map_or(0.0, |b| b.data()[o] as f64);
        for (wv, xv) in row.iter().zip(x) {
            acc += *wv as f64 * xv.to_f64();
        }
        out.push(T::from_f64(acc));
    }
}

fn softmax_into<T: Elem>(x: &[T], out: &mut Vec<T>) {
    let max = x
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    out.extend(exps.iter().map(|e| T::from_f64(e / total)));
}

/// Numerically stable softmax of a vector.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(logits.len());
    softmax_into(logits, &mut out);
    out
}

/// Applies one layer to a single sample.
pub fn forward_layer(layer: &LayerSpec, input: &Tensor) -> Result<Tensor> {
    layer.validate(0)?;
    let (shape, data) = layer.apply(0, input.shape(), input.data(), 1)?;
    Tensor::new(shape, data)
}

/// Left-to-right fold of [`forward_layer`] over a single sample.
pub fn forward_chain(layers: &[LayerSpec], input: &Tensor) -> Result<Tensor> {
    forward_chain_at(layers, 0, input)
}

/// Like [`forward_chain`], numbering layers from `first_index` in errors.
pub fn forward_chain_at(
    layers: &[LayerSpec],
    first_index: usize,
    input: &Tensor,
) -> Result<Tensor> {
    let (shape, data) = run_chain(
        layers,
        first_index,
        input.shape().to_vec(),
        input.data().to_vec(),
        1,
    )?;
    Tensor::new(shape, data)
}

/// Runs the chain on a batch whose leading axis indexes samples.
pub fn forward_chain_batch(
    layers: &[LayerSpec],
    first_index: usize,
    batch: &Tensor,
) -> Result<Tensor> {
    let (&n, sample) = batch
        .shape()
        .split_first()
        .ok_or_else(|| Error::Shape("batch tensor must have a leading axis".into()))?;
    let (shape, data) = run_chain(
        layers,
        first_index,
        sample.to_vec(),
        batch.data().to_vec(),
        n,
    )?;
    let mut full = vec![n];
    full.extend(shape);
    Tensor::new(full, data)
}

pub(crate) fn run_chain<T: Elem>(
    layers: &[LayerSpec],
    first_index: usize,
    mut shape: Vec<usize>,
    mut data: Vec<T>,
    batch: usize,
) -> Result<(Vec<usize>, Vec<T>)> {
    for (offset, layer) in layers.iter().enumerate() {
        let (s, d) = layer.apply(first_index + offset, &shape, &data, batch)?;
        shape = s;
        data = d;
    }
    Ok((shape, data))
}

/// Output shape of a chain, validating every layer on the way.
pub fn chain_output_shape(
    layers: &[LayerSpec],
    first_index: usize,
    input: &[usize],
) -> Result<Vec<usize>> {
    let mut shape = input.to_vec();
    for (offset, layer) in layers.iter().enumerate() {
        layer.validate(first_index + offset)?;
        shape = layer.output_shape(first_index + offset, &shape)?;
    }
    Ok(shape)
}

/// The layers that produce logits: trailing softmax layers are dropped.
pub fn logit_layers(layers: &[LayerSpec]) -> &[LayerSpec] {
    let mut end = layers.len();
    while end > 0 && layers[end - 1] == LayerSpec::Softmax {
        end -= 1;
    }
    &layers[..end]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn conv(
        in_c: usize,
        out_c: usize,
        k: usize,
        s: usize,
        p: usize,
        w: Vec<f32>,
        b: Option<Vec<f32>>,
    ) -> LayerSpec {
        LayerSpec::Conv2d(Conv2d {
            in_channels: in_c,
            out_channels: out_c,
            kernel: k,
            stride: s,
            padding: p,
            weight: Tensor::new(vec![out_c, in_c, k, k], w).unwrap(),
            bias: b.map(|b| Tensor::new(vec![out_c], b).unwrap()),
        })
    }

    #[test]
    fn relu_clamps_negatives() {
        let out = forward_layer(&LayerSpec::Relu, &t(&[2, 2], &[-1.0, 2.0, 0.0, -3.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn global_avg_pool_is_mean() {
        let out = forward_layer(
            &LayerSpec::GlobalAvgPool,
            &t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert_eq!(out.shape(), &[1]);
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn softmax_of_equal_logits() {
        let out = forward_layer(&LayerSpec::Softmax, &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 999.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn conv_identity_kernel_with_padding() {
        let layer = conv(
            1,
            1,
            3,
            1,
            1,
            vec![0., 0., 0., 0., 1., 0., 0., 0., 0.],
            None,
        );
        let x = t(&[1, 2, 3], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(forward_layer(&layer, &x).unwrap(), x);
    }

    #[test]
    fn conv_sums_window_with_bias_and_stride() {
        // 2x2 ones kernel, stride 2, bias 1 over a 4x4 ramp
        let layer = conv(1, 1, 2, 2, 0, vec![1.0; 4], Some(vec![1.0]));
        let x = t(&[1, 4, 4], &(0..16).map(|v| v as f32).collect::<Vec<_>>());
        let out = forward_layer(&layer, &x).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[11.0, 19.0, 43.0, 51.0]);
    }

    #[test]
    fn conv_padded_stride_two_matches_direct_sum() {
        let w: Vec<f32> = (0..18).map(|v| v as f32 * 0.1 - 0.7).collect();
        let layer = conv(2, 1, 3, 2, 1, w.clone(), None);
        let x: Vec<f32> = (0..50).map(|v| ((v * 7) % 11) as f32 - 5.0).collect();
        let out = forward_layer(&layer, &t(&[2, 5, 5], &x)).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        for oh in 0..3 {
            for ow in 0..3 {
                let mut acc = 0f64;
                for c in 0..2 {
                    for kh in 0..3 {
                        for kw in 0..3 {
                            let ih = (oh * 2 + kh) as isize - 1;
                            let iw = (ow * 2 + kw) as isize - 1;
                            if (0..5).contains(&ih) && (0..5).contains(&iw) {
                                acc += w[c * 9 + kh * 3 + kw] as f64
                                    * x[c * 25 + ih as usize * 5 + iw as usize] as f64;
                            }
                        }
                    }
                }
                assert_eq!(out.data()[oh * 3 + ow], acc as f32);
            }
        }
    }

    #[test]
    fn pools() {
        let x = t(&[1, 2, 4], &[1., 5., 2., 0., 3., 4., -1., 8.]);
        let p = Pool {
            kernel: 2,
            stride: 2,
            padding: 0,
        };
        assert_eq!(
            forward_layer(&LayerSpec::MaxPool2d(p), &x).unwrap().data(),
            &[5.0, 8.0]
        );
        assert_eq!(
            forward_layer(&LayerSpec::AvgPool2d(p), &x).unwrap().data(),
            &[3.25, 2.25]
        );
    }

    #[test]
    fn padded_max_pool_ignores_padding() {
        let x = t(&[1, 2, 2], &[-1., -2., -3., -4.]);
        let p = Pool {
            kernel: 2,
            stride: 2,
            padding: 1,
        };
        let out = forward_layer(&LayerSpec::MaxPool2d(p), &x).unwrap();
        assert_eq!(out.data(), &[-1., -2., -3., -4.]);
    }

    #[test]
    fn linear_and_flatten() {
        let layer = LayerSpec::Linear(Linear {
            in_features: 2,
            out_features: 2,
            weight: t(&[2, 2], &[1., 2., 3., 4.]),
            bias: Some(t(&[2], &[0.5, -0.5])),
        });
        let x = forward_layer(&LayerSpec::Flatten, &t(&[1, 1, 2], &[1., 1.])).unwrap();
        assert_eq!(forward_layer(&layer, &x).unwrap().data(), &[3.5, 6.5]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let layer = LayerSpec::Linear(Linear {
            in_features: 10,
            out_features: 1,
            weight: Tensor::zeros(&[1, 10]),
            bias: None,
        });
        let err = forward_chain(&[LayerSpec::Relu, layer], &Tensor::zeros(&[20])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 1"), "{msg}");
        assert!(msg.contains("[10]"), "{msg}");
    }

    #[test]
    fn chain_identity_and_idempotent_relu() {
        let x = t(&[3], &[-1., 0.5, 2.]);
        assert_eq!(forward_chain(&[], &x).unwrap(), x);
        let once = forward_chain(&[LayerSpec::Relu], &x).unwrap();
        let twice = forward_chain(&[LayerSpec::Relu, LayerSpec::Relu], &x).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn batch_matches_single_samples() {
        let layer = conv(
            1,
            2,
            3,
            1,
            1,
            (0..18).map(|v| (v as f32).sin()).collect(),
            Some(vec![0.1, -0.2]),
        );
        let layers = [layer, LayerSpec::Relu, LayerSpec::GlobalAvgPool];
        let a = t(&[1, 3, 3], &[0.3, -0.1, 0.9, 0.2, 0.5, -0.7, 0.8, 0.0, 0.4]);
        let b = a.map(|v| v * -1.3 + 0.2);
        let batch = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        let out = forward_chain_batch(&layers, 0, &batch).unwrap().unstack();
        assert_eq!(out[0], forward_chain(&layers, &a).unwrap());
        assert_eq!(out[1], forward_chain(&layers, &b).unwrap());
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let p = Pool {
            kernel: 0,
            stride: 1,
            padding: 0,
        };
        assert!(LayerSpec::MaxPool2d(p).validate(3).is_err());
        let bad = conv(1, 1, 3, 1, 0, vec![0.0; 9], None);
        if let LayerSpec::Conv2d(mut c) = bad {
            c.stride = 0;
            assert!(LayerSpec::Conv2d(c).validate(0).is_err());
        }
    }

    #[test]
    fn valid_output_ranges() {
        // len 5, pad 1, stride 2, kernel offset 0 -> outputs whose tap 2o-1 in [0,5)
        assert_eq!(valid_outputs(3, 5, 2, 0, 1), 1..3);
        assert_eq!(valid_outputs(3, 5, 2, 2, 1), 0..2);
        assert_eq!(valid_outputs(4, 4, 1, 0, 1), 1..4);
        assert_eq!(valid_outputs(4, 4, 1, 2, 1), 0..3);
    }
}
