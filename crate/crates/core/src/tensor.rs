//! Dense row-major `f32` tensors.

use crate::error::{Error, Result};

/// Dense N-dimensional array, channel-major and row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[&[f32]]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Index of the first maximal element.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate() {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Stacks equally-shaped tensors along a new leading batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack an empty list".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape, first.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// Splits along the leading axis.
    pub fn unstack(&self) -> Vec<Tensor> {
        let Some((&n, rest)) = self.shape.split_first() else {
            return Vec::new();
        };
        let size: usize = rest.iter().product();
        (0..n)
            .map(|i| Tensor {
                shape: rest.to_vec(),
                data: self.data[i * size..(i + 1) * size].to_vec(),
            })
            .collect()
    }

    /// Interprets the tensor as `C x H x W`.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape(format!(
                "expected a C x H x W tensor, got {:?}",
                self.shape
            ))),
        }
    }

    /// Interprets the tensor as `H x W`.
    pub fn hw(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [h, w] => Ok((h, w)),
            _ => Err(Error::Shape(format!(
                "expected an H x W tensor, got {:?}",
                self.shape
            ))),
        }
    }
}

/// Elementwise product of a `K x H x W` feature map with an `H x W` mask
/// broadcast over channels.
pub fn hadamard(feature: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let mut out = Vec::with_capacity(feature.len());
    hadamard_into(feature, mask, &mut out)?;
    Tensor::new(feature.shape.clone(), out)
}

/// Appends `feature ⊙ mask` to `out`.
pub(crate) fn hadamard_into(feature: &Tensor, mask: &Tensor, out: &mut Vec<f32>) -> Result<()> {
    let (_, h, w) = feature.chw()?;
    let (mh, mw) = mask.hw()?;
    if (mh, mw) != (h, w) {
        return Err(Error::Shape(format!(
            "mask {mh}x{mw} does not match feature spatial size {h}x{w}"
        )));
    }
    for channel in feature.data.chunks_exact(h * w) {
        out.extend(channel.iter().zip(&mask.data).map(|(f, m)| f * m));
    }
    Ok(())
}
