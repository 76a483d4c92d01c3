//! Image loading, bilinear resampling and input normalization.

use std::path::Path;

use image::{DynamicImage, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Target length of the shorter side after resizing.
    pub resize_to: u32,
    /// Side of the square center crop.
    pub crop_to: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl PreprocessConfig {
    /// Resize 256, crop 224, ImageNet statistics.
    pub fn imagenet() -> Self {
        PreprocessConfig {
            resize_to: 256,
            crop_to: 224,
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }

    /// ImageNet statistics with the 256:224 resize-to-crop ratio scaled to
    /// `crop_to`.
    pub fn for_crop(crop_to: u32) -> Self {
        PreprocessConfig {
            resize_to: ((crop_to as f64 * 256.0 / 224.0).round() as u32).max(crop_to),
            crop_to,
            ..Self::imagenet()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_to == 0 || self.crop_to > self.resize_to {
            return Err(Error::InvalidArgument(format!(
                "crop {} must be in 1..={}",
                self.crop_to, self.resize_to
            )));
        }
        if self.std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::InvalidArgument(
                "std components must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Source coordinate and blend weight for half-pixel-center resampling.
#[inline]
fn source_tap(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

#[inline]
fn lerp(a: f32, b: f32, t: f64) -> f32 {
    (a as f64 + (b as f64 - a as f64) * t) as f32
}

/// Bilinear resampling of one `h x w` plane with half-pixel centers and edge
/// clamping. Each output is a convex blend of its neighbours, so the result
/// stays within the input's value range.
pub fn resize_bilinear(plane: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    debug_assert_eq!(plane.len(), h * w);
    let cols: Vec<_> = (0..out_w).map(|x| source_tap(x, w, out_w)).collect();
    // horizontal pass over every source row, then vertical
    let mut rows = Vec::with_capacity(h * out_w);
    for row in plane.chunks_exact(w) {
        rows.extend(cols.iter().map(|&(lo, hi, t)| lerp(row[lo], row[hi], t)));
    }
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (lo, hi, t) = source_tap(y, h, out_h);
        let (a, b) = (
            &rows[lo * out_w..(lo + 1) * out_w],
            &rows[hi * out_w..(hi + 1) * out_w],
        );
        out.extend(a.iter().zip(b).map(|(&a, &b)| lerp(a, b, t)));
    }
    out
}

/// Resizes every channel of a `C x H x W` tensor.
pub fn resize_chw(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = t.chw()?;
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for plane in t.data().chunks_exact(h * w) {
        data.extend(resize_bilinear(plane, h, w, out_h, out_w));
    }
    Tensor::new(vec![c, out_h, out_w], data)
}

/// Decodes a PPM (P6) or PNG file. Only 8-bit RGB images are accepted.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    match img {
        DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(Error::Image(format!(
            "{}: expected 8-bit RGB, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Aspect-preserving resize of the shorter side to `resize_to`, then a
/// centered `crop_to x crop_to` crop. Returns `3 x crop x crop` in `[0, 1]`.
pub fn resize_and_crop(img: &RgbImage, cfg: &PreprocessConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Image("image has no pixels".into()));
    }
    let short = w.min(h) as f64;
    let target = cfg.resize_to as f64;
    let (rw, rh) = if w <= h {
        (
            cfg.resize_to as usize,
            ((h as f64 * target / short).round() as usize).max(1),
        )
    } else {
        (
            ((w as f64 * target / short).round() as usize).max(1),
            cfg.resize_to as usize,
        )
    };
    let crop = cfg.crop_to as usize;
    let mut planes: Vec<Vec<f32>> = (0..3).map(|_| Vec::with_capacity(w * h)).collect();
    for px in img.pixels() {
        for (plane, &v) in planes.iter_mut().zip(&px.0) {
            plane.push(v as f32 / 255.0);
        }
    }
    let (top, left) = ((rh - crop) / 2, (rw - crop) / 2);
    let mut data = Vec::with_capacity(3 * crop * crop);
    for plane in &planes {
        let resized = if (rw, rh) == (w, h) {
            plane.clone()
        } else {
            resize_bilinear(plane, h, w, rh, rw)
        };
        for y in top..top + crop {
            data.extend_from_slice(&resized[y * rw + left..y * rw + left + crop]);
        }
    }
    Tensor::new(vec![3, crop, crop], data)
}

/// Full input pipeline: resize, crop, then per-channel `(x - mean) / std`.
pub fn preprocess_image(img: &RgbImage, cfg: &PreprocessConfig) -> Result<Tensor> {
    let view = resize_and_crop(img, cfg)?;
    Ok(normalize(&view, cfg))
}

pub fn normalize(view: &Tensor, cfg: &PreprocessConfig) -> Tensor {
    let plane = view.len() / 3;
    let mut out = view.clone();
    for (c, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        for v in chunk {
            *v = (*v - cfg.mean[c]) / cfg.std[c];
        }
    }
    out
}
