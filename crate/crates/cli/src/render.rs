//! Map rendering: grayscale PGM, colormapped overlays.
//!
//! The colormap is a 256-entry piecewise-linear ramp through blue (0),
//! cyan (85), yellow (170) and red (255).

use std::path::Path;

use anyhow::{Context, Result};
use image::{GrayImage, Rgb, RgbImage};
use rxai_core::cam::upsample_map;
use rxai_core::Tensor;

const STOPS: [[i32; 3]; 4] = [[0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]];

const fn build_colormap() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        let pos = i as i32 * 3;
        let seg = if pos / 255 > 2 { 2 } else { pos / 255 };
        let frac = pos - seg * 255;
        let (a, b) = (STOPS[seg as usize], STOPS[seg as usize + 1]);
        let mut c = 0;
        while c < 3 {
            table[i][c] = (a[c] + (b[c] - a[c]) * frac / 255) as u8;
            c += 1;
        }
        i += 1;
    }
    table
}

pub const COLORMAP: [[u8; 3]; 256] = build_colormap();

/// Overlay opacity of the colormapped saliency.
pub const ALPHA: f32 = 0.5;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// The map at its own resolution as 8-bit grayscale.
pub fn map_to_gray(map: &Tensor) -> Result<GrayImage> {
    let (h, w) = map.hw()?;
    let pixels = map.data().iter().map(|&v| to_byte(v)).collect();
    GrayImage::from_raw(w as u32, h as u32, pixels).context("map buffer size")
}

/// Blends the colormapped map, upsampled to the view size, over a
/// `3 x H x W` view with values in `[0, 1]`.
pub fn overlay(view: &Tensor, map: &Tensor) -> Result<RgbImage> {
    let (_, h, w) = view.chw()?;
    let up = upsample_map(map, (h, w))?;
    let plane = h * w;
    let v = view.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        let color = COLORMAP[to_byte(up.data()[p]) as usize];
        let mut px = [0u8; 3];
        for c in 0..3 {
            let base = v[c * plane + p].clamp(0.0, 1.0) * 255.0;
            px[c] = ((1.0 - ALPHA) * base + ALPHA * color[c] as f32).round() as u8;
        }
        Rgb(px)
    }))
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Pnm)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn save_ppm(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Pnm)
        .with_context(|| format!("writing {}", path.display()))
}
