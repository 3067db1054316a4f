use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::image::{Image, MIN_SIDE};
use crate::raster::{blur_plane, resample_window};
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

/// Crop window in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub top: f64,
    pub left: f64,
    pub height: f64,
    pub width: f64,
}

impl CropBox {
    pub fn full(img: &Image) -> Self {
        Self {
            top: 0.0,
            left: 0.0,
            height: img.height() as f64,
            width: img.width() as f64,
        }
    }

    /// Crop area relative to the `h × w` source.
    pub fn area_fraction(&self, h: usize, w: usize) -> f64 {
        self.height * self.width / (h * w) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AspectMode {
    /// Keep the source aspect ratio; only the scale is random.
    Preserve,
    /// Log-uniform width/height ratio in the given range.
    Range(f64, f64),
}

fn check_scale(scale: (f64, f64)) -> Result<()> {
    if !(scale.0 > 0.0 && scale.0 <= scale.1 && scale.1 <= 1.0) {
        return Err(invalid!("crop scale {:?} must satisfy 0 < lo <= hi <= 1", scale));
    }
    Ok(())
}

pub fn sample_crop(h: usize, w: usize, rng: &mut RngStream, scale: (f64, f64), aspect: AspectMode) -> CropBox {
    let (hf, wf) = (h as f64, w as f64);
    let place = |rng: &mut RngStream, ch: f64, cw: f64| CropBox {
        top: rng.uniform(0.0, hf - ch),
        left: rng.uniform(0.0, wf - cw),
        height: ch,
        width: cw,
    };
    match aspect {
        AspectMode::Preserve => {
            let s = rng.uniform(scale.0, scale.1).sqrt();
            place(rng, hf * s, wf * s)
        }
        AspectMode::Range(lo, hi) => {
            let area = hf * wf;
            for _ in 0..10 {
                let target = area * rng.uniform(scale.0, scale.1);
                let ratio = rng.log_uniform(lo, hi);
                let cw = (target * ratio).sqrt();
                let ch = (target / ratio).sqrt();
                if cw <= wf && ch <= hf {
                    return place(rng, ch, cw);
                }
            }
            // Fall back to the largest centered crop whose ratio is in range.
            let r = wf / hf;
            let (ch, cw) = if r < lo {
                (wf / lo, wf)
            } else if r > hi {
                (hf, hf * hi)
            } else {
                (hf, wf)
            };
            CropBox {
                top: (hf - ch) / 2.0,
                left: (wf - cw) / 2.0,
                height: ch,
                width: cw,
            }
        }
    }
}

/// Bilinear resample of `crop` to `out × out`.
pub fn resample_crop(img: &Image, crop: &CropBox, out: usize) -> Image {
    let data = resample_window(
        img.data(),
        img.height(),
        img.width(),
        img.channels(),
        crop.top,
        crop.left,
        crop.height,
        crop.width,
        out,
        out,
    );
    Image::from_raw_clamped(out, out, img.channels(), data)
}

/// Aspect-preserving random crop covering a `scale` fraction of the area,
/// resized to `out × out`.
pub fn random_resized_crop(img: &Image, rng: &mut RngStream, scale: (f64, f64), out: usize) -> Result<Image> {
    check_scale(scale)?;
    if out < MIN_SIDE {
        return Err(invalid!("output size {} below {}", out, MIN_SIDE));
    }
    let crop = sample_crop(img.height(), img.width(), rng, scale, AspectMode::Preserve);
    Ok(resample_crop(img, &crop, out))
}

/// Whole-image bilinear resize to `out × out`.
pub fn resize(img: &Image, out: usize) -> Image {
    if img.height() == out && img.width() == out {
        return img.clone();
    }
    resample_crop(img, &CropBox::full(img), out)
}

pub fn hflip(img: &Image) -> Image {
    let (w, c) = (img.width(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for row in img.data().chunks_exact(w * c) {
        for px in row.chunks_exact(c).rev() {
            data.extend_from_slice(px);
        }
    }
    Image::from_raw_clamped(img.height(), w, c, data)
}

/// Separable Gaussian blur, radius `ceil(3σ)` per axis, reflect padding.
pub fn gaussian_blur(img: &Image, sigma_y: f64, sigma_x: f64) -> Result<Image> {
    if !(sigma_y >= 0.0 && sigma_x >= 0.0) {
        return Err(invalid!("blur sigma ({}, {}) must be non-negative", sigma_y, sigma_x));
    }
    if sigma_y == 0.0 && sigma_x == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let planes: Vec<Vec<f32>> = (0..img.channels())
        .map(|c| blur_plane(&img.plane(c), h, w, sigma_y, sigma_x))
        .collect();
    Ok(Image::from_planes(h, w, &planes))
}
