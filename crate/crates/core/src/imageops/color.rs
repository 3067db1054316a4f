use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::image::{clamp01, Image};
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Jitter magnitudes. Brightness, contrast and saturation factors are drawn
/// from `[1 - k, 1 + k]`; the hue shift from `[-h, h]` turns of the color wheel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterStrengths {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl JitterStrengths {
    pub const fn new(brightness: f32, contrast: f32, saturation: f32, hue: f32) -> Self {
        Self {
            brightness,
            contrast,
            saturation,
            hue,
        }
    }

    pub const fn none() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.brightness >= 0.0 && self.contrast >= 0.0 && self.saturation >= 0.0 && (0.0..=0.5).contains(&self.hue);
        if !ok {
            return Err(invalid!("jitter strengths {:?} must be non-negative (hue at most 0.5)", self));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JitterOp {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

/// A concrete draw of jitter factors and their application order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterParams {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
    pub order: [JitterOp; 4],
}

impl JitterParams {
    pub const IDENTITY: JitterParams = JitterParams {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue: 0.0,
        order: [JitterOp::Brightness, JitterOp::Contrast, JitterOp::Saturation, JitterOp::Hue],
    };

    pub fn with_brightness(brightness: f32) -> Self {
        Self {
            brightness,
            ..Self::IDENTITY
        }
    }
}

fn factor(rng: &mut RngStream, k: f32) -> f32 {
    if k == 0.0 {
        1.0
    } else {
        rng.uniform(((1.0 - k) as f64).max(0.0), (1.0 + k) as f64) as f32
    }
}

pub fn sample_jitter(rng: &mut RngStream, s: &JitterStrengths) -> JitterParams {
    let mut order = JitterParams::IDENTITY.order;
    order.shuffle(rng);
    let brightness = factor(rng, s.brightness);
    let contrast = factor(rng, s.contrast);
    let saturation = factor(rng, s.saturation);
    let hue = if s.hue == 0.0 {
        0.0
    } else {
        rng.uniform(-(s.hue as f64), s.hue as f64) as f32
    };
    JitterParams {
        brightness,
        contrast,
        saturation,
        hue,
        order,
    }
}

#[inline]
fn luma(px: &[f32]) -> f32 {
    LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]
}

fn wrap(v: f32, m: f32) -> f32 {
    let r = v - m * (v / m).floor();
    if r >= m {
        0.0
    } else {
        r
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        wrap((g - b) / d, 6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = wrap(h, 1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Applies `p` in place to an interleaved buffer. Identity factors are skipped
/// so that zero-strength jitter leaves the buffer bit-for-bit unchanged.
pub(crate) fn jitter_pixels(data: &mut [f32], channels: usize, p: &JitterParams) {
    for op in p.order {
        match op {
            JitterOp::Brightness if p.brightness != 1.0 => {
                for v in data.iter_mut() {
                    *v = clamp01(*v * p.brightness);
                }
            }
            JitterOp::Contrast if p.contrast != 1.0 => {
                let n = (data.len() / channels) as f64;
                let mean = if channels == 3 {
                    data.chunks_exact(3).map(|px| luma(px) as f64).sum::<f64>() / n
                } else {
                    data.iter().map(|&v| v as f64).sum::<f64>() / n
                } as f32;
                for v in data.iter_mut() {
                    *v = clamp01(p.contrast * *v + (1.0 - p.contrast) * mean);
                }
            }
            JitterOp::Saturation if p.saturation != 1.0 && channels == 3 => {
                for px in data.chunks_exact_mut(3) {
                    let g = luma(px);
                    for v in px.iter_mut() {
                        *v = clamp01(p.saturation * *v + (1.0 - p.saturation) * g);
                    }
                }
            }
            JitterOp::Hue if p.hue != 0.0 && channels == 3 => {
                for px in data.chunks_exact_mut(3) {
                    let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
                    let (r, g, b) = hsv_to_rgb(h + p.hue, s, v);
                    px[0] = clamp01(r);
                    px[1] = clamp01(g);
                    px[2] = clamp01(b);
                }
            }
            _ => {}
        }
    }
}

pub fn apply_jitter(img: &Image, p: &JitterParams) -> Image {
    let mut data = img.data().to_vec();
    jitter_pixels(&mut data, img.channels(), p);
    Image::from_raw_clamped(img.height(), img.width(), img.channels(), data)
}

/// Random brightness/contrast/saturation/hue jitter in a random order.
pub fn color_jitter(img: &Image, rng: &mut RngStream, strengths: &JitterStrengths) -> Result<Image> {
    strengths.validate()?;
    let p = sample_jitter(rng, strengths);
    Ok(apply_jitter(img, &p))
}

/// Replaces every channel with the luma of the pixel. Single-channel images pass through.
pub fn grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let data: Vec<f32> = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| {
            let g = luma(px);
            [g, g, g]
        })
        .collect();
    Image::from_raw_clamped(img.height(), img.width(), 3, data)
}
