use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::image::{AlphaMask, Image};
use crate::imageops::color::{jitter_pixels, sample_jitter, JitterParams};
use crate::imageops::{PatchPlacement, SmoothBlendConfig};
use crate::raster::blur_plane;
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

/// Axis-aligned patch, in whole pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchBox {
    pub top: usize,
    pub left: usize,
    pub box_h: usize,
    pub box_w: usize,
}

impl PatchBox {
    pub fn area_fraction(&self, h: usize, w: usize) -> f64 {
        (self.box_h * self.box_w) as f64 / (h * w) as f64
    }

    pub fn aspect(&self) -> f64 {
        self.box_w as f64 / self.box_h as f64
    }
}

/// Everything a blend needs besides the image: where the patch comes from,
/// where it goes, and how it is recolored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendPlan {
    pub source: PatchBox,
    pub dest_top: usize,
    pub dest_left: usize,
    pub jitter: JitterParams,
}

fn box_ok(bh: usize, bw: usize, h: usize, w: usize, cfg: &SmoothBlendConfig) -> bool {
    if bh == 0 || bw == 0 || bh > h || bw > w {
        return false;
    }
    let frac = (bh * bw) as f64 / (h * w) as f64;
    let ar = bw as f64 / bh as f64;
    cfg.area.0 <= frac && frac <= cfg.area.1 && cfg.aspect.0 <= ar && ar <= cfg.aspect.1
}

/// Draws patch dimensions (area fraction uniform, aspect log-uniform) and a
/// uniformly random in-bounds source position.
pub fn sample_patch_box(h: usize, w: usize, rng: &mut RngStream, cfg: &SmoothBlendConfig) -> Result<PatchBox> {
    let area = (h * w) as f64;
    let mut dims = None;
    for _ in 0..100 {
        let frac = rng.uniform(cfg.area.0, cfg.area.1);
        let ar = rng.log_uniform(cfg.aspect.0, cfg.aspect.1);
        let bh = (frac * area / ar).sqrt().round() as usize;
        let bw = (frac * area * ar).sqrt().round() as usize;
        if box_ok(bh, bw, h, w, cfg) {
            dims = Some((bh, bw));
            break;
        }
    }
    let (box_h, box_w) = match dims {
        Some(d) => d,
        None => {
            // Rounding kept missing the admissible set (tiny images); pick
            // uniformly among every admissible integer size instead.
            let valid: Vec<(usize, usize)> = (1..=h)
                .flat_map(|bh| (1..=w).map(move |bw| (bh, bw)))
                .filter(|&(bh, bw)| box_ok(bh, bw, h, w, cfg))
                .collect();
            if valid.is_empty() {
                return Err(invalid!(
                    "{}x{} image admits no patch with area fraction in {:?} and aspect in {:?}",
                    h,
                    w,
                    cfg.area,
                    cfg.aspect
                ));
            }
            valid[rng.below(valid.len())]
        }
    };
    Ok(PatchBox {
        top: rng.below(h - box_h + 1),
        left: rng.below(w - box_w + 1),
        box_h,
        box_w,
    })
}

pub fn sample_blend_plan(img: &Image, rng: &mut RngStream, cfg: &SmoothBlendConfig) -> Result<BlendPlan> {
    cfg.validate()?;
    let (h, w) = (img.height(), img.width());
    let source = sample_patch_box(h, w, rng, cfg)?;
    let (dest_top, dest_left) = match cfg.placement {
        PatchPlacement::Random => (rng.below(h - source.box_h + 1), rng.below(w - source.box_w + 1)),
        PatchPlacement::InPlace => (source.top, source.left),
    };
    let jitter = sample_jitter(rng, &cfg.jitter);
    Ok(BlendPlan {
        source,
        dest_top,
        dest_left,
        jitter,
    })
}

/// Pastes the recolored patch into an all-zero foreground `u`, builds the
/// binary alpha, blurs it with `mask_sigma`, and returns
/// `(1 - α) ⊙ img + α ⊙ u` together with `α`.
pub fn apply_blend(img: &Image, plan: &BlendPlan, mask_sigma: (f64, f64)) -> Result<(Image, AlphaMask)> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let s = plan.source;
    if s.top + s.box_h > h || s.left + s.box_w > w || plan.dest_top + s.box_h > h || plan.dest_left + s.box_w > w {
        return Err(invalid!("blend plan {:?} does not fit a {}x{} image", plan, h, w));
    }
    if !(mask_sigma.0 >= 0.0 && mask_sigma.1 >= 0.0) {
        return Err(invalid!("mask sigma {:?} must be non-negative", mask_sigma));
    }

    let mut patch = Vec::with_capacity(s.box_h * s.box_w * c);
    for y in s.top..s.top + s.box_h {
        let row = (y * w + s.left) * c;
        patch.extend_from_slice(&img.data()[row..row + s.box_w * c]);
    }
    jitter_pixels(&mut patch, c, &plan.jitter);

    let mut fg = vec![0.0f32; h * w * c];
    let mut alpha = vec![0.0f32; h * w];
    for (py, prow) in patch.chunks_exact(s.box_w * c).enumerate() {
        let y = plan.dest_top + py;
        let at = (y * w + plan.dest_left) * c;
        fg[at..at + prow.len()].copy_from_slice(prow);
        alpha[y * w + plan.dest_left..y * w + plan.dest_left + s.box_w].fill(1.0);
    }
    if mask_sigma.0 > 0.0 || mask_sigma.1 > 0.0 {
        alpha = blur_plane(&alpha, h, w, mask_sigma.0, mask_sigma.1);
        for a in &mut alpha {
            *a = a.clamp(0.0, 1.0);
        }
    }

    let mut out = img.data().to_vec();
    for (i, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for k in 0..c {
            let j = i * c + k;
            out[j] = (1.0 - a) * out[j] + a * fg[j];
        }
    }
    Ok((Image::from_raw_clamped(h, w, c, out), AlphaMask::new(h, w, alpha)?))
}

/// SmoothBlend: one recolored patch blended in through a Gaussian-blurred alpha.
pub fn smooth_blend(img: &Image, rng: &mut RngStream, cfg: &SmoothBlendConfig) -> Result<(Image, AlphaMask)> {
    let plan = sample_blend_plan(img, rng, cfg)?;
    apply_blend(img, &plan, cfg.mask_sigma)
}

/// CutPaste: the same draw as [`smooth_blend`] with a sharp binary alpha.
pub fn cut_paste(img: &Image, rng: &mut RngStream, cfg: &SmoothBlendConfig) -> Result<(Image, AlphaMask)> {
    let plan = sample_blend_plan(img, rng, cfg)?;
    apply_blend(img, &plan, (0.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::JitterStrengths;

    fn textured(n: usize) -> Image {
        Image::from_fn(n, n, 3, |y, x, c| (0.5 + 0.4 * ((y * 3 + x * 7 + c * 5) % 11) as f32 / 11.0).min(1.0)).unwrap()
    }

    fn identity_cfg() -> SmoothBlendConfig {
        SmoothBlendConfig {
            jitter: JitterStrengths::none(),
            placement: PatchPlacement::InPlace,
            ..SmoothBlendConfig::default()
        }
    }

    #[test]
    fn in_place_zero_jitter_sharp_is_identity() {
        let img = textured(64);
        let cfg = SmoothBlendConfig {
            mask_sigma: (0.0, 0.0),
            ..identity_cfg()
        };
        let mut rng = RngStream::new(4, 4);
        for _ in 0..20 {
            let (out, mask) = smooth_blend(&img, &mut rng, &cfg).unwrap();
            assert_eq!(out, img);
            assert!(mask.support() > 0);
            let (cp, _) = cut_paste(&img, &mut rng, &identity_cfg()).unwrap();
            assert_eq!(cp, img);
        }
    }

    #[test]
    fn half_alpha_scalar_oracle() {
        let img = Image::filled(64, 64, 3, 0.5).unwrap();
        let plan = BlendPlan {
            source: PatchBox {
                top: 10,
                left: 10,
                box_h: 5,
                box_w: 6,
            },
            dest_top: 30,
            dest_left: 30,
            jitter: JitterParams::with_brightness(1.4),
        };
        let (out, mask) = apply_blend(&img, &plan, (8.0, 8.0)).unwrap();
        let (sharp, bin) = apply_blend(&img, &plan, (0.0, 0.0)).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let a = mask.get(y, x) as f64;
                let inside = bin.get(y, x) == 1.0;
                let u = if inside { 0.7 } else { 0.0 };
                let expect = (1.0 - a) * 0.5 + a * u;
                assert!((out.get(y, x, 0) as f64 - expect).abs() < 1e-6);
                let sharp_expect = if inside { 0.7 } else { 0.5 };
                assert!((sharp.get(y, x, 1) - sharp_expect).abs() < 1e-6);
            }
        }
        assert!(bin.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(bin.support(), 30);
    }

    #[test]
    fn blend_at_alpha_half_gives_midpoint() {
        // (1 - 0.5) * 0.5 + 0.5 * 0.7
        let a = 0.5f32;
        assert!(((1.0 - a) * 0.5 + a * 0.7 - 0.6).abs() < 1e-7);
    }

    #[test]
    fn outside_mask_untouched() {
        let img = textured(64);
        let cfg = SmoothBlendConfig::default();
        let mut rng = RngStream::new(9, 1);
        for _ in 0..50 {
            let (out, mask) = smooth_blend(&img, &mut rng, &cfg).unwrap();
            for (i, &a) in mask.data().iter().enumerate() {
                if a == 0.0 {
                    for k in 0..3 {
                        assert_eq!(out.data()[i * 3 + k].to_bits(), img.data()[i * 3 + k].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_image_rejected() {
        let img = Image::filled(8, 8, 1, 0.3).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(smooth_blend(&img, &mut rng, &SmoothBlendConfig::default()), Err(crate::Error::InvalidInput(_))));
    }

    #[test]
    fn cut_paste_is_quantized_smooth_blend() {
        let img = textured(64);
        let cfg = SmoothBlendConfig::default();
        for seed in 0..20 {
            let (_, soft) = smooth_blend(&img, &mut RngStream::new(seed, 0), &cfg).unwrap();
            let (_, hard) = cut_paste(&img, &mut RngStream::new(seed, 0), &cfg).unwrap();
            let plan = sample_blend_plan(&img, &mut RngStream::new(seed, 0), &cfg).unwrap();
            let (_, unblurred) = apply_blend(&img, &plan, (0.0, 0.0)).unwrap();
            assert_eq!(hard, unblurred);
            assert!(soft.support() >= hard.support());
        }
    }
}
