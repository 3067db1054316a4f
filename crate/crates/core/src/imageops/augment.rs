use crate::error::Result;
use crate::image::{AlphaMask, Image};
use crate::imageops::blend::smooth_blend;
use crate::imageops::color::{apply_jitter, grayscale, sample_jitter};
use crate::imageops::geometry::{gaussian_blur, hflip, resample_crop, resize, sample_crop, AspectMode};
use crate::imageops::{AugConfig, StrongConfig, WeakConfig};
use crate::rng::RngStream;

/// Mild global variation: hflip → aspect-preserving crop → color jitter → blur.
pub fn weak_augment(img: &Image, rng: &mut RngStream, cfg: &WeakConfig, out: usize) -> Result<Image> {
    cfg.validate()?;
    let mut cur = if rng.bernoulli(cfg.hflip_p) { hflip(img) } else { img.clone() };
    let crop = sample_crop(cur.height(), cur.width(), rng, cfg.crop_scale, AspectMode::Preserve);
    cur = resample_crop(&cur, &crop, out);
    if rng.bernoulli(cfg.jitter_p) {
        let p = sample_jitter(rng, &cfg.jitter);
        cur = apply_jitter(&cur, &p);
    }
    if rng.bernoulli(cfg.blur_p) {
        let s = rng.uniform(cfg.blur_sigma.0, cfg.blur_sigma.1);
        cur = gaussian_blur(&cur, s, s)?;
    }
    Ok(cur)
}

/// Contrastive-baseline view: crop → hflip → color jitter → grayscale → blur.
pub fn strong_augment(img: &Image, rng: &mut RngStream, cfg: &StrongConfig, out: usize) -> Result<Image> {
    cfg.validate()?;
    let crop = sample_crop(
        img.height(),
        img.width(),
        rng,
        cfg.crop_scale,
        AspectMode::Range(cfg.crop_ratio.0, cfg.crop_ratio.1),
    );
    let mut cur = resample_crop(img, &crop, out);
    if rng.bernoulli(cfg.hflip_p) {
        cur = hflip(&cur);
    }
    if rng.bernoulli(cfg.jitter_p) {
        let p = sample_jitter(rng, &cfg.jitter);
        cur = apply_jitter(&cur, &p);
    }
    if rng.bernoulli(cfg.grayscale_p) {
        cur = grayscale(&cur);
    }
    if rng.bernoulli(cfg.blur_p) {
        let s = rng.uniform(cfg.blur_sigma.0, cfg.blur_sigma.1);
        cur = gaussian_blur(&cur, s, s)?;
    }
    Ok(cur)
}

/// Anchor, SPD positive and SPD negative for one image, plus the negative's
/// blend mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdTriplet {
    pub anchor: Image,
    pub positive: Image,
    pub negative: Image,
    /// Weak view the negative was blended from.
    pub negative_base: Image,
    pub mask: AlphaMask,
}

const POSITIVE_STREAM: u64 = 1;
const NEGATIVE_VIEW_STREAM: u64 = 2;
const BLEND_STREAM: u64 = 3;

/// Anchor is the plain resized image, the positive a weak view, and the
/// negative a second weak view with one SmoothBlend patch. Each random step
/// draws from its own sub-stream of `rng`.
pub fn make_spd_triplet(img: &Image, rng: &RngStream, cfg: &AugConfig) -> Result<SpdTriplet> {
    cfg.validate()?;
    let out = cfg.out_size;
    let anchor = resize(img, out);
    let positive = weak_augment(img, &mut rng.substream(POSITIVE_STREAM), &cfg.weak, out)?;
    let negative_base = weak_augment(img, &mut rng.substream(NEGATIVE_VIEW_STREAM), &cfg.weak, out)?;
    let (negative, mask) = smooth_blend(&negative_base, &mut rng.substream(BLEND_STREAM), &cfg.smoothblend)?;
    Ok(SpdTriplet {
        anchor,
        positive,
        negative,
        negative_base,
        mask,
    })
}
