use crate::error::{invalid, Result};
use crate::imageops::JitterStrengths;

/// Where the cut patch lands in the foreground layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PatchPlacement {
    /// Uniform over every position that keeps the patch inside the image.
    #[default]
    Random,
    /// Back on top of its own source location.
    InPlace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothBlendConfig {
    /// Patch area as a fraction of the image area.
    pub area: (f64, f64),
    /// Patch width / height.
    pub aspect: (f64, f64),
    /// Gaussian std (y, x) applied to the binary alpha mask.
    pub mask_sigma: (f64, f64),
    pub jitter: JitterStrengths,
    pub placement: PatchPlacement,
}

impl Default for SmoothBlendConfig {
    fn default() -> Self {
        Self {
            area: (0.005, 0.01),
            aspect: (0.3, 3.0),
            mask_sigma: (8.0, 8.0),
            jitter: JitterStrengths::new(0.1, 0.1, 0.1, 0.05),
            placement: PatchPlacement::Random,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakConfig {
    pub hflip_p: f64,
    /// Crop area fraction; aspect ratio of the source is kept.
    pub crop_scale: (f64, f64),
    pub jitter: JitterStrengths,
    pub jitter_p: f64,
    pub blur_sigma: (f64, f64),
    pub blur_p: f64,
}

impl Default for WeakConfig {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            crop_scale: (0.9, 1.0),
            jitter: JitterStrengths::new(0.1, 0.1, 0.1, 0.05),
            jitter_p: 0.8,
            blur_sigma: (0.1, 0.3),
            blur_p: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongConfig {
    pub crop_scale: (f64, f64),
    pub crop_ratio: (f64, f64),
    pub hflip_p: f64,
    pub jitter: JitterStrengths,
    pub jitter_p: f64,
    pub grayscale_p: f64,
    pub blur_sigma: (f64, f64),
    pub blur_p: f64,
}

impl Default for StrongConfig {
    fn default() -> Self {
        Self {
            crop_scale: (0.2, 1.0),
            crop_ratio: (3.0 / 4.0, 4.0 / 3.0),
            hflip_p: 0.5,
            jitter: JitterStrengths::new(0.4, 0.4, 0.4, 0.1),
            jitter_p: 0.8,
            grayscale_p: 0.2,
            blur_sigma: (0.1, 2.0),
            blur_p: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugConfig {
    pub smoothblend: SmoothBlendConfig,
    pub weak: WeakConfig,
    pub strong: StrongConfig,
    /// Side length of every augmented output.
    pub out_size: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            smoothblend: SmoothBlendConfig::default(),
            weak: WeakConfig::default(),
            strong: StrongConfig::default(),
            out_size: 64,
        }
    }
}

fn range(name: &str, r: (f64, f64), lo: f64, hi: f64) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite() && lo <= r.0 && r.0 <= r.1 && r.1 <= hi) {
        return Err(invalid!("{} range {:?} must be ordered within [{}, {}]", name, r, lo, hi));
    }
    Ok(())
}

fn prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid!("{} probability {} outside [0, 1]", name, p));
    }
    Ok(())
}

impl SmoothBlendConfig {
    pub fn validate(&self) -> Result<()> {
        range("patch area", self.area, f64::MIN_POSITIVE, 1.0)?;
        range("patch aspect", self.aspect, f64::MIN_POSITIVE, f64::MAX)?;
        if !(self.mask_sigma.0 >= 0.0 && self.mask_sigma.1 >= 0.0) {
            return Err(invalid!("mask sigma {:?} must be non-negative", self.mask_sigma));
        }
        self.jitter.validate()
    }
}

impl WeakConfig {
    pub fn validate(&self) -> Result<()> {
        prob("hflip", self.hflip_p)?;
        prob("jitter", self.jitter_p)?;
        prob("blur", self.blur_p)?;
        range("crop scale", self.crop_scale, f64::MIN_POSITIVE, 1.0)?;
        range("blur sigma", self.blur_sigma, 0.0, f64::MAX)?;
        self.jitter.validate()
    }
}

impl StrongConfig {
    pub fn validate(&self) -> Result<()> {
        prob("hflip", self.hflip_p)?;
        prob("jitter", self.jitter_p)?;
        prob("grayscale", self.grayscale_p)?;
        prob("blur", self.blur_p)?;
        range("crop scale", self.crop_scale, f64::MIN_POSITIVE, 1.0)?;
        range("crop ratio", self.crop_ratio, f64::MIN_POSITIVE, f64::MAX)?;
        range("blur sigma", self.blur_sigma, 0.0, f64::MAX)?;
        self.jitter.validate()
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_size < crate::image::MIN_SIDE {
            return Err(invalid!("output size {} below {}", self.out_size, crate::image::MIN_SIDE));
        }
        self.smoothblend.validate()?;
        self.weak.validate()?;
        self.strong.validate()
    }
}
