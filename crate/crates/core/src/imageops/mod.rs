//! Seed-reproducible image transformations: SmoothBlend and CutPaste local
//! perturbations, weak and strong global augmentations, and the
//! anchor/positive/negative triplet used by the spot-the-difference objective.
//!
//! Every stochastic operation is split into a `sample_*` step that draws a
//! plan from an [`RngStream`](crate::RngStream) and an `apply_*` step that is a
//! pure function of the image and the plan.

mod augment;
mod blend;
mod color;
mod config;
mod geometry;

pub use augment::{make_spd_triplet, strong_augment, weak_augment, SpdTriplet};
pub use blend::{apply_blend, cut_paste, sample_blend_plan, sample_patch_box, smooth_blend, BlendPlan, PatchBox};
pub use color::{apply_jitter, color_jitter, grayscale, sample_jitter, JitterOp, JitterParams, JitterStrengths};
pub use config::{AugConfig, PatchPlacement, SmoothBlendConfig, StrongConfig, WeakConfig};
pub use geometry::{
    gaussian_blur, hflip, random_resized_crop, resample_crop, resize, sample_crop, AspectMode, CropBox,
};
