//! Spot-the-difference (SPD) contrastive pre-training and the evaluation stack
//! around it.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation:
//! image augmentations, a small reverse-mode network, the contrastive and
//! classification objectives, a per-patch Gaussian anomaly scorer, ranking
//! metrics, and dataset split protocols. File formats and the command line
//! live in the `spd` crate.
//!
//! Enable the `std` feature to let the GEMM backend pick SIMD kernels at run
//! time.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod image;
pub mod imageops;
pub mod linalg;
pub mod metrics;
pub mod netcore;
pub mod objectives;
pub mod padim;
pub mod protocol;
pub mod raster;
pub mod real;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use image::{AlphaMask, BinaryMask, Image};
pub use real::Real;
pub use rng::RngStream;
pub use tensor::Tensor;
