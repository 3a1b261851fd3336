//! Convolutional sparse coding toolkit for grayscale image denoising.
//!
//! The crate is organized around a small set of building blocks:
//!
//! - [`image`]: float raster images, patch extraction/placement, noise
//!   injection and PSNR.
//! - [`dict`]: local dictionaries (notably the overcomplete 2D-DCT) and
//!   coherence/sparsity diagnostics.
//! - [`convop`]: the strided convolutional dictionary as an explicit
//!   synthesis/analysis operator pair, plus power-method spectral norms.
//! - [`pursuit`]: soft thresholding, ISTA/FISTA, error-bounded basis
//!   pursuit and least-squares debiasing.
//! - [`denoise`]: the patch-averaging estimator and the shift-averaged
//!   strided-CSC estimator built on top of `pursuit`.
//! - [`lista`]: an unrolled iterative-thresholding network with learned
//!   filter banks, hand-derived gradients and an ADAM trainer.
//! - [`container`]: the versioned binary container used for dictionaries,
//!   checkpoints and float images.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); concrete aliases for the common case live at the
//! crate root.

pub mod container;
pub mod convop;
pub mod corpus;
pub mod denoise;
pub mod dict;
pub mod error;
pub mod image;
pub mod lista;
pub mod pgm;
pub mod pursuit;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use convop::{FeatureMaps, ImageOp, StridedConvOp};
pub use dict::LocalDictionary;
pub use image::{Boundary, Image, PatchIndex};

/// Double-precision aliases; the CLI and most tests work in `f64`.
pub type ImageF64 = image::Image<f64>;
pub type DictionaryF64 = dict::LocalDictionary<f64>;
pub type FeatureMapsF64 = convop::FeatureMaps<f64>;

/// Single-precision aliases for throughput-bound experiments.
pub type ImageF32 = image::Image<f32>;
pub type DictionaryF32 = dict::LocalDictionary<f32>;
pub type FeatureMapsF32 = convop::FeatureMaps<f32>;
