//! Denoising and demosaicking for division-of-focal-plane polarization
//! sensors.
//!
//! The crate covers monochrome (MPFA) and color (CPFA) polarization filter
//! arrays with a denoise-then-demosaick pipeline: pseudo four-channel BM3D
//! denoising in a PCA-decorrelated domain followed by intensity-guided
//! residual interpolation. Around it sit Stokes/DoP/AoP computation, the
//! evaluation metrics, the ground-truth construction procedure for
//! burst captures, synthetic scene generation, and a benchmark harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod dataset;
pub mod demosaic;
pub mod denoise;
pub mod error;
pub mod imagecore;
pub mod metrics;
pub mod mosaic;
pub mod pipeline;
pub mod polarimetry;
pub mod scalar;

pub use error::{Error, Result};
pub use imagecore::{
    Angle, Channel, Color, MosaicImage, MpfaLayout, PatternDescriptor, PatternKind, Plane,
    PolarizationStack, RgbImage,
};
pub use scalar::Scalar;

pub type PlaneF32 = Plane<f32>;
pub type PlaneF64 = Plane<f64>;
pub type MosaicF32 = MosaicImage<f32>;
pub type MosaicF64 = MosaicImage<f64>;
pub type StackF32 = PolarizationStack<f32>;
pub type StackF64 = PolarizationStack<f64>;
