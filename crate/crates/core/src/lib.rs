//! Multimodal (visible + infrared) Gaussian splatting with a learned
//! cross-modal opacity modulator and direct fused rendering.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file fix the production precision.

pub mod cma;
pub mod dataio;
pub mod error;
pub mod evalmetrics;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod optimizer;
pub mod rasterizer;
pub mod scalar;
pub mod scene;

mod fsutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by the command-line pipeline.
pub type Real = f32;

pub type Camera = geometry::Camera<Real>;
pub type Image = image::ImageBuffer<Real>;
pub type Primitive = scene::GaussianPrimitive<Real>;
pub type Scene = scene::MultimodalScene<Real>;
