//! Joint estimation of per-image illumination and per-material reflectance from
//! linked observations of materials under illuminations.
//!
//! Illumination is a mixture of isotropic spherical Gaussians, materials are
//! Lambertian plus GGX, and the inverse problem is driven by two small neural
//! networks that approximate single-lobe reflection and supply gradients.

pub mod brdf;
pub mod dataset;
pub mod envfit;
pub mod estimator;
pub mod eval;
pub mod error;
pub mod image;
pub mod lbfgs;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod pfm;
pub mod scene;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
