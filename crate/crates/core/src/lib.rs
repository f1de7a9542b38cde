//! Stain deconvolution and virtual HES restaining toolkit.
//!
//! Numeric containers are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the precision for common use.

// `!(x >= 0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod imaging;
pub mod linalg;
pub mod metrics;
pub mod predictor;
pub mod reconstruct;
pub mod registration;
mod scalar;
pub mod stain;
pub mod synth;

pub use error::{Error, Result};
pub use imaging::{BinaryMask, ConcentrationMap, OdImage, RgbImage, StainMatrix};
pub use registration::AffineTransform;
pub use scalar::Scalar;

pub type OdImage64 = OdImage<f64>;
pub type OdImage32 = OdImage<f32>;
pub type ConcentrationMap64 = ConcentrationMap<f64>;
pub type ConcentrationMap32 = ConcentrationMap<f32>;
pub type StainMatrix64 = StainMatrix<f64>;
pub type StainMatrix32 = StainMatrix<f32>;
pub type Affine64 = AffineTransform<f64>;
pub type Affine32 = AffineTransform<f32>;
pub type LinearModel64 = predictor::LinearSaffronModel<f64>;
pub type MetricReport64 = metrics::MetricReport<f64>;
