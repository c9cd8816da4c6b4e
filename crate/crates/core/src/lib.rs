//! Rate–distortion optimization driven by linearized, smoothed and ensembled
//! no-reference quality metrics.

pub mod analysis;
pub mod blockcodec;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod overfit;
pub mod rdo;
pub mod rng;
pub mod selftest;
pub mod smoothing;
pub mod synth;

pub use error::{Error, Result};
pub use image::{psnr, sse, BlockView, Geometry, GradientField, Image};
