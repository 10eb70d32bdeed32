//! Zero-reference joint low-light enhancement and denoising.
//!
//! A low-light image is split into two neighbor-masked sub-images; the second
//! is gamma-brightened so the pair shares reflectance but differs in
//! illumination and noise. A Retinex network decomposes both, guided by
//! illumination and DCT band priors, and is trained with reflectance
//! consistency, illumination smoothness and exposure/color losses. No
//! normal-light reference is ever read.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dct;
pub mod error;
pub mod image;
pub mod infer;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod pairgen;
pub mod priors;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
pub use image::ImageRGB;
pub use config::TrainConfig;
pub use train::TrainState;
