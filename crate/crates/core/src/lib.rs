//! Self-organized operational neural networks in one dimension.
//!
//! Generative neurons replace the fixed linear kernel of a convolution with
//! a learnable power series per tap. This crate provides the layer (naive,
//! per-power convolution, and single matrix-vector forms, plus analytic
//! back-propagation), a small UNet built from it, and the surrounding
//! pipeline for R-peak detection in single-lead ECG: synthetic data,
//! segmentation and normalization, pulse-train targets, peak extraction,
//! tolerance matching and detection metrics, and on-disk formats.

pub mod conv;
pub mod data;
pub mod error;
pub mod generative;
pub mod network;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use generative::{ForwardCache, GenerativeLayer, LayerGradients, LayerShape};
pub use network::{Model, NetworkConfig};
pub use tensor::{Matrix, Padding, Vector};
