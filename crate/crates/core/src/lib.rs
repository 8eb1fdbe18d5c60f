//! Influenza mortality modeling toolkit.
//!
//! The pipeline completes a sparse region × indicator panel, checks yearly
//! periodicity of weekly activity, extracts nonlinear features with an
//! autoencoder followed by PCA, and regresses standardized log mortality on
//! them, optionally rectified by a migration/trade flow kernel.

pub mod classify;
pub mod completion;
pub mod data;
pub mod encode;
pub mod error;
pub mod linalg;
pub mod pca;
pub mod regress;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod pipeline;

pub use error::{Error, Result};
