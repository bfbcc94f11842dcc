//! Reduced-order forecasting of advection-diffusion tracer fields.
//!
//! The pipeline generates synthetic snapshots on a regular grid
//! ([`snapshots`]), compresses them with truncated PCA ([`pca`]), and trains
//! LSTM forecasters on the principal-component scores either with plain MSE
//! or with an additional adversarial loss from an LSTM discriminator
//! ([`training`]). [`forecast`] rolls the models out autoregressively and
//! compares their error growth.

pub mod cli;
pub mod container;
pub mod error;
pub mod forecast;
pub mod linalg;
pub mod neural;
pub mod optim;
pub mod pca;
pub mod snapshots;
pub mod training;

pub use error::{Error, Result};
