//! Domain generalization toolkit built around joint covariate alignment
//! (MMD / CORAL between seen-domain feature distributions) and concept
//! alignment (IRM penalty plus class-conditional entropy).
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: a small f64 tensor type with a reverse-mode tape, convnet
//!   ops and an SGD optimizer with step decay.
//! * [`penalties`]: alignment penalties and the composite training objectives.
//! * [`datasets`]: MNIST IDX ingestion and the CMNIST / CS-CMNIST generators.
//! * [`models`]: featurizer and classifier head architectures.
//! * [`trainer`]: training loop, random search, model selection, aggregation.
//! * [`bounds`]: exact evaluation of the unseen-domain risk bound on finite
//!   latent spaces.

pub mod bounds;
pub mod datasets;
mod error;
pub mod models;
pub mod penalties;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
