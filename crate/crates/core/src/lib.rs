//! Post-processing of ensemble temperature forecasts into calibrated
//! predictive distributions.
//!
//! Model families: EMOS (global and per station), per-station gradient
//! boosted EMOS, quantile regression forests, and small neural networks
//! with optional station embeddings. All of them share the data model in
//! [`data`], the scores in [`scoring`] and the verification tools in
//! [`verification`].

pub mod artifact;
pub mod boosting;
pub mod data;
pub mod emos;
pub mod error;
pub mod evaluation;
pub mod importance;
pub mod models;
pub mod network;
pub mod qrf;
pub mod scoring;
pub mod synthetic;
pub mod verification;

pub use error::{Error, Result};
