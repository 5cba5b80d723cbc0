//! rebalance-forge: imbalance-aware synthetic-injection planning, a slime
//! mould hyperparameter optimizer, an executable shape model of a
//! customized progressive GAN, and a cross-validation metrics protocol,
//! wired together by a desk-scale toy pipeline.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`manifest`]: dataset manifests and per-label statistics
//! - [`rebalance`]: complementary frequencies, injection weights, and
//!   integer injection plans
//! - [`sma`]: bounded continuous minimization
//! - [`progan`]: layer shape calculus, builtin generator/critic
//!   descriptions, the progression schedule, and the WGAN-GP loss
//! - [`evaluation`]: stratified fold planning, confusion matrices,
//!   macro metrics, and cross-fold aggregation
//! - [`toy`]: the seconds-fast surrogate for the GPU-scale components
//! - [`cli`]: the `rebalance-forge` executable

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod progan;
pub mod rebalance;
pub mod sma;
pub mod toy;

pub use error::{Error, Result};
