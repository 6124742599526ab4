//! Desk-scale self-supervised sentence-embedding training toolkit.
//!
//! Implements and compares the sample-contrastive InfoNCE objective against
//! the dimension-contrastive Barlow Twins and VICReg objectives, with text
//! augmentation strategies, a seeded training loop with dev-set checkpoint
//! selection, hyperparameter sweeps, and embedding-quality metrics.

pub mod augment;
pub mod cli;
pub mod datakit;
pub mod encoder;
pub mod losses;
pub mod mathcore;
pub mod metrics;
pub mod trainer;

pub use mathcore::{MathError, RealMatrix};
