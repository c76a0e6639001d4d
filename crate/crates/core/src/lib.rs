//! Mask-constrained few-step diffusion GAN for synthesizing industrial
//! surface defects together with pixel-exact anomaly masks.
//!
//! The library is organized around a small number of moving parts:
//!
//! - [`schedule`] — the discrete forward-diffusion noise schedule and its
//!   closed-form posterior coefficients.
//! - [`rcd`] — region-constrained reverse sampling: posterior steps whose
//!   background pixels are frozen to the noisy input by a binary mask.
//! - [`models`] — the clean-image generator and the dual-branch
//!   mask-guided discriminator, built on the [`nn`] autodiff engine.
//! - [`losses`] — softplus adversarial losses, region-weighted
//!   reconstruction, and the R1 gradient penalty.
//! - [`maskgen`] — procedural binary anomaly masks with exact coverage.
//! - [`train`] — the alternating adversarial training loop with EMA
//!   tracking and resumable checkpoints.
//! - [`pipeline`] — toy dataset generation, MVTec-style ingestion, and
//!   batch synthesis of image–mask pairs.
//! - [`segeval`] — a tiny downstream segmenter plus mIoU / pixel-accuracy
//!   metrics for scoring synthetic data quality.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod image;
pub mod losses;
pub mod maskgen;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rcd;
pub mod schedule;
pub mod segeval;
pub mod train;

pub use error::{Error, Result};
pub use image::{AnomalyMask, ImageBatch};
pub use schedule::NoiseSchedule;
