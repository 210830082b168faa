//! Abnormal heart-sound classification from phonocardiogram (PCG) recordings.
//!
//! The crate covers the whole pipeline:
//!
//! - [`dataset`]: WAV/label ingestion, resampling to 2 kHz, 1 s windowing with a
//!   0.1 s hop, the balanced window database, recording-level stratified folds,
//!   and a synthetic PCG generator with known S1/S2 positions.
//! - [`dsp`]: MFCC, Δ and Δ² feature maps (`[6×99×3]`, `[6×99×1]`, `[26×99×1]`).
//! - [`nn`]: a small dense-tensor network engine (conv, max-pool, dense, dropout,
//!   max-norm, sigmoid/BCE, Adam).
//! - [`models`]: the segmenter-fed hybrid architectures, the CNN+MLP baseline
//!   and the segmentation-free final model, plus a heuristic envelope segmenter.
//! - [`eval`]: majority voting, confusion metrics and the cross-validation driver.
//! - [`interpret`]: exact and permutation-sampled Shapley values, column-grouped
//!   and intermediate-layer attribution, occlusion maps and heatmap rendering.

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod models;
pub mod nn;
pub mod rng;
pub mod tensor_io;

pub use error::{Error, Result};

/// Canonical sample rate of every recording after resampling.
pub const SAMPLE_RATE_HZ: u32 = 2000;
/// Samples in one analysis window (1 s).
pub const WINDOW_LEN: usize = 2000;
/// Hop between consecutive windows, in samples (0.1 s).
pub const WINDOW_HOP: usize = 200;
/// MFCC frames per window.
pub const N_FRAMES: usize = 99;
