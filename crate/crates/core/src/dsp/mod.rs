//! MFCC, Δ and Δ² feature maps for 1 s windows at 2 kHz.
//!
//! Frames are 40 samples (20 ms) with a 20-sample (10 ms) hop, which gives 99
//! frames per window. Each frame is Hamming-windowed, zero-padded to a 64-point
//! DFT, passed through a mel filterbank, log-compressed and decorrelated with an
//! orthonormal DCT-II; every coefficient is kept.

pub mod delta;
pub mod features;
pub mod mel;
pub mod mfcc;

pub use delta::delta;
pub use features::{build_feature_map, FeatureExtractor, FeatureMap, FeatureVariant};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use mfcc::{frame_signal, mfcc, MfccExtractor};

pub const FRAME_LEN: usize = 40;
pub const FRAME_HOP: usize = 20;
pub const N_FFT: usize = 64;
pub const LOG_FLOOR: f64 = 1e-10;
pub const FRAME_HOP_S: f64 = 0.010;
pub const FRAME_LEN_S: f64 = 0.020;
