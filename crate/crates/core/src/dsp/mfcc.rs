use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{MelFilterbank, FRAME_HOP, FRAME_LEN, LOG_FLOOR, N_FFT};
use crate::{Error, Result, N_FRAMES, WINDOW_LEN};

pub type Frame = [f64; FRAME_LEN];

fn hamming() -> Frame {
    std::array::from_fn(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (FRAME_LEN - 1) as f64).cos())
}

/// Split a 2000-sample window into 99 Hamming-windowed 40-sample frames;
/// frame `t` covers samples `[20t, 20t + 40)`.
pub fn frame_signal(window: &[f64]) -> Result<Vec<Frame>> {
    if window.len() != WINDOW_LEN {
        return Err(Error::shape("frame_signal input", &[WINDOW_LEN], &[window.len()]));
    }
    let w = hamming();
    Ok((0..N_FRAMES)
        .map(|t| {
            let seg = &window[t * FRAME_HOP..t * FRAME_HOP + FRAME_LEN];
            std::array::from_fn(|i| seg[i] * w[i])
        })
        .collect())
}

/// Orthonormal DCT-II basis, row `k` holds the `k`-th cosine.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[k * n + i] = s * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// Reusable MFCC pipeline for one filterbank.
#[derive(Clone)]
pub struct MfccExtractor {
    fb: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
    dct: Vec<f64>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("fb", &self.fb)
            .finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(fb: MelFilterbank) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        let dct = dct_matrix(fb.n_filters);
        Self { fb, fft, dct }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.fb
    }

    /// Log filterbank energies, row-major `[n_filters × 99]`.
    pub fn log_energies(&self, window: &[f64]) -> Result<Vec<f64>> {
        let frames = frame_signal(window)?;
        let nf = self.fb.n_filters;
        let nb = self.fb.n_bins();
        let mut out = vec![0.0; nf * N_FRAMES];
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut power = vec![0.0; nb];
        for (t, frame) in frames.iter().enumerate() {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (b, &x) in buf.iter_mut().zip(frame.iter()) {
                b.re = x;
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for f in 0..nf {
                let e: f64 = self.fb.filter(f).iter().zip(&power).map(|(w, p)| w * p).sum();
                out[f * N_FRAMES + t] = e.max(LOG_FLOOR).ln();
            }
        }
        Ok(out)
    }

    /// MFCCs, row-major `[n_filters × 99]`; all coefficients including c0.
    pub fn extract(&self, window: &[f64]) -> Result<Vec<f64>> {
        let loge = self.log_energies(window)?;
        let n = self.fb.n_filters;
        let mut out = vec![0.0; n * N_FRAMES];
        for t in 0..N_FRAMES {
            for k in 0..n {
                out[k * N_FRAMES + t] = (0..n).map(|i| self.dct[k * n + i] * loge[i * N_FRAMES + t]).sum();
            }
        }
        Ok(out)
    }
}

pub fn mfcc(window: &[f64], fb: &MelFilterbank) -> Result<Vec<f64>> {
    MfccExtractor::new(fb.clone()).extract(window)
}
