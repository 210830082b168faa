use super::N_FFT;
use crate::{Error, Result, SAMPLE_RATE_HZ};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the `N_FFT/2 + 1` DFT bins, row-major `[n_filters × n_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_filters: usize,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub n_fft: usize,
    /// Left edge, center, right edge of each filter in Hz.
    pub edges_hz: Vec<(f64, f64, f64)>,
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        let nb = self.n_bins();
        &self.weights[i * nb..(i + 1) * nb]
    }

    pub fn centers_hz(&self) -> Vec<f64> {
        self.edges_hz.iter().map(|e| e.1).collect()
    }
}

/// Filters are triangular in mel between `n_filters + 2` equally mel-spaced
/// edge points. A filter too narrow to contain any bin strictly inside its
/// support gets unit weight on the bin nearest its center, so every filter
/// has positive total weight at the 31.25 Hz bin spacing.
pub fn mel_filterbank(n_filters: usize, f_lo_hz: f64, f_hi_hz: f64) -> Result<MelFilterbank> {
    let nyquist = SAMPLE_RATE_HZ as f64 / 2.0;
    if n_filters == 0 {
        return Err(Error::invalid("filterbank needs at least one filter"));
    }
    if !(f_lo_hz >= 0.0 && f_lo_hz < f_hi_hz && f_hi_hz <= nyquist) {
        return Err(Error::invalid(format!(
            "filterbank band ({f_lo_hz}, {f_hi_hz}) Hz must satisfy 0 <= lo < hi <= {nyquist}"
        )));
    }
    let n_bins = N_FFT / 2 + 1;
    let bin_hz = SAMPLE_RATE_HZ as f64 / N_FFT as f64;
    let (m_lo, m_hi) = (hz_to_mel(f_lo_hz), hz_to_mel(f_hi_hz));
    let step = (m_hi - m_lo) / (n_filters + 1) as f64;
    let mel_pts: Vec<f64> = (0..n_filters + 2).map(|i| m_lo + step * i as f64).collect();

    let mut weights = vec![0.0; n_filters * n_bins];
    let mut edges_hz = Vec::with_capacity(n_filters);
    for f in 0..n_filters {
        let (l, c, r) = (mel_pts[f], mel_pts[f + 1], mel_pts[f + 2]);
        edges_hz.push((mel_to_hz(l), mel_to_hz(c), mel_to_hz(r)));
        let row = &mut weights[f * n_bins..(f + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let m = hz_to_mel(k as f64 * bin_hz);
            *w = if m > l && m <= c {
                (m - l) / (c - l)
            } else if m > c && m < r {
                (r - m) / (r - c)
            } else {
                0.0
            };
        }
        if row.iter().all(|&w| w == 0.0) {
            let nearest = ((mel_to_hz(c) / bin_hz).round() as usize).min(n_bins - 1);
            row[nearest] = 1.0;
        }
    }
    Ok(MelFilterbank {
        n_filters,
        f_lo_hz,
        f_hi_hz,
        n_fft: N_FFT,
        edges_hz,
        weights,
    })
}
