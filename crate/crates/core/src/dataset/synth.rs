//! Synthetic phonocardiograms with known S1/S2 positions.
//!
//! Each beat is an S1 burst followed 0.30 s later by an S2 burst; both are
//! Gaussian-enveloped sums of tones drawn from their frequency bands. Abnormal
//! recordings add band-limited noise (a murmur) over systole. Beat timing,
//! murmur and background noise use independent random streams, so toggling
//! the murmur leaves everything else untouched up to the final peak
//! normalization.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Label, Recording, Source};
use crate::rng::stream;
use crate::{Error, Result, SAMPLE_RATE_HZ};

/// S1 onset-to-S2 spacing.
pub const SYSTOLE_S: f64 = 0.30;
pub const S1_DURATION_S: f64 = 0.10;
pub const S2_DURATION_S: f64 = 0.08;
const PEAK: f64 = 0.95;
const TONES_PER_BURST: usize = 3;
const MURMUR_TONES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub heart_rate_bpm: f64,
    /// Multiplicative beat-interval jitter, interval × (1 + jitter·U(−1, 1)).
    pub jitter: f64,
    pub s1_band_hz: (f64, f64),
    pub s2_band_hz: (f64, f64),
    pub murmur_band_hz: (f64, f64),
    /// Murmur RMS relative to a unit-amplitude S1 tone.
    pub murmur_amplitude: f64,
    /// Background noise RMS relative to the RMS of the S1/S2 component.
    pub noise_level: f64,
    pub abnormal: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 3.0,
            heart_rate_bpm: 72.0,
            jitter: 0.05,
            s1_band_hz: (30.0, 100.0),
            s2_band_hz: (50.0, 150.0),
            murmur_band_hz: (150.0, 400.0),
            murmur_amplitude: 0.3,
            // 10 dB SNR
            noise_level: 0.316,
            abnormal: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 1.0) {
            return Err(Error::invalid("synthetic duration must be at least 1 s"));
        }
        for (name, (lo, hi)) in [
            ("s1_band_hz", self.s1_band_hz),
            ("s2_band_hz", self.s2_band_hz),
            ("murmur_band_hz", self.murmur_band_hz),
        ] {
            if !(lo > 0.0 && hi < SAMPLE_RATE_HZ as f64 / 2.0 && lo < hi) {
                return Err(Error::invalid(format!(
                    "{name} ({lo}, {hi}) must satisfy 0 < lo < hi < 1000"
                )));
            }
        }
        if !(20.0..=250.0).contains(&self.heart_rate_bpm) {
            return Err(Error::invalid("heart rate must be within 20..=250 bpm"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::invalid("jitter must be within [0, 0.5)"));
        }
        if !(self.murmur_amplitude >= 0.0 && self.noise_level >= 0.0) {
            return Err(Error::invalid("murmur amplitude and noise level must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeartSound {
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartEvent {
    pub kind: HeartSound,
    pub center_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub recording: Recording,
    /// Events whose centers fall inside the recording, in time order.
    pub events: Vec<HeartEvent>,
}

impl SynthRecording {
    /// Event centers relative to a window starting at `start_s`, restricted to the window.
    pub fn events_in_window(&self, start_s: f64, len_s: f64) -> Vec<HeartEvent> {
        self.events
            .iter()
            .filter(|e| e.center_s >= start_s && e.center_s < start_s + len_s)
            .map(|e| HeartEvent {
                kind: e.kind,
                center_s: e.center_s - start_s,
            })
            .collect()
    }
}

pub fn synth_pcg(id: impl Into<String>, cfg: &SynthConfig) -> Result<SynthRecording> {
    cfg.validate()?;
    let fs = SAMPLE_RATE_HZ as f64;
    let n = (cfg.duration_s * fs).round() as usize;
    let mut beats_rng = stream(cfg.seed, &[1]);
    let mut murmur_rng = stream(cfg.seed, &[2]);
    let mut noise_rng = stream(cfg.seed, &[3]);

    let interval = 60.0 / cfg.heart_rate_bpm;
    let mut s1_centers = Vec::new();
    let mut t = interval * beats_rng.gen_range(0.1..0.4);
    while t < cfg.duration_s {
        s1_centers.push(t);
        t += interval * (1.0 + cfg.jitter * beats_rng.gen_range(-1.0..1.0));
    }

    let mut heart = vec![0.0; n];
    let mut events = Vec::new();
    for &c1 in &s1_centers {
        let c2 = c1 + SYSTOLE_S;
        let a1 = 1.0 + 0.1 * beats_rng.gen_range(-1.0..1.0);
        let a2 = 0.8 + 0.08 * beats_rng.gen_range(-1.0..1.0);
        add_burst(&mut heart, fs, c1, S1_DURATION_S, a1, cfg.s1_band_hz, &mut beats_rng);
        add_burst(&mut heart, fs, c2, S2_DURATION_S, a2, cfg.s2_band_hz, &mut beats_rng);
        events.push(HeartEvent {
            kind: HeartSound::S1,
            center_s: c1,
        });
        if c2 < cfg.duration_s {
            events.push(HeartEvent {
                kind: HeartSound::S2,
                center_s: c2,
            });
        }
    }

    let mut signal = heart.clone();
    if cfg.abnormal && cfg.murmur_amplitude > 0.0 {
        for &c1 in &s1_centers {
            let start = c1 + S1_DURATION_S / 2.0;
            let end = c1 + SYSTOLE_S - S2_DURATION_S / 2.0;
            add_murmur(
                &mut signal,
                fs,
                start,
                end,
                cfg.murmur_amplitude,
                cfg.murmur_band_hz,
                &mut murmur_rng,
            );
        }
    }

    if cfg.noise_level > 0.0 {
        let rms = (heart.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        let sigma = cfg.noise_level * rms;
        for x in &mut signal {
            let g: f64 = StandardNormal.sample(&mut noise_rng);
            *x += sigma * g;
        }
    }

    let peak = signal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        let scale = PEAK / peak;
        signal.iter_mut().for_each(|x| *x *= scale);
    }

    Ok(SynthRecording {
        recording: Recording {
            id: id.into(),
            samples: signal,
            sample_rate_hz: SAMPLE_RATE_HZ,
            label: if cfg.abnormal { Label::Abnormal } else { Label::Normal },
            source: Source::Synthetic,
        },
        events,
    })
}

fn add_burst(out: &mut [f64], fs: f64, center: f64, duration: f64, amp: f64, band: (f64, f64), rng: &mut ChaCha8Rng) {
    let sigma = duration / 4.0;
    let freqs: Vec<f64> = (0..TONES_PER_BURST).map(|_| rng.gen_range(band.0..band.1)).collect();
    // A shared phase keeps the tones coherent at the burst center, so the
    // envelope peaks there whatever the frequencies are.
    let phase = rng.gen_range(0.0..2.0 * PI);
    let norm = amp / (TONES_PER_BURST as f64).sqrt();
    let (lo, hi) = sample_span(fs, center - 3.0 * sigma, center + 3.0 * sigma, out.len());
    for (i, x) in out.iter_mut().enumerate().take(hi).skip(lo) {
        let dt = i as f64 / fs - center;
        let env = (-0.5 * (dt / sigma).powi(2)).exp();
        let s: f64 = freqs.iter().map(|&f| (2.0 * PI * f * dt + phase).cos()).sum();
        *x += norm * env * s;
    }
}

fn add_murmur(out: &mut [f64], fs: f64, start: f64, end: f64, amp: f64, band: (f64, f64), rng: &mut ChaCha8Rng) {
    let tones: Vec<(f64, f64)> = (0..MURMUR_TONES)
        .map(|_| (rng.gen_range(band.0..band.1), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    // unit RMS for the tone sum
    let norm = amp * (2.0 / MURMUR_TONES as f64).sqrt();
    let ramp = 0.01;
    let (lo, hi) = sample_span(fs, start, end, out.len());
    for (i, x) in out.iter_mut().enumerate().take(hi).skip(lo) {
        let t = i as f64 / fs;
        let edge = ((t - start).min(end - t) / ramp).clamp(0.0, 1.0);
        let taper = 0.5 - 0.5 * (PI * edge).cos();
        let s: f64 = tones.iter().map(|&(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
        *x += norm * taper * s;
    }
}

fn sample_span(fs: f64, t0: f64, t1: f64, len: usize) -> (usize, usize) {
    let lo = (t0 * fs).ceil().max(0.0) as usize;
    let hi = ((t1 * fs).floor().max(-1.0) + 1.0) as usize;
    (lo.min(len), hi.min(len))
}

/// Recording-level configs for a balanced corpus of `n_per_class` normal and
/// `n_per_class` abnormal recordings with varied rate and duration.
pub fn corpus_configs(n_per_class: usize, seed: u64) -> Vec<(String, SynthConfig)> {
    let mut rng = stream(seed, &[0xC0]);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for (prefix, abnormal) in [("syn_n", false), ("syn_a", true)] {
        for i in 0..n_per_class {
            let cfg = SynthConfig {
                duration_s: (rng.gen_range(2.5..3.5f64) * 10.0).round() / 10.0,
                heart_rate_bpm: rng.gen_range(60.0..90.0),
                abnormal,
                seed: rng.gen(),
                ..SynthConfig::default()
            };
            out.push((format!("{prefix}{:04}", i + 1), cfg));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(abnormal: bool) -> SynthConfig {
        SynthConfig {
            duration_s: 3.0,
            heart_rate_bpm: 60.0,
            jitter: 0.0,
            noise_level: 0.0,
            abnormal,
            seed: 42,
            ..SynthConfig::default()
        }
    }

    /// Smoothed energy envelope and greedy peak picking with a refractory period.
    fn envelope_peaks(x: &[f64], fs: f64) -> Vec<(usize, f64)> {
        let half = (0.025 * fs) as usize;
        let energy: Vec<f64> = x.iter().map(|v| v * v).collect();
        let env: Vec<f64> = (0..x.len())
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(x.len());
                energy[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        let max = env.iter().cloned().fold(0.0, f64::max);
        let mut idx: Vec<usize> = (0..env.len()).filter(|&i| env[i] > 0.2 * max).collect();
        idx.sort_by(|&a, &b| env[b].partial_cmp(&env[a]).unwrap());
        let refractory = (0.2 * fs) as usize;
        let mut peaks: Vec<(usize, f64)> = Vec::new();
        for i in idx {
            if peaks.iter().all(|&(p, _)| p.abs_diff(i) > refractory) {
                peaks.push((i, env[i]));
            }
        }
        peaks.sort_by_key(|p| p.0);
        peaks
    }

    #[test]
    fn clean_sixty_bpm_has_three_s1_one_second_apart() {
        let r = synth_pcg("x", &quiet(false)).unwrap();
        let s1: Vec<f64> = r
            .events
            .iter()
            .filter(|e| e.kind == HeartSound::S1)
            .map(|e| e.center_s)
            .collect();
        assert_eq!(s1.len(), 3);
        let peaks = envelope_peaks(&r.recording.samples, 2000.0);
        assert_eq!(peaks.len(), 6, "{peaks:?}");
        // S1 peaks are the ones followed 0.3 s later by the next peak.
        let s1_peaks: Vec<f64> = peaks.iter().step_by(2).map(|p| p.0 as f64 / 2000.0).collect();
        for pair in s1_peaks.windows(2) {
            assert!((pair[1] - pair[0] - 1.0).abs() < 0.02);
        }
        for (p, c) in s1_peaks.iter().zip(&s1) {
            assert!((p - c).abs() < 0.02);
        }
    }

    #[test]
    fn zero_murmur_matches_normal() {
        let mut cfg = quiet(true);
        cfg.murmur_amplitude = 0.0;
        cfg.noise_level = 0.2;
        let mut normal = cfg.clone();
        normal.abnormal = false;
        let a = synth_pcg("x", &cfg).unwrap().recording.samples;
        let b = synth_pcg("x", &normal).unwrap().recording.samples;
        assert_eq!(a, b);
    }

    fn band_energy(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
        // direct DFT over the band
        let n = x.len();
        let k0 = (lo * n as f64 / fs).ceil() as usize;
        let k1 = (hi * n as f64 / fs).floor() as usize;
        (k0..=k1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re * re + im * im
            })
            .sum()
    }

    #[test]
    fn murmur_changes_only_its_band() {
        let normal = synth_pcg("x", &quiet(false)).unwrap().recording.samples;
        let abnormal = synth_pcg("x", &quiet(true)).unwrap().recording.samples;
        let fs = 2000.0;
        let low_n = band_energy(&normal, fs, 20.0, 130.0);
        let low_a = band_energy(&abnormal, fs, 20.0, 130.0);
        let mid_n = band_energy(&normal, fs, 170.0, 380.0);
        let mid_a = band_energy(&abnormal, fs, 170.0, 380.0);
        let high_n = band_energy(&normal, fs, 600.0, 990.0);
        let high_a = band_energy(&abnormal, fs, 600.0, 990.0);
        // Peak normalization rescales the shared part by a common factor.
        let scale = low_a / low_n;
        assert!(mid_a / mid_n > 50.0 * scale, "murmur band barely changed");
        assert!(
            high_a <= high_n * scale * 1.5 + 1e-3 * low_a,
            "energy leaked above the murmur band"
        );
    }

    #[test]
    fn deterministic_and_normalized() {
        let cfg = SynthConfig {
            seed: 9,
            abnormal: true,
            ..SynthConfig::default()
        };
        let a = synth_pcg("x", &cfg).unwrap();
        let b = synth_pcg("x", &cfg).unwrap();
        assert_eq!(a, b);
        let peak = a.recording.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 0.95).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bands() {
        let cfg = SynthConfig {
            murmur_band_hz: (400.0, 150.0),
            ..SynthConfig::default()
        };
        assert!(synth_pcg("x", &cfg).is_err());
        let cfg = SynthConfig {
            s1_band_hz: (30.0, 1200.0),
            ..SynthConfig::default()
        };
        assert!(synth_pcg("x", &cfg).is_err());
    }
}
