//! Recording ingestion, windowing, the balanced window database and the
//! cross-validation fold plan.

pub mod balance;
pub mod folds;
pub mod labels;
pub mod manifest;
pub mod synth;
pub mod wav;

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result, SAMPLE_RATE_HZ, WINDOW_HOP, WINDOW_LEN};

pub use balance::{build_balanced_db, BalancedDb};
pub use folds::{make_folds, Fold, FoldPlan};
pub use labels::{load_labels, parse_labels};
pub use synth::{synth_pcg, HeartEvent, HeartSound, SynthConfig, SynthRecording};
pub use wav::{load_wav, write_wav, WavError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
    Unlabeled,
}

impl Label {
    /// Binary training target: Abnormal is the positive class.
    pub fn target(self) -> Option<f32> {
        match self {
            Label::Normal => Some(0.0),
            Label::Abnormal => Some(1.0),
            Label::Unlabeled => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(Error::Parse(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub label: Label,
    pub source: Source,
}

impl Recording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// Identifies one window of one recording; rendered as `<recording_id>:<index>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowId {
    pub recording_id: String,
    pub index: usize,
}

impl WindowId {
    pub fn new(recording_id: impl Into<String>, index: usize) -> Self {
        Self {
            recording_id: recording_id.into(),
            index,
        }
    }

    pub fn start_s(&self) -> f64 {
        self.index as f64 * WINDOW_HOP as f64 / SAMPLE_RATE_HZ as f64
    }
}

impl fmt::Display for WindowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.recording_id, self.index)
    }
}

impl FromStr for WindowId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (rec, idx) = s
            .rsplit_once(':')
            .ok_or_else(|| Error::Parse(format!("bad window id {s:?}")))?;
        let index = idx
            .parse()
            .map_err(|_| Error::Parse(format!("bad window index in {s:?}")))?;
        Ok(WindowId::new(rec, index))
    }
}

/// A window id with its inherited label; the unit handled by balancing and folds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledWindow {
    pub id: WindowId,
    pub label: Label,
}

/// One 1 s excerpt (2000 samples at 2 kHz) borrowed from its recording.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub recording_id: &'a str,
    pub index: usize,
    pub start_s: f64,
    pub samples: &'a [f64],
    pub label: Label,
}

impl Window<'_> {
    pub fn id(&self) -> WindowId {
        WindowId::new(self.recording_id, self.index)
    }

    pub fn labeled(&self) -> LabeledWindow {
        LabeledWindow {
            id: self.id(),
            label: self.label,
        }
    }
}

/// Linear-interpolation resampling. Output length is `round(len · target / source)`.
pub fn resample(r: &Recording, target_hz: u32) -> Result<Recording> {
    if target_hz == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    if r.sample_rate_hz == 0 {
        return Err(Error::invalid("source sample rate must be positive"));
    }
    if r.sample_rate_hz == target_hz {
        return Ok(r.clone());
    }
    let ratio = r.sample_rate_hz as f64 / target_hz as f64;
    let n_out = (r.samples.len() as f64 * target_hz as f64 / r.sample_rate_hz as f64).round() as usize;
    let last = r.samples.len().saturating_sub(1);
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = pos - lo as f64;
            if frac <= 0.0 || lo == hi {
                r.samples[lo]
            } else {
                r.samples[lo] + (r.samples[hi] - r.samples[lo]) * frac
            }
        })
        .collect();
    Ok(Recording {
        samples,
        sample_rate_hz: target_hz,
        ..r.clone()
    })
}

/// Cut a 2 kHz recording into 1 s windows with a 0.1 s hop. Recordings shorter
/// than one window yield no windows.
pub fn window_signal(r: &Recording) -> Result<Vec<Window<'_>>> {
    if r.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::invalid(format!(
            "windowing expects {SAMPLE_RATE_HZ} Hz input, got {} Hz",
            r.sample_rate_hz
        )));
    }
    Ok(window_count(r.samples.len())
        .map(|n| {
            (0..n)
                .map(|index| {
                    let start = index * WINDOW_HOP;
                    Window {
                        recording_id: &r.id,
                        index,
                        start_s: index as f64 * 0.1,
                        samples: &r.samples[start..start + WINDOW_LEN],
                        label: r.label,
                    }
                })
                .collect()
        })
        .unwrap_or_default())
}

/// Number of windows for a signal of `len` samples, `None` when shorter than one window.
pub fn window_count(len: usize) -> Option<usize> {
    (len >= WINDOW_LEN).then(|| (len - WINDOW_LEN) / WINDOW_HOP + 1)
}
