//! Heart-state segmentation of 1 s windows.
//!
//! The heuristic segmenter follows the classic envelope recipe: Shannon
//! energy of the peak-normalised signal, a 20 ms moving average, peak picking
//! with a 200 ms refractory period, and S1/S2 assignment from the alternation
//! of short (systolic) and long (diastolic) inter-peak gaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::WindowId;
use crate::dsp::{FRAME_HOP, FRAME_LEN};
use crate::tensor_io::{read_tensor, write_tensor, RawTensor};
use crate::{Error, Result, N_FRAMES, SAMPLE_RATE_HZ, WINDOW_LEN};

pub const EMBEDDING_LEN: usize = N_FRAMES + 1;

pub const STATE_S1: f32 = 1.0;
pub const STATE_S2: f32 = 0.66;
pub const STATE_SYSTOLE: f32 = 0.33;
pub const STATE_DIASTOLE: f32 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterOutput {
    /// One heart-state code per MFCC frame.
    pub frame_states: Vec<f32>,
    /// `frame_states` followed by one summary feature (the beat rate in
    /// beats/s divided by 4 for the heuristic segmenter).
    pub embedding: Vec<f32>,
}

impl SegmenterOutput {
    pub fn from_embedding(embedding: Vec<f32>) -> Result<Self> {
        if embedding.len() != EMBEDDING_LEN {
            return Err(Error::Data(format!(
                "expected width {EMBEDDING_LEN}, got {}",
                embedding.len()
            )));
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("segmenter features must be finite".into()));
        }
        Ok(Self {
            frame_states: embedding[..N_FRAMES].to_vec(),
            embedding,
        })
    }
}

/// Source of per-window segmentation.
pub trait Segmenter: Sync {
    fn segment(&self, id: &WindowId, samples: &[f64]) -> Result<SegmenterOutput>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicSegmenter {
    /// Peaks must exceed this fraction of the envelope maximum.
    pub peak_threshold: f64,
    /// Event extent: samples where the envelope stays above this fraction of
    /// the event's own peak.
    pub extent_fraction: f64,
}

impl Default for HeuristicSegmenter {
    fn default() -> Self {
        Self {
            peak_threshold: 0.25,
            extent_fraction: 0.5,
        }
    }
}

impl Segmenter for HeuristicSegmenter {
    fn segment(&self, _id: &WindowId, samples: &[f64]) -> Result<SegmenterOutput> {
        self.run(samples)
    }
}

/// Pre-computed outputs keyed by window id.
#[derive(Debug, Clone, Default)]
pub struct FileSegmenter {
    pub outputs: BTreeMap<WindowId, SegmenterOutput>,
}

impl FileSegmenter {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            outputs: load_segmenter_features(path)?.into_iter().collect(),
        })
    }
}

impl Segmenter for FileSegmenter {
    fn segment(&self, id: &WindowId, _samples: &[f64]) -> Result<SegmenterOutput> {
        self.outputs
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Data(format!("no segmenter features for window {id}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sound {
    S1,
    S2,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    kind: Sound,
    peak: usize,
    start: usize,
    end: usize,
}

pub fn heuristic_segmenter(window: &[f64]) -> Result<SegmenterOutput> {
    HeuristicSegmenter::default().run(window)
}

/// Smoothed Shannon energy `−x²·ln x²` of the peak-normalised signal.
pub fn shannon_envelope(window: &[f64]) -> Vec<f64> {
    let max = window.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return vec![0.0; window.len()];
    }
    let energy: Vec<f64> = window
        .iter()
        .map(|x| {
            let e = (x / max).powi(2);
            if e > 0.0 {
                -e * e.ln()
            } else {
                0.0
            }
        })
        .collect();
    // 20 ms centred moving average via prefix sums
    let half = (0.020 * SAMPLE_RATE_HZ as f64) as usize / 2;
    let mut prefix = vec![0.0; energy.len() + 1];
    for (i, e) in energy.iter().enumerate() {
        prefix[i + 1] = prefix[i] + e;
    }
    (0..energy.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(energy.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

impl HeuristicSegmenter {
    pub fn run(&self, window: &[f64]) -> Result<SegmenterOutput> {
        if window.len() != WINDOW_LEN {
            return Err(Error::shape("segmenter window", &[WINDOW_LEN], &[window.len()]));
        }
        let env = shannon_envelope(window);
        let events = self.events(&env);
        let states = frame_states(&events);
        let rate = beat_rate(&events);
        let mut embedding = states.clone();
        embedding.push((rate / 4.0) as f32);
        Ok(SegmenterOutput {
            frame_states: states,
            embedding,
        })
    }

    fn events(&self, env: &[f64]) -> Vec<Event> {
        let max = env.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        let refractory = (0.200 * SAMPLE_RATE_HZ as f64) as usize;
        let mut candidates: Vec<usize> = (0..env.len())
            .filter(|&i| {
                env[i] >= self.peak_threshold * max
                    && (i == 0 || env[i] >= env[i - 1])
                    && (i + 1 == env.len() || env[i] > env[i + 1])
            })
            .collect();
        // strongest first; ties by time
        candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));
        let mut peaks: Vec<usize> = Vec::new();
        for c in candidates {
            if peaks.iter().all(|&p| p.abs_diff(c) >= refractory) {
                peaks.push(c);
            }
        }
        peaks.sort_unstable();

        let kinds = label_peaks(&peaks);
        peaks
            .iter()
            .zip(kinds)
            .map(|(&p, kind)| {
                let floor = self.extent_fraction * env[p];
                let mut start = p;
                while start > 0 && env[start - 1] >= floor {
                    start -= 1;
                }
                let mut end = p;
                while end + 1 < env.len() && env[end + 1] >= floor {
                    end += 1;
                }
                Event {
                    kind,
                    peak: p,
                    start,
                    end,
                }
            })
            .collect()
    }
}

/// Systole is shorter than diastole, so the peak that opens the shorter
/// gaps is S1.
fn label_peaks(peaks: &[usize]) -> Vec<Sound> {
    let alternate = |first: Sound| {
        (0..peaks.len())
            .map(|i| {
                if (i % 2 == 0) == (first == Sound::S1) {
                    Sound::S1
                } else {
                    Sound::S2
                }
            })
            .collect()
    };
    match peaks.len() {
        0 => Vec::new(),
        1 => vec![Sound::S1],
        2 => {
            let gap = (peaks[1] - peaks[0]) as f64 / SAMPLE_RATE_HZ as f64;
            alternate(if gap < 0.5 { Sound::S1 } else { Sound::S2 })
        }
        _ => {
            let gaps: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
            let mean = |parity: usize| {
                let g: Vec<f64> = gaps.iter().skip(parity).step_by(2).copied().collect();
                g.iter().sum::<f64>() / g.len() as f64
            };
            alternate(if mean(0) <= mean(1) { Sound::S1 } else { Sound::S2 })
        }
    }
}

fn frame_states(events: &[Event]) -> Vec<f32> {
    (0..N_FRAMES)
        .map(|i| {
            let center = i * FRAME_HOP + FRAME_LEN / 2;
            if let Some(e) = events.iter().find(|e| e.start <= center && center <= e.end) {
                return match e.kind {
                    Sound::S1 => STATE_S1,
                    Sound::S2 => STATE_S2,
                };
            }
            // Between sounds: the state is decided by the nearest sound on either side.
            let prev = events.iter().rev().find(|e| e.peak < center);
            let next = events.iter().find(|e| e.peak > center);
            let systole = match (prev, next) {
                (Some(p), _) => p.kind == Sound::S1,
                (None, Some(n)) => n.kind == Sound::S2,
                (None, None) => false,
            };
            if systole {
                STATE_SYSTOLE
            } else {
                STATE_DIASTOLE
            }
        })
        .collect()
}

/// Beats per second from the median S1–S1 interval, or the S1 count over
/// the 1 s window when fewer than two S1 are present.
fn beat_rate(events: &[Event]) -> f64 {
    let s1: Vec<usize> = events.iter().filter(|e| e.kind == Sound::S1).map(|e| e.peak).collect();
    if s1.len() < 2 {
        return s1.len() as f64 / (WINDOW_LEN as f64 / SAMPLE_RATE_HZ as f64);
    }
    let mut intervals: Vec<f64> = s1
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / SAMPLE_RATE_HZ as f64)
        .collect();
    intervals.sort_by(f64::total_cmp);
    let m = intervals.len();
    let median = if m % 2 == 1 {
        intervals[m / 2]
    } else {
        0.5 * (intervals[m / 2 - 1] + intervals[m / 2])
    };
    1.0 / median
}

fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

/// Tensor file `[n × 100]` at `path` plus the window ids, one per line, at
/// `<path>.ids`.
pub fn save_segmenter_features(path: impl AsRef<Path>, items: &[(WindowId, SegmenterOutput)]) -> Result<()> {
    let path = path.as_ref();
    let mut values = Vec::with_capacity(items.len() * EMBEDDING_LEN);
    let mut ids = String::from("window_id\n");
    for (id, out) in items {
        if out.embedding.len() != EMBEDDING_LEN {
            return Err(Error::shape(
                format!("segmenter features of {id}"),
                &[EMBEDDING_LEN],
                &[out.embedding.len()],
            ));
        }
        values.extend_from_slice(&out.embedding);
        let _ = writeln!(ids, "{id}");
    }
    write_tensor(path, &RawTensor::new(vec![items.len(), EMBEDDING_LEN], values)?)?;
    fs::write(ids_path(path), ids)?;
    Ok(())
}

pub fn load_segmenter_features(path: impl AsRef<Path>) -> Result<Vec<(WindowId, SegmenterOutput)>> {
    let path = path.as_ref();
    let t = read_tensor(path)?;
    if t.dims.len() != 2 {
        return Err(Error::Data(format!(
            "segmenter features must be rank 2, got dims {:?}",
            t.dims
        )));
    }
    if t.dims[1] != EMBEDDING_LEN {
        return Err(Error::Data(format!(
            "expected width {EMBEDDING_LEN}, got {}",
            t.dims[1]
        )));
    }
    let text = fs::read_to_string(ids_path(path))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("window_id") {
        return Err(Error::Parse("segmenter id manifest header missing".into()));
    }
    let ids = lines
        .map(|l| l.trim().parse::<WindowId>())
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != t.dims[0] {
        return Err(Error::Data(format!(
            "segmenter manifest lists {} windows, tensor has {}",
            ids.len(),
            t.dims[0]
        )));
    }
    ids.into_iter()
        .zip(t.values.chunks_exact(EMBEDDING_LEN))
        .map(|(id, row)| Ok((id, SegmenterOutput::from_embedding(row.to_vec())?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_window_is_all_diastole() {
        let out = heuristic_segmenter(&vec![0.0; WINDOW_LEN]).unwrap();
        assert_eq!(out.frame_states.len(), N_FRAMES);
        assert_eq!(out.embedding.len(), EMBEDDING_LEN);
        assert!(out.embedding.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(heuristic_segmenter(&[0.0; 100]).is_err());
    }

    #[test]
    fn gap_parity_labels() {
        // S1 at 0.1, S2 at 0.4, S1 at 1.1 s → short gap first
        let p = [200, 800, 2200];
        assert_eq!(label_peaks(&p), vec![Sound::S1, Sound::S2, Sound::S1]);
        // S2 at 0.1, S1 at 0.8, S2 at 1.1
        let p = [200, 1600, 2200];
        assert_eq!(label_peaks(&p), vec![Sound::S2, Sound::S1, Sound::S2]);
        assert_eq!(label_peaks(&[100, 700]), vec![Sound::S1, Sound::S2]);
        assert_eq!(label_peaks(&[100, 1500]), vec![Sound::S2, Sound::S1]);
    }

    #[test]
    fn states_between_events() {
        let ev = [
            Event {
                kind: Sound::S1,
                peak: 300,
                start: 260,
                end: 340,
            },
            Event {
                kind: Sound::S2,
                peak: 900,
                start: 870,
                end: 930,
            },
        ];
        let s = frame_states(&ev);
        // frame 0 centre 20 → before S1 → diastole
        assert_eq!(s[0], STATE_DIASTOLE);
        // frame 14 centre 300 → S1
        assert_eq!(s[14], STATE_S1);
        // frame 30 centre 620 → systole
        assert_eq!(s[30], STATE_SYSTOLE);
        assert_eq!(s[44], STATE_S2);
        assert_eq!(s[80], STATE_DIASTOLE);
    }

    #[test]
    fn feature_file_round_trip_and_width_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.pcgt");
        let items: Vec<(WindowId, SegmenterOutput)> = (0..5)
            .map(|i| {
                let emb: Vec<f32> = (0..EMBEDDING_LEN).map(|j| ((i * 7 + j) % 3) as f32 * 0.33).collect();
                (WindowId::new("rec", i), SegmenterOutput::from_embedding(emb).unwrap())
            })
            .collect();
        save_segmenter_features(&path, &items).unwrap();
        assert_eq!(load_segmenter_features(&path).unwrap(), items);

        let bad = dir.path().join("bad.pcgt");
        write_tensor(&bad, &RawTensor::new(vec![5, 99], vec![0.0; 495]).unwrap()).unwrap();
        fs::copy(ids_path(&path), ids_path(&bad)).unwrap();
        let err = load_segmenter_features(&bad).unwrap_err().to_string();
        assert!(err.contains("expected width 100"), "{err}");
    }
}
