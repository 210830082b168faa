use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{delta, mel_filterbank, MfccExtractor, FRAME_HOP_S, FRAME_LEN_S};
use crate::tensor_io::{read_tensor, write_tensor, RawTensor};
use crate::{Error, Result, N_FRAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureVariant {
    /// 6 mel bands over 30–300 Hz; MFCC, Δ, Δ².
    Exp1SixBand3Ch,
    /// 6 mel bands over 30–300 Hz; MFCC only.
    Exp1SixBand1Ch,
    /// 26 mel bands over 0–500 Hz; MFCC only.
    Exp2TwentySixBand1Ch,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 3] = [
        FeatureVariant::Exp1SixBand3Ch,
        FeatureVariant::Exp1SixBand1Ch,
        FeatureVariant::Exp2TwentySixBand1Ch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureVariant::Exp1SixBand3Ch => "exp1_6band_3ch",
            FeatureVariant::Exp1SixBand1Ch => "exp1_6band_1ch",
            FeatureVariant::Exp2TwentySixBand1Ch => "exp2_26band_1ch",
        }
    }

    pub fn n_mel(self) -> usize {
        match self {
            FeatureVariant::Exp2TwentySixBand1Ch => 26,
            _ => 6,
        }
    }

    pub fn n_channels(self) -> usize {
        match self {
            FeatureVariant::Exp1SixBand3Ch => 3,
            _ => 1,
        }
    }

    pub fn band(self) -> (f64, f64) {
        match self {
            FeatureVariant::Exp2TwentySixBand1Ch => (0.0, 500.0),
            _ => (30.0, 300.0),
        }
    }

    pub fn dims(self) -> [usize; 3] {
        [self.n_mel(), N_FRAMES, self.n_channels()]
    }
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature variant {s:?}")))
    }
}

/// Dense `[n_mel × n_frames × n_channels]` map, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Vec<f32>,
    pub n_mel: usize,
    pub n_frames: usize,
    pub n_channels: usize,
    pub band: (f64, f64),
    pub frame_hop_s: f64,
    pub frame_len_s: f64,
}

impl FeatureMap {
    pub fn dims(&self) -> [usize; 3] {
        [self.n_mel, self.n_frames, self.n_channels]
    }

    pub fn get(&self, mel: usize, frame: usize, channel: usize) -> f32 {
        self.values[(mel * self.n_frames + frame) * self.n_channels + channel]
    }

    /// Extract one channel as a single-channel map.
    pub fn channel(&self, c: usize) -> FeatureMap {
        let values = self.values.iter().skip(c).step_by(self.n_channels).copied().collect();
        FeatureMap {
            values,
            n_channels: 1,
            ..self.clone()
        }
    }

    /// Append a `[n_mel × n_frames]` plane as an extra channel.
    pub fn with_extra_channel(&self, plane: &[f32]) -> Result<FeatureMap> {
        if plane.len() != self.n_mel * self.n_frames {
            return Err(Error::shape(
                "extra channel",
                &[self.n_mel, self.n_frames],
                &[plane.len()],
            ));
        }
        let c = self.n_channels;
        let mut values = Vec::with_capacity(self.values.len() + plane.len());
        for (cell, &p) in self.values.chunks_exact(c).zip(plane) {
            values.extend_from_slice(cell);
            values.push(p);
        }
        Ok(FeatureMap {
            values,
            n_channels: c + 1,
            ..self.clone()
        })
    }

    pub fn sidecar_line(&self) -> String {
        format!(
            "band={}-{},hop={:.3},frame={:.3}",
            self.band.0, self.band.1, self.frame_hop_s, self.frame_len_s
        )
    }

    /// Tensor file at `path` plus a `<path>.meta` sidecar line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_tensor(path, &RawTensor::new(self.dims().to_vec(), self.values.clone())?)?;
        std::fs::write(sidecar_path(path), self.sidecar_line() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureMap> {
        let path = path.as_ref();
        let t = read_tensor(path)?;
        if t.dims.len() != 3 {
            return Err(Error::Format(format!(
                "feature map must be rank 3, got rank {}",
                t.dims.len()
            )));
        }
        let meta = std::fs::read_to_string(sidecar_path(path))?;
        let mut band = None;
        let (mut hop, mut frame) = (FRAME_HOP_S, FRAME_LEN_S);
        for kv in meta.trim().split(',') {
            match kv.split_once('=') {
                Some(("band", v)) => {
                    let (lo, hi) = v
                        .split_once('-')
                        .ok_or_else(|| Error::Parse(format!("bad band {v:?}")))?;
                    band = Some((parse_f64(lo)?, parse_f64(hi)?));
                }
                Some(("hop", v)) => hop = parse_f64(v)?,
                Some(("frame", v)) => frame = parse_f64(v)?,
                _ => return Err(Error::Parse(format!("bad sidecar entry {kv:?}"))),
            }
        }
        Ok(FeatureMap {
            n_mel: t.dims[0],
            n_frames: t.dims[1],
            n_channels: t.dims[2],
            values: t.values,
            band: band.ok_or_else(|| Error::Parse("sidecar missing band".into()))?,
            frame_hop_s: hop,
            frame_len_s: frame,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

/// Holds the two filterbank pipelines so repeated windows reuse FFT plans.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    six: MfccExtractor,
    twenty_six: MfccExtractor,
}

impl FeatureExtractor {
    pub fn new() -> Self {
        let (lo, hi) = FeatureVariant::Exp1SixBand3Ch.band();
        let six = MfccExtractor::new(mel_filterbank(6, lo, hi).expect("static band"));
        let (lo, hi) = FeatureVariant::Exp2TwentySixBand1Ch.band();
        let twenty_six = MfccExtractor::new(mel_filterbank(26, lo, hi).expect("static band"));
        Self { six, twenty_six }
    }

    pub fn extract(&self, window: &[f64], variant: FeatureVariant) -> Result<FeatureMap> {
        let ex = match variant {
            FeatureVariant::Exp2TwentySixBand1Ch => &self.twenty_six,
            _ => &self.six,
        };
        let n_mel = variant.n_mel();
        let c = ex.extract(window)?;
        let mut planes = vec![c];
        if variant.n_channels() == 3 {
            let d = delta(&planes[0], N_FRAMES, 2)?;
            let dd = delta(&d, N_FRAMES, 2)?;
            planes.push(d);
            planes.push(dd);
        }
        let nc = planes.len();
        let mut values = vec![0.0f32; n_mel * N_FRAMES * nc];
        for (ch, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                values[i * nc + ch] = v as f32;
            }
        }
        Ok(FeatureMap {
            values,
            n_mel,
            n_frames: N_FRAMES,
            n_channels: nc,
            band: variant.band(),
            frame_hop_s: FRAME_HOP_S,
            frame_len_s: FRAME_LEN_S,
        })
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

pub fn build_feature_map(window: &[f64], variant: FeatureVariant) -> Result<FeatureMap> {
    FeatureExtractor::new().extract(window, variant)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64) -> Vec<f64> {
        (0..2000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / 2000.0).sin())
            .collect()
    }

    #[test]
    fn variant_shapes() {
        let w = tone(120.0);
        assert_eq!(
            build_feature_map(&w, FeatureVariant::Exp1SixBand3Ch).unwrap().dims(),
            [6, 99, 3]
        );
        assert_eq!(
            build_feature_map(&w, FeatureVariant::Exp1SixBand1Ch).unwrap().dims(),
            [6, 99, 1]
        );
        assert_eq!(
            build_feature_map(&w, FeatureVariant::Exp2TwentySixBand1Ch)
                .unwrap()
                .dims(),
            [26, 99, 1]
        );
        assert!("exp3".parse::<FeatureVariant>().is_err());
    }

    #[test]
    fn mfcc_channel_matches_single_channel_variant() {
        let w = tone(200.0);
        let three = build_feature_map(&w, FeatureVariant::Exp1SixBand3Ch).unwrap();
        let one = build_feature_map(&w, FeatureVariant::Exp1SixBand1Ch).unwrap();
        assert_eq!(three.channel(0).values, one.values);
    }

    #[test]
    fn deterministic_bitwise() {
        let w = tone(77.0);
        let a = build_feature_map(&w, FeatureVariant::Exp2TwentySixBand1Ch).unwrap();
        let b = build_feature_map(&w, FeatureVariant::Exp2TwentySixBand1Ch).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fm.pcgt");
        let fm = build_feature_map(&tone(90.0), FeatureVariant::Exp1SixBand3Ch).unwrap();
        fm.save(&p).unwrap();
        let meta = std::fs::read_to_string(dir.path().join("fm.pcgt.meta")).unwrap();
        assert_eq!(meta.trim(), "band=30-300,hop=0.010,frame=0.020");
        assert_eq!(FeatureMap::load(&p).unwrap(), fm);
    }

    #[test]
    fn extra_channel_is_appended_last() {
        let fm = build_feature_map(&tone(90.0), FeatureVariant::Exp1SixBand3Ch).unwrap();
        let plane = vec![0.25f32; 6 * 99];
        let four = fm.with_extra_channel(&plane).unwrap();
        assert_eq!(four.dims(), [6, 99, 4]);
        assert_eq!(four.get(3, 40, 3), 0.25);
        assert_eq!(four.get(3, 40, 1), fm.get(3, 40, 1));
    }
}
