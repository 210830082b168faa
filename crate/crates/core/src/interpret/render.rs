//! Heatmap files: raw values as CSV, 8-bit binary PGM images and a
//! `min=…,max=…` sidecar for de-quantisation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// One image of `|v|` scaled by the largest magnitude.
    Absolute,
    /// Separate images of the positive and negative parts.
    Signed,
}

/// Occlusion maps of abnormal instances are thresholded at this probability
/// for the extra decision image.
pub const DECISION_BOUNDARY: f64 = 0.9;

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn format_csv(values: &[f64], rows: usize, cols: usize) -> String {
    let mut s = String::new();
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

pub fn parse_csv(text: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad heatmap value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse("ragged heatmap rows".into()));
        }
        values.extend(row);
        rows += 1;
    }
    Ok((values, rows, cols.unwrap_or(0)))
}

/// Binary greyscale PGM (P5, maxval 255).
pub fn encode_pgm(pixels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

fn scale(values: &[f64], part: impl Fn(f64) -> f64) -> Vec<u8> {
    let parts: Vec<f64> = values.iter().map(|&v| part(v)).collect();
    let max = parts.iter().cloned().fold(0.0f64, f64::max);
    parts
        .iter()
        .map(|&p| if max > 0.0 { (255.0 * p / max).round() as u8 } else { 0 })
        .collect()
}

/// Writes `<prefix>.csv`, the image(s) and `<prefix>.meta`; returns the paths written.
pub fn render_heatmap(
    values: &[f64],
    rows: usize,
    cols: usize,
    prefix: impl AsRef<Path>,
    mode: RenderMode,
) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    if values.len() != rows * cols {
        return Err(Error::shape("heatmap", &[rows, cols], &[values.len()]));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("heatmap contains non-finite values".into()));
    }
    let mut written = Vec::new();
    let mut put = |suffix: &str, bytes: Vec<u8>| -> Result<()> {
        let p = with_suffix(prefix, suffix);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put(".csv", format_csv(values, rows, cols).into_bytes())?;
    match mode {
        RenderMode::Absolute => put(".pgm", encode_pgm(&scale(values, f64::abs), rows, cols))?,
        RenderMode::Signed => {
            put("_pos.pgm", encode_pgm(&scale(values, |v| v.max(0.0)), rows, cols))?;
            put("_neg.pgm", encode_pgm(&scale(values, |v| (-v).max(0.0)), rows, cols))?;
        }
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (min, max) = if values.is_empty() { (0.0, 0.0) } else { (min, max) };
    put(".meta", format!("min={min:e},max={max:e}\n").into_bytes())?;
    Ok(written)
}

/// White where the probability reaches [`DECISION_BOUNDARY`].
pub fn render_decision(values: &[f64], rows: usize, cols: usize, prefix: impl AsRef<Path>) -> Result<PathBuf> {
    let pixels: Vec<u8> = values
        .iter()
        .map(|&p| if p >= DECISION_BOUNDARY { 255 } else { 0 })
        .collect();
    let p = with_suffix(prefix.as_ref(), "_decision.pgm");
    fs::write(&p, encode_pgm(&pixels, rows, cols))?;
    Ok(p)
}
