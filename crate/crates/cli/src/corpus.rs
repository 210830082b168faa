//! Loading recordings from a data directory and turning windows into
//! network inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use phono::dataset::{load_labels, load_wav, resample, window_signal, Recording, WindowId};
use phono::dsp::FeatureExtractor;
use phono::models::{assemble_input, FileSegmenter, HeuristicSegmenter, ModelVariant, Segmenter};
use phono::nn::NetInput;
use phono::SAMPLE_RATE_HZ;
use rayon::prelude::*;

use crate::config::SegmenterMode;
use crate::CliError;

/// WAV files directly inside `dir`, sorted by name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    Ok(paths)
}

fn recording_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads, labels and resamples every recording in `data_dir` (restricted to
/// `only` when given).
pub fn load_corpus(
    data_dir: &Path,
    labels_path: &Path,
    only: Option<&BTreeSet<String>>,
) -> Result<Vec<Recording>, CliError> {
    let mut paths = list_wavs(data_dir)?;
    if let Some(only) = only {
        paths.retain(|p| only.contains(&recording_id(p)));
    }
    if paths.is_empty() {
        return Err(CliError::Data(format!("no recordings found in {}", data_dir.display())));
    }
    let labels = load_labels(labels_path)
        .map_err(|e| CliError::Data(format!("cannot load labels {}: {e}", labels_path.display())))?;
    let missing: Vec<String> = paths
        .iter()
        .map(|p| recording_id(p))
        .filter(|id| !labels.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "missing labels for recordings: {}",
            missing.join(", ")
        )));
    }
    paths
        .par_iter()
        .map(|p| {
            let id = recording_id(p);
            let mut r = load_wav(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            r.id = id.clone();
            let r = resample(&r, SAMPLE_RATE_HZ)?;
            Ok(r.with_label(labels[&id]))
        })
        .collect()
}

pub fn make_segmenter(mode: &SegmenterMode) -> Result<Option<Box<dyn Segmenter>>, CliError> {
    Ok(match mode {
        SegmenterMode::Heuristic => Some(Box::new(HeuristicSegmenter::default())),
        SegmenterMode::File(p) => {
            Some(Box::new(FileSegmenter::load(p).map_err(|e| {
                CliError::Data(format!("segmenter features {}: {e}", p.display()))
            })?))
        }
        SegmenterMode::None => None,
    })
}

/// Network inputs for the windows in `wanted` (every window when `None`).
pub fn window_inputs(
    recordings: &[Recording],
    wanted: Option<&BTreeSet<WindowId>>,
    variant: ModelVariant,
    segmenter: Option<&dyn Segmenter>,
) -> Result<BTreeMap<WindowId, NetInput<f32>>, CliError> {
    if variant.uses_segmenter() && segmenter.is_none() {
        return Err(CliError::Usage(format!("variant {variant} needs a segmenter")));
    }
    let extractor = FeatureExtractor::new();
    let per_recording: Vec<Vec<(WindowId, NetInput<f32>)>> = recordings
        .par_iter()
        .map(|r| {
            window_signal(r)?
                .iter()
                .filter(|w| wanted.is_none_or(|set| set.contains(&w.id())))
                .map(|w| {
                    let id = w.id();
                    let fm = extractor.extract(w.samples, variant.feature_variant())?;
                    let seg = match segmenter {
                        Some(s) if variant.uses_segmenter() => Some(s.segment(&id, w.samples)?),
                        _ => None,
                    };
                    Ok((id, assemble_input(variant, &fm, seg.as_ref())?))
                })
                .collect::<Result<Vec<_>, phono::Error>>()
        })
        .collect::<Result<_, _>>()?;
    let out: BTreeMap<WindowId, NetInput<f32>> = per_recording.into_iter().flatten().collect();
    if let Some(wanted) = wanted {
        if let Some(id) = wanted.iter().find(|id| !out.contains_key(id)) {
            return Err(CliError::Data(format!("window {id} is not present in the corpus")));
        }
    }
    Ok(out)
}
