//! `phono synth`: a seeded synthetic corpus on disk.

use std::fmt::Write as _;
use std::fs;

use phono::dataset::labels::format_labels;
use phono::dataset::synth::corpus_configs;
use phono::dataset::{synth_pcg, write_wav, HeartSound, Label};
use phono::SAMPLE_RATE_HZ;
use rayon::prelude::*;

use crate::run_dir::write_atomic;
use crate::{CliError, RunConfig};

pub const EVENTS_HEADER: &str = "recording_id,kind,center_s";

/// Writes `synth_per_class` normal and abnormal WAVs into `data_dir`, plus
/// `REFERENCE.csv` labels and `events.csv` with every S1/S2 centre.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.synth_per_class == 0 {
        return Err(CliError::Usage("synth needs at least one recording per class".into()));
    }
    let dir = &cfg.data_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let configs = corpus_configs(cfg.synth_per_class, cfg.seed);
    let recordings = configs
        .par_iter()
        .map(|(id, c)| synth_pcg(id.clone(), c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut events = String::from(EVENTS_HEADER);
    events.push('\n');
    for r in &recordings {
        let rec = &r.recording;
        let path = dir.join(format!("{}.wav", rec.id));
        write_wav(&path, &rec.samples, SAMPLE_RATE_HZ)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        for e in &r.events {
            let kind = match e.kind {
                HeartSound::S1 => "S1",
                HeartSound::S2 => "S2",
            };
            let _ = writeln!(events, "{},{kind},{:.6}", rec.id, e.center_s);
        }
    }
    let labels = format_labels(recordings.iter().map(|r| (r.recording.id.as_str(), r.recording.label)));
    write_atomic(&dir.join("REFERENCE.csv"), labels.as_bytes())?;
    write_atomic(&dir.join("events.csv"), events.as_bytes())?;
    let n_abn = recordings
        .iter()
        .filter(|r| r.recording.label == Label::Abnormal)
        .count();
    println!(
        "wrote {} recordings ({} normal, {n_abn} abnormal) to {}",
        recordings.len(),
        recordings.len() - n_abn,
        dir.display()
    );
    Ok(())
}
