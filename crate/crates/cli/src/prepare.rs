//! `phono prepare`: window manifest and fold plan.

use phono::dataset::manifest::{format_fold_plan, format_window_manifest};
use phono::dataset::{build_balanced_db, make_folds, window_signal, FoldPlan, Label, LabeledWindow};

use crate::corpus::load_corpus;
use crate::run_dir::{write_atomic, RunDir};
use crate::{write_config_snapshot, CliError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub recordings: usize,
    pub normal_recordings: usize,
    pub abnormal_recordings: usize,
    pub windows: usize,
    pub bal_db: usize,
    pub rest: usize,
    /// Normal over abnormal windows in the balanced database.
    pub balance_ratio: f64,
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<(PrepareSummary, FoldPlan), CliError> {
    let run = RunDir::new(&cfg.out);
    let _lock = run.open()?;
    let recordings = load_corpus(&cfg.data_dir, &cfg.labels_path(), None)?;
    let mut windows: Vec<LabeledWindow> = Vec::new();
    for r in &recordings {
        let w = window_signal(r)?;
        if w.is_empty() {
            log::warn!("recording {} is shorter than one window; skipped", r.id);
        }
        windows.extend(w.iter().map(|w| w.labeled()));
    }
    let bal = build_balanced_db(&windows, cfg.seed)?;
    let plan = make_folds(&bal.bal_db, &bal.rest, cfg.folds, cfg.seed)?;

    write_atomic(&run.windows_manifest(), format_window_manifest(&windows).as_bytes())?;
    write_atomic(&run.fold_plan(), format_fold_plan(&plan).as_bytes())?;
    write_config_snapshot(&run.manifests(), "prepare", cfg)?;

    let count = |ws: &[LabeledWindow], l: Label| ws.iter().filter(|w| w.label == l).count();
    let normal_recordings = recordings.iter().filter(|r| r.label == Label::Normal).count();
    let summary = PrepareSummary {
        recordings: recordings.len(),
        normal_recordings,
        abnormal_recordings: recordings.len() - normal_recordings,
        windows: windows.len(),
        bal_db: bal.bal_db.len(),
        rest: bal.rest.len(),
        balance_ratio: count(&bal.bal_db, Label::Normal) as f64 / count(&bal.bal_db, Label::Abnormal).max(1) as f64,
    };
    println!(
        "recordings: {} ({} normal, {} abnormal)",
        summary.recordings, summary.normal_recordings, summary.abnormal_recordings
    );
    println!("windows: {}", summary.windows);
    println!(
        "balanced db: {} windows (normal/abnormal ratio {:.3}), rest: {}",
        summary.bal_db, summary.balance_ratio, summary.rest
    );
    println!("folds: {}", plan.k);
    Ok((summary, plan))
}
