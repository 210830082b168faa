//! `phono train` and `phono eval`: per-fold training and the recording-level
//! cross-validation report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use phono::dataset::manifest::{parse_fold_plan, parse_window_manifest};
use phono::dataset::{Fold, FoldPlan, Label, LabeledWindow, WindowId};
use phono::eval::{run_cv, CvReport};
use phono::models::build_model;
use phono::nn::{encode_weights, fit, init_params, load_weights, predict_refs, NetInput, Network, NetworkSpec, Sample};
use phono::rng::{derive_seed, stream};
use rand::seq::SliceRandom;

use crate::corpus::{load_corpus, make_segmenter, window_inputs};
use crate::run_dir::{write_atomic, RunDir};
use crate::{write_config_snapshot, CliError, RunConfig};

/// Everything a trained-model command needs from a prepared run.
pub(crate) struct Prepared {
    pub plan: FoldPlan,
    pub inputs: BTreeMap<WindowId, NetInput<f32>>,
    pub spec: NetworkSpec,
}

pub(crate) fn load_prepared(cfg: &RunConfig, run: &RunDir) -> Result<Prepared, CliError> {
    let read = |p: std::path::PathBuf| {
        fs::read_to_string(&p).map_err(|e| CliError::Data(format!("{}: {e} (run `phono prepare` first)", p.display())))
    };
    let windows = parse_window_manifest(&read(run.windows_manifest())?)?;
    let labels: BTreeMap<WindowId, Label> = windows.iter().map(|w| (w.id.clone(), w.label)).collect();
    let plan = parse_fold_plan(&read(run.fold_plan())?, &labels)?;

    let spec = build_model(cfg.variant)?;
    let rec_ids: BTreeSet<String> = windows.iter().map(|w| w.id.recording_id.clone()).collect();
    let recordings = load_corpus(&cfg.data_dir, &cfg.labels_path(), Some(&rec_ids))?;
    if let Some(id) = rec_ids.iter().find(|id| !recordings.iter().any(|r| &r.id == *id)) {
        return Err(CliError::Data(format!(
            "recording {id} from the manifest is missing in {}",
            cfg.data_dir.display()
        )));
    }
    for r in &recordings {
        if let Some(w) = windows.iter().find(|w| w.id.recording_id == r.id && w.label != r.label) {
            return Err(CliError::Data(format!(
                "label of {} changed since prepare ({} vs {})",
                r.id, w.label, r.label
            )));
        }
    }
    let segmenter = if cfg.variant.uses_segmenter() {
        make_segmenter(&cfg.segmenter)?
    } else {
        None
    };
    let wanted: BTreeSet<WindowId> = labels.into_keys().collect();
    let inputs = window_inputs(&recordings, Some(&wanted), cfg.variant, segmenter.as_deref())?;

    let [h, w, c] = spec.input;
    if let Some(x) = inputs.values().next() {
        if x.map.len() != h * w * c || x.aux.len() != spec.aux_width {
            return Err(CliError::Usage(format!(
                "variant {} expects inputs of {}x{}x{} plus {} auxiliary values, features give {} plus {}",
                cfg.variant,
                h,
                w,
                c,
                spec.aux_width,
                x.map.len(),
                x.aux.len()
            )));
        }
    }
    Ok(Prepared { plan, inputs, spec })
}

/// Splits a fold's training windows by recording, per label, holding out
/// `fraction` of the recordings (at least one per label when any are held
/// out) for early stopping.
pub(crate) fn holdout_split(
    train: &[LabeledWindow],
    fraction: f64,
    seed: u64,
) -> (Vec<&LabeledWindow>, Vec<&LabeledWindow>) {
    let mut by_label: BTreeMap<Label, BTreeSet<&str>> = BTreeMap::new();
    for w in train {
        by_label.entry(w.label).or_default().insert(&w.id.recording_id);
    }
    let mut held: BTreeSet<&str> = BTreeSet::new();
    let mut rng = stream(seed, &[0x401D]);
    for recs in by_label.values() {
        let mut recs: Vec<&str> = recs.iter().copied().collect();
        if fraction <= 0.0 || recs.len() < 2 {
            continue;
        }
        recs.shuffle(&mut rng);
        let n = ((recs.len() as f64 * fraction).round() as usize).clamp(1, recs.len() - 1);
        held.extend(&recs[..n]);
    }
    train.iter().partition(|w| !held.contains(w.id.recording_id.as_str()))
}

fn samples<'a>(windows: &[&LabeledWindow], inputs: &'a BTreeMap<WindowId, NetInput<f32>>) -> Vec<Sample<'a>> {
    windows
        .iter()
        .map(|w| Sample {
            input: &inputs[&w.id],
            target: w.label.target().expect("manifest windows are labelled"),
        })
        .collect()
}

fn load_fold(run: &RunDir, spec: &NetworkSpec, fold: usize) -> phono::Result<Network<f32>> {
    let params = load_weights(run.fold_weights(fold))?;
    Network::new(spec.clone(), params)
}

fn train_fold(
    cfg: &RunConfig,
    run: &RunDir,
    prep: &Prepared,
    index: usize,
    fold: &Fold,
) -> phono::Result<Network<f32>> {
    let path = run.fold_weights(index);
    if path.exists() {
        log::info!("fold {index}: reusing {}", path.display());
        return load_fold(run, &prep.spec, index);
    }
    let fold_seed = derive_seed(cfg.seed, &[0xF0, index as u64]);
    let (fit_windows, stop_windows) = holdout_split(&fold.train, cfg.holdout, fold_seed);
    let train = samples(&fit_windows, &prep.inputs);
    let val = samples(&stop_windows, &prep.inputs);
    log::info!(
        "fold {index}: training on {} windows, early stopping on {}",
        train.len(),
        val.len()
    );
    let mut net = Network::new(
        prep.spec.clone(),
        init_params(&prep.spec, derive_seed(fold_seed, &[1]))?,
    )?;
    let train_cfg = phono::nn::TrainConfig {
        seed: derive_seed(fold_seed, &[2]),
        ..cfg.train.clone()
    };
    let report = fit(&mut net, &train, &val, &train_cfg, |m| {
        log::info!(
            "fold {index} epoch {}: loss {:.4}, holdout accuracy {:.4}",
            m.epoch,
            m.train_loss,
            m.val_acc
        )
    })?;
    let to_io = |e: CliError| phono::Error::Io(std::io::Error::other(e.to_string()));
    write_atomic(
        &run.metrics().join(format!("fold_{index}_epochs.csv")),
        report.to_csv().as_bytes(),
    )
    .map_err(to_io)?;
    // Weights last: their presence marks the fold as complete.
    write_atomic(&path, &encode_weights(net.params())).map_err(to_io)?;
    Ok(net)
}

fn predict(net: &Network<f32>, prep: &Prepared, eval: &[LabeledWindow]) -> phono::Result<Vec<f64>> {
    let refs: Vec<&NetInput<f32>> = eval.iter().map(|w| &prep.inputs[&w.id]).collect();
    predict_refs(net, &refs)
}

fn finish(cfg: &RunConfig, run: &RunDir, report: CvReport) -> Result<CvReport, CliError> {
    write_atomic(&run.metrics().join("cv_results.csv"), report.results_csv().as_bytes())?;
    write_atomic(&run.metrics().join("cv_summary.csv"), report.summary_csv().as_bytes())?;
    for (i, e) in report.failed() {
        eprintln!("fold {i} failed: {e}");
    }
    let fmt = |s: Option<phono::eval::Summary>| match s {
        Some(s) => format!("{:.4} ± {}", s.mean, s.std.map_or("NA".into(), |v| format!("{v:.4}"))),
        None => "NA".into(),
    };
    println!("variant: {}", cfg.variant);
    println!("folds completed: {}/{}", report.succeeded().count(), report.folds.len());
    println!("accuracy: {}", fmt(report.accuracy()));
    println!("sensitivity: {}", fmt(report.sensitivity()));
    println!("specificity: {}", fmt(report.specificity()));
    if report.succeeded().next().is_none() {
        return Err(CliError::Runtime("every fold failed".into()));
    }
    Ok(report)
}

/// Trains each fold (reusing existing fold weights) and evaluates it on
/// `val_i ∪ rest`.
pub fn cmd_train(cfg: &RunConfig) -> Result<CvReport, CliError> {
    let run = RunDir::new(&cfg.out);
    let _lock = run.open()?;
    write_config_snapshot(&run.manifests(), "train", cfg)?;
    let prep = load_prepared(cfg, &run)?;
    for i in 0..prep.plan.k {
        if run.fold_weights(i).exists() {
            load_fold(&run, &prep.spec, i).map_err(|e| {
                CliError::Usage(format!(
                    "existing {} does not fit variant {}: {e}",
                    run.fold_weights(i).display(),
                    cfg.variant
                ))
            })?;
        }
    }
    let mut runner = |i: usize, fold: &Fold, eval: &[LabeledWindow]| {
        let net = train_fold(cfg, &run, &prep, i, fold)?;
        predict(&net, &prep, eval)
    };
    let report = run_cv(&prep.plan, &mut runner, cfg.threshold);
    finish(cfg, &run, report)
}

/// Scores saved fold weights without training.
pub fn cmd_eval(cfg: &RunConfig) -> Result<CvReport, CliError> {
    let run = RunDir::new(&cfg.out);
    let _lock = run.open()?;
    let prep = load_prepared(cfg, &run)?;
    let mut runner = |i: usize, _fold: &Fold, eval: &[LabeledWindow]| {
        let net = load_fold(&run, &prep.spec, i)?;
        predict(&net, &prep, eval)
    };
    let report = run_cv(&prep.plan, &mut runner, cfg.threshold);
    finish(cfg, &run, report)
}
