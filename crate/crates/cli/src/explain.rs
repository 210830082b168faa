//! `phono explain`: Shapley and occlusion maps for selected windows.

use std::fmt::Write as _;
use std::path::PathBuf;

use phono::dataset::WindowId;
use phono::interpret::{
    frame_to_time, occlusion_map, render_decision, render_heatmap, shapley_columns, shapley_intermediate,
    ExplanationManifest, RenderMode,
};
use phono::models::build_model;
use phono::nn::NetInput;
use phono::rng::stream;
use rand::seq::SliceRandom;

use crate::run_dir::{write_atomic, RunDir};
use crate::train::load_prepared;
use crate::{BaselineMode, CliError, ExplainMethod, RunConfig};

/// Resolves comma-separated window ids (`rec:index`) and recording ids.
pub fn resolve_selector<'a>(
    selector: &str,
    available: impl IntoIterator<Item = &'a WindowId> + Clone,
) -> Result<Vec<WindowId>, CliError> {
    let mut out: Vec<WindowId> = Vec::new();
    for token in selector.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let exact = token.parse::<WindowId>().ok();
        let matched: Vec<WindowId> = available
            .clone()
            .into_iter()
            .filter(|id| exact.as_ref() == Some(*id) || id.recording_id == token)
            .cloned()
            .collect();
        if matched.is_empty() {
            return Err(CliError::Usage(format!(
                "instance selector {token:?} matches no window"
            )));
        }
        for id in matched {
            if !out.contains(&id) {
                out.push(id);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("instance selector is empty".into()));
    }
    Ok(out)
}

fn mean_map(inputs: &[&NetInput<f32>]) -> Vec<f32> {
    let mut sum = vec![0.0f64; inputs[0].map.len()];
    for x in inputs {
        for (s, &v) in sum.iter_mut().zip(&x.map) {
            *s += v as f64;
        }
    }
    sum.iter().map(|s| (s / inputs.len() as f64) as f32).collect()
}

/// Writes maps and a manifest per selected window; returns the files written.
pub fn cmd_explain(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let spec = build_model(cfg.variant)?;
    if cfg.method == ExplainMethod::ShapIntermediate && spec.concat_index().is_none() {
        return Err(CliError::Usage(format!("variant {} has no segmenter tap", cfg.variant)));
    }
    if cfg.method != ExplainMethod::Occlusion && cfg.permutations == 0 {
        return Err(CliError::Usage("permutations must be at least 1".into()));
    }
    let selector = cfg
        .instance
        .as_deref()
        .ok_or_else(|| CliError::Usage("explain needs an instance selector (--instance)".into()))?;
    let run = RunDir::new(&cfg.out);
    let _lock = run.open()?;
    let prep = load_prepared(cfg, &run)?;
    let fold = prep.plan.folds.get(cfg.explain_fold).ok_or_else(|| {
        CliError::Usage(format!(
            "fold {} does not exist (plan has {})",
            cfg.explain_fold, prep.plan.k
        ))
    })?;
    let weights = run.fold_weights(cfg.explain_fold);
    if !weights.exists() {
        return Err(CliError::Data(format!(
            "no weights at {} (run `phono train` first)",
            weights.display()
        )));
    }
    let net = phono::nn::Network::new(spec.clone(), phono::nn::load_weights(&weights)?)?;
    let selected = resolve_selector(selector, prep.inputs.keys())?;

    let mut background: Vec<&NetInput<f32>> = fold.train.iter().map(|w| &prep.inputs[&w.id]).collect();
    background.shuffle(&mut stream(cfg.seed, &[0xB6]));
    background.truncate(cfg.background.max(1));
    let baseline = match cfg.baseline {
        BaselineMode::Mean => mean_map(&background),
        BaselineMode::Zero => vec![0.0; background[0].map.len()],
    };

    let [h, w, c] = spec.input;
    let mut written = Vec::new();
    for id in &selected {
        log::info!("explaining {id} with {}", cfg.method.name());
        let input = &prep.inputs[id];
        let prefix = run
            .explanations()
            .join(format!("{}_{}_{}", id.recording_id, id.index, cfg.method.name()));
        let mut baseline_mode = cfg.baseline.name().to_string();
        let mut m = Some(cfg.permutations);
        match cfg.method {
            ExplainMethod::Shap => {
                let map = shapley_columns(&net, input, &baseline, cfg.permutations, cfg.seed)?;
                let plane: Vec<f64> = map.values.iter().step_by(c).copied().collect();
                written.extend(render_heatmap(&plane, h, w, &prefix, RenderMode::Signed)?);
                let mut cols = String::from("frame,time_s,phi\n");
                for x in 0..w {
                    let _ = writeln!(cols, "{x},{:.3},{:e}", frame_to_time(x)?, map.values[x * c]);
                }
                let p = with_suffix(&prefix, "_columns.csv");
                write_atomic(&p, cols.as_bytes())?;
                written.push(p);
            }
            ExplainMethod::ShapIntermediate => {
                let bg: Vec<NetInput<f32>> = background.iter().map(|x| (*x).clone()).collect();
                let res = shapley_intermediate(&net, input, &bg, cfg.permutations, cfg.seed)?;
                written.extend(render_heatmap(
                    &res.map.values,
                    1,
                    res.map.values.len(),
                    &prefix,
                    RenderMode::Signed,
                )?);
                let total = res.segmenter_mass + res.cnn_mass;
                let split = format!(
                    "segmenter_mass={:e}\ncnn_mass={:e}\nsegmenter_fraction={}\n",
                    res.segmenter_mass,
                    res.cnn_mass,
                    if total > 0.0 {
                        format!("{:.6}", res.segmenter_mass / total)
                    } else {
                        "NA".into()
                    }
                );
                let p = with_suffix(&prefix, "_split.txt");
                write_atomic(&p, split.as_bytes())?;
                written.push(p);
                println!(
                    "{id}: segmenter {:.4} / cnn {:.4} of |phi| mass",
                    res.segmenter_mass, res.cnn_mass
                );
                baseline_mode = "mean-activation".into();
            }
            ExplainMethod::Occlusion => {
                let model = |x: &[f32]| {
                    net.predict(&NetInput::with_aux(x.to_vec(), input.aux.clone()))
                        .map_or(f64::NAN, |p| p as f64)
                };
                let occ = occlusion_map(model, &input.map, spec.input, cfg.occlusion_kernel, cfg.occlusion_fill)?;
                written.extend(render_heatmap(
                    &occ.values,
                    occ.rows,
                    occ.cols,
                    &prefix,
                    RenderMode::Absolute,
                )?);
                written.push(render_decision(&occ.values, occ.rows, occ.cols, &prefix)?);
                baseline_mode = format!("fill={}", cfg.occlusion_fill);
                m = None;
            }
        }
        let manifest = ExplanationManifest {
            instance_id: id.to_string(),
            method: cfg.method.name().into(),
            m,
            seed: cfg.seed,
            baseline_mode,
        };
        let mut text = manifest.to_text();
        let _ = writeln!(text, "variant={}", cfg.variant);
        let _ = writeln!(text, "fold={}", cfg.explain_fold);
        let p = with_suffix(&prefix, ".manifest");
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
    }
    println!("wrote {} files for {} window(s)", written.len(), selected.len());
    Ok(written)
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}
