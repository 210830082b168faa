//! Cross-validation protocol: window predictions are reduced to recording
//! labels by majority vote and scored at recording level, abnormal positive.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::{Fold, FoldPlan, Label, LabeledWindow};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Recording label from window probabilities. A window votes abnormal iff
/// `p ≥ threshold`; an exact tie goes to abnormal.
pub fn majority_vote(window_probs: &[f64], threshold: f64) -> Result<Label> {
    if window_probs.is_empty() {
        return Err(Error::invalid("majority vote over an empty window list"));
    }
    let abnormal = window_probs.iter().filter(|&&p| p >= threshold).count();
    Ok(if 2 * abnormal >= window_probs.len() {
        Label::Abnormal
    } else {
        Label::Normal
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Abnormal, _) => self.fn_ += 1,
            (_, Label::Abnormal) => self.fp += 1,
            _ => self.tn += 1,
        }
    }
}

/// `None` marks a metric whose denominator class is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn metrics_from_confusion(c: Confusion) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold_index: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
}

/// Groups window probabilities by recording, votes, and scores the fold.
pub fn score_fold(fold_index: usize, windows: &[LabeledWindow], probs: &[f64], threshold: f64) -> Result<FoldResult> {
    if windows.len() != probs.len() {
        return Err(Error::invalid(format!(
            "{} windows but {} predictions",
            windows.len(),
            probs.len()
        )));
    }
    let mut by_rec: BTreeMap<&str, (Label, Vec<f64>)> = BTreeMap::new();
    for (w, &p) in windows.iter().zip(probs) {
        let entry = by_rec.entry(&w.id.recording_id).or_insert((w.label, Vec::new()));
        if entry.0 != w.label {
            return Err(Error::Data(format!(
                "recording {} has windows with mixed labels",
                w.id.recording_id
            )));
        }
        entry.1.push(p);
    }
    let mut confusion = Confusion::default();
    for (label, ps) in by_rec.values() {
        confusion.record(*label, majority_vote(ps, threshold)?);
    }
    Ok(FoldResult {
        fold_index,
        confusion,
        metrics: metrics_from_confusion(confusion)?,
    })
}

/// Trains one fold and predicts the evaluation windows.
pub trait FoldRunner {
    /// Probabilities for `eval` in the given order.
    fn run_fold(&mut self, index: usize, fold: &Fold, eval: &[LabeledWindow]) -> Result<Vec<f64>>;
}

impl<F> FoldRunner for F
where
    F: FnMut(usize, &Fold, &[LabeledWindow]) -> Result<Vec<f64>>,
{
    fn run_fold(&mut self, index: usize, fold: &Fold, eval: &[LabeledWindow]) -> Result<Vec<f64>> {
        self(index, fold, eval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); `None` with fewer than two values.
    pub std: Option<f64>,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Some(Summary { mean, std, n })
}

#[derive(Debug)]
pub struct CvReport {
    /// One entry per fold in order; failed folds carry their error message.
    pub folds: Vec<std::result::Result<FoldResult, String>>,
}

impl CvReport {
    pub fn succeeded(&self) -> impl Iterator<Item = &FoldResult> {
        self.folds.iter().filter_map(|f| f.as_ref().ok())
    }

    pub fn failed(&self) -> Vec<(usize, &str)> {
        self.folds
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.as_ref().err().map(|e| (i, e.as_str())))
            .collect()
    }

    fn collect(&self, pick: impl Fn(&Metrics) -> Option<f64>) -> Option<Summary> {
        let v: Vec<f64> = self.succeeded().filter_map(|f| pick(&f.metrics)).collect();
        mean_std(&v)
    }

    pub fn accuracy(&self) -> Option<Summary> {
        self.collect(|m| Some(m.accuracy))
    }

    pub fn sensitivity(&self) -> Option<Summary> {
        self.collect(|m| m.sensitivity)
    }

    pub fn specificity(&self) -> Option<Summary> {
        self.collect(|m| m.specificity)
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from("fold,TP,FP,TN,FN,accuracy,sensitivity,specificity\n");
        for f in self.succeeded() {
            let c = f.confusion;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                f.fold_index,
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                fmt_metric(Some(f.metrics.accuracy)),
                fmt_metric(f.metrics.sensitivity),
                fmt_metric(f.metrics.specificity)
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,mean,std\n");
        for (name, summary) in [
            ("accuracy", self.accuracy()),
            ("sensitivity", self.sensitivity()),
            ("specificity", self.specificity()),
        ] {
            let _ = writeln!(
                s,
                "{name},{},{}",
                fmt_metric(summary.map(|x| x.mean)),
                fmt_metric(summary.and_then(|x| x.std))
            );
        }
        s
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".into(),
    }
}

/// Runs every fold of `plan`: train on `train_i`, predict `val_i ∪ rest`,
/// vote per recording. A failing fold is recorded and the run continues.
pub fn run_cv(plan: &FoldPlan, runner: &mut impl FoldRunner, threshold: f64) -> CvReport {
    let folds = plan
        .folds
        .iter()
        .enumerate()
        .map(|(i, fold)| {
            let eval: Vec<LabeledWindow> = fold.val.iter().chain(&plan.rest).cloned().collect();
            runner
                .run_fold(i, fold, &eval)
                .and_then(|probs| score_fold(i, &eval, &probs, threshold))
                .map_err(|e| {
                    log::error!("fold {i} failed: {e}");
                    e.to_string()
                })
        })
        .collect();
    CvReport { folds }
}
