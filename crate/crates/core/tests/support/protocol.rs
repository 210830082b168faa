//! Randomized corpora and the evaluation-protocol invariants checked on them.

use std::collections::BTreeSet;

use phono::dataset::{build_balanced_db, make_folds, Label, LabeledWindow, WindowId};
use phono::eval::majority_vote;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

#[derive(Debug, Clone)]
pub struct Corpus {
    /// Window count per recording, per class.
    pub normal: Vec<usize>,
    pub abnormal: Vec<usize>,
    pub seed: u64,
    pub k: usize,
}

impl Corpus {
    pub fn windows(&self) -> Vec<LabeledWindow> {
        let mut out = Vec::new();
        for (prefix, label, counts) in [
            ("n", Label::Normal, &self.normal),
            ("a", Label::Abnormal, &self.abnormal),
        ] {
            for (r, &n) in counts.iter().enumerate() {
                for i in 0..n {
                    out.push(LabeledWindow {
                        id: WindowId::new(format!("{prefix}{r:03}"), i),
                        label,
                    });
                }
            }
        }
        out
    }
}

/// Corpora with 2..=6 folds, enough recordings per class for the fold
/// count, and 1..=25 windows per recording.
pub fn corpus() -> impl Strategy<Value = Corpus> {
    (2usize..=6).prop_flat_map(|k| {
        (
            prop::collection::vec(1usize..=25, k..k + 12),
            prop::collection::vec(1usize..=25, k..k + 12),
            any::<u64>(),
        )
            .prop_map(move |(normal, abnormal, seed)| Corpus {
                normal,
                abnormal,
                seed,
                k,
            })
    })
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn recordings(ws: &[LabeledWindow]) -> BTreeSet<&str> {
    ws.iter().map(|w| w.id.recording_id.as_str()).collect()
}

/// Balance, coverage and per-recording contribution of the balanced database;
/// recording-level disjointness and stratification of the folds.
pub fn check_corpus(c: &Corpus) -> Result<(), TestCaseError> {
    let all = c.windows();
    let db = build_balanced_db(&all, c.seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let count = |l: Label| db.bal_db.iter().filter(|w| w.label == l).count();
    let (n, a) = (count(Label::Normal), count(Label::Abnormal));
    ensure(n.abs_diff(a) <= 1, || format!("unbalanced: {n} normal vs {a} abnormal"))?;

    let ids = |ws: &[LabeledWindow]| ws.iter().map(|w| w.id.clone()).collect::<BTreeSet<_>>();
    let (bal, rest, every) = (ids(&db.bal_db), ids(&db.rest), ids(&all));
    ensure(bal.len() == db.bal_db.len() && rest.len() == db.rest.len(), || {
        "duplicate windows".into()
    })?;
    ensure(bal.is_disjoint(&rest), || "bal_db and rest overlap".into())?;
    ensure(bal.union(&rest).cloned().collect::<BTreeSet<_>>() == every, || {
        "coverage broken".into()
    })?;

    // The minority class is kept whole; the majority class is sampled
    // round-robin, so every majority recording is used when there are no
    // more majority recordings than minority windows.
    let n_norm: usize = c.normal.iter().sum();
    let n_abn: usize = c.abnormal.iter().sum();
    let (minority, majority_recs, quota) = if n_norm >= n_abn {
        (Label::Abnormal, c.normal.len(), n_abn)
    } else {
        (Label::Normal, c.abnormal.len(), n_norm)
    };
    ensure(db.rest.iter().all(|w| w.label != minority), || {
        "minority window left out".into()
    })?;
    if majority_recs <= quota {
        let used = recordings(&db.bal_db);
        ensure(used.len() == c.normal.len() + c.abnormal.len(), || {
            "a recording contributes nothing".into()
        })?;
    }

    let plan = match make_folds(&db.bal_db, &db.rest, c.k, c.seed) {
        Ok(p) => p,
        // Too few recordings of one class survive balancing.
        Err(_) => {
            let per_class =
                |l: Label| recordings(&db.bal_db.iter().filter(|w| w.label == l).cloned().collect::<Vec<_>>()).len();
            ensure(
                per_class(Label::Normal) < c.k || per_class(Label::Abnormal) < c.k,
                || "make_folds failed".into(),
            )?;
            return Ok(());
        }
    };
    ensure(plan.folds.len() == c.k, || "wrong fold count".into())?;
    let mut val_union = BTreeSet::new();
    for (i, f) in plan.folds.iter().enumerate() {
        let (tr, va) = (f.train_recordings(), f.val_recordings());
        ensure(tr.is_disjoint(&va), || {
            format!("fold {i}: train and val share recordings")
        })?;
        ensure(f.train.len() + f.val.len() == db.bal_db.len(), || {
            format!("fold {i}: windows lost")
        })?;
        for l in [Label::Normal, Label::Abnormal] {
            ensure(f.val.iter().any(|w| w.label == l), || {
                format!("fold {i}: no {l} validation recording")
            })?;
        }
        for r in &va {
            ensure(val_union.insert(r.to_string()), || {
                format!("recording {r} validated twice")
            })?;
        }
    }
    ensure(val_union.len() == recordings(&db.bal_db).len(), || {
        "a recording is never validated".into()
    })?;
    let again = make_folds(&db.bal_db, &db.rest, c.k, c.seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    ensure(again == plan, || "fold plan not deterministic".into())
}

/// Reference rule: Abnormal iff at least half of the windows score ≥ threshold.
pub fn vote_oracle(probs: &[f64], threshold: f64) -> Label {
    let pos = probs.iter().filter(|&&p| p >= threshold).count();
    if 2 * pos >= probs.len() {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

pub fn votes() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, f64)> {
    prop::collection::vec(prop_oneof![0.0f64..=1.0, Just(0.5)], 1..40).prop_flat_map(|p| {
        let n = p.len();
        (
            Just(p),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            prop_oneof![Just(0.5), 0.05f64..0.95],
        )
    })
}

pub fn check_vote(probs: &[f64], perm: &[usize], threshold: f64) -> Result<(), TestCaseError> {
    let label = majority_vote(probs, threshold).map_err(|e| TestCaseError::fail(e.to_string()))?;
    ensure(label == vote_oracle(probs, threshold), || {
        format!("vote {label} differs from rule")
    })?;
    let shuffled: Vec<f64> = perm.iter().map(|&i| probs[i]).collect();
    let again = majority_vote(&shuffled, threshold).map_err(|e| TestCaseError::fail(e.to_string()))?;
    ensure(again == label, || "vote depends on window order".into())?;
    // An exact tie goes to Abnormal.
    let mut tied: Vec<f64> = probs.iter().map(|_| threshold).collect();
    tied.extend(probs.iter().map(|_| 0.0));
    ensure(majority_vote(&tied, threshold).ok() == Some(Label::Abnormal), || {
        "tie not Abnormal".into()
    })
}

/// Runs both property families for `cases` generated cases each and
/// returns the failure message of the first violation.
pub fn run_all(cases: u32) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new(config.clone())
        .run(&corpus(), |c| check_corpus(&c))
        .map_err(|e| format!("corpus: {e}"))?;
    TestRunner::new(config)
        .run(&votes(), |(p, perm, t)| check_vote(&p, &perm, t))
        .map_err(|e| format!("vote: {e}"))
}
