//! Recording-level, label-stratified k-fold plan over the balanced database.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{Label, LabeledWindow};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<LabeledWindow>,
    pub val: Vec<LabeledWindow>,
}

impl Fold {
    pub fn train_recordings(&self) -> BTreeSet<&str> {
        self.train.iter().map(|w| w.id.recording_id.as_str()).collect()
    }

    pub fn val_recordings(&self) -> BTreeSet<&str> {
        self.val.iter().map(|w| w.id.recording_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Fold>,
    pub rest: Vec<LabeledWindow>,
}

/// Partition the recordings of `bal_db` into `k` groups, stratified by label;
/// fold `i` validates on group `i` and trains on the others.
pub fn make_folds(bal_db: &[LabeledWindow], rest: &[LabeledWindow], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    let mut recordings: BTreeMap<&str, Label> = BTreeMap::new();
    for w in bal_db {
        let prev = recordings.insert(&w.id.recording_id, w.label);
        if prev.is_some_and(|p| p != w.label) {
            return Err(Error::Data(format!("recording {} has mixed labels", w.id.recording_id)));
        }
    }
    let mut group_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rng = stream(seed, &[0xF01D]);
    for label in [Label::Abnormal, Label::Normal] {
        let mut ids: Vec<&str> = recordings
            .iter()
            .filter(|(_, &l)| l == label)
            .map(|(&id, _)| id)
            .collect();
        if ids.len() < k {
            return Err(Error::Data(format!(
                "need at least {k} {label} recordings for {k}-fold split, found {}",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        for (j, id) in ids.into_iter().enumerate() {
            group_of.insert(id, j % k);
        }
    }
    let folds = (0..k)
        .map(|i| {
            let (val, train): (Vec<_>, Vec<_>) = bal_db
                .iter()
                .cloned()
                .partition(|w| group_of[w.id.recording_id.as_str()] == i);
            Fold { train, val }
        })
        .collect();
    Ok(FoldPlan {
        k,
        folds,
        rest: rest.to_vec(),
    })
}
