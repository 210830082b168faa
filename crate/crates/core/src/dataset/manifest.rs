//! Text artifacts of the preparation stage: the window manifest CSV and the
//! line-oriented fold plan.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Fold, FoldPlan, Label, LabeledWindow, WindowId};
use crate::{Error, Result};

pub const WINDOW_MANIFEST_HEADER: &str = "recording_id,window_index,start_s,label";

pub fn format_window_manifest(windows: &[LabeledWindow]) -> String {
    let mut s = String::from(WINDOW_MANIFEST_HEADER);
    s.push('\n');
    for w in windows {
        let _ = writeln!(
            s,
            "{},{},{:.1},{}",
            w.id.recording_id,
            w.id.index,
            w.id.start_s(),
            w.label
        );
    }
    s
}

pub fn parse_window_manifest(text: &str) -> Result<Vec<LabeledWindow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == WINDOW_MANIFEST_HEADER => {}
        _ => return Err(Error::Parse("window manifest header missing".into())),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!("bad manifest row {line:?}")));
            }
            let index = cols[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad window index in {line:?}")))?;
            Ok(LabeledWindow {
                id: WindowId::new(cols[0], index),
                label: cols[3].parse()?,
            })
        })
        .collect()
}

/// One `fold,role,window_id` line per window; `rest` is repeated under every
/// fold so each fold's evaluation set is self-contained.
pub fn format_fold_plan(plan: &FoldPlan) -> String {
    let mut s = String::new();
    for (i, f) in plan.folds.iter().enumerate() {
        for w in &f.train {
            let _ = writeln!(s, "{i},train,{}", w.id);
        }
        for w in &f.val {
            let _ = writeln!(s, "{i},val,{}", w.id);
        }
        for w in &plan.rest {
            let _ = writeln!(s, "{i},rest,{}", w.id);
        }
    }
    s
}

/// Rebuild a fold plan; labels come from the window manifest.
pub fn parse_fold_plan(text: &str, labels: &BTreeMap<WindowId, Label>) -> Result<FoldPlan> {
    let mut folds: BTreeMap<usize, Fold> = BTreeMap::new();
    let mut rest: Vec<LabeledWindow> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.splitn(3, ',');
        let (Some(i), Some(role), Some(id)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("bad fold plan line {line:?}")));
        };
        let i: usize = i
            .parse()
            .map_err(|_| Error::Parse(format!("bad fold index in {line:?}")))?;
        let id: WindowId = id.parse()?;
        let label = *labels
            .get(&id)
            .ok_or_else(|| Error::Data(format!("window {id} missing from manifest")))?;
        let w = LabeledWindow { id, label };
        let fold = folds.entry(i).or_insert_with(|| Fold {
            train: Vec::new(),
            val: Vec::new(),
        });
        match role {
            "train" => fold.train.push(w),
            "val" => fold.val.push(w),
            "rest" if i == 0 => rest.push(w),
            "rest" => {}
            other => return Err(Error::Parse(format!("unknown fold role {other:?}"))),
        }
    }
    let k = folds.len();
    if folds.keys().copied().ne(0..k) {
        return Err(Error::Parse("fold indices are not contiguous from 0".into()));
    }
    Ok(FoldPlan {
        k,
        folds: folds.into_values().collect(),
        rest,
    })
}
