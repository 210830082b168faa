//! Balanced window database.
//!
//! Every window of the minority class is kept. The majority class (normally
//! the Normal class) is sampled round-robin: each pass takes one window from
//! every recording, in a seeded recording order, with each recording's windows
//! visited in a seeded shuffled order. Sampling stops as soon as the counts are
//! equal, so every majority recording contributes at least once whenever there
//! are no more majority recordings than minority windows.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Label, LabeledWindow};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedDb {
    pub bal_db: Vec<LabeledWindow>,
    pub rest: Vec<LabeledWindow>,
}

pub fn build_balanced_db(windows: &[LabeledWindow], seed: u64) -> Result<BalancedDb> {
    let mut by_class: BTreeMap<Label, BTreeMap<&str, Vec<&LabeledWindow>>> = BTreeMap::new();
    for w in windows {
        if w.label == Label::Unlabeled {
            return Err(Error::Data(format!("window {} has no label", w.id)));
        }
        by_class
            .entry(w.label)
            .or_default()
            .entry(w.id.recording_id.as_str())
            .or_default()
            .push(w);
    }
    let count = |l: Label| by_class.get(&l).map_or(0, |m| m.values().map(Vec::len).sum::<usize>());
    let (n_abn, n_norm) = (count(Label::Abnormal), count(Label::Normal));
    if n_abn == 0 {
        return Err(Error::Data("cannot balance: no abnormal windows".into()));
    }
    if n_norm == 0 {
        return Err(Error::Data("cannot balance: no normal windows".into()));
    }
    let (minority, majority, quota) = if n_norm >= n_abn {
        (Label::Abnormal, Label::Normal, n_abn)
    } else {
        log::warn!("fewer normal ({n_norm}) than abnormal ({n_abn}) windows; subsampling abnormal windows");
        (Label::Normal, Label::Abnormal, n_norm)
    };

    let mut bal_db: Vec<LabeledWindow> = by_class[&minority].values().flatten().map(|w| (*w).clone()).collect();

    let mut rng = stream(seed, &[0xBA1]);
    let mut queues: Vec<Vec<&LabeledWindow>> = by_class[&majority].values().cloned().collect();
    queues.shuffle(&mut rng);
    for q in &mut queues {
        q.shuffle(&mut rng);
    }

    let mut taken = vec![0usize; queues.len()];
    let mut selected = 0usize;
    'passes: while selected < quota {
        let mut progressed = false;
        for (q, t) in queues.iter().zip(taken.iter_mut()) {
            if selected == quota {
                break 'passes;
            }
            if *t < q.len() {
                bal_db.push(q[*t].clone());
                *t += 1;
                selected += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let mut rest: Vec<LabeledWindow> = queues
        .iter()
        .zip(&taken)
        .flat_map(|(q, &t)| q[t..].iter().map(|w| (*w).clone()))
        .collect();

    bal_db.sort();
    rest.sort();
    Ok(BalancedDb { bal_db, rest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::WindowId;
    use std::collections::BTreeSet;

    fn corpus(spec: &[(&str, Label, usize)]) -> Vec<LabeledWindow> {
        spec.iter()
            .flat_map(|&(rec, label, n)| {
                (0..n).map(move |i| LabeledWindow {
                    id: WindowId::new(rec, i),
                    label,
                })
            })
            .collect()
    }

    fn per_recording(ws: &[LabeledWindow]) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for w in ws {
            *m.entry(w.id.recording_id.clone()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn two_normal_recordings_split_evenly() {
        let ws = corpus(&[
            ("a", Label::Abnormal, 10),
            ("n1", Label::Normal, 10),
            ("n2", Label::Normal, 10),
        ]);
        let db = build_balanced_db(&ws, 3).unwrap();
        let counts = per_recording(&db.bal_db);
        assert_eq!(counts["a"], 10);
        assert_eq!(counts["n1"], 5);
        assert_eq!(counts["n2"], 5);
        assert_eq!(db.rest.len(), 10);
        assert!(db.rest.iter().all(|w| w.label == Label::Normal));
    }

    #[test]
    fn exact_balance_takes_everything() {
        let ws = corpus(&[
            ("a", Label::Abnormal, 4),
            ("n1", Label::Normal, 1),
            ("n2", Label::Normal, 1),
            ("n3", Label::Normal, 1),
            ("n4", Label::Normal, 1),
        ]);
        let db = build_balanced_db(&ws, 0).unwrap();
        assert_eq!(db.bal_db.len(), 8);
        assert!(db.rest.is_empty());
    }

    #[test]
    fn partial_pass_draws_from_distinct_recordings() {
        let ws = corpus(&[
            ("a", Label::Abnormal, 3),
            ("n1", Label::Normal, 4),
            ("n2", Label::Normal, 4),
            ("n3", Label::Normal, 4),
            ("n4", Label::Normal, 4),
            ("n5", Label::Normal, 4),
        ]);
        let db = build_balanced_db(&ws, 11).unwrap();
        let normals: Vec<_> = db.bal_db.iter().filter(|w| w.label == Label::Normal).collect();
        assert_eq!(normals.len(), 3);
        let recs: BTreeSet<_> = normals.iter().map(|w| &w.id.recording_id).collect();
        assert_eq!(recs.len(), 3);
    }

    #[test]
    fn no_abnormal_is_an_error() {
        let ws = corpus(&[("n1", Label::Normal, 4)]);
        assert!(build_balanced_db(&ws, 0)
            .unwrap_err()
            .to_string()
            .contains("cannot balance"));
    }

    #[test]
    fn seeded_and_deterministic() {
        let ws = corpus(&[
            ("a", Label::Abnormal, 7),
            ("n1", Label::Normal, 9),
            ("n2", Label::Normal, 6),
        ]);
        assert_eq!(build_balanced_db(&ws, 5).unwrap(), build_balanced_db(&ws, 5).unwrap());
    }
}
