mod support;

use phono::dataset::{build_balanced_db, Label, LabeledWindow, WindowId};
use phono::eval::majority_vote;
use proptest::prelude::*;
use support::protocol::{check_corpus, check_vote, corpus, votes, Corpus};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn balanced_db_and_folds(c in corpus()) {
        check_corpus(&c)?;
    }

    #[test]
    fn majority_vote_rule((probs, perm, threshold) in votes()) {
        check_vote(&probs, &perm, threshold)?;
    }
}

#[test]
fn fixed_corpora_hold_too() {
    let cases = [
        Corpus {
            normal: vec![10, 10],
            abnormal: vec![5, 5],
            seed: 1,
            k: 2,
        },
        Corpus {
            normal: vec![1; 12],
            abnormal: vec![3; 2],
            seed: 2,
            k: 2,
        },
        Corpus {
            normal: vec![4; 3],
            abnormal: vec![25; 6],
            seed: 3,
            k: 3,
        },
    ];
    for c in &cases {
        check_corpus(c).unwrap();
    }
}

#[test]
fn round_robin_by_hand() {
    // 10 abnormal windows against two normal recordings of 10 windows: the
    // passes alternate, five from each.
    let mut ws: Vec<LabeledWindow> = (0..10)
        .map(|i| LabeledWindow {
            id: WindowId::new("a0", i),
            label: Label::Abnormal,
        })
        .collect();
    for r in ["n0", "n1"] {
        ws.extend((0..10).map(|i| LabeledWindow {
            id: WindowId::new(r, i),
            label: Label::Normal,
        }));
    }
    let db = build_balanced_db(&ws, 9).unwrap();
    for r in ["n0", "n1"] {
        assert_eq!(db.bal_db.iter().filter(|w| w.id.recording_id == r).count(), 5);
    }
    assert_eq!(db.rest.len(), 10);
}

#[test]
fn empty_vote_is_an_error() {
    assert!(majority_vote(&[], 0.5).is_err());
}
