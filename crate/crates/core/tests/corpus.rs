mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;

use stance::corpus::{load_bodies, load_corpus, load_stances, plan_folds, Corpus};

/// Data rows in a CSV file, counted by a quote-aware scan that knows
/// nothing about columns (embedded newlines stay inside quotes).
fn count_records(text: &str) -> usize {
    let mut rows = 0;
    let mut quoted = false;
    let mut pending = false;
    for c in text.chars() {
        match c {
            '"' => quoted = !quoted,
            '\n' if !quoted => {
                if pending {
                    rows += 1;
                }
                pending = false;
                continue;
            }
            '\r' => continue,
            _ => {}
        }
        pending = true;
    }
    rows + usize::from(pending) - 1
}

fn check_plan(corpus: &Corpus, k: usize, seed: u64) {
    let plan = plan_folds(corpus, k, seed).unwrap();
    assert_eq!(plan.assignments().len(), corpus.referenced_bodies().len());
    let mut sizes = vec![0usize; k];
    for f in plan.assignments().values() {
        sizes[*f] += 1;
    }
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    for fold in 0..k {
        let (train, test) = plan.split(corpus, fold).unwrap();
        assert_eq!(train.len() + test.len(), corpus.len());
        for i in test.instances() {
            assert_eq!(plan.fold_of(i.body_id), Some(fold));
            assert!(!train.bodies().contains_key(&i.body_id));
        }
        for i in train.instances() {
            assert_ne!(plan.fold_of(i.body_id), Some(fold));
        }
    }
}

#[test]
fn synthetic_round_trip_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synthetic(0..30, 5, 11);
    let (s, b) = data.write(dir.path(), "x", true);
    let corpus = load_corpus(&s, &b).unwrap();
    assert_eq!(corpus.len(), count_records(&std::fs::read_to_string(&s).unwrap()));
    assert_eq!(corpus.bodies().len(), count_records(&std::fs::read_to_string(&b).unwrap()));

    let mut stances = Vec::new();
    corpus.write_stances(&mut stances).unwrap();
    let mut bodies = Vec::new();
    corpus.write_bodies(&mut bodies).unwrap();
    assert_eq!(stances, std::fs::read(&s).unwrap());
    assert_eq!(bodies, std::fs::read(&b).unwrap());
}

#[test]
fn embedded_newlines_stay_in_one_body() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    std::fs::write(&path, "Body ID,articleBody\n1,\"line one\nline two\"\n2,plain\n").unwrap();
    let bodies = load_bodies(&path).unwrap();
    assert_eq!(bodies.len(), 2);
    assert_eq!(bodies[&1], "line one\nline two");
    assert_eq!(count_records(&std::fs::read_to_string(&path).unwrap()), 2);
}

#[test]
fn synthetic_folds_are_body_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let (s, b) = common::synthetic(0..47, 4, 12).write(dir.path(), "x", true);
    let corpus = load_corpus(s, b).unwrap();
    for (k, seed) in [(2, 0), (5, 1), (10, 2)] {
        check_plan(&corpus, k, seed);
    }
}

fn fnc_dir() -> PathBuf {
    PathBuf::from(std::env::var_os("FNC1_DATA_DIR").expect("FNC1_DATA_DIR"))
}

#[test]
#[ignore = "needs FNC-1 data in FNC1_DATA_DIR"]
fn fnc1_training_counts() {
    let dir = fnc_dir();
    let (s, b) = (dir.join("train_stances.csv"), dir.join("train_bodies.csv"));
    let stances = load_stances(&s).unwrap();
    let bodies = load_bodies(&b).unwrap();
    assert_eq!(stances.len(), count_records(&std::fs::read_to_string(&s).unwrap()));
    assert_eq!(bodies.len(), count_records(&std::fs::read_to_string(&b).unwrap()));
    assert_eq!(stances.len(), 49_972);
    assert_eq!(bodies.len(), 1_683);
    let corpus = load_corpus(s, b).unwrap();
    assert_eq!((corpus.len(), corpus.bodies().len()), (49_972, 1_683));
}

#[test]
#[ignore = "needs FNC-1 data in FNC1_DATA_DIR"]
fn fnc1_ten_fold_plan() {
    let dir = fnc_dir();
    let corpus = load_corpus(dir.join("train_stances.csv"), dir.join("train_bodies.csv")).unwrap();
    check_plan(&corpus, 10, 0);
}

#[test]
#[ignore = "needs FNC-1 data in FNC1_DATA_DIR"]
fn fnc1_competition_label_counts() {
    let stances = load_stances(fnc_dir().join("competition_test_stances.csv")).unwrap();
    let mut counts = BTreeMap::new();
    for i in &stances {
        *counts.entry(i.stance.unwrap().as_str()).or_insert(0) += 1;
    }
    let want: BTreeMap<_, _> = [("agree", 1903), ("disagree", 697), ("discuss", 4464), ("unrelated", 18349)].into();
    assert_eq!(counts, want);
}
