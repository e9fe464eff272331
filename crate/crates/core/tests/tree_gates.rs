use std::collections::BTreeSet;

use hicu::label_tree::{augment_tree, build_label_tree, build_path, IcdCode, RangeTable, ICD_LEVELS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RANGES: &str = "\
D\t240\t279\t249\t259
D\t390\t459\t401\t405
D\t390\t459\t410\t414
D\t680\t709\t680\t686
D\t740\t759\t-\t-
D\tV01\tV91\tV30\tV39
P\t35\t39\t-\t-
P\t00\t00\t-\t-
";

/// One code per path shape, plus neighbours so that shapes share ancestors.
const CORPUS: &[&str] = &[
    "250.00", "250.01", "V30.01", // two decimals
    "401.9", "414.0", // one decimal, padded once
    "682", "684", // integer only, padded twice
    "36.15", "36.1", "37.22", "00.66", // procedures under synthetic ranges
    "745", "745.4", "748.61", // diagnosis chapter without level-2 rows
];

fn table() -> RangeTable {
    RangeTable::parse_str(RANGES).unwrap()
}

fn codes(raw: &[&str]) -> Vec<IcdCode> {
    raw.iter().map(|r| IcdCode::parse_any(r).unwrap()).collect()
}

#[test]
fn path_shapes() {
    let t = table();
    let path = |raw: &str| -> Vec<String> {
        build_path(&IcdCode::parse_any(raw).unwrap(), &t).unwrap().nodes.into_iter().map(|n| n.label).collect()
    };
    assert_eq!(path("250.01"), ["240-279", "249-259", "250", "250.0", "250.01"]);
    assert_eq!(path("401.9"), ["390-459", "401-405", "401", "401.9", "401.9"]);
    assert_eq!(path("682"), ["680-709", "680-686", "682", "682", "682"]);
    assert_eq!(path("36.15"), ["35-39", "36-36", "36", "36.1", "36.15"]);
    assert_eq!(path("745"), ["740-759", "745-745", "745", "745", "745"]);
    assert_eq!(path("V30.01"), ["V01-V91", "V30-V39", "V30", "V30.0", "V30.01"]);
}

#[test]
fn every_augmented_path_has_five_levels() {
    let tree = build_label_tree(&codes(CORPUS), &table()).unwrap();
    let aug = augment_tree(&tree);
    assert_eq!(aug.max_level(), ICD_LEVELS);
    let leaves = aug.level_labels(ICD_LEVELS).unwrap();
    let expected: BTreeSet<String> = CORPUS.iter().map(|s| s.to_string()).collect();
    assert_eq!(leaves.iter().cloned().collect::<BTreeSet<_>>(), expected);
    for (i, leaf) in leaves.iter().enumerate() {
        let p = aug.path_to(ICD_LEVELS, i);
        assert_eq!(p.len(), ICD_LEVELS);
        let direct: Vec<String> =
            build_path(&IcdCode::parse_any(leaf).unwrap(), &table()).unwrap().nodes.into_iter().map(|n| n.label).collect();
        assert_eq!(p, direct, "{leaf}");
        // origin of the padded copies is the target itself
        for k in 1..=ICD_LEVELS {
            let idx = aug.index_of(k, &p[k - 1]).unwrap();
            let (ol, oi) = aug.origin(k, idx);
            assert_eq!(tree.level_labels(ol).unwrap()[oi], p[k - 1]);
        }
    }
}

/// Level-k positives are exactly the k-th path labels of the positive codes.
fn oracle(positive: &[&str], k: usize) -> BTreeSet<String> {
    let t = table();
    positive
        .iter()
        .map(|raw| build_path(&IcdCode::parse_any(raw).unwrap(), &t).unwrap().nodes[k - 1].label.clone())
        .collect()
}

#[test]
fn ancestor_targets_match_brute_force() {
    let aug = augment_tree(&build_label_tree(&codes(CORPUS), &table()).unwrap());
    let leaves = aug.level_labels(ICD_LEVELS).unwrap().to_vec();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let y: Vec<bool> = (0..leaves.len()).map(|_| r.gen_bool(0.3)).collect();
        let positive: Vec<&str> = leaves.iter().zip(&y).filter(|(_, p)| **p).map(|(l, _)| l.as_str()).collect();
        for k in 1..=ICD_LEVELS {
            let got = aug.ancestor_targets(&y, k).unwrap();
            let labels = aug.level_labels(k).unwrap();
            let got: BTreeSet<String> = labels.iter().zip(&got).filter(|(_, p)| **p).map(|(l, _)| l.clone()).collect();
            assert_eq!(got, oracle(&positive, k), "level {k}, positives {positive:?}");
        }
    }
}

#[test]
fn tree_file_round_trips() {
    let tree = build_label_tree(&codes(CORPUS), &table()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.tsv");
    tree.write_tree_file(&path).unwrap();
    assert_eq!(hicu::label_tree::LabelTree::read_tree_file(&path).unwrap(), tree);
}

fn code_subset() -> impl Strategy<Value = Vec<&'static str>> {
    prop::sample::subsequence(CORPUS.to_vec(), 1..=CORPUS.len())
}

proptest! {
    #[test]
    fn augmenting_twice_changes_nothing(sub in code_subset()) {
        let once = augment_tree(&build_label_tree(&codes(&sub), &table()).unwrap());
        let twice = augment_tree(once.tree());
        prop_assert_eq!(once.tree(), twice.tree());
    }

    #[test]
    fn parent_maps_compose_with_ancestor_targets(sub in code_subset(), mask in prop::collection::vec(any::<bool>(), CORPUS.len())) {
        let aug = augment_tree(&build_label_tree(&codes(&sub), &table()).unwrap());
        let n = aug.level_labels(ICD_LEVELS).unwrap().len();
        let y = &mask[..n];
        for k in 1..ICD_LEVELS {
            let below = aug.ancestor_targets(y, k + 1).unwrap();
            let map = aug.parent_index_map(k).unwrap();
            let mut lifted = vec![false; aug.level_labels(k).unwrap().len()];
            for (i, &p) in below.iter().enumerate() {
                if p {
                    lifted[map[i]] = true;
                }
            }
            prop_assert_eq!(lifted, aug.ancestor_targets(y, k).unwrap());
        }
    }

    #[test]
    fn augmentation_keeps_targets_and_origins_consistent(sub in code_subset()) {
        let tree = build_label_tree(&codes(&sub), &table()).unwrap();
        let aug = augment_tree(&tree);
        let mut want: Vec<&str> = tree.target_labels();
        want.sort();
        prop_assert_eq!(aug.level_labels(ICD_LEVELS).unwrap().iter().map(String::as_str).collect::<Vec<_>>(), want);
        for k in 1..=ICD_LEVELS {
            for (i, label) in aug.level_labels(k).unwrap().iter().enumerate() {
                let (ol, oi) = aug.origin(k, i);
                prop_assert!(ol <= k);
                prop_assert_eq!(&tree.level_labels(ol).unwrap()[oi], label);
            }
        }
    }
}
