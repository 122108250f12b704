use std::collections::BTreeSet;

use proptest::prelude::*;
use vibim::encoding::{all_pairs, decode_pair_labels};
use vibim::simgen::{schema as sim_schema, SimDesignSpec};
use vibim::{augment_interactions, encode, EncodingError, GroupSource, Predictor, PredictorSchema, RawColumn, RawTable, Scenario};

fn mixed_schema(levels: &[usize]) -> PredictorSchema {
    PredictorSchema::new(
        levels
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                if j == 1 {
                    Predictor::continuous(format!("x{i}"))
                } else {
                    Predictor::categorical(format!("c{i}"), (0..j).map(|l| format!("L{l}")))
                }
            })
            .collect(),
    )
    .unwrap()
}

fn raw_for(levels: &[usize], picks: &[Vec<usize>], values: &[Vec<f64>]) -> RawTable {
    RawTable {
        columns: levels
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                if j == 1 {
                    RawColumn::Continuous(values[i].clone())
                } else {
                    RawColumn::Categorical(picks[i].iter().map(|&l| format!("L{}", l % j)).collect())
                }
            })
            .collect(),
    }
}

#[test]
fn binary_categorical_is_single_dummy() {
    let schema = PredictorSchema::new(vec![Predictor::categorical("g", ["a", "b"])]).unwrap();
    let raw = RawTable { columns: vec![RawColumn::Categorical(vec!["a".into(), "b".into(), "a".into()])] };
    let d = encode(&schema, &raw).unwrap();
    assert_eq!(d.n_cols(), 1);
    assert_eq!(d.column(0), &[1.0, 0.0, 1.0]);
}

#[test]
fn simulation_schema_column_count() {
    for p in [9, 20, 200] {
        let spec = SimDesignSpec::new(Scenario::Ex1I, 30, p, 1);
        let data = vibim::generate(&spec).unwrap();
        let d = encode(&sim_schema(p), &data.raw).unwrap();
        assert_eq!(d.n_cols(), p + 8);
        assert_eq!(d.n_groups(), p);
    }
}

#[test]
fn all_continuous_is_identity() {
    let cols = vec![vec![1.0, 2.0, 3.5], vec![-1.0, 0.0, 4.0]];
    let schema = PredictorSchema::new(vec![Predictor::continuous("a"), Predictor::continuous("b")]).unwrap();
    let d = encode(&schema, &RawTable { columns: cols.iter().cloned().map(RawColumn::Continuous).collect() }).unwrap();
    for (j, c) in cols.iter().enumerate() {
        assert_eq!(d.column(j), c.as_slice());
        assert_eq!(d.group(j).columns, j..j + 1);
    }
}

#[test]
fn binary_by_six_level_interaction_has_five_columns() {
    let levels = [2, 6];
    let n = 24;
    let picks = vec![(0..n).collect(), (0..n).map(|i| i * 5 + 1).collect()];
    let d = encode(&mixed_schema(&levels), &raw_for(&levels, &picks, &[vec![], vec![]])).unwrap();
    let aug = augment_interactions(&d, &BTreeSet::from([(0, 1)])).unwrap();
    assert_eq!(aug.group(2).size(), 5);
    assert_eq!(aug.group(2).source, GroupSource::Interaction(0, 1));
}

#[test]
fn empty_pair_set_is_identity() {
    let levels = [3, 1];
    let picks = vec![vec![0, 1, 2, 0], vec![]];
    let d = encode(&mixed_schema(&levels), &raw_for(&levels, &picks, &[vec![], vec![0.5, 1.0, -2.0, 3.0]])).unwrap();
    assert_eq!(augment_interactions(&d, &BTreeSet::new()).unwrap(), d);
}

#[test]
fn self_pair_rejected() {
    let levels = [1, 1];
    let d = encode(&mixed_schema(&levels), &raw_for(&levels, &[vec![], vec![]], &[vec![1.0, 2.0], vec![3.0, 5.0]])).unwrap();
    assert_eq!(augment_interactions(&d, &BTreeSet::from([(1, 1)])).unwrap_err(), EncodingError::SelfPair(1));
}

#[test]
fn unknown_level_and_non_finite_rejected() {
    let schema = PredictorSchema::new(vec![Predictor::categorical("g", ["a", "b"]), Predictor::continuous("x")]).unwrap();
    let raw = RawTable {
        columns: vec![
            RawColumn::Categorical(vec!["a".into(), "z".into()]),
            RawColumn::Continuous(vec![1.0, 2.0]),
        ],
    };
    assert!(matches!(encode(&schema, &raw), Err(EncodingError::UnknownLevel { row: 1, .. })));
    let raw = RawTable {
        columns: vec![RawColumn::Categorical(vec!["a".into(), "b".into()]), RawColumn::Continuous(vec![1.0, f64::NAN])],
    };
    assert!(matches!(encode(&schema, &raw), Err(EncodingError::NonFiniteValue { row: 1, .. })));
}

fn design_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<usize>>, Vec<Vec<f64>>, usize)> {
    (prop::collection::vec(prop::sample::select(vec![1usize, 2, 3, 4]), 2..6), 4usize..20).prop_flat_map(
        |(levels, n)| {
            let k = levels.len();
            (
                Just(levels),
                prop::collection::vec(prop::collection::vec(0usize..12, n), k),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), k),
                Just(n),
            )
        },
    )
}

proptest! {
    #[test]
    fn pair_labels_round_trip((levels, picks, values, _n) in design_strategy(), mask in any::<u32>()) {
        let schema = mixed_schema(&levels);
        let d = encode(&schema, &raw_for(&levels, &picks, &values)).unwrap();
        let every: Vec<(usize, usize)> = all_pairs(&(0..levels.len()).collect()).into_iter().collect();
        let pairs: BTreeSet<(usize, usize)> =
            every.iter().enumerate().filter(|(k, _)| mask >> (k % 32) & 1 == 1).map(|(_, p)| *p).collect();
        let aug = augment_interactions(&d, &pairs).unwrap();
        let labels: Vec<&str> = aug.groups()[d.n_groups()..].iter().map(|g| g.label.as_str()).collect();
        prop_assert_eq!(decode_pair_labels(&schema, labels), pairs.clone());
        prop_assert_eq!(aug.interaction_pairs(), pairs);
    }

    #[test]
    fn column_count_after_augmentation((levels, picks, values, _n) in design_strategy()) {
        let d = encode(&mixed_schema(&levels), &raw_for(&levels, &picks, &values)).unwrap();
        let pairs = all_pairs(&(0..levels.len()).collect());
        let aug = augment_interactions(&d, &pairs).unwrap();
        let expected = d.n_cols() + pairs.iter().map(|&(i, j)| d.group(i).size() * d.group(j).size()).sum::<usize>();
        prop_assert_eq!(aug.n_cols(), expected);
        let widths: usize = aug.groups().iter().map(|g| g.size()).sum();
        prop_assert_eq!(widths, aug.n_cols());
        // original groups untouched
        for g in 0..d.n_groups() {
            for c in d.group(g).columns.clone() {
                prop_assert_eq!(aug.column(c), d.column(c));
            }
        }
    }

    #[test]
    fn dummy_products_are_logical_and((levels, picks, values, n) in design_strategy()) {
        let d = encode(&mixed_schema(&levels), &raw_for(&levels, &picks, &values)).unwrap();
        let aug = augment_interactions(&d, &all_pairs(&(0..levels.len()).collect())).unwrap();
        for g in &aug.groups()[d.n_groups()..] {
            let GroupSource::Interaction(i, j) = g.source else { unreachable!() };
            let (gi, gj) = (d.group(i), d.group(j));
            let mut col = g.columns.clone();
            for a in gi.columns.clone() {
                for b in gj.columns.clone() {
                    let c = col.next().unwrap();
                    for row in 0..n {
                        let (x, y, z) = (d.column(a)[row], d.column(b)[row], aug.column(c)[row]);
                        if levels[i] > 1 && levels[j] > 1 {
                            prop_assert_eq!(z == 1.0, x == 1.0 && y == 1.0);
                        }
                        prop_assert_eq!(z, x * y);
                    }
                }
            }
        }
        // at most one dummy of each categorical is set in any row
        for (i, &j) in levels.iter().enumerate() {
            if j > 1 {
                for row in 0..n {
                    let ones: f64 = d.group(i).columns.clone().map(|c| d.column(c)[row]).sum();
                    prop_assert!(ones <= 1.0);
                }
            }
        }
    }
}
