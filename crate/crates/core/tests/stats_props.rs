mod common;

use common::{brute_permutation, simulate_rt};
use predictability::corpus::{ContextId, Measure, RtObservation};
use predictability::stats::{
    bonferroni, compare_models, make_folds, paired_permutation_test, pearson, CvOptions, BOTH,
};
use predictability::Error;
use proptest::prelude::*;

#[test]
fn nine_up_one_down_matches_enumeration() {
    let a = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0];
    let zeros = [0.0; 10];
    let p = paired_permutation_test(&a, &zeros).unwrap();
    assert_eq!(p, brute_permutation(&a));
    // |sum| >= 8 needs at most one flipped sign: 1 + 10 assignments, doubled.
    assert_eq!(p, 22.0 / 1024.0);
}

#[test]
fn all_positive_is_two_in_1024() {
    assert_eq!(paired_permutation_test(&[1.0; 10], &[0.0; 10]).unwrap(), 2.0 / 1024.0);
}

#[test]
fn bonferroni_examples() {
    assert!((bonferroni(0.001, 12) - 0.012).abs() < 1e-15);
    assert_eq!(bonferroni(0.2, 12), 1.0);
    assert_eq!(bonferroni(0.037, 1), 0.037);
}

proptest! {
    #[test]
    fn exact_test_matches_brute_force(d in prop::collection::vec(-5.0f64..5.0, 10)) {
        let zeros = [0.0; 10];
        prop_assert_eq!(paired_permutation_test(&d, &zeros).unwrap(), brute_permutation(&d));
    }

    #[test]
    fn exact_test_on_integers(d in prop::collection::vec(-3i32..=3, 1..=12)) {
        let d: Vec<f64> = d.into_iter().map(f64::from).collect();
        let zeros = vec![0.0; d.len()];
        prop_assert_eq!(paired_permutation_test(&d, &zeros).unwrap(), brute_permutation(&d));
    }

    #[test]
    fn p_is_symmetric_and_shift_invariant(
        a in prop::collection::vec(-1.0f64..1.0, 10),
        b in prop::collection::vec(-1.0f64..1.0, 10),
        c in -100.0f64..100.0,
    ) {
        let p = paired_permutation_test(&a, &b).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert_eq!(p, paired_permutation_test(&b, &a).unwrap());
        let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
        let shifted = paired_permutation_test(&a2, &b2).unwrap();
        // Adding c can perturb the differences in the last bits only.
        let d: Vec<f64> = a2.iter().zip(&b2).map(|(x, y)| x - y).collect();
        prop_assert_eq!(shifted, brute_permutation(&d));
        prop_assert!((shifted - p).abs() <= 1.0 / 1024.0 + 1e-15);
    }

    #[test]
    fn folds_are_round_robin(
        n_subjects in 1usize..8,
        n_items in 1usize..6,
        n_sentences in 1usize..4,
        words in 1usize..5,
        n_folds in 2usize..11,
        shuffle_seed in any::<u64>(),
    ) {
        let mut obs = Vec::new();
        for s in 0..n_subjects {
            for i in 0..n_items {
                for t in 0..n_sentences {
                    for w in 0..words {
                        obs.push(RtObservation {
                            subject_id: format!("s{s}"),
                            context: ContextId::new(format!("i{i}"), format!("t{t}"), w),
                            measure: Measure::Spr,
                            rt: 300.0,
                            prev_word_fixated: None,
                            trial_correct: None,
                        });
                    }
                }
            }
        }
        // Input order must not matter.
        let k = obs.len();
        for i in 0..k {
            let j = (shuffle_seed.wrapping_mul(i as u64 + 1) % k as u64) as usize;
            obs.swap(i, j);
        }
        let n_combos = n_subjects * n_items * n_sentences;
        match make_folds(&obs, n_folds) {
            Err(Error::Plan(_)) => prop_assert!(n_combos < n_folds),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(plan) => {
                prop_assert!(n_combos >= n_folds);
                let folds = plan.row_folds(&obs).unwrap();
                let mut by_combo = std::collections::HashMap::new();
                for (o, f) in obs.iter().zip(&folds) {
                    let key = (o.subject_id.clone(), o.context.item_id.clone(), o.context.sentence_id.clone());
                    let prev = by_combo.insert(key, *f);
                    prop_assert!(prev.is_none() || prev == Some(*f));
                }
                let mut combos_per_fold = vec![0usize; n_folds];
                let mut rows_per_fold = vec![0usize; n_folds];
                for f in by_combo.values() {
                    combos_per_fold[*f] += 1;
                }
                for f in &folds {
                    rows_per_fold[*f] += 1;
                }
                let (lo, hi) = (combos_per_fold.iter().min().unwrap(), combos_per_fold.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
                // Every combination has the same number of rows here.
                let (lo, hi) = (rows_per_fold.iter().min().unwrap(), rows_per_fold.iter().max().unwrap());
                prop_assert!(hi - lo <= words);
                prop_assert!(*lo > 0);
            }
        }
    }
}

#[test]
fn comparison_shape_and_labels() {
    let sim = simulate_rt(1, 15.0, 1.0);
    let res = compare_models(&sim.table, &["word_length"], "a", "b", &sim.row_folds, 10, 12, &CvOptions::default()).unwrap();
    assert_eq!(res.cv.models.len(), 3);
    for m in &res.cv.models {
        assert_eq!(m.per_fold.len(), 10);
        assert!(m.per_fold.iter().all(|g| g.is_some_and(f64::is_finite)));
    }
    assert_eq!(res.comparisons[0].label, format!("a_vs_{BOTH}"));
    assert_eq!(res.comparisons[1].label, format!("b_vs_{BOTH}"));
    for c in &res.comparisons {
        assert_eq!(c.p_adjusted, bonferroni(c.p, 12));
    }
}

#[test]
fn identical_predictors_are_screened() {
    let sim = simulate_rt(2, 15.0, 1.0);
    let mut table = sim.table.clone();
    table.add_column("a_copy", table.column("a").unwrap().to_vec()).unwrap();
    let res = compare_models(&table, &["word_length"], "a", "a_copy", &sim.row_folds, 10, 1, &CvOptions::default()).unwrap();
    let both = res.cv.model(BOTH).unwrap();
    assert_eq!(both.dropped, vec!["a_copy".to_string()]);
    assert_eq!(both.per_fold, res.cv.model("a").unwrap().per_fold);
    assert_eq!(res.comparisons[0].p, 1.0);
}

#[test]
fn constant_predictor_is_dropped() {
    let sim = simulate_rt(3, 15.0, 1.0);
    let mut table = sim.table.clone();
    table.add_column("flat", vec![0.0; table.n_rows()]).unwrap();
    let res = compare_models(&table, &["word_length"], "a", "flat", &sim.row_folds, 10, 1, &CvOptions::default()).unwrap();
    assert_eq!(res.cv.model("flat").unwrap().dropped, vec!["flat".to_string()]);
}

#[test]
fn failed_folds_are_tolerated_up_to_the_limit() {
    // Nonzero only on fold 0: that fold's training column is all zeros.
    let sim = simulate_rt(4, 15.0, 1.0);
    let mut table = sim.table.clone();
    let marker: Vec<f64> = sim
        .row_folds
        .iter()
        .zip(table.column("b").unwrap())
        .map(|(&f, b)| if f == 0 { *b } else { 0.0 })
        .collect();
    table.add_column("fold0_only", marker).unwrap();
    let res = compare_models(&table, &["word_length"], "a", "fold0_only", &sim.row_folds, 10, 1, &CvOptions::default()).unwrap();
    assert_eq!(res.cv.failed_folds.len(), 1);
    assert_eq!(res.cv.failed_folds[0].0, 0);
    assert!(res.cv.models.iter().all(|m| m.per_fold[0].is_none() && m.completed().len() == 9));
    let strict = CvOptions {
        max_failed_folds: 0,
        ..CvOptions::default()
    };
    let err = compare_models(&table, &["word_length"], "a", "fold0_only", &sim.row_folds, 10, 1, &strict);
    assert!(matches!(err, Err(Error::Plan(_))));
}

#[test]
fn pearson_hand_value() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [2.0, 1.0, 4.0, 3.0, 5.0];
    // sxy = 8, sxx = syy = 10.
    assert!((pearson(&x, &y).unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn calibration_with_known_generator() {
    // RTs depend on `a` only; `b` is `a` plus noise.
    let (mut spurious, mut detected, mut two_sided) = (0, 0, 0);
    for seed in 0..20 {
        let sim = simulate_rt(seed, 20.0, 1.0);
        let r = compare_models(&sim.table, &["word_length"], "a", "b", &sim.row_folds, 10, 1, &CvOptions::default()).unwrap();
        spurious += r.comparisons[0].significant_gain(0.05) as usize;
        two_sided += r.comparisons[0].significant(0.05) as usize;
        detected += r.comparisons[1].significant_gain(0.05) as usize;
    }
    eprintln!("a_vs_both gains {spurious}/20 (two-sided {two_sided}/20), b_vs_both gains {detected}/20");
    assert!(spurious <= 2);
    assert!(detected >= 18);
}
