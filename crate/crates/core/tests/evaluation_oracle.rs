mod common;

use primseg::evaluation::{average_precision, evaluate_labels, map_thresholds, ScoredInstance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::ap_oracle;

fn random_set(rng: &mut impl Rng, universe: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..universe).filter(|_| rng.gen_bool(0.3)).collect();
    if s.is_empty() {
        s.push(rng.gen_range(0..universe));
    }
    s
}

#[test]
fn average_precision_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..500 {
        let universe = rng.gen_range(4..40);
        let gts: Vec<Vec<usize>> = (0..rng.gen_range(0..=6)).map(|_| random_set(&mut rng, universe)).collect();
        let preds: Vec<(Vec<usize>, f64)> = (0..rng.gen_range(0..=8))
            .map(|_| (random_set(&mut rng, universe), rng.gen_range(0..4) as f64))
            .collect();
        let scored: Vec<ScoredInstance> = preds
            .iter()
            .map(|(p, c)| ScoredInstance {
                points: p.clone(),
                confidence: *c,
            })
            .collect();
        for thr in [0.25, 0.5, 0.75] {
            let got = average_precision(&scored, &gts, thr).unwrap();
            let want = ap_oracle(&preds, &gts, thr);
            assert!((got - want).abs() <= 1e-9, "case {case} thr {thr}: {got} vs {want}");
        }
    }
}

#[test]
fn spurious_last_prediction_keeps_full_ap() {
    let gts = vec![(0..10).collect::<Vec<_>>(), (10..20).collect()];
    let preds = vec![
        ScoredInstance {
            points: (0..9).collect(),
            confidence: 2.0,
        },
        ScoredInstance {
            points: (10..19).collect(),
            confidence: 2.0,
        },
        ScoredInstance {
            points: vec![25, 26],
            confidence: 1.0,
        },
    ];
    assert_eq!(average_precision(&preds, &gts, 0.5).unwrap(), 1.0);
    let as_pairs: Vec<(Vec<usize>, f64)> = preds.iter().map(|p| (p.points.clone(), p.confidence)).collect();
    assert_eq!(ap_oracle(&as_pairs, &gts, 0.5), 1.0);
}

#[test]
fn single_blob_against_five_objects_scores_zero() {
    let gt: Vec<i64> = (0..100).map(|i| i / 20).collect();
    let r = evaluate_labels(&vec![0; 100], &gt).unwrap();
    let oracle = ap_oracle(&[((0..100).collect(), 100.0)], &(0..5).map(|g| (g * 20..g * 20 + 20).collect()).collect::<Vec<_>>(), 0.25);
    assert_eq!(r.ap25, oracle);
    assert_eq!(r.ap25, 0.0);
}

fn labels_strategy() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    (5usize..80).prop_flat_map(|n| {
        (
            proptest::collection::vec(-1i64..6, n),
            proptest::collection::vec(-1i64..5, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn report_is_consistent((pred, gt) in labels_strategy()) {
        let r = evaluate_labels(&pred, &gt).unwrap();
        let mean = r.per_threshold.iter().map(|(_, ap)| ap).sum::<f64>() / 10.0;
        prop_assert!((r.map - mean).abs() < 1e-12);
        prop_assert_eq!(r.per_threshold.iter().map(|(t, _)| *t).collect::<Vec<_>>(), map_thresholds());
        prop_assert!(r.map <= r.ap50 + 1e-12);
        prop_assert!(r.ap50 <= r.ap25 + 1e-12);
        for v in [r.map, r.ap50, r.ap25] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn report_ignores_label_names((pred, gt) in labels_strategy(), shift in 1i64..50) {
        let renamed: Vec<i64> = pred.iter().map(|&l| if l < 0 { l } else { 7 * l + shift }).collect();
        let a = evaluate_labels(&pred, &gt).unwrap();
        let b = evaluate_labels(&renamed, &gt).unwrap();
        prop_assert_eq!(a.per_threshold, b.per_threshold);
        prop_assert_eq!(a.ap25, b.ap25);
    }

    #[test]
    fn report_ignores_point_order((pred, gt) in labels_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..pred.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let p2: Vec<i64> = order.iter().map(|&i| pred[i]).collect();
        let g2: Vec<i64> = order.iter().map(|&i| gt[i]).collect();
        let a = evaluate_labels(&pred, &gt).unwrap();
        let b = evaluate_labels(&p2, &g2).unwrap();
        // Ranking ties fall back to the first point id, so compare only
        // when prediction sizes are distinct.
        let mut sizes: Vec<usize> = a.matches.iter().map(|m| m.size).collect();
        let n = sizes.len();
        sizes.dedup();
        if sizes.len() == n {
            prop_assert_eq!(a.per_threshold, b.per_threshold);
            prop_assert_eq!(a.ap25, b.ap25);
        }
    }
}
