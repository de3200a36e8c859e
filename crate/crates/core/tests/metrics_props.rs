mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use regplda::metrics::{compute_eer, compute_min_dcf, DcfParams};

fn score_set(seed: u64, n: usize, quantize: bool) -> Vec<(f64, bool)> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let target = i % 3 == 0;
            let mut s: f64 = r.random::<f64>() + if target { 0.4 } else { 0.0 };
            if quantize {
                s = (s * 10.0).round();
            }
            (s, target)
        })
        .collect()
}

#[test]
fn swapped_labels_reflect_eer() {
    let scores = score_set(5, 200, false);
    let swapped: Vec<(f64, bool)> = scores.iter().map(|&(s, t)| (s, !t)).collect();
    let (a, _) = compute_eer(&scores).unwrap();
    let (b, _) = compute_eer(&swapped).unwrap();
    assert!((a + b - 1.0).abs() < 0.02, "{a} + {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_brute_force(seed in 0u64..100_000, quantize: bool) {
        let scores = score_set(seed, 60, quantize);
        let p = DcfParams::default();
        prop_assert_eq!(compute_eer(&scores).unwrap().0, brute_eer(&scores));
        prop_assert_eq!(compute_min_dcf(&scores, &p).unwrap().0, brute_min_dcf(&scores, p.p_target, 1.0, 1.0));
    }

    #[test]
    fn metrics_are_invariant_to_monotone_transforms(seed in 0u64..100_000, a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let scores = score_set(seed, 80, false);
        let mapped: Vec<(f64, bool)> = scores.iter().map(|&(s, t)| ((a * s + b).exp(), t)).collect();
        let p = DcfParams::default();
        prop_assert!((compute_eer(&scores).unwrap().0 - compute_eer(&mapped).unwrap().0).abs() < 1e-12);
        prop_assert_eq!(compute_min_dcf(&scores, &p).unwrap().0, compute_min_dcf(&mapped, &p).unwrap().0);
    }

    #[test]
    fn eer_lies_in_unit_interval(seed in 0u64..100_000) {
        let (eer, _) = compute_eer(&score_set(seed, 30, true)).unwrap();
        prop_assert!((0.0..=1.0).contains(&eer));
    }
}
