use dsmstcn_core::data::MACRO;
use dsmstcn_core::metrics::{evaluate_tracks, extract_segments, samplewise_counts, segmental_counts};
use dsmstcn_core::selfcheck::{matcher_fixtures, matcher_sweep, reference_segmental_counts};
use proptest::prelude::*;

const C: usize = 5;

/// Tracks built from runs, so segments are realistic rather than noise.
fn track(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec((0usize..C, 1usize..15), 1..20).prop_map(move |runs| {
        let mut t: Vec<usize> = runs.into_iter().flat_map(|(c, n)| std::iter::repeat_n(c, n)).collect();
        t.truncate(max_len);
        t
    })
}

fn pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (track(200), track(200)).prop_map(|(mut a, mut b)| {
        let n = a.len().min(b.len());
        a.truncate(n);
        b.truncate(n);
        (a, b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matcher_equals_reference((truth, pred) in pair(), threshold in prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0])) {
        prop_assert_eq!(
            segmental_counts(&truth, &pred, C, threshold).unwrap(),
            reference_segmental_counts(&truth, &pred, C, threshold)
        );
    }

    #[test]
    fn others_padding_changes_nothing((truth, pred) in pair(), extra in 1usize..30) {
        let a = evaluate_tracks(&truth, &pred, &MACRO, 0.5).unwrap();
        let pad = |t: &Vec<usize>| t.iter().copied().chain(std::iter::repeat_n(0, extra)).collect::<Vec<_>>();
        let b = evaluate_tracks(&pad(&truth), &pad(&pred), &MACRO, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn identity_prediction_is_perfect(truth in track(200), threshold in 0.0f64..=1.0) {
        let r = evaluate_tracks(&truth, &truth, &MACRO, threshold).unwrap();
        for c in r.classes.iter().filter(|c| truth.contains(&c.class_id)) {
            prop_assert_eq!(c.samplewise.f1(), 1.0);
            prop_assert_eq!(c.segmental.f1(), 1.0);
        }
    }

    #[test]
    fn raising_threshold_never_adds_true_positives((truth, pred) in pair(), lo in 0.0f64..1.0, step in 0.0f64..1.0) {
        let hi = (lo + step).min(1.0);
        let a = segmental_counts(&truth, &pred, C, lo).unwrap();
        let b = segmental_counts(&truth, &pred, C, hi).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y.tp <= x.tp);
        }
    }

    #[test]
    fn scores_are_bounded((truth, pred) in pair()) {
        let r = evaluate_tracks(&truth, &pred, &MACRO, 0.5).unwrap();
        for c in &r.classes {
            for v in [c.samplewise.precision(), c.samplewise.recall(), c.samplewise.f1(), c.segmental.f1()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let sw = samplewise_counts(&truth, &pred, C).unwrap();
        let len = truth.len() as u64;
        prop_assert!(sw.iter().all(|c| c.tp + c.fp <= len && c.tp + c.fn_ <= len));
    }

    #[test]
    fn threshold_zero_counts_overlaps_with_exact_boundaries(truth in track(200)) {
        // Merge adjacent same-class segments is impossible in one track, so
        // with identical boundaries every predicted segment overlaps exactly
        // one true segment.
        let counts = segmental_counts(&truth, &truth, C, 0.0).unwrap();
        let segs = extract_segments(&truth);
        for k in 1..C {
            prop_assert_eq!(counts[k - 1].tp as usize, segs.iter().filter(|s| s.class_id == k).count());
        }
    }
}

#[test]
fn eight_pictured_cases() {
    for f in matcher_fixtures() {
        let got = segmental_counts(&f.truth, &f.pred, 2, 0.5).unwrap()[0];
        assert_eq!(got, f.expected, "{}", f.name);
    }
    assert_eq!(matcher_fixtures().len(), 8);
}

#[test]
fn random_sweep_matches_reference() {
    let out = matcher_sweep(2000, 200, 99).unwrap();
    assert!(out.passed(), "{out:?}");
}
