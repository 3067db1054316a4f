mod support;

use proptest::prelude::*;
use spd_core::metrics::{
    aupr, auroc, evaluate, max_f1, pr_curve, roc_curve, sweep, toy_model_a, toy_model_b, PrMode, ScoredSample,
};
use support::metrics_oracle::oracle;

fn samples_strategy(max: usize) -> impl Strategy<Value = Vec<ScoredSample>> {
    // Few distinct scores, so ties are common.
    prop::collection::vec((0u8..12, any::<bool>()), 2..max).prop_map(|v| {
        v.into_iter()
            .map(|(s, l)| ScoredSample::new(f64::from(s) * 0.25 - 1.0, l))
            .collect()
    })
}

fn both_classes(s: &[ScoredSample]) -> bool {
    s.iter().any(|x| x.label) && s.iter().any(|x| !x.label)
}

#[test]
fn toy_model_a_golden() {
    let r = evaluate(&toy_model_a()).unwrap();
    // 99,000 negatives below every positive; group k's ten negatives lose
    // to positives 1..=k: (99,000·100 + 10·5,050) / 10^7.
    assert_eq!(r.auroc, 0.99505);
    assert!((r.aupr - 0.105).abs() <= 0.002, "AP {}", r.aupr);
    assert!((r.max_f1 - 100.0 / 595.0).abs() < 1e-12);
    assert_eq!((r.n_pos, r.n_neg), (100, 100_000));
}

#[test]
fn toy_model_b_golden() {
    let r = evaluate(&toy_model_b()).unwrap();
    assert_eq!(r.auroc, 0.985);
    assert!((r.max_f1 - 90.0 / 95.0).abs() < 1e-12);
    assert!((r.aupr - 0.901).abs() <= 0.002, "AP {}", r.aupr);
    // Independent sum: 0.9 plus ten tied groups at precision k/(k+3000(k-90)).
    let tail: f64 = (91..=100).map(|k| 0.01 * k as f64 / (k as f64 + 3000.0 * (k - 90) as f64)).sum();
    assert!((r.aupr - (0.9 + tail)).abs() < 1e-12);
}

#[test]
fn curves_cover_endpoints() {
    let s = toy_model_b();
    let pts = sweep(&s).unwrap();
    let roc = roc_curve(&pts);
    assert_eq!(roc.points.first().map(|p| (p.0, p.1)), Some((0.0, 0.0)));
    assert_eq!(roc.points.last().map(|p| (p.0, p.1)), Some((1.0, 1.0)));
    let pr = pr_curve(&pts);
    assert_eq!(pr.points[0].1, 1.0);
    assert_eq!(pr.points.last().unwrap().0, 1.0);
}

#[test]
fn negative_zero_shares_a_threshold() {
    let s = [ScoredSample::new(0.0, true), ScoredSample::new(-0.0, false)];
    assert_eq!(sweep(&s).unwrap().len(), 2);
    assert_eq!(auroc(&s).unwrap(), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force(s in samples_strategy(120)) {
        prop_assume!(both_classes(&s));
        let r = evaluate(&s).unwrap();
        let o = oracle(&s);
        prop_assert_eq!(r.auroc.to_bits(), o.auroc.to_bits());
        prop_assert_eq!(r.aupr.to_bits(), o.ap.to_bits());
        prop_assert_eq!(r.aupr_trapezoid.to_bits(), o.trapezoid.to_bits());
        prop_assert_eq!(r.max_f1.to_bits(), o.max_f1.to_bits());
        prop_assert!(r.threshold == o.threshold);
    }

    #[test]
    fn label_flip_reflects_auroc(s in samples_strategy(80)) {
        prop_assume!(both_classes(&s));
        let flipped: Vec<_> = s.iter().map(|x| ScoredSample::new(-x.score, x.label)).collect();
        let a = auroc(&s).unwrap();
        let b = auroc(&flipped).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_invariance(s in samples_strategy(80)) {
        prop_assume!(both_classes(&s));
        let moved: Vec<_> = s.iter().map(|x| ScoredSample::new(x.score.exp() * 3.0 + 1.0, x.label)).collect();
        prop_assert_eq!(auroc(&s).unwrap(), auroc(&moved).unwrap());
        prop_assert_eq!(aupr(&s, PrMode::AveragePrecision).unwrap(), aupr(&moved, PrMode::AveragePrecision).unwrap());
        prop_assert_eq!(max_f1(&s).unwrap().0, max_f1(&moved).unwrap().0);
    }

    #[test]
    fn values_in_unit_range(s in samples_strategy(80)) {
        prop_assume!(both_classes(&s));
        let r = evaluate(&s).unwrap();
        for v in [r.auroc, r.aupr, r.aupr_trapezoid, r.max_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
