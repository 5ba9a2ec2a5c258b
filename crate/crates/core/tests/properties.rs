use calaudit::dataset::{Format, Point, Space, WeightedSample};
use calaudit::lipschitz::LipschitzFunction;
use calaudit::metrics::*;
use calaudit::proper_loss::{sigmoid, CrossEntropyLoss, ProperLoss, SquaredLoss};
use proptest::prelude::*;

const SLACK: f64 = 1e-8;

fn point(range: std::ops::RangeInclusive<f64>) -> impl Strategy<Value = (f64, u8, f64)> {
    (range, 0u8..=1, 0.05f64..1.0)
}

fn sample(
    space: Space,
    range: std::ops::RangeInclusive<f64>,
) -> impl Strategy<Value = WeightedSample> {
    prop::collection::vec(point(range), 1..30).prop_map(move |pts| {
        let points = pts
            .into_iter()
            .map(|(v, y, w)| Point::new(v, y, w))
            .collect();
        WeightedSample::new(points, space).unwrap()
    })
}

/// Samples whose values repeat, so collapsing actually merges points.
fn repeated_sample() -> impl Strategy<Value = WeightedSample> {
    (
        prop::collection::vec(0.0f64..=1.0, 1..6),
        prop::collection::vec((0usize..6, 0u8..=1, 0.05f64..1.0), 1..40),
    )
        .prop_map(|(values, picks)| {
            let points = picks
                .into_iter()
                .map(|(i, y, w)| Point::new(values[i % values.len()], y, w))
                .collect();
            WeightedSample::new(points, Space::Prediction).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smce_and_pgap_bound_each_other(s in sample(Space::Prediction, 0.0..=1.0)) {
        let smce = smooth_calibration_error(&s).unwrap().value;
        let pgap = post_processing_gap(&s).unwrap().value;
        prop_assert!(pgap - smce * smce >= -SLACK, "smCE {smce} pGap {pgap}");
        prop_assert!(2.0 * smce - pgap >= -SLACK, "smCE {smce} pGap {pgap}");
    }

    #[test]
    fn certificate_update_gains_beta_squared(s in sample(Space::Prediction, 0.0..=1.0)) {
        let report = smooth_calibration_error(&s).unwrap();
        let update = certificate_post_processing(&s, &report.certificate).unwrap();
        prop_assert!((update.beta - report.value).abs() < 1e-9);
        prop_assert!(update.loss_drop - update.beta * update.beta >= -SLACK);
        // clamping v + β·η(v) to [0, 1] keeps the update 1-Lipschitz
        let k = &update.kappa;
        for (v, kv) in k.knots.windows(2).zip(k.values.windows(2)) {
            let du = (kv[1] - v[1]) - (kv[0] - v[0]);
            prop_assert!(du.abs() <= (v[1] - v[0]) + 1e-12);
        }
    }

    #[test]
    fn cross_entropy_dual_bounds(s in sample(Space::Logit, -6.0..=6.0)) {
        let dsmce = dual_smooth_calibration_error(&s, &CrossEntropyLoss).unwrap().value;
        let dpgap = dual_post_processing_gap(&s, &CrossEntropyLoss).unwrap().value;
        let smce = smooth_calibration_error(&s.map_values(Space::Prediction, sigmoid).unwrap()).unwrap().value;
        prop_assert!(dpgap - 2.0 * dsmce * dsmce >= -SLACK);
        prop_assert!(4.0 * dsmce - dpgap >= -SLACK);
        prop_assert!(dsmce - smce >= -SLACK);
    }

    #[test]
    fn squared_loss_dual_bounds(s in sample(Space::Logit, -2.0..=2.0)) {
        let loss = SquaredLoss;
        let lambda = loss.smoothness();
        let dsmce = dual_smooth_calibration_error(&s, &loss).unwrap().value;
        let dpgap = dual_post_processing_gap(&s, &loss).unwrap().value;
        prop_assert!(lambda * dpgap - dsmce * dsmce / 2.0 >= -SLACK);
        prop_assert!(dsmce - lambda * dpgap >= -SLACK);
    }

    #[test]
    fn collapsing_preserves_expectations(s in repeated_sample(), slope in -1.0f64..1.0, shift in -0.5f64..0.5) {
        let eta = |v: f64| (slope * v + shift).clamp(-1.0, 1.0);
        let raw = s.expect(|v, y| (y - v) * eta(v));
        let collapsed = s.collapse().residual_correlation(eta);
        prop_assert!((raw - collapsed).abs() < 1e-12);
        let mut merged = Vec::new();
        for (v, w, ybar) in s.collapse().iter() {
            for (y, mass) in [(1u8, w * ybar), (0u8, w * (1.0 - ybar))] {
                if mass > 0.0 {
                    merged.push(Point::new(v, y, mass));
                }
            }
        }
        let merged = WeightedSample::new(merged, Space::Prediction).unwrap();
        let a = smooth_calibration_error(&s).unwrap().value;
        let b = smooth_calibration_error(&merged).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn files_round_trip(s in sample(Space::Prediction, 0.0..=1.0), json in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample");
        let format = if json { Format::Json } else { Format::Csv };
        s.save(&path, format).unwrap();
        let back = WeightedSample::load(&path, format, Space::Prediction).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn relabeling_calibrates(s in sample(Space::Prediction, 0.0..=1.0)) {
        let relabeled = optimal_relabeling(&s, &SquaredLoss).unwrap();
        let after = relabeled.apply(&s).unwrap();
        prop_assert!(smooth_calibration_error(&after).unwrap().value <= 1e-9);
        prop_assert!(relabeled.new_loss <= relabeled.old_loss + 1e-12);
    }

    #[test]
    fn lipschitz_certificates_are_lipschitz(s in sample(Space::Prediction, 0.0..=1.0)) {
        let eta: LipschitzFunction = smooth_calibration_error(&s).unwrap().certificate;
        prop_assert!(eta.violation() <= 1e-9);
        prop_assert!(eta.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }
}
