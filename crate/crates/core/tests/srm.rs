use calaudit::dataset::{FeaturedRow, FeaturedSample};
use calaudit::harness::figure2_distribution;
use calaudit::srm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `E[y | x] = x` on a grid of 1000 points, encoded exactly with two weighted rows per point.
fn ramp() -> FeaturedSample {
    let n = 1000;
    let mut rows = Vec::new();
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64;
        rows.push(FeaturedRow {
            features: vec![x],
            label: 1,
            weight: x,
        });
        rows.push(FeaturedRow {
            features: vec![x],
            label: 0,
            weight: 1.0 - x,
        });
    }
    FeaturedSample::new(rows).unwrap()
}

#[test]
fn local_search_takes_three_steps_on_a_ramp() {
    // k equal bins leave 1/4 − 1/6 + 1/(12k²) of squared loss, so the drops
    // from 1→2, 2→3, 3→4, 4→5 bins are 0.0625, 0.01157, 0.00405, 0.001875
    let d = ramp();
    let fam = HistogramFamily::new(1);
    let opts = fam.opt_sweep(&d, 4).unwrap();
    let drops: Vec<f64> = opts.windows(2).map(|w| w[0] - w[1]).collect();
    let expected = [0.0625, 0.011574, 0.004051, 0.001875];
    for (got, want) in drops.iter().zip(expected) {
        assert!((got - want).abs() < 1e-5, "{drops:?}");
    }

    let trace = algorithm1(&fam, &d, 0, 0.003).unwrap();
    let advances: Vec<&TraceStep> = trace
        .steps
        .iter()
        .filter(|s| s.decision == Decision::Advance)
        .collect();
    assert_eq!(advances.len(), 3);
    for step in &advances {
        assert!(step.opt_s - step.compared > 0.003);
    }
    assert_eq!(trace.t, 3);
    assert_eq!(trace.complexity, 3);
    assert!(trace.holds());
    assert!(trace.pgap <= 0.003 + 1e-8);
    let json: serde_json::Value = serde_json::from_str(&trace.to_json()).unwrap();
    assert_eq!(json["steps"][3]["decision"], "return");
}

#[test]
fn histogram_oracle_beats_every_grid_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fam = HistogramFamily::new(0);
    for _ in 0..20 {
        let n = rng.gen_range(5..60);
        let rows = (0..n)
            .map(|_| FeaturedRow {
                features: vec![rng.gen_range(-2.0..2.0)],
                label: u8::from(rng.gen_bool(0.4)),
                weight: rng.gen_range(0.1..1.0),
            })
            .collect();
        let d = FeaturedSample::new(rows).unwrap();
        let k = rng.gen_range(1..6);
        let (f, loss) = fam.fit_bins(&d, k).unwrap();
        assert!((squared_loss(&f, &d) - loss).abs() < 1e-12);
        for bin in 0..k {
            let members: Vec<&FeaturedRow> = d
                .rows()
                .iter()
                .filter(|r| f.bin_of(r.features[0]) == bin)
                .collect();
            let bin_loss = |c: f64| -> f64 {
                members
                    .iter()
                    .map(|r| r.weight * (f64::from(r.label) - c).powi(2))
                    .sum()
            };
            let fitted = bin_loss(f.values[bin]);
            for g in 0..=100 {
                assert!(fitted <= bin_loss(g as f64 / 100.0) + 1e-15);
            }
        }
    }
}

#[test]
fn regularized_sweep_tradeoff_holds_for_every_budget() {
    let d = figure2_distribution(5_000, 3).unwrap();
    let lambda = 0.002;
    let trace = algorithm2(&HistogramFamily::default(), &d, lambda).unwrap();
    assert_eq!(trace.steps.len(), 501);
    let opt_t = trace.steps[trace.t].opt_s;
    for step in &trace.steps {
        let gap = step.opt_s - (opt_t - (step.s as f64 - trace.t as f64) * lambda);
        assert!(gap >= -1e-10, "s = {}", step.s);
    }
    assert!(trace.pgap <= lambda + 1e-8);
}

#[test]
fn srm_claim_on_figure2_and_ramp() {
    let d = figure2_distribution(20_000, 5).unwrap();
    let report = srm_claim_check(&HistogramFamily::default(), &d, 0.04).unwrap();
    assert!(report.smce <= 0.2);
    assert!(report.pgap <= 0.04 + 1e-8);

    // large λ: only constants are affordable
    let report = srm_claim_check(&HistogramFamily::default(), &ramp(), 0.9).unwrap();
    assert_eq!(report.complexity, 0);
    assert!(report.pgap <= 0.9);

    let report = srm_claim_check(&HistogramFamily::new(0), &ramp(), 0.001).unwrap();
    assert!(report.holds());
}
