#![allow(dead_code)]

use std::sync::Arc;

use calaudit::dataset::WeightedSample;
use calaudit::lipschitz::*;
use calaudit::proper_loss::{sigmoid, softplus};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Grid step for the brute-force oracle; instance boxes lie on this lattice.
pub const STEP: f64 = 0.005;

pub fn logistic_term(w: f64, t: f64, ybar: f64) -> Arc<dyn ConvexTerm> {
    Arc::new(FnTerm {
        value: move |x: f64| w * (softplus(t + x) - ybar * (t + x)),
        derivative: move |x: f64| w * (sigmoid(t + x) - ybar),
        curvature: move |x: f64| {
            let s = sigmoid(t + x);
            w * s * (1.0 - s)
        },
    })
}

/// A random chain problem whose knots lie on a 0.05 lattice and whose boxes
/// lie on the oracle lattice. `kind`: 0 linear, 1 quadratic, 2 logistic terms.
pub fn lattice_instance(rng: &mut ChaCha8Rng, kind: usize) -> ChainProblem<'static> {
    let m = rng.gen_range(1..=5);
    let mut knots = Vec::with_capacity(m);
    let mut k: i64 = rng.gen_range(-20..=0);
    for _ in 0..m {
        knots.push(k as f64 * 0.05);
        k += rng.gen_range(1..=6);
    }
    let lipschitz = [0.1, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
    let radius = if kind == 2 { 800 } else { 200 };
    let box_lo: Vec<f64> = (0..m)
        .map(|_| -(rng.gen_range(0..=radius) as f64) * STEP)
        .collect();
    let box_hi: Vec<f64> = (0..m)
        .map(|_| rng.gen_range(0..=radius) as f64 * STEP)
        .collect();
    let (objective, sense) = match kind {
        0 => {
            let c = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sense = if rng.gen_bool(0.5) {
                Sense::Maximize
            } else {
                Sense::Minimize
            };
            (Objective::Linear(c), sense)
        }
        1 => {
            let a = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let b = (0..m).map(|_| rng.gen_range(-1.5..1.5)).collect();
            (
                Objective::Quadratic {
                    a,
                    b,
                    constant: 0.0,
                },
                Sense::Minimize,
            )
        }
        _ => {
            let terms = (0..m)
                .map(|j| {
                    logistic_term(rng.gen_range(0.05..1.0), knots[j], rng.gen_range(0.0..=1.0))
                })
                .collect();
            (Objective::ConvexSeparable(terms), Sense::Minimize)
        }
    };
    ChainProblem {
        knots,
        box_lo,
        box_hi,
        lipschitz,
        objective,
        sense,
    }
}

/// Largest drop in expected cross-entropy from an update `v ↦ v + η(v)`
/// with `η` 1-Lipschitz and `v + η(v)` kept inside `[1e-12, 1 − 1e-12]`.
pub fn cross_entropy_prediction_gap(s: &WeightedSample) -> f64 {
    const CLIP: f64 = 1e-12;
    let c = s.collapse();
    let mut knots = Vec::new();
    let mut terms: Vec<Arc<dyn ConvexTerm>> = Vec::new();
    let mut before = 0.0;
    for (v, w, ybar) in c.iter() {
        knots.push(v);
        before += w * (-ybar * v.ln() - (1.0 - ybar) * (1.0 - v).ln());
        terms.push(Arc::new(FnTerm {
            value: move |x: f64| w * (-ybar * (v + x).ln() - (1.0 - ybar) * (1.0 - v - x).ln()),
            derivative: move |x: f64| w * (-ybar / (v + x) + (1.0 - ybar) / (1.0 - v - x)),
            curvature: move |x: f64| {
                w * (ybar / (v + x).powi(2) + (1.0 - ybar) / (1.0 - v - x).powi(2))
            },
        }));
    }
    let box_lo = knots.iter().map(|v| CLIP - v).collect();
    let box_hi = knots.iter().map(|v| 1.0 - CLIP - v).collect();
    let p = ChainProblem {
        knots,
        box_lo,
        box_hi,
        lipschitz: 1.0,
        objective: Objective::ConvexSeparable(terms),
        sense: Sense::Minimize,
    };
    let sol = solve_convex_chain(&p).expect("convex solver converges");
    before - sol.optimum
}
