use std::sync::Arc;

use super::{CalibrationReport, MetricParams, DUAL_PGAP, DUAL_SMCE};
use crate::dataset::{Space, WeightedSample};
use crate::lipschitz::{
    solve_convex_chain, solve_linear_chain, ChainProblem, ConvexTerm, Objective, Sense,
};
use crate::proper_loss::ProperLoss;

fn params<L: ProperLoss + ?Sized>(loss: &L, knots: usize) -> MetricParams {
    MetricParams {
        loss: loss.name().to_string(),
        lambda: loss.smoothness(),
        lambda_estimated: loss.smoothness_is_estimated(),
        knots,
    }
}

/// `sup |E[(y − ∇ψ(g))·η(g)]|` over `λ`-Lipschitz `η : ℝ → [−1, 1]`.
///
/// The class is closed under negation, so a single maximization gives the
/// absolute value.
pub fn dual_smooth_calibration_error<L: ProperLoss + ?Sized>(
    s: &WeightedSample,
    loss: &L,
) -> crate::Result<CalibrationReport> {
    s.require_space(Space::Logit)?;
    let c = s.collapse();
    let coefs = c
        .iter()
        .map(|(t, w, y)| w * (y - loss.grad_psi(t)))
        .collect();
    let problem = ChainProblem::uniform_box(
        c.values.clone(),
        -1.0,
        1.0,
        loss.smoothness(),
        Objective::Linear(coefs),
        Sense::Maximize,
    );
    let sol = solve_linear_chain(&problem)?;
    Ok(CalibrationReport {
        metric: DUAL_SMCE.into(),
        value: sol.optimum.max(0.0),
        loss_before: None,
        loss_after: None,
        certificate: sol.certificate,
        params: params(loss, c.len()),
    })
}

/// `w·(ψ(t + η) − ȳ·(t + η))`: the weighted dual loss at one knot after shifting by `η`.
struct DualLossTerm<'a, L: ?Sized> {
    loss: &'a L,
    t: f64,
    weight: f64,
    label_mean: f64,
}

impl<L: ProperLoss + ?Sized> ConvexTerm for DualLossTerm<'_, L> {
    fn value(&self, x: f64) -> f64 {
        let u = self.t + x;
        self.weight * (self.loss.psi(u) - self.label_mean * u)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.weight * (self.loss.grad_psi(self.t + x) - self.label_mean)
    }

    fn curvature(&self, x: f64) -> f64 {
        self.weight * self.loss.psi_curvature(self.t + x)
    }
}

/// Dual-loss drop from the best update `η` that is 1-Lipschitz in logit
/// space with `|η| ≤ 1/λ`.
pub fn dual_post_processing_gap<L: ProperLoss + ?Sized>(
    s: &WeightedSample,
    loss: &L,
) -> crate::Result<CalibrationReport> {
    s.require_space(Space::Logit)?;
    let c = s.collapse();
    let radius = 1.0 / loss.smoothness();
    let terms: Vec<Arc<dyn ConvexTerm + '_>> = c
        .iter()
        .map(|(t, w, y)| {
            Arc::new(DualLossTerm {
                loss,
                t,
                weight: w,
                label_mean: y,
            }) as Arc<dyn ConvexTerm + '_>
        })
        .collect();
    let before: f64 = terms.iter().map(|term| term.value(0.0)).sum();
    let problem = ChainProblem::uniform_box(
        c.values.clone(),
        -radius,
        radius,
        1.0,
        Objective::ConvexSeparable(terms),
        Sense::Minimize,
    );
    let sol = solve_convex_chain(&problem)?;
    let after = sol.optimum.min(before);
    Ok(CalibrationReport {
        metric: DUAL_PGAP.into(),
        value: (before - after).max(0.0),
        loss_before: Some(before),
        loss_after: Some(after),
        certificate: sol.certificate,
        params: params(loss, c.len()),
    })
}
