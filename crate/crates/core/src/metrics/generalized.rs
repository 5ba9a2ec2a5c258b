use serde::Serialize;

use crate::dataset::{Space, WeightedSample};
use crate::error::{Error, Result};
use crate::proper_loss::{golden_section_min, ProperLoss};

/// A bounded test function of the point index and its logit, with values in `[−1, 1]`.
pub type TestFunction<'a> = Box<dyn Fn(usize, f64) -> f64 + Send + Sync + 'a>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedReport {
    /// `max_w |E[(y − ∇ψ(g))·w]|`.
    pub gen_ce: f64,
    /// Best dual-loss drop over updates `g + β·w`, `|β| ≤ 1/λ`.
    pub gen_gap: f64,
    pub best_ce_function: usize,
    pub best_gap_function: usize,
    pub best_beta: f64,
    pub lambda: f64,
    /// `λ·genGap − genCE²/2`.
    pub lower_slack: f64,
    /// `genCE − λ·genGap`.
    pub upper_slack: f64,
}

pub const GENERALIZED_TOLERANCE: f64 = 1e-8;

/// Calibration error and post-processing gap relative to a finite family `W`.
///
/// Test functions are evaluated on raw sample points (so they may depend on
/// the point index, e.g. group indicators). Returns an error if the two-sided
/// bound `genCE²/2 ≤ λ·genGap ≤ genCE` fails by more than
/// [`GENERALIZED_TOLERANCE`].
pub fn generalized_dual_metrics<L: ProperLoss + ?Sized>(
    s: &WeightedSample,
    loss: &L,
    family: &[TestFunction<'_>],
) -> Result<GeneralizedReport> {
    let report = generalized_dual_metrics_unchecked(s, loss, family)?;
    if report.lower_slack < -GENERALIZED_TOLERANCE || report.upper_slack < -GENERALIZED_TOLERANCE {
        return Err(Error::TheoremViolation(format!(
            "genCE²/2 <= λ·genGap <= genCE fails with slacks {:e} and {:e}",
            report.lower_slack, report.upper_slack
        )));
    }
    Ok(report)
}

/// [`generalized_dual_metrics`] without the final bound check.
pub fn generalized_dual_metrics_unchecked<L: ProperLoss + ?Sized>(
    s: &WeightedSample,
    loss: &L,
    family: &[TestFunction<'_>],
) -> Result<GeneralizedReport> {
    s.require_space(Space::Logit)?;
    if family.is_empty() {
        return Err(Error::InvalidArgument("test family W is empty".into()));
    }
    let lambda = loss.smoothness();
    let radius = 1.0 / lambda;
    let points = s.points();
    let base: f64 = points
        .iter()
        .map(|p| p.weight * (loss.psi(p.value) - p.y() * p.value))
        .sum();

    let mut report = GeneralizedReport {
        gen_ce: 0.0,
        gen_gap: 0.0,
        best_ce_function: 0,
        best_gap_function: 0,
        best_beta: 0.0,
        lambda,
        lower_slack: 0.0,
        upper_slack: 0.0,
    };
    for (k, w) in family.iter().enumerate() {
        let values: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| w(i, p.value))
            .collect();
        if let Some(bad) = values.iter().find(|v| !(v.abs() <= 1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "test function {k} takes value {bad} outside [-1, 1]"
            )));
        }
        let ce = points
            .iter()
            .zip(&values)
            .map(|(p, &wv)| p.weight * (p.y() - loss.grad_psi(p.value)) * wv)
            .sum::<f64>()
            .abs();
        if ce > report.gen_ce {
            report.gen_ce = ce;
            report.best_ce_function = k;
        }

        let shifted = |beta: f64| -> f64 {
            points
                .iter()
                .zip(&values)
                .map(|(p, &wv)| {
                    let u = p.value + beta * wv;
                    p.weight * (loss.psi(u) - p.y() * u)
                })
                .sum()
        };
        let beta = golden_section_min(shifted, -radius, radius, 1e-10);
        let drop = base - shifted(beta);
        if drop > report.gen_gap {
            report.gen_gap = drop;
            report.best_gap_function = k;
            report.best_beta = beta;
        }
    }
    report.lower_slack = lambda * report.gen_gap - report.gen_ce * report.gen_ce / 2.0;
    report.upper_slack = report.gen_ce - lambda * report.gen_gap;
    Ok(report)
}
