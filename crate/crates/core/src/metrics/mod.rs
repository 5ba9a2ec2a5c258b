//! Calibration metrics on a weighted empirical distribution.
//!
//! Each metric collapses the sample onto its distinct prediction values and
//! solves one chain problem there; the optimal test or update function is
//! returned as a certificate.

mod dual;
mod generalized;

pub use dual::{dual_post_processing_gap, dual_smooth_calibration_error};
pub use generalized::{
    generalized_dual_metrics, generalized_dual_metrics_unchecked, GeneralizedReport, TestFunction,
    GENERALIZED_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::dataset::{CollapsedSample, Point, Space, WeightedSample};
use crate::error::{Error, Result};
use crate::lipschitz::{
    solve_linear_chain, solve_quadratic_chain, ChainProblem, LipschitzFunction, Objective, Sense,
};
use crate::proper_loss::ProperLoss;

pub const SMCE: &str = "smce";
pub const PGAP: &str = "pgap";
pub const DUAL_SMCE: &str = "dual_smce";
pub const DUAL_PGAP: &str = "dual_pgap";

/// Loss and smoothness a metric was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub loss: String,
    pub lambda: f64,
    /// `true` when `λ` (and so the metric's box or Lipschitz bound) comes from
    /// a numerical estimate; an underestimate changes the metric.
    pub lambda_estimated: bool,
    pub knots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub metric: String,
    pub value: f64,
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    /// The optimal test function `η` for error metrics, the optimal update
    /// `η = κ − id` for gap metrics.
    pub certificate: LipschitzFunction,
    pub params: MetricParams,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn squared_params(knots: usize) -> MetricParams {
    MetricParams {
        loss: "squared".into(),
        lambda: 1.0,
        lambda_estimated: false,
        knots,
    }
}

/// `smCE(f) = sup_η E[(y − f)·η(f)]` over 1-Lipschitz `η : [0, 1] → [−1, 1]`.
pub fn smooth_calibration_error(s: &WeightedSample) -> Result<CalibrationReport> {
    s.require_space(Space::Prediction)?;
    let c = s.collapse();
    let coefs = c.iter().map(|(v, w, y)| w * (y - v)).collect();
    let problem = ChainProblem::uniform_box(
        c.values.clone(),
        -1.0,
        1.0,
        1.0,
        Objective::Linear(coefs),
        Sense::Maximize,
    );
    let sol = solve_linear_chain(&problem)?;
    Ok(CalibrationReport {
        metric: SMCE.into(),
        value: sol.optimum.max(0.0),
        loss_before: None,
        loss_after: None,
        certificate: sol.certificate,
        params: squared_params(c.len()),
    })
}

/// `E[(y − v)²]` from collapsed statistics.
fn squared_risk(c: &CollapsedSample) -> f64 {
    c.iter()
        .map(|(v, w, y)| w * ((y - v) * (y - v) + y * (1.0 - y)))
        .sum()
}

/// Squared-loss drop from the best post-processing `κ` with 1-Lipschitz update `κ − id`.
pub fn post_processing_gap(s: &WeightedSample) -> Result<CalibrationReport> {
    s.require_space(Space::Prediction)?;
    let c = s.collapse();
    let before = squared_risk(&c);
    let problem = ChainProblem {
        knots: c.values.clone(),
        box_lo: c.values.iter().map(|v| -v).collect(),
        box_hi: c.values.iter().map(|v| 1.0 - v).collect(),
        lipschitz: 1.0,
        objective: Objective::Quadratic {
            a: c.weights.clone(),
            b: c.iter().map(|(v, _, y)| y - v).collect(),
            constant: c.iter().map(|(_, w, y)| w * y * (1.0 - y)).sum(),
        },
        sense: Sense::Minimize,
    };
    let sol = solve_quadratic_chain(&problem)?;
    let mut certificate = sol.certificate;
    certificate.range = (-1.0, 1.0);
    Ok(CalibrationReport {
        metric: PGAP.into(),
        value: (before - sol.optimum).max(0.0),
        loss_before: Some(before),
        loss_after: Some(sol.optimum),
        certificate,
        params: squared_params(c.len()),
    })
}

/// Post-processing built from a test function, with its guaranteed loss drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateUpdate {
    /// `β = E[(y − f)·η(f)]`.
    pub beta: f64,
    /// `κ(v) = clamp(v + β·η(v), 0, 1)` at the sample's distinct predictions.
    pub kappa: LipschitzFunction,
    /// `E ℓ_sq(y, f) − E ℓ_sq(y, κ(f))`, at least `β²`.
    pub loss_drop: f64,
}

/// Turns a 1-Lipschitz `η` with range `[−1, 1]` into a post-processing whose
/// squared-loss improvement is at least `β²`.
pub fn certificate_post_processing(
    s: &WeightedSample,
    eta: &LipschitzFunction,
) -> Result<CertificateUpdate> {
    s.require_space(Space::Prediction)?;
    eta.check()?;
    if eta.lipschitz > 1.0 + 1e-12 || eta.range.0 < -1.0 - 1e-12 || eta.range.1 > 1.0 + 1e-12 {
        return Err(Error::ConstraintViolation(format!(
            "test function must be 1-Lipschitz with range [-1, 1], got L = {} and range {:?}",
            eta.lipschitz, eta.range
        )));
    }
    let c = s.collapse();
    let beta = c.residual_correlation(|v| eta.eval(v));
    let kappa_at = |v: f64| (v + beta * eta.eval(v)).clamp(0.0, 1.0);
    let after: f64 = c
        .iter()
        .map(|(v, w, y)| {
            let k = kappa_at(v);
            w * ((y - k) * (y - k) + y * (1.0 - y))
        })
        .sum();
    let kappa = LipschitzFunction {
        knots: c.values.clone(),
        values: c.values.iter().map(|&v| kappa_at(v)).collect(),
        lipschitz: 2.0,
        range: (0.0, 1.0),
    };
    Ok(CertificateUpdate {
        beta,
        kappa,
        loss_drop: squared_risk(&c) - after,
    })
}

/// The perfectly calibrating relabeling `κ(v) = E[y | f = v]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relabeling {
    /// `(v_j, κ(v_j))` for each distinct prediction.
    pub kappa: Vec<(f64, f64)>,
    pub old_loss: f64,
    pub new_loss: f64,
}

impl Relabeling {
    /// The sample with every prediction replaced by its relabeled value.
    pub fn apply(&self, s: &WeightedSample) -> Result<WeightedSample> {
        let lookup = |v: f64| {
            let i = self
                .kappa
                .partition_point(|&(k, _)| k < v - crate::dataset::DUPLICATE_TOLERANCE);
            self.kappa[i.min(self.kappa.len() - 1)].1
        };
        let points = s
            .points()
            .iter()
            .map(|p| Point {
                value: lookup(p.value),
                ..*p
            })
            .collect();
        WeightedSample::new(points, Space::Prediction)
    }
}

pub fn optimal_relabeling<L: ProperLoss + ?Sized>(
    s: &WeightedSample,
    loss: &L,
) -> Result<Relabeling> {
    s.require_space(Space::Prediction)?;
    let c = s.collapse();
    let domain = loss.domain();
    let kappa: Vec<(f64, f64)> = c.iter().map(|(v, _, y)| (v, domain.clamp(y).0)).collect();
    let old_loss = c.iter().map(|(v, w, y)| w * loss.expected_loss(y, v)).sum();
    let new_loss = c
        .iter()
        .zip(&kappa)
        .map(|((_, w, y), &(_, k))| w * loss.expected_loss(y, k))
        .sum();
    Ok(Relabeling {
        kappa,
        old_loss,
        new_loss,
    })
}

fn bin_index(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor() as usize).min(bins - 1)
}

/// Binned expected calibration error over `bins` equal-width bins of `[0, 1]`.
pub fn binned_ece(s: &WeightedSample, bins: usize) -> Result<f64> {
    s.require_space(Space::Prediction)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let mut residual = vec![0.0; bins];
    for p in s.points() {
        residual[bin_index(p.value, bins)] += p.weight * (p.y() - p.value);
    }
    Ok(residual.iter().map(|r| r.abs()).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub midpoint: f64,
    /// Weighted label mean in the bin; `None` for empty bins.
    pub frequency: Option<f64>,
    pub mean_prediction: Option<f64>,
    pub mass: f64,
}

impl ReliabilityBin {
    /// `|frequency − midpoint|`, zero for empty bins.
    pub fn deviation(&self) -> f64 {
        self.frequency.map_or(0.0, |f| (f - self.midpoint).abs())
    }
}

pub fn reliability_diagram(s: &WeightedSample, bins: usize) -> Result<Vec<ReliabilityBin>> {
    s.require_space(Space::Prediction)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let mut mass = vec![0.0; bins];
    let mut positive = vec![0.0; bins];
    let mut predicted = vec![0.0; bins];
    for p in s.points() {
        let b = bin_index(p.value, bins);
        mass[b] += p.weight;
        positive[b] += p.weight * p.y();
        predicted[b] += p.weight * p.value;
    }
    Ok((0..bins)
        .map(|b| {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let filled = mass[b] > 0.0;
            ReliabilityBin {
                lo,
                hi,
                midpoint: 0.5 * (lo + hi),
                frequency: filled.then(|| positive[b] / mass[b]),
                mean_prediction: filled.then(|| predicted[b] / mass[b]),
                mass: mass[b],
            }
        })
        .collect())
}

/// CSV with columns `midpoint,frequency,mass`; empty bins leave `frequency` blank.
pub fn reliability_csv(bins: &[ReliabilityBin]) -> String {
    let mut out = String::from("midpoint,frequency,mass\n");
    for b in bins {
        let freq = b.frequency.map(|f| f.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", b.midpoint, freq, b.mass));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proper_loss::{CrossEntropyLoss, SquaredLoss, EPS_CLIP};

    fn sample(pairs: &[(f64, u8)]) -> WeightedSample {
        WeightedSample::uniform(pairs, Space::Prediction).unwrap()
    }

    #[test]
    fn smce_examples() {
        assert!(
            (smooth_calibration_error(&sample(&[(0.3, 0), (0.7, 1)]))
                .unwrap()
                .value
                - 0.06)
                .abs()
                < 1e-12
        );
        assert!(
            (smooth_calibration_error(&sample(&[(0.6, 0), (0.6, 1)]))
                .unwrap()
                .value
                - 0.1)
                .abs()
                < 1e-12
        );

        let calibrated = WeightedSample::new(
            vec![Point::new(0.6, 1, 0.6), Point::new(0.6, 0, 0.4)],
            Space::Prediction,
        )
        .unwrap();
        assert!(smooth_calibration_error(&calibrated).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn pgap_examples() {
        let r = post_processing_gap(&sample(&[(0.3, 0), (0.7, 1)])).unwrap();
        assert!((r.value - 0.08).abs() < 1e-12);
        assert!((r.loss_before.unwrap() - 0.09).abs() < 1e-12);
        assert!(
            (post_processing_gap(&sample(&[(0.6, 0), (0.6, 1)]))
                .unwrap()
                .value
                - 0.01)
                .abs()
                < 1e-12
        );

        let calibrated = WeightedSample::new(
            vec![
                Point::new(0.2, 1, 0.2),
                Point::new(0.2, 0, 0.8),
                Point::new(0.9, 1, 0.9),
                Point::new(0.9, 0, 0.1),
            ],
            Space::Prediction,
        )
        .unwrap();
        assert!(post_processing_gap(&calibrated).unwrap().value < 1e-15);
    }

    #[test]
    fn metrics_reject_logit_samples() {
        let s = WeightedSample::uniform(&[(2.0, 1)], Space::Logit).unwrap();
        assert!(matches!(
            smooth_calibration_error(&s),
            Err(Error::WrongSpace { .. })
        ));
        assert!(matches!(
            post_processing_gap(&s),
            Err(Error::WrongSpace { .. })
        ));
    }

    #[test]
    fn certificate_update_examples() {
        let s = sample(&[(0.3, 0), (0.7, 1)]);
        let smce = smooth_calibration_error(&s).unwrap();
        let update = certificate_post_processing(&s, &smce.certificate).unwrap();
        assert!((update.beta - 0.06).abs() < 1e-12);
        assert!(update.loss_drop >= 0.06 * 0.06 - 1e-10);

        let zero = LipschitzFunction::constant(vec![0.3, 0.7], 0.0, 1.0, (-1.0, 1.0)).unwrap();
        let update = certificate_post_processing(&s, &zero).unwrap();
        assert_eq!(update.loss_drop, 0.0);
        assert_eq!(update.kappa.values, vec![0.3, 0.7]);

        let steep = LipschitzFunction {
            knots: vec![0.0, 1.0],
            values: vec![0.0, 0.5],
            lipschitz: 2.0,
            range: (-1.0, 1.0),
        };
        assert!(certificate_post_processing(&s, &steep).is_err());
    }

    #[test]
    fn relabeling_examples() {
        let s = sample(&[(0.3, 0), (0.7, 1)]);
        let r = optimal_relabeling(&s, &SquaredLoss).unwrap();
        assert_eq!(r.kappa, vec![(0.3, 0.0), (0.7, 1.0)]);
        assert_eq!(r.new_loss, 0.0);

        let s = sample(&[(0.2, 1), (0.2, 0), (0.9, 1)]);
        let r = optimal_relabeling(&s, &CrossEntropyLoss).unwrap();
        assert_eq!(r.kappa[0], (0.2, 0.5));
        assert_eq!(r.kappa[1], (0.9, 1.0 - EPS_CLIP));
        assert!(r.new_loss < r.old_loss);
        let relabeled = r.apply(&s).unwrap();
        assert!(smooth_calibration_error(&relabeled).unwrap().value <= 1e-8);
    }

    #[test]
    fn binned_ece_examples() {
        let calibrated = WeightedSample::new(
            vec![Point::new(0.6, 1, 0.6), Point::new(0.6, 0, 0.4)],
            Space::Prediction,
        )
        .unwrap();
        assert!(binned_ece(&calibrated, 10).unwrap() < 1e-15);
        // two singleton bins with |ȳ − v| = 0.3, each of mass 1/2
        assert!((binned_ece(&sample(&[(0.3, 0), (0.7, 1)]), 10).unwrap() - 0.3).abs() < 1e-12);

        let s = sample(&[(0.49, 0), (0.51, 1)]);
        let ece = binned_ece(&s, 2).unwrap();
        let smce = smooth_calibration_error(&s).unwrap().value;
        assert!(ece > 10.0 * smce, "ece {ece} smce {smce}");
        assert!(binned_ece(&s, 0).is_err());
    }

    #[test]
    fn reliability_bins_cover_unit_interval() {
        let s = sample(&[(0.0, 0), (0.5, 1), (1.0, 1)]);
        let bins = reliability_diagram(&s, 4).unwrap();
        assert_eq!(bins.len(), 4);
        assert_eq!(bins[3].mass, 1.0 / 3.0);
        assert_eq!(bins[1].frequency, None);
        let csv = reliability_csv(&bins);
        assert!(csv.starts_with("midpoint,frequency,mass\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
