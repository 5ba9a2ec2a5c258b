use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Point, Space, WeightedSample};
use crate::error::{Error, Result};
use crate::metrics::{
    dual_post_processing_gap, dual_smooth_calibration_error, post_processing_gap,
    smooth_calibration_error, DUAL_PGAP, DUAL_SMCE, PGAP, SMCE,
};
use crate::proper_loss::{sigmoid, CrossEntropyLoss};

/// Metric name for the smooth calibration error of `σ ∘ g` on a logit sample.
pub const SMCE_OF_SIGMOID: &str = "smce_of_sigmoid";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TightExample {
    C1,
    C2,
    C3,
    C4,
}

impl TightExample {
    pub const ALL: [TightExample; 4] = [
        TightExample::C1,
        TightExample::C2,
        TightExample::C3,
        TightExample::C4,
    ];

    /// Upper end of the open interval of admissible `ε`.
    pub fn epsilon_limit(self) -> f64 {
        match self {
            TightExample::C1 | TightExample::C3 => 0.25,
            TightExample::C2 | TightExample::C4 => 0.5,
        }
    }
}

impl FromStr for TightExample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(TightExample::C1),
            "C2" => Ok(TightExample::C2),
            "C3" => Ok(TightExample::C3),
            "C4" => Ok(TightExample::C4),
            other => Err(Error::InvalidArgument(format!(
                "unknown tight example {other:?}; expected C1..C4"
            ))),
        }
    }
}

impl fmt::Display for TightExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub metric: String,
    pub relation: Relation,
    pub value: f64,
    pub tolerance: f64,
}

impl Expectation {
    fn new(metric: &str, relation: Relation, value: f64, tolerance: f64) -> Self {
        Expectation {
            metric: metric.into(),
            relation,
            value,
            tolerance,
        }
    }

    /// Nonnegative when `computed` meets the expectation within tolerance.
    pub fn slack(&self, computed: f64) -> f64 {
        match self.relation {
            Relation::Equal => self.tolerance - (computed - self.value).abs(),
            Relation::AtMost => self.value + self.tolerance - computed,
            Relation::AtLeast => computed - (self.value - self.tolerance),
        }
    }
}

/// A closed-form example together with the metric values it should produce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedInstance {
    pub name: String,
    pub which: TightExample,
    pub epsilon: f64,
    pub sample: WeightedSample,
    pub expected: Vec<Expectation>,
}

pub const EXACT_TOLERANCE: f64 = 1e-9;

/// The two-point and one-point examples on which the bounds between
/// calibration error and post-processing gap are tight.
///
/// * `C1`: predictions `1/2 ∓ ε` with labels 0 / 1: smCE = ε/2 − ε², pGap = ε − 3ε².
/// * `C2`: prediction `1/2 + ε` with uniform labels: smCE = ε, pGap = ε².
/// * `C3`: logits `∓4ε` with labels 0 / 1 (cross-entropy): dual smCE ≤ ε/2 + O(ε²),
///   dual pGap ≥ 2ε + O(ε²).
/// * `C4`: logit `4ε` with uniform labels: dual pGap = 2ε² + O(ε⁴), smCE(σ∘g) = ε + O(ε³).
pub fn tight_example(which: TightExample, epsilon: f64) -> Result<NamedInstance> {
    if !(epsilon > 0.0 && epsilon < which.epsilon_limit()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside (0, {}) for {which}",
            which.epsilon_limit()
        )));
    }
    let e = epsilon;
    let leading = (5.0 * e * e).max(1e-6);
    let (pairs, space, expected) = match which {
        TightExample::C1 => (
            vec![(0.5 - e, 0), (0.5 + e, 1)],
            Space::Prediction,
            vec![
                Expectation::new(SMCE, Relation::Equal, e / 2.0 - e * e, EXACT_TOLERANCE),
                Expectation::new(PGAP, Relation::Equal, e - 3.0 * e * e, EXACT_TOLERANCE),
            ],
        ),
        TightExample::C2 => (
            vec![(0.5 + e, 0), (0.5 + e, 1)],
            Space::Prediction,
            vec![
                Expectation::new(SMCE, Relation::Equal, e, EXACT_TOLERANCE),
                Expectation::new(PGAP, Relation::Equal, e * e, EXACT_TOLERANCE),
            ],
        ),
        TightExample::C3 => (
            vec![(-4.0 * e, 0), (4.0 * e, 1)],
            Space::Logit,
            vec![
                Expectation::new(DUAL_SMCE, Relation::AtMost, e / 2.0, leading),
                // the second-order remainder is −6ε² + 20ε⁴, so 5ε² is too tight here
                Expectation::new(
                    DUAL_PGAP,
                    Relation::AtLeast,
                    2.0 * e,
                    (7.0 * e * e).max(1e-6),
                ),
            ],
        ),
        TightExample::C4 => (
            vec![(4.0 * e, 0), (4.0 * e, 1)],
            Space::Logit,
            vec![
                Expectation::new(
                    DUAL_PGAP,
                    Relation::Equal,
                    2.0 * e * e,
                    (5.0 * e.powi(4)).max(1e-6),
                ),
                Expectation::new(SMCE_OF_SIGMOID, Relation::Equal, e, leading),
            ],
        ),
    };
    Ok(NamedInstance {
        name: format!("{which}(eps={epsilon})"),
        which,
        epsilon,
        sample: WeightedSample::uniform(&pairs, space)?,
        expected,
    })
}

/// One expectation of a named instance, evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationCheck {
    pub instance: String,
    pub metric: String,
    pub relation: Relation,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Computes the named metric on a sample; `smce_scale` multiplies every
/// prediction-space smCE (a test hook for fault injection, normally 1).
pub fn compute_metric(metric: &str, sample: &WeightedSample, smce_scale: f64) -> Result<f64> {
    match metric {
        SMCE => Ok(smce_scale * smooth_calibration_error(sample)?.value),
        PGAP => Ok(post_processing_gap(sample)?.value),
        DUAL_SMCE => Ok(dual_smooth_calibration_error(sample, &CrossEntropyLoss)?.value),
        DUAL_PGAP => Ok(dual_post_processing_gap(sample, &CrossEntropyLoss)?.value),
        SMCE_OF_SIGMOID => {
            let f = sample.map_values(Space::Prediction, sigmoid)?;
            Ok(smce_scale * smooth_calibration_error(&f)?.value)
        }
        other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
    }
}

pub fn check_instance(instance: &NamedInstance, smce_scale: f64) -> Result<Vec<ExpectationCheck>> {
    instance
        .expected
        .iter()
        .map(|e| {
            let computed = compute_metric(&e.metric, &instance.sample, smce_scale)?;
            let slack = e.slack(computed);
            Ok(ExpectationCheck {
                instance: instance.name.clone(),
                metric: e.metric.clone(),
                relation: e.relation,
                expected: e.value,
                computed,
                tolerance: e.tolerance,
                slack,
                pass: slack >= 0.0,
            })
        })
        .collect()
}

/// Two equally likely points with label means 0.1 and 0.9, predicted as `ε`
/// and `1 − ε`. The smooth calibration error tends to 0.05 as `ε → 0`, while
/// the gain available to a cross-entropy post-processing is unbounded.
pub fn extreme_predictions_example(epsilon: f64) -> Result<WeightedSample> {
    if !(epsilon > 0.0 && epsilon < 0.1) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside (0, 0.1)"
        )));
    }
    let points = vec![
        Point::new(epsilon, 1, 0.05),
        Point::new(epsilon, 0, 0.45),
        Point::new(1.0 - epsilon, 1, 0.45),
        Point::new(1.0 - epsilon, 0, 0.05),
    ];
    WeightedSample::new(points, Space::Prediction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_carry_closed_forms() {
        let c1 = tight_example(TightExample::C1, 0.2).unwrap();
        assert!((c1.expected[0].value - 0.06).abs() < 1e-15);
        assert!((c1.expected[1].value - 0.08).abs() < 1e-15);
        let c2 = tight_example(TightExample::C2, 0.1).unwrap();
        assert!((c2.expected[0].value - 0.1).abs() < 1e-15);
        assert!((c2.expected[1].value - 0.01).abs() < 1e-15);
        let c4 = tight_example(TightExample::C4, 0.02).unwrap();
        assert!((c4.expected[0].value - 8e-4).abs() < 1e-15);
    }

    #[test]
    fn epsilon_range_is_enforced() {
        assert!(tight_example(TightExample::C1, 0.25).is_err());
        assert!(tight_example(TightExample::C3, 0.3).is_err());
        assert!(tight_example(TightExample::C2, 0.3).is_ok());
        assert!(tight_example(TightExample::C4, 0.0).is_err());
    }

    #[test]
    fn all_examples_meet_expectations() {
        for which in TightExample::ALL {
            for eps in [0.01, 0.05, 0.1, 0.2] {
                let inst = tight_example(which, eps).unwrap();
                for check in check_instance(&inst, 1.0).unwrap() {
                    assert!(check.pass, "{check:?}");
                }
            }
        }
    }

    #[test]
    fn extreme_predictions_smce_approaches_limit() {
        for eps in [1e-2, 1e-4, 1e-6] {
            let s = extreme_predictions_example(eps).unwrap();
            let smce = smooth_calibration_error(&s).unwrap().value;
            assert!((smce - 0.5 * (0.1 - eps) * (1.0 - 2.0 * eps)).abs() < 1e-12);
        }
        assert!(extreme_predictions_example(0.1).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("c3".parse::<TightExample>().unwrap(), TightExample::C3);
        assert!("C5".parse::<TightExample>().is_err());
    }
}
