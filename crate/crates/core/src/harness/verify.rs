use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::tight::{check_instance, tight_example, ExpectationCheck, TightExample};
use crate::dataset::{Point, Space, WeightedSample};
use crate::error::Result;
use crate::metrics::{
    certificate_post_processing, dual_post_processing_gap, dual_smooth_calibration_error,
    generalized_dual_metrics_unchecked, optimal_relabeling, post_processing_gap,
    smooth_calibration_error, TestFunction,
};
use crate::proper_loss::{sigmoid, CrossEntropyLoss, ProperLoss, SquaredLoss};

/// A slack below `−SLACK_TOLERANCE` is a failure.
pub const SLACK_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const EPSILON_GRID: [f64; 4] = [0.01, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub trials: usize,
    /// Multiplies every prediction-space smCE; 1 except when injecting a fault.
    pub smce_scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: DEFAULT_SEED,
            trials: 100,
            smce_scale: 1.0,
        }
    }
}

/// Worst slack of one inequality over all instances it was checked on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityResult {
    pub suite: String,
    pub inequality: String,
    pub cases: usize,
    pub worst_slack: f64,
    pub worst_case: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub trials: usize,
    pub smce_scale: f64,
    pub tolerance: f64,
    pub inequalities: Vec<InequalityResult>,
    pub tight_examples: Vec<ExpectationCheck>,
    pub errors: Vec<String>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .inequalities
            .iter()
            .filter(|r| !r.pass)
            .map(|r| {
                format!(
                    "{}: {} (worst slack {:e} on {})",
                    r.suite, r.inequality, r.worst_slack, r.worst_case
                )
            })
            .collect();
        out.extend(self.tight_examples.iter().filter(|c| !c.pass).map(|c| {
            format!(
                "{} {}: expected {} got {}",
                c.instance, c.metric, c.expected, c.computed
            )
        }));
        out.extend(self.errors.iter().cloned());
        out
    }
}

/// A random prediction-space sample with at most `max_points` points; some
/// values repeat and some sit at 0 or 1.
pub fn random_prediction_sample(rng: &mut impl Rng, max_points: usize) -> WeightedSample {
    let m = rng.gen_range(1..=max_points.max(1));
    let shift = rng.gen_range(-0.3..0.3);
    let mut points: Vec<Point> = Vec::with_capacity(m);
    for _ in 0..m {
        let value = if !points.is_empty() && rng.gen_bool(0.2) {
            points[rng.gen_range(0..points.len())].value
        } else if rng.gen_bool(0.05) {
            f64::from(u8::from(rng.gen_bool(0.5)))
        } else {
            rng.gen_range(0.0..=1.0)
        };
        let p = (value + shift).clamp(0.0, 1.0);
        points.push(Point::new(
            value,
            u8::from(rng.gen_bool(p)),
            rng.gen_range(0.1..=1.0),
        ));
    }
    WeightedSample::new(points, Space::Prediction).expect("generated sample is valid")
}

/// A random logit sample in `[−spread, spread]` with labels from a
/// misspecified logistic model.
pub fn random_logit_sample(rng: &mut impl Rng, max_points: usize, spread: f64) -> WeightedSample {
    let m = rng.gen_range(1..=max_points.max(1));
    let (a, b) = (rng.gen_range(0.2..3.0), rng.gen_range(-1.0..1.0));
    let mut points: Vec<Point> = Vec::with_capacity(m);
    for _ in 0..m {
        let value = if !points.is_empty() && rng.gen_bool(0.2) {
            points[rng.gen_range(0..points.len())].value
        } else {
            rng.gen_range(-spread..=spread)
        };
        let p = sigmoid(a * value + b);
        points.push(Point::new(
            value,
            u8::from(rng.gen_bool(p)),
            rng.gen_range(0.1..=1.0),
        ));
    }
    WeightedSample::new(points, Space::Logit).expect("generated sample is valid")
}

type Slacks = Vec<(&'static str, &'static str, f64)>;

const THM23: &str = "smCE/pGap (squared loss)";
const CERT: &str = "certificate post-processing";
const XENT: &str = "cross-entropy dual metrics";
const SQDUAL: &str = "squared loss in dual form";
const GENERAL: &str = "finite test families";

fn prediction_slacks(s: &WeightedSample, scale: f64) -> Result<Slacks> {
    let smce = smooth_calibration_error(s)?;
    let pgap = post_processing_gap(s)?.value;
    let e = scale * smce.value;
    let update = certificate_post_processing(s, &smce.certificate)?;
    let relabeled = optimal_relabeling(s, &SquaredLoss)?.apply(s)?;
    let after = smooth_calibration_error(&relabeled)?.value;

    // the update κ − id must stay 1-Lipschitz after clamping
    let k = &update.kappa;
    let projection = k
        .knots
        .windows(2)
        .zip(k.values.windows(2))
        .map(|(v, kv)| (v[1] - v[0]) - ((kv[1] - v[1]) - (kv[0] - v[0])).abs())
        .fold(f64::INFINITY, f64::min);

    Ok(vec![
        (THM23, "smCE² ≤ pGap", pgap - e * e),
        (THM23, "pGap ≤ 2·smCE", 2.0 * e - pgap),
        (
            CERT,
            "loss drop ≥ β²",
            update.loss_drop - update.beta * update.beta,
        ),
        (CERT, "loss drop ≤ pGap", pgap - update.loss_drop),
        (
            CERT,
            "clamped update is 1-Lipschitz",
            if projection.is_finite() {
                projection
            } else {
                0.0
            },
        ),
        (CERT, "relabeled sample has smCE 0", -after),
    ])
}

fn cross_entropy_slacks(s: &WeightedSample, scale: f64) -> Result<Slacks> {
    let dsmce = dual_smooth_calibration_error(s, &CrossEntropyLoss)?.value;
    let dpgap = dual_post_processing_gap(s, &CrossEntropyLoss)?.value;
    let f = s.map_values(Space::Prediction, sigmoid)?;
    let smce = scale * smooth_calibration_error(&f)?.value;
    Ok(vec![
        (
            XENT,
            "2·dual smCE² ≤ dual pGap",
            dpgap - 2.0 * dsmce * dsmce,
        ),
        (XENT, "dual pGap ≤ 4·dual smCE", 4.0 * dsmce - dpgap),
        (XENT, "smCE(σ∘g) ≤ dual smCE(g)", dsmce - smce),
    ])
}

fn squared_dual_slacks(s: &WeightedSample, scale: f64) -> Result<Slacks> {
    let loss = SquaredLoss;
    let lambda = loss.smoothness();
    let dsmce = dual_smooth_calibration_error(s, &loss)?.value;
    let dpgap = dual_post_processing_gap(s, &loss)?.value;
    let f = s.map_values(Space::Prediction, |t| loss.grad_psi(t))?;
    let smce = scale * smooth_calibration_error(&f)?.value;
    Ok(vec![
        (
            SQDUAL,
            "dual smCE²/2 ≤ λ·dual pGap",
            lambda * dpgap - dsmce * dsmce / 2.0,
        ),
        (SQDUAL, "λ·dual pGap ≤ dual smCE", dsmce - lambda * dpgap),
        (SQDUAL, "smCE(∇ψ∘g) ≤ dual smCE(g)", dsmce - smce),
    ])
}

/// Two random groups plus a clipped `λ`-Lipschitz ramp.
pub fn random_test_family(rng: &mut impl Rng, n: usize, lambda: f64) -> Vec<TestFunction<'static>> {
    let groups: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let other = groups.clone();
    let center = rng.gen_range(-2.0..2.0);
    vec![
        Box::new(move |i, _| if groups[i] { 1.0 } else { 0.0 }),
        Box::new(move |i, _| if other[i] { 0.0 } else { 1.0 }),
        Box::new(move |_, t| (lambda * (t - center)).clamp(-1.0, 1.0)),
    ]
}

fn generalized_slacks(s: &WeightedSample, family: &[TestFunction<'static>]) -> Result<Slacks> {
    let r = generalized_dual_metrics_unchecked(s, &CrossEntropyLoss, family)?;
    Ok(vec![
        (GENERAL, "genCE²/2 ≤ λ·genGap", r.lower_slack),
        (GENERAL, "λ·genGap ≤ genCE", r.upper_slack),
    ])
}

enum Case {
    Prediction(String, WeightedSample),
    CrossEntropy(String, WeightedSample),
    SquaredDual(String, WeightedSample),
    General(String, WeightedSample, Vec<TestFunction<'static>>),
}

impl Case {
    fn label(&self) -> &str {
        match self {
            Case::Prediction(l, _)
            | Case::CrossEntropy(l, _)
            | Case::SquaredDual(l, _)
            | Case::General(l, _, _) => l,
        }
    }

    fn run(&self, scale: f64) -> Result<Slacks> {
        match self {
            Case::Prediction(_, s) => prediction_slacks(s, scale),
            Case::CrossEntropy(_, s) => cross_entropy_slacks(s, scale),
            Case::SquaredDual(_, s) => squared_dual_slacks(s, scale),
            Case::General(_, s, w) => generalized_slacks(s, w),
        }
    }
}

/// Checks every implemented inequality on the tight examples over
/// [`EPSILON_GRID`] and on `trials` random instances per suite.
pub fn verify_all(config: &VerifyConfig) -> VerificationReport {
    let mut cases = Vec::new();
    let mut tight = Vec::new();
    let mut errors = Vec::new();
    for which in TightExample::ALL {
        for &eps in EPSILON_GRID.iter().filter(|&&e| e < which.epsilon_limit()) {
            let inst = tight_example(which, eps).expect("grid epsilons are in range");
            match check_instance(&inst, config.smce_scale) {
                Ok(checks) => tight.extend(checks),
                Err(e) => errors.push(format!("{}: {e}", inst.name)),
            }
            match which {
                TightExample::C1 | TightExample::C2 => {
                    cases.push(Case::Prediction(inst.name, inst.sample))
                }
                TightExample::C3 | TightExample::C4 => {
                    cases.push(Case::CrossEntropy(inst.name, inst.sample))
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for t in 0..config.trials {
        cases.push(Case::Prediction(
            format!("random prediction #{t}"),
            random_prediction_sample(&mut rng, 50),
        ));
        cases.push(Case::CrossEntropy(
            format!("random logit #{t}"),
            random_logit_sample(&mut rng, 50, 5.0),
        ));
        cases.push(Case::SquaredDual(
            format!("random squared-dual #{t}"),
            random_logit_sample(&mut rng, 50, 2.0),
        ));
        let s = random_logit_sample_exact(&mut rng, 20, 4.0);
        let family = random_test_family(&mut rng, s.len(), CrossEntropyLoss.smoothness());
        cases.push(Case::General(format!("random family #{t}"), s, family));
    }

    let outcomes: Vec<Result<Slacks>> =
        cases.par_iter().map(|c| c.run(config.smce_scale)).collect();

    let mut inequalities: Vec<InequalityResult> = Vec::new();
    for (case, outcome) in cases.iter().zip(outcomes) {
        match outcome {
            Err(e) => errors.push(format!("{}: {e}", case.label())),
            Ok(slacks) => {
                for (suite, inequality, slack) in slacks {
                    let entry = match inequalities.iter_mut().find(|r| r.inequality == inequality) {
                        Some(entry) => entry,
                        None => {
                            inequalities.push(InequalityResult {
                                suite: suite.into(),
                                inequality: inequality.into(),
                                cases: 0,
                                worst_slack: f64::INFINITY,
                                worst_case: String::new(),
                                pass: true,
                            });
                            inequalities.last_mut().unwrap()
                        }
                    };
                    entry.cases += 1;
                    if slack < entry.worst_slack || slack.is_nan() {
                        entry.worst_slack = slack;
                        entry.worst_case = case.label().to_string();
                    }
                    entry.pass = entry.pass && slack >= -SLACK_TOLERANCE;
                }
            }
        }
    }
    let passed =
        errors.is_empty() && inequalities.iter().all(|r| r.pass) && tight.iter().all(|c| c.pass);
    VerificationReport {
        seed: config.seed,
        trials: config.trials,
        smce_scale: config.smce_scale,
        tolerance: SLACK_TOLERANCE,
        inequalities,
        tight_examples: tight,
        errors,
        passed,
    }
}

/// A logit sample with exactly `n` points (the test family indexes points).
pub fn random_logit_sample_exact(rng: &mut impl Rng, n: usize, spread: f64) -> WeightedSample {
    let (a, b) = (rng.gen_range(0.2..3.0), rng.gen_range(-1.0..1.0));
    let points = (0..n)
        .map(|_| {
            let t = rng.gen_range(-spread..=spread);
            Point::new(
                t,
                u8::from(rng.gen_bool(sigmoid(a * t + b))),
                rng.gen_range(0.1..=1.0),
            )
        })
        .collect();
    WeightedSample::new(points, Space::Logit).expect("generated sample is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes() {
        let report = verify_all(&VerifyConfig {
            trials: 10,
            ..VerifyConfig::default()
        });
        assert!(report.passed, "{:#?}", report.failures());
        assert!(report.inequalities.iter().all(|r| r.cases >= 10));
    }

    #[test]
    fn zero_trials_checks_named_instances_only() {
        let report = verify_all(&VerifyConfig {
            trials: 0,
            ..VerifyConfig::default()
        });
        assert!(report.passed);
        assert_eq!(report.tight_examples.len(), 2 * 4 * EPSILON_GRID.len());
        assert!(report.inequalities.iter().all(|r| r.cases <= 8));
    }

    #[test]
    fn scaled_smce_breaks_the_lower_bound() {
        let report = verify_all(&VerifyConfig {
            trials: 0,
            smce_scale: 1.5,
            ..VerifyConfig::default()
        });
        assert!(!report.passed);
        let lower = report
            .inequalities
            .iter()
            .find(|r| r.inequality == "smCE² ≤ pGap")
            .unwrap();
        assert!(!lower.pass);
        assert!(lower.worst_case.starts_with("C2"));
    }
}
