use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{FeaturedRow, FeaturedSample, Space, WeightedSample};
use crate::error::{Error, Result};
use crate::proper_loss::sigmoid;

/// `n` draws of `y ∼ Ber(1/2)`, `x ∼ U[−3, 1]` if `y = 0` and `x ∼ U[−1, 3]` if `y = 1`.
///
/// The Bayes-optimal predictor is piecewise constant (0, 1/2, 1), so no
/// logistic model is calibrated on this distribution.
pub fn figure2_distribution(n: usize, seed: u64) -> Result<FeaturedSample> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let label = u8::from(rng.gen_bool(0.5));
            let x = if label == 0 {
                rng.gen_range(-3.0..1.0)
            } else {
                rng.gen_range(-1.0..3.0)
            };
            FeaturedRow {
                features: vec![x],
                label,
                weight: 1.0,
            }
        })
        .collect();
    FeaturedSample::new(rows)
}

/// Predictor `x ↦ σ(a·x + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticFit {
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn logit(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    pub fn predict(&self, x: f64) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn predictions(&self, s: &FeaturedSample) -> Result<WeightedSample> {
        s.predictions(Space::Prediction, |f| self.predict(f[0]))
    }

    pub fn logits(&self, s: &FeaturedSample) -> Result<WeightedSample> {
        s.predictions(Space::Logit, |f| self.logit(f[0]))
    }
}

pub const LOGISTIC_GRADIENT_TOLERANCE: f64 = 1e-8;
const LOGISTIC_MAX_ITERATIONS: usize = 200;
const LOGISTIC_MAX_PARAMETER: f64 = 1e8;

fn cross_entropy(s: &FeaturedSample, a: f64, b: f64) -> f64 {
    s.rows()
        .iter()
        .map(|r| {
            let z = a * r.features[0] + b;
            // ln(1 + e^z) − y·z
            r.weight * (crate::proper_loss::softplus(z) - f64::from(r.label) * z)
        })
        .sum()
}

/// Minimizes the weighted empirical cross-entropy of `σ(a·x + b)` by damped Newton.
pub fn fit_logistic_1d(s: &FeaturedSample) -> Result<LogisticFit> {
    if s.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected 1-D features, got dimension {}",
            s.dim()
        )));
    }
    let rows = s.rows();
    let positive: f64 = rows.iter().map(|r| r.weight * f64::from(r.label)).sum();
    if positive <= 0.0 || positive >= 1.0 {
        return Err(Error::InvalidArgument("both labels must be present".into()));
    }
    let extreme = |label: u8, max: bool| {
        rows.iter()
            .filter(|r| r.label == label)
            .map(|r| r.features[0])
            .fold(
                if max {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                },
                |acc, x| if max { acc.max(x) } else { acc.min(x) },
            )
    };
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.features[0]), hi.max(r.features[0]))
        });
    if lo == hi {
        let ybar = positive.clamp(0.0, 1.0);
        return Ok(LogisticFit {
            a: 0.0,
            b: ybar.ln() - (-ybar).ln_1p(),
            iterations: 0,
            gradient_norm: 0.0,
        });
    }
    if extreme(0, true) <= extreme(1, false) || extreme(1, true) <= extreme(0, false) {
        return Err(Error::DivergingParameters(
            "the classes are separated by a threshold, so the likelihood has no finite maximizer"
                .into(),
        ));
    }

    let (mut a, mut b) = (0.0, 0.0);
    let mut value = cross_entropy(s, a, b);
    for iteration in 0..LOGISTIC_MAX_ITERATIONS {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in rows {
            let x = r.features[0];
            let p = sigmoid(a * x + b);
            let residual = r.weight * (p - f64::from(r.label));
            let curvature = r.weight * p * (1.0 - p);
            ga += residual * x;
            gb += residual;
            haa += curvature * x * x;
            hab += curvature * x;
            hbb += curvature;
        }
        let gradient_norm = ga.hypot(gb);
        if gradient_norm <= LOGISTIC_GRADIENT_TOLERANCE {
            return Ok(LogisticFit {
                a,
                b,
                iterations: iteration,
                gradient_norm,
            });
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let trial = cross_entropy(s, na, nb);
            if trial <= value + 1e-4 * step * (ga * da + gb * db) || step < 1e-12 {
                a = na;
                b = nb;
                value = trial;
                break;
            }
            step *= 0.5;
        }
        if a.abs().max(b.abs()) > LOGISTIC_MAX_PARAMETER {
            return Err(Error::DivergingParameters(format!(
                "parameters reached a = {a:e}, b = {b:e}"
            )));
        }
    }
    Err(Error::NoConvergence {
        iterations: LOGISTIC_MAX_ITERATIONS,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let a = figure2_distribution(4, 11).unwrap();
        let b = figure2_distribution(4, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, figure2_distribution(4, 12).unwrap());
        assert!(figure2_distribution(0, 1).is_err());
    }

    #[test]
    fn constant_feature_fits_bias_only() {
        let s = FeaturedSample::from_1d(&[(0.0, 0), (0.0, 1)]).unwrap();
        let fit = fit_logistic_1d(&s).unwrap();
        assert_eq!(fit.a, 0.0);
        assert!(fit.b.abs() < 1e-15);
    }

    #[test]
    fn separable_data_diverges() {
        let s = FeaturedSample::from_1d(&[(-1.0, 0), (0.0, 0), (1.0, 1), (2.0, 1)]).unwrap();
        assert!(matches!(
            fit_logistic_1d(&s),
            Err(Error::DivergingParameters(_))
        ));
    }

    #[test]
    fn single_class_is_rejected() {
        let s = FeaturedSample::from_1d(&[(-1.0, 1), (1.0, 1)]).unwrap();
        assert!(matches!(
            fit_logistic_1d(&s),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn overlapping_data_converges() {
        let s = FeaturedSample::from_1d(&[(-1.0, 0), (0.0, 1), (0.5, 0), (2.0, 1)]).unwrap();
        let fit = fit_logistic_1d(&s).unwrap();
        assert!(fit.gradient_norm <= LOGISTIC_GRADIENT_TOLERANCE);
        let flipped = fit_logistic_1d(&s.with_flipped_labels()).unwrap();
        assert!((fit.a + flipped.a).abs() < 1e-7);
        assert!((fit.b + flipped.b).abs() < 1e-7);
    }
}
