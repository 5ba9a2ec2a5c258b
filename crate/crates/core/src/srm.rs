//! Structural risk minimization over a family with an exact loss-minimization
//! oracle, and the two model-selection procedures that come with a
//! post-processing-gap guarantee.
//!
//! All losses here are the squared loss `(y − f(x))²`, which lies in `[0, 1]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{FeaturedSample, Space, WeightedSample};
use crate::error::{Error, Result};
use crate::metrics::{post_processing_gap, smooth_calibration_error};

/// Slack below which a checked inequality counts as violated.
pub const SRM_TOLERANCE: f64 = 1e-8;

pub trait FeaturePredictor {
    fn predict(&self, features: &[f64]) -> f64;
}

/// A model family with an integer complexity `μ` and an exact oracle for
/// `min { E(y − f(x))² : μ(f) ≤ s }`.
pub trait ComplexityFamily: Sync {
    type Predictor: FeaturePredictor + Clone + Serialize + Send;

    fn description(&self) -> String;

    fn complexity(&self, f: &Self::Predictor) -> usize;

    /// A minimizer of the squared loss among predictors of complexity at most `s`, with its loss.
    fn min_oracle(&self, d: &FeaturedSample, s: usize) -> Result<(Self::Predictor, f64)>;

    /// `OPT_0, …, OPT_{s_max}`. Override when the sweep can share work.
    fn opt_sweep(&self, d: &FeaturedSample, s_max: usize) -> Result<Vec<f64>> {
        (0..=s_max)
            .map(|s| self.min_oracle(d, s).map(|(_, loss)| loss))
            .collect()
    }

    /// `b` with `μ(κ∘f) ≤ μ(f) + b` for every admissible post-processing `κ`.
    fn post_budget(&self) -> usize;

    /// Whether the family contains `κ∘f` for every `f` in it and every
    /// post-processing `κ`.
    fn closed_under_post_processing(&self) -> bool;
}

/// Squared loss of a predictor on a featured sample.
pub fn squared_loss<P: FeaturePredictor + ?Sized>(f: &P, d: &FeaturedSample) -> f64 {
    d.rows()
        .iter()
        .map(|r| {
            let e = f64::from(r.label) - f.predict(&r.features);
            r.weight * e * e
        })
        .sum()
}

/// The prediction sample `(f(x), y)` induced by `f` on `d`.
pub fn induced_predictions<P: FeaturePredictor + ?Sized>(
    f: &P,
    d: &FeaturedSample,
) -> Result<WeightedSample> {
    d.predictions(Space::Prediction, |x| f.predict(x))
}

/// Piecewise-constant predictor on equal-width bins of the first feature.
/// Points outside `[lo, hi]` fall in the nearest end bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramPredictor {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl HistogramPredictor {
    pub fn constant(value: f64) -> Self {
        HistogramPredictor {
            lo: 0.0,
            hi: 0.0,
            values: vec![value],
        }
    }

    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn edges(&self) -> Vec<f64> {
        let k = self.bins();
        (0..=k)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / k as f64)
            .collect()
    }

    pub fn bin_of(&self, x: f64) -> usize {
        bin_index(x, self.lo, self.hi, self.bins())
    }
}

impl FeaturePredictor for HistogramPredictor {
    fn predict(&self, features: &[f64]) -> f64 {
        self.values[self.bin_of(features[0])]
    }
}

fn bin_index(x: f64, lo: f64, hi: f64, k: usize) -> usize {
    if k == 1 || hi <= lo {
        return 0;
    }
    let i = ((x - lo) / (hi - lo) * k as f64).floor();
    if i.is_nan() || i < 0.0 {
        0
    } else {
        (i as usize).min(k - 1)
    }
}

/// Histograms on the first feature with `μ = bins − 1`, so constants have
/// complexity 0.
///
/// Relabeling the bins of a histogram gives a histogram with the same bins,
/// so the family is closed under post-processing with `b = 0`. Any larger
/// `post_budget` is also valid and makes the local search take steps of
/// that size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramFamily {
    pub post_budget: usize,
}

impl Default for HistogramFamily {
    fn default() -> Self {
        HistogramFamily { post_budget: 1 }
    }
}

struct BinStats {
    lo: f64,
    hi: f64,
    mean: f64,
}

impl HistogramFamily {
    pub fn new(post_budget: usize) -> Self {
        HistogramFamily { post_budget }
    }

    fn stats(d: &FeaturedSample) -> Result<BinStats> {
        if d.dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "histogram family needs 1-D features, got dimension {}",
                d.dim()
            )));
        }
        let (lo, hi) = d
            .rows()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.features[0]), hi.max(r.features[0]))
            });
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        let mean = d.rows().iter().map(|r| r.weight * f64::from(r.label)).sum();
        Ok(BinStats { lo, hi, mean })
    }

    /// Bin-mean histogram with exactly `k` bins and its squared loss.
    pub fn fit_bins(&self, d: &FeaturedSample, k: usize) -> Result<(HistogramPredictor, f64)> {
        let st = Self::stats(d)?;
        Ok(fit_with(d, &st, k))
    }
}

fn fit_with(d: &FeaturedSample, st: &BinStats, k: usize) -> (HistogramPredictor, f64) {
    let k = k.max(1);
    let mut mass = vec![0.0; k];
    let mut positive = vec![0.0; k];
    for r in d.rows() {
        let i = bin_index(r.features[0], st.lo, st.hi, k);
        mass[i] += r.weight;
        positive[i] += r.weight * f64::from(r.label);
    }
    let mut loss = 0.0;
    let values = mass
        .iter()
        .zip(&positive)
        .map(|(&w, &p)| {
            if w > 0.0 {
                let m = (p / w).clamp(0.0, 1.0);
                // labels are 0/1, so Σ w(y − m)² = w·m(1 − m)
                loss += w * m * (1.0 - m);
                m
            } else {
                st.mean
            }
        })
        .collect();
    (
        HistogramPredictor {
            lo: st.lo,
            hi: st.hi,
            values,
        },
        loss,
    )
}

impl ComplexityFamily for HistogramFamily {
    type Predictor = HistogramPredictor;

    fn description(&self) -> String {
        format!(
            "equal-width histograms on the first feature, complexity = bins - 1, b = {}",
            self.post_budget
        )
    }

    fn complexity(&self, f: &HistogramPredictor) -> usize {
        f.bins() - 1
    }

    fn min_oracle(&self, d: &FeaturedSample, s: usize) -> Result<(HistogramPredictor, f64)> {
        // bin partitions of different sizes are not nested, so take the best of 1..=s+1 bins
        let st = Self::stats(d)?;
        let best = (1..=s + 1)
            .into_par_iter()
            .map(|k| fit_with(d, &st, k))
            .reduce_with(|a, b| {
                if b.1 < a.1 || (b.1 == a.1 && b.0.bins() < a.0.bins()) {
                    b
                } else {
                    a
                }
            })
            .expect("at least one bin count");
        Ok(best)
    }

    fn opt_sweep(&self, d: &FeaturedSample, s_max: usize) -> Result<Vec<f64>> {
        let st = Self::stats(d)?;
        let exact: Vec<f64> = (1..=s_max + 1)
            .into_par_iter()
            .map(|k| fit_with(d, &st, k).1)
            .collect();
        let mut best = f64::INFINITY;
        Ok(exact
            .into_iter()
            .map(|l| {
                best = best.min(l);
                best
            })
            .collect())
    }

    fn post_budget(&self) -> usize {
        self.post_budget
    }

    fn closed_under_post_processing(&self) -> bool {
        true
    }
}

/// A checked inequality; `slack ≥ −SRM_TOLERANCE` means it holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremItem {
    pub item: String,
    pub slack: f64,
    pub holds: bool,
}

impl TheoremItem {
    fn new(item: &str, slack: f64) -> Self {
        TheoremItem {
            item: item.into(),
            slack,
            holds: slack >= -SRM_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Advance,
    Return,
    Selected,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub s: usize,
    pub opt_s: f64,
    /// `OPT_{s+b}` in the local search, `OPT_s + λs` in the regularized sweep.
    pub compared: f64,
    pub decision: Decision,
}

/// Output of either algorithm: the chosen predictor, its independently
/// evaluated metrics and the theorem items checked on the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrmTrace<P> {
    pub algorithm: String,
    pub family: String,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub steps: Vec<TraceStep>,
    pub t: usize,
    pub complexity: usize,
    pub loss: f64,
    pub pgap: f64,
    pub smce: f64,
    pub predictor: P,
    pub items: Vec<TheoremItem>,
}

impl<P: Serialize> SrmTrace<P> {
    pub fn holds(&self) -> bool {
        self.items.iter().all(|i| i.holds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }

    fn into_checked(self) -> Result<Self> {
        match self.items.iter().find(|i| !i.holds) {
            Some(bad) => Err(Error::TheoremViolation(format!(
                "{} on {}: {} fails with slack {:e}",
                self.algorithm, self.family, bad.item, bad.slack
            ))),
            None => Ok(self),
        }
    }
}

struct Evaluation {
    loss: f64,
    pgap: f64,
    smce: f64,
}

fn evaluate<P: FeaturePredictor>(f: &P, d: &FeaturedSample) -> Result<Evaluation> {
    let induced = induced_predictions(f, d)?;
    Ok(Evaluation {
        loss: squared_loss(f, d),
        pgap: post_processing_gap(&induced)?.value,
        smce: smooth_calibration_error(&induced)?.value,
    })
}

/// Local search: starting at `s0`, move to `s + b` while that lowers the
/// optimal loss by more than `α`. The loop is capped at `⌈1/α⌉ + 1` steps.
///
/// Returns an error if any guarantee of the procedure fails on the run.
pub fn algorithm1<F: ComplexityFamily>(
    fam: &F,
    d: &FeaturedSample,
    s0: usize,
    alpha: f64,
) -> Result<SrmTrace<F::Predictor>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let b = fam.post_budget();
    let cap = (1.0 / alpha).ceil() as usize + 1;
    let mut s = s0;
    let mut h = 0usize;
    let mut steps = Vec::new();
    let (mut current, mut opt_s) = fam.min_oracle(d, s)?;
    let opt_s0 = opt_s;
    loop {
        let (next, opt_next) = fam.min_oracle(d, s + b)?;
        if opt_next >= opt_s - alpha {
            steps.push(TraceStep {
                s,
                opt_s,
                compared: opt_next,
                decision: Decision::Return,
            });
            break;
        }
        steps.push(TraceStep {
            s,
            opt_s,
            compared: opt_next,
            decision: Decision::Advance,
        });
        h += 1;
        s += b;
        current = next;
        opt_s = opt_next;
        if h > cap {
            return Err(Error::TheoremViolation(format!(
                "local search did not stop within {cap} steps"
            )));
        }
    }

    let eval = evaluate(&current, d)?;
    let mu = fam.complexity(&current);
    let drop_margin = steps
        .iter()
        .filter(|st| st.decision == Decision::Advance)
        .map(|st| st.opt_s - st.compared - alpha)
        .fold(f64::INFINITY, f64::min);
    let items = vec![
        TheoremItem::new("h <= 1/alpha", 1.0 / alpha - h as f64),
        TheoremItem::new("mu(f) <= s0 + h*b", (s0 + h * b) as f64 - mu as f64),
        TheoremItem::new("loss(f) = OPT_t", SRM_TOLERANCE - (eval.loss - opt_s).abs()),
        TheoremItem::new(
            "OPT_t <= OPT_s0 - h*alpha",
            opt_s0 - h as f64 * alpha - opt_s,
        ),
        TheoremItem::new(
            "every step lowers the loss by more than alpha",
            if drop_margin.is_finite() {
                drop_margin
            } else {
                0.0
            },
        ),
        TheoremItem::new("pGap(f) <= alpha", alpha - eval.pgap),
        TheoremItem::new("smCE(f) <= sqrt(alpha)", alpha.sqrt() - eval.smce),
    ];
    SrmTrace {
        algorithm: "local_search".into(),
        family: fam.description(),
        alpha,
        lambda: None,
        steps,
        t: s,
        complexity: mu,
        loss: eval.loss,
        pgap: eval.pgap,
        smce: eval.smce,
        predictor: current,
        items,
    }
    .into_checked()
}

/// The `α` that the regularized sweep guarantees for a given `λ`: `λ·max(b, 1)`.
pub fn regularized_alpha(lambda: f64, post_budget: usize) -> f64 {
    lambda * post_budget.max(1) as f64
}

fn sweep<F: ComplexityFamily>(
    fam: &F,
    d: &FeaturedSample,
    lambda: f64,
) -> Result<(Vec<f64>, usize, Vec<TraceStep>)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let r = (1.0 / lambda).floor() as usize;
    let opts = fam.opt_sweep(d, r)?;
    let mut t = 0;
    for (s, &o) in opts.iter().enumerate() {
        if o + lambda * (s as f64) < opts[t] + lambda * (t as f64) {
            t = s;
        }
    }
    let steps = opts
        .iter()
        .enumerate()
        .map(|(s, &o)| TraceStep {
            s,
            opt_s: o,
            compared: o + lambda * s as f64,
            decision: if s == t {
                Decision::Selected
            } else {
                Decision::Rejected
            },
        })
        .collect();
    Ok((opts, t, steps))
}

/// Regularized selection: `t = argmin_{s ≤ ⌊1/λ⌋} OPT_s + λ·s` (smallest on ties).
///
/// Checks the guarantees with `α = λ·max(b, 1)` and returns an error if any fails.
pub fn algorithm2<F: ComplexityFamily>(
    fam: &F,
    d: &FeaturedSample,
    lambda: f64,
) -> Result<SrmTrace<F::Predictor>> {
    let (opts, t, steps) = sweep(fam, d, lambda)?;
    let alpha = regularized_alpha(lambda, fam.post_budget());
    let (f, opt_t) = fam.min_oracle(d, t)?;
    let eval = evaluate(&f, d)?;
    let mu = fam.complexity(&f);
    let r = opts.len() - 1;
    let tradeoff = opts
        .iter()
        .enumerate()
        .filter(|&(s, _)| s != t)
        .map(|(s, &o)| o - (opts[t] - (s as f64 - t as f64) * lambda))
        .fold(f64::INFINITY, f64::min);
    let items = vec![
        TheoremItem::new("mu(f) <= floor(1/lambda)", r as f64 - mu as f64),
        TheoremItem::new("mu(f) <= t", t as f64 - mu as f64),
        TheoremItem::new("loss(f) = OPT_t", SRM_TOLERANCE - (eval.loss - opt_t).abs()),
        TheoremItem::new(
            "OPT_s is nonincreasing",
            opts.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::min),
        ),
        TheoremItem::new(
            "OPT_s >= OPT_t - (s - t)*lambda",
            if tradeoff.is_finite() { tradeoff } else { 0.0 },
        ),
        TheoremItem::new("pGap(f) <= alpha", alpha - eval.pgap),
        TheoremItem::new("smCE(f) <= sqrt(alpha)", alpha.sqrt() - eval.smce),
    ];
    SrmTrace {
        algorithm: "regularized".into(),
        family: fam.description(),
        alpha,
        lambda: Some(lambda),
        steps,
        t,
        complexity: mu,
        loss: eval.loss,
        pgap: eval.pgap,
        smce: eval.smce,
        predictor: f,
        items,
    }
    .into_checked()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrmClaimReport<P> {
    pub lambda: f64,
    pub complexity: usize,
    pub loss: f64,
    pub regularized_loss: f64,
    pub pgap: f64,
    pub smce: f64,
    pub predictor: P,
    pub items: Vec<TheoremItem>,
}

impl<P: Serialize> SrmClaimReport<P> {
    pub fn holds(&self) -> bool {
        self.items.iter().all(|i| i.holds)
    }
}

/// Minimizes `E ℓ_sq + λ·μ` over a family closed under post-processing
/// with `b ≤ 1`, and checks `pGap(f*) ≤ λ` and `smCE(f*) ≤ √λ`.
pub fn srm_claim_check<F: ComplexityFamily>(
    fam: &F,
    d: &FeaturedSample,
    lambda: f64,
) -> Result<SrmClaimReport<F::Predictor>> {
    if !fam.closed_under_post_processing() || fam.post_budget() > 1 {
        return Err(Error::InvalidArgument(format!(
            "family must be closed under post-processing with b <= 1 ({})",
            fam.description()
        )));
    }
    let (_, t, _) = sweep(fam, d, lambda)?;
    let (f, _) = fam.min_oracle(d, t)?;
    let eval = evaluate(&f, d)?;
    let mu = fam.complexity(&f);
    let items = vec![
        TheoremItem::new("pGap(f*) <= lambda", lambda - eval.pgap),
        TheoremItem::new(
            "smCE(f*) <= sqrt(lambda)",
            lambda.sqrt() + 1e-4 - eval.smce - SRM_TOLERANCE,
        ),
    ];
    let report = SrmClaimReport {
        lambda,
        complexity: mu,
        loss: eval.loss,
        regularized_loss: eval.loss + lambda * mu as f64,
        pgap: eval.pgap,
        smce: eval.smce,
        predictor: f,
        items,
    };
    match report.items.iter().find(|i| !i.holds) {
        Some(bad) => Err(Error::TheoremViolation(format!(
            "{} fails with slack {:e}",
            bad.item, bad.slack
        ))),
        None => Ok(report),
    }
}
