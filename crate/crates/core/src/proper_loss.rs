//! Proper losses and their convex-duality representation.
//!
//! Every proper loss `ℓ` on an interval `V ⊆ [0, 1]` can be written as
//! `ℓ(y, v) = ψ(dual(v)) − y·dual(v)` with `dual(v) = ℓ(0, v) − ℓ(1, v)` and a
//! convex `ψ` whose slopes lie in `[0, 1]`. The pair `(φ, ψ)`, with
//! `φ(v) = −E_{y∼Ber(v)} ℓ(y, v)`, is a conjugate pair whose Fenchel–Young
//! divergence vanishes exactly on `(v, dual(v))`. `∇ψ` maps a dual prediction
//! back to a prediction, and its Lipschitz constant `λ` sets the scale of the
//! dual calibration metrics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clipping distance used for losses whose domain excludes 0 or 1.
pub const EPS_CLIP: f64 = 1e-12;

/// A sub-interval of `[0, 1]`; open endpoints are approached to within [`EPS_CLIP`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Domain {
    pub const CLOSED_UNIT: Domain = Domain {
        lo: 0.0,
        hi: 1.0,
        lo_open: false,
        hi_open: false,
    };
    pub const OPEN_UNIT: Domain = Domain {
        lo: 0.0,
        hi: 1.0,
        lo_open: true,
        hi_open: true,
    };

    /// Smallest admissible value.
    pub fn min(&self) -> f64 {
        if self.lo_open {
            self.lo + EPS_CLIP
        } else {
            self.lo
        }
    }

    /// Largest admissible value.
    pub fn max(&self) -> f64 {
        if self.hi_open {
            self.hi - EPS_CLIP
        } else {
            self.hi
        }
    }

    /// Clamps `v` into the admissible range, reporting whether it moved.
    pub fn clamp(&self, v: f64) -> (f64, bool) {
        let c = v.clamp(self.min(), self.max());
        (c, c != v)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min() && v <= self.max()
    }

    /// `n` evenly spaced admissible points, endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.min(), self.max());
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (a + b)],
            _ => (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// A pair `(φ, ψ)` of functions with Fenchel–Young divergence `φ(v) + ψ(t) − vt`.
pub trait ConjugatePair {
    fn phi(&self, v: f64) -> f64;
    fn psi(&self, t: f64) -> f64;

    fn divergence(&self, v: f64, t: f64) -> f64 {
        self.phi(v) + self.psi(t) - v * t
    }
}

/// A proper loss together with its dual map, `ψ`, `∇ψ` and smoothness `λ`.
pub trait ProperLoss: ConjugatePair + Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> Domain;

    /// `ℓ(y, v)`; values outside the domain are clamped first.
    fn loss(&self, y: u8, v: f64) -> f64;

    /// `dual(v) = ℓ(0, v) − ℓ(1, v)`.
    fn dual(&self, v: f64) -> f64 {
        self.loss(0, v) - self.loss(1, v)
    }

    fn grad_psi(&self, t: f64) -> f64;

    /// Second derivative of `ψ`, used as curvature by the convex chain solver.
    fn psi_curvature(&self, t: f64) -> f64 {
        let h = 1e-6;
        ((self.grad_psi(t + h) - self.grad_psi(t - h)) / (2.0 * h)).max(0.0)
    }

    /// `λ` such that `∇ψ` is `λ`-Lipschitz.
    fn smoothness(&self) -> f64;

    /// Whether [`smoothness`](ProperLoss::smoothness) is a numerical estimate
    /// rather than a known constant.
    fn smoothness_is_estimated(&self) -> bool {
        false
    }

    /// `E_{y∼Ber(p)} ℓ(y, v)`.
    fn expected_loss(&self, p: f64, v: f64) -> f64 {
        let mut total = 0.0;
        if p < 1.0 {
            total += (1.0 - p) * self.loss(0, v);
        }
        if p > 0.0 {
            total += p * self.loss(1, v);
        }
        total
    }
}

impl fmt::Debug for dyn ProperLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProperLoss")
            .field("name", &self.name())
            .field("lambda", &self.smoothness())
            .finish()
    }
}

/// The dual loss `ℓ^ψ(y, t) = ψ(t) − y·t`.
pub fn dual_loss<L: ProperLoss + ?Sized>(loss: &L, y: u8, t: f64) -> f64 {
    loss.psi(t) - f64::from(y) * t
}

/// `D_{φ,ψ}(v, t) = φ(v) + ψ(t) − vt`.
pub fn fenchel_young_divergence<P: ConjugatePair + ?Sized>(pair: &P, v: f64, t: f64) -> f64 {
    pair.divergence(v, t)
}

/// Squared loss `(y − v)²` on `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl ConjugatePair for SquaredLoss {
    fn phi(&self, v: f64) -> f64 {
        v * (v - 1.0)
    }

    /// The slope-clamped conjugate of `φ` over `[0, 1]`.
    fn psi(&self, t: f64) -> f64 {
        if t < -1.0 {
            0.0
        } else if t <= 1.0 {
            (t + 1.0) * (t + 1.0) / 4.0
        } else {
            t
        }
    }
}

impl ProperLoss for SquaredLoss {
    fn name(&self) -> &str {
        "squared"
    }

    fn domain(&self) -> Domain {
        Domain::CLOSED_UNIT
    }

    fn loss(&self, y: u8, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        let r = f64::from(y) - v;
        r * r
    }

    fn dual(&self, v: f64) -> f64 {
        2.0 * v.clamp(0.0, 1.0) - 1.0
    }

    fn grad_psi(&self, t: f64) -> f64 {
        ((t + 1.0) / 2.0).clamp(0.0, 1.0)
    }

    fn psi_curvature(&self, t: f64) -> f64 {
        if (-1.0..=1.0).contains(&t) {
            0.5
        } else {
            0.0
        }
    }

    fn smoothness(&self) -> f64 {
        0.5
    }
}

/// Cross-entropy loss `−y ln v − (1 − y) ln(1 − v)` on `(0, 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropyLoss;

/// Overflow-free logistic sigmoid.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵗ)` computed as `max(t, 0) + ln(1 + e^{−|t|})`.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `ln(v / (1 − v))`.
pub fn logit(v: f64) -> f64 {
    v.ln() - (-v).ln_1p()
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl ConjugatePair for CrossEntropyLoss {
    fn phi(&self, v: f64) -> f64 {
        xlogx(v) + xlogx(1.0 - v)
    }

    fn psi(&self, t: f64) -> f64 {
        softplus(t)
    }
}

impl ProperLoss for CrossEntropyLoss {
    fn name(&self) -> &str {
        "cross_entropy"
    }

    fn domain(&self) -> Domain {
        Domain::OPEN_UNIT
    }

    fn loss(&self, y: u8, v: f64) -> f64 {
        let (v, _) = Domain::OPEN_UNIT.clamp(v);
        if y == 1 {
            -v.ln()
        } else {
            -(-v).ln_1p()
        }
    }

    fn dual(&self, v: f64) -> f64 {
        logit(Domain::OPEN_UNIT.clamp(v).0)
    }

    fn grad_psi(&self, t: f64) -> f64 {
        sigmoid(t)
    }

    fn psi_curvature(&self, t: f64) -> f64 {
        let s = sigmoid(t);
        s * (1.0 - s)
    }

    fn smoothness(&self) -> f64 {
        0.25
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    CrossEntropy,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" | "sq" => Ok(LossKind::Squared),
            "cross_entropy" | "cross-entropy" | "xent" => Ok(LossKind::CrossEntropy),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Squared => "squared",
            LossKind::CrossEntropy => "cross_entropy",
        })
    }
}

pub fn builtin_loss(kind: LossKind) -> Arc<dyn ProperLoss> {
    match kind {
        LossKind::Squared => Arc::new(SquaredLoss),
        LossKind::CrossEntropy => Arc::new(CrossEntropyLoss),
    }
}

/// A loss with a larger smoothness constant than its own. Any `λ` at least
/// the true one keeps the smoothness bounds valid, so smaller values are
/// rejected.
#[derive(Debug, Clone)]
pub struct SmoothnessOverride {
    loss: Arc<dyn ProperLoss>,
    lambda: f64,
}

impl SmoothnessOverride {
    pub fn new(loss: Arc<dyn ProperLoss>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if lambda < loss.smoothness() {
            return Err(Error::InvalidArgument(format!(
                "lambda {lambda} is below the smoothness {} of {}",
                loss.smoothness(),
                loss.name()
            )));
        }
        Ok(SmoothnessOverride { loss, lambda })
    }
}

impl ConjugatePair for SmoothnessOverride {
    fn phi(&self, v: f64) -> f64 {
        self.loss.phi(v)
    }

    fn psi(&self, t: f64) -> f64 {
        self.loss.psi(t)
    }
}

impl ProperLoss for SmoothnessOverride {
    fn name(&self) -> &str {
        self.loss.name()
    }

    fn domain(&self) -> Domain {
        self.loss.domain()
    }

    fn loss(&self, y: u8, v: f64) -> f64 {
        self.loss.loss(y, v)
    }

    fn dual(&self, v: f64) -> f64 {
        self.loss.dual(v)
    }

    fn grad_psi(&self, t: f64) -> f64 {
        self.loss.grad_psi(t)
    }

    fn psi_curvature(&self, t: f64) -> f64 {
        self.loss.psi_curvature(t)
    }

    fn smoothness(&self) -> f64 {
        self.lambda
    }

    fn smoothness_is_estimated(&self) -> bool {
        self.loss.smoothness_is_estimated()
    }
}

/// `ψ(t) = max_{v ∈ grid} (vt − φ(v))` over a finite grid.
#[derive(Debug, Clone)]
pub struct GridConjugate {
    points: Vec<f64>,
    phis: Vec<f64>,
}

impl GridConjugate {
    pub fn eval(&self, t: f64) -> f64 {
        self.argmax(t).1
    }

    /// Index of the maximizing grid point and the maximum.
    pub fn argmax(&self, t: f64) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, (&v, &p)) in self.points.iter().zip(&self.phis).enumerate() {
            let val = v * t - p;
            if val > best.1 {
                best = (k, val);
            }
        }
        best
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid spacing `h`; the conjugate is within `h·|t − φ'|` of the true supremum.
    pub fn spacing(&self) -> f64 {
        if self.points.len() < 2 {
            0.0
        } else {
            self.points[1] - self.points[0]
        }
    }
}

/// Grid-maximized convex conjugate of `phi` over `points` evenly spaced points of `domain`.
pub fn conjugate_from_phi(
    phi: impl Fn(f64) -> f64,
    domain: Domain,
    points: usize,
) -> Result<GridConjugate> {
    if points == 0 {
        return Err(Error::InvalidArgument("conjugate grid is empty".into()));
    }
    let grid = domain.grid(points);
    let phis: Vec<f64> = grid.iter().map(|&v| phi(v)).collect();
    if let Some(bad) = phis.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "phi is not finite at grid point {}",
            grid[bad]
        )));
    }
    Ok(GridConjugate { points: grid, phis })
}

type LossFn = dyn Fn(u8, f64) -> f64 + Send + Sync;

/// A user-supplied loss whose duality quantities are built numerically.
///
/// `dual` comes straight from the loss, `φ` from the Bayes risk, `ψ` from grid
/// conjugation refined by golden-section search, `∇ψ` from the maximizer of
/// that conjugation, and `λ` from the steepest finite-difference slope of `∇ψ`
/// inflated by [`NumericLoss::LAMBDA_SAFETY`].
pub struct NumericLoss {
    name: String,
    domain: Domain,
    loss: Arc<LossFn>,
    conjugate: GridConjugate,
    lambda: f64,
    kinks: Vec<f64>,
    dual_range: (f64, f64),
}

impl fmt::Debug for NumericLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericLoss")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("lambda", &self.lambda)
            .field("kinks", &self.kinks)
            .finish()
    }
}

impl NumericLoss {
    pub const GRID_POINTS: usize = 2001;
    pub const LAMBDA_SAFETY: f64 = 1.05;

    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        loss: impl Fn(u8, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(domain.min() < domain.max()) || domain.lo < 0.0 || domain.hi > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "bad loss domain {domain:?}"
            )));
        }
        let loss: Arc<LossFn> = Arc::new(loss);
        let bayes = {
            let loss = loss.clone();
            move |v: f64| -((1.0 - v) * loss(0, v) + v * loss(1, v))
        };
        let conjugate = conjugate_from_phi(&bayes, domain, Self::GRID_POINTS)?;
        let duals: Vec<f64> = conjugate
            .points()
            .iter()
            .map(|&v| loss(0, v) - loss(1, v))
            .collect();
        let tmin = duals.iter().cloned().fold(f64::INFINITY, f64::min);
        let tmax = duals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(tmin.is_finite() && tmax.is_finite()) {
            return Err(Error::InvalidArgument(
                "dual map is not finite on the domain".into(),
            ));
        }
        let mut me = NumericLoss {
            name: name.into(),
            domain,
            loss,
            conjugate,
            lambda: f64::NAN,
            kinks: Vec::new(),
            dual_range: (tmin, tmax),
        };
        me.estimate_smoothness();
        Ok(me)
    }

    /// Dual predictions where `∇ψ` jumps, i.e. `ψ` is not differentiable.
    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn dual_range(&self) -> (f64, f64) {
        self.dual_range
    }

    /// `(ψ(t), argmax v)` via grid search refined by golden section on the
    /// bracket around the best grid point.
    fn conjugate_at(&self, t: f64) -> (f64, f64) {
        let (k, _) = self.conjugate.argmax(t);
        let pts = self.conjugate.points();
        let lo = pts[k.saturating_sub(1)];
        let hi = pts[(k + 1).min(pts.len() - 1)];
        let objective = |v: f64| v * t - self.phi(v);
        let v = golden_section_max(objective, lo, hi, 1e-13);
        let candidates = [v, pts[k]];
        let mut best = (f64::NEG_INFINITY, v);
        for &c in &candidates {
            let val = objective(c);
            if val > best.0 {
                best = (val, c);
            }
        }
        best
    }

    fn estimate_smoothness(&mut self) {
        let (tmin, tmax) = self.dual_range;
        let span = (tmax - tmin).max(1e-9);
        let n = Self::GRID_POINTS;
        let ts: Vec<f64> = (0..n)
            .map(|i| tmin - 0.05 * span + 1.1 * span * i as f64 / (n - 1) as f64)
            .collect();
        let grads: Vec<f64> = ts.iter().map(|&t| self.grad_psi(t)).collect();
        let jumps: Vec<f64> = grads.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let mean_jump = jumps.iter().sum::<f64>() / jumps.len() as f64;

        let mut kinks = Vec::new();
        let mut lambda: f64 = 0.0;
        for (i, &jump) in jumps.iter().enumerate() {
            let (a, b) = (ts[i], ts[i + 1]);
            if jump > 10.0 * mean_jump && jump > 1e-4 {
                if let Some(at) = self.locate_jump(a, b, jump) {
                    kinks.push(at);
                    continue;
                }
            }
            lambda = lambda.max(jump / (b - a));
        }
        self.lambda = lambda.max(f64::MIN_POSITIVE) * Self::LAMBDA_SAFETY;
        self.kinks = kinks;
    }

    /// Bisects toward the steepest half; a jump that survives shrinking the
    /// bracket by 2⁴⁰ is a kink.
    fn locate_jump(&self, mut a: f64, mut b: f64, jump: f64) -> Option<f64> {
        let mut ga = self.grad_psi(a);
        let mut gb = self.grad_psi(b);
        for _ in 0..40 {
            let m = 0.5 * (a + b);
            let gm = self.grad_psi(m);
            if (gm - ga).abs() >= (gb - gm).abs() {
                b = m;
                gb = gm;
            } else {
                a = m;
                ga = gm;
            }
        }
        ((gb - ga).abs() > 0.25 * jump).then_some(0.5 * (a + b))
    }
}

impl ConjugatePair for NumericLoss {
    fn phi(&self, v: f64) -> f64 {
        let v = self.domain.clamp(v).0;
        -((1.0 - v) * (self.loss)(0, v) + v * (self.loss)(1, v))
    }

    fn psi(&self, t: f64) -> f64 {
        self.conjugate_at(t).0
    }
}

impl ProperLoss for NumericLoss {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> Domain {
        self.domain
    }

    fn loss(&self, y: u8, v: f64) -> f64 {
        (self.loss)(y, self.domain.clamp(v).0)
    }

    fn grad_psi(&self, t: f64) -> f64 {
        self.conjugate_at(t).1
    }

    fn smoothness(&self) -> f64 {
        self.lambda
    }

    fn smoothness_is_estimated(&self) -> bool {
        true
    }
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    golden_section_min(|x| -f(x), lo, hi, tol)
}

/// Golden-section search for the minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if hi <= lo {
        return lo;
    }
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    // endpoints are candidates too: the minimum of a monotone function sits there
    [lo, mid, hi]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap()
}

/// Outcome of [`verify_properness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropernessReport {
    pub is_proper: bool,
    /// `max_v [E_{Ber(v)} ℓ(y, v) − min_{v'} E_{Ber(v)} ℓ(y, v')]` over the grid.
    pub worst_violation: f64,
    pub worst_at: f64,
}

pub const PROPERNESS_TOLERANCE: f64 = 1e-9;

/// Checks on a `points`-point grid of the domain that `v` minimizes the
/// expected loss under `Ber(v)`.
pub fn verify_properness<L: ProperLoss + ?Sized>(loss: &L, points: usize) -> PropernessReport {
    let grid = loss.domain().grid(points.max(2));
    let table: Vec<[f64; 2]> = grid
        .iter()
        .map(|&v| [loss.loss(0, v), loss.loss(1, v)])
        .collect();
    let mut worst = (0.0_f64, grid[0]);
    for (i, &v) in grid.iter().enumerate() {
        let expected = |row: &[f64; 2]| (1.0 - v) * row[0] + v * row[1];
        let at_v = expected(&table[i]);
        let best = table.iter().map(expected).fold(f64::INFINITY, f64::min);
        let violation = at_v - best;
        if violation > worst.0 {
            worst = (violation, v);
        }
    }
    PropernessReport {
        is_proper: worst.0 <= PROPERNESS_TOLERANCE,
        worst_violation: worst.0,
        worst_at: worst.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn builtin_values() {
        let ce = CrossEntropyLoss;
        assert_eq!(ce.dual(0.5), 0.0);
        assert!((ce.psi(0.0) - LN2).abs() < 1e-15);
        assert_eq!(ce.grad_psi(0.0), 0.5);

        let sq = SquaredLoss;
        assert_eq!(sq.dual(0.75), 0.5);
        assert_eq!(sq.psi(0.5), 0.5625);
        assert_eq!(sq.grad_psi(0.5), 0.75);
        assert_eq!(sq.psi(-2.0), 0.0);
        assert_eq!(sq.psi(2.0), 2.0);
    }

    #[test]
    fn dual_loss_values() {
        let ce = CrossEntropyLoss;
        assert!((dual_loss(&ce, 1, 0.0) - LN2).abs() < 1e-15);
        let t = ce.dual(0.9);
        assert!((dual_loss(&ce, 1, t) - (-(0.9f64).ln())).abs() < 1e-12);

        let sq = SquaredLoss;
        assert_eq!(dual_loss(&sq, 0, 0.0), 0.25);
        assert_eq!(sq.loss(0, sq.grad_psi(0.0)), 0.25);
    }

    #[test]
    fn smoothness_override_only_loosens() {
        let base = builtin_loss(LossKind::CrossEntropy);
        let loose = SmoothnessOverride::new(base.clone(), 0.5).unwrap();
        assert_eq!(loose.smoothness(), 0.5);
        assert_eq!(loose.psi(0.0), base.psi(0.0));
        assert!(SmoothnessOverride::new(base.clone(), 0.2).is_err());
        assert!(SmoothnessOverride::new(base, f64::NAN).is_err());
    }

    #[test]
    fn softplus_does_not_overflow() {
        assert_eq!(softplus(1e308), 1e308);
        assert_eq!(softplus(-1e308), 0.0);
        assert_eq!(sigmoid(-1e308), 0.0);
        assert_eq!(sigmoid(1e308), 1.0);
    }

    #[test]
    fn cross_entropy_clamps_endpoints() {
        let ce = CrossEntropyLoss;
        assert!(ce.loss(1, 0.0).is_finite());
        assert!((ce.loss(1, 0.0) - (-(EPS_CLIP).ln())).abs() < 1e-9);
        assert!(ce.dual(1.0).is_finite());
    }

    #[test]
    fn conjugate_from_phi_examples() {
        let sq = conjugate_from_phi(|v| v * (v - 1.0), Domain::CLOSED_UNIT, 1001).unwrap();
        assert!((sq.eval(1.0) - 1.0).abs() < 1e-12);

        let ce = conjugate_from_phi(|v| CrossEntropyLoss.phi(v), Domain::OPEN_UNIT, 1001).unwrap();
        // v = 1/2 is a grid point, and the maximizer at t = 0
        assert!((ce.eval(0.0) - LN2).abs() < 1e-9);

        let zero = conjugate_from_phi(|_| 0.0, Domain::CLOSED_UNIT, 11).unwrap();
        assert_eq!(zero.eval(-3.0), 0.0);

        assert!(conjugate_from_phi(|_| 0.0, Domain::CLOSED_UNIT, 0).is_err());
    }

    #[test]
    fn fenchel_young_examples() {
        let ce = CrossEntropyLoss;
        assert!(fenchel_young_divergence(&ce, 0.5, 0.0).abs() < 1e-15);
        let expected = (1.0 + 1f64.exp()).ln() - 0.5 - LN2;
        assert!((fenchel_young_divergence(&ce, 0.5, 1.0) - expected).abs() < 1e-15);
        assert!((expected - 0.120115).abs() < 1e-6);
        assert!(fenchel_young_divergence(&SquaredLoss, 0.75, 0.5).abs() < 1e-15);
    }

    #[test]
    fn properness_of_builtins_and_absolute_loss() {
        assert!(verify_properness(&SquaredLoss, 201).is_proper);
        assert!(verify_properness(&CrossEntropyLoss, 201).is_proper);

        let abs = NumericLoss::new("absolute", Domain::CLOSED_UNIT, |y, v| {
            (f64::from(y) - v).abs()
        })
        .unwrap();
        let report = verify_properness(&abs, 201);
        assert!(!report.is_proper);
        // at v = 0.25 the best response is v' = 0 with expected loss 0.25,
        // versus 2·0.25·0.75 = 0.375 at v itself
        assert!(report.worst_violation > 0.1);
    }

    #[test]
    fn numeric_squared_loss_matches_builtin() {
        let num =
            NumericLoss::new("sq", Domain::CLOSED_UNIT, |y, v| (f64::from(y) - v).powi(2)).unwrap();
        for &t in &[-2.0, -1.0, -0.3, 0.0, 0.4, 1.0, 1.7] {
            assert!((num.psi(t) - SquaredLoss.psi(t)).abs() < 1e-9, "psi({t})");
            assert!(
                (num.grad_psi(t) - SquaredLoss.grad_psi(t)).abs() < 1e-6,
                "grad_psi({t})"
            );
        }
        assert!((num.smoothness() - 0.5 * NumericLoss::LAMBDA_SAFETY).abs() < 1e-3);
        assert!(num.kinks().is_empty());
    }

    #[test]
    fn numeric_cross_entropy_matches_builtin() {
        let num = NumericLoss::new("xent", Domain::OPEN_UNIT, |y, v| {
            if y == 1 {
                -v.ln()
            } else {
                -(-v).ln_1p()
            }
        })
        .unwrap();
        for &t in &[-5.0, -1.0, 0.0, 0.5, 3.0] {
            assert!((num.psi(t) - softplus(t)).abs() < 1e-9, "psi({t})");
            assert!((num.grad_psi(t) - sigmoid(t)).abs() < 1e-6, "grad_psi({t})");
        }
        let lambda = num.smoothness();
        assert!((0.25..=0.25 * 1.06).contains(&lambda), "lambda {lambda}");
    }

    #[test]
    fn numeric_loss_reports_kinks() {
        // a "hinge-like" proper loss: the piecewise-linear Bayes risk
        // φ(v) = −min(v, 1 − v) gives ∇ψ a jump at t = 0
        let loss = NumericLoss::new("threshold", Domain::CLOSED_UNIT, |y, v| {
            let pred = if v < 0.5 {
                0.0
            } else if v > 0.5 {
                1.0
            } else {
                0.5
            };
            (f64::from(y) - pred).abs()
        })
        .unwrap();
        assert!(!loss.kinks().is_empty());
    }

    #[test]
    fn golden_section_finds_interior_and_endpoint_minima() {
        let x = golden_section_min(|x| (x - 0.3).powi(2), -1.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        let x = golden_section_min(|x| x, -1.0, 1.0, 1e-12);
        assert_eq!(x, -1.0);
    }
}
