use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking box and chain constraints of a candidate point.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A convex function of one variable with its derivative.
pub trait ConvexTerm: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;

    /// Second derivative, used as the Newton curvature.
    fn curvature(&self, x: f64) -> f64 {
        let h = 1e-6 * (1.0 + x.abs());
        ((self.derivative(x + h) - self.derivative(x - h)) / (2.0 * h)).max(0.0)
    }
}

/// `x ↦ a·(x − b)²`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticTerm {
    pub a: f64,
    pub b: f64,
}

impl ConvexTerm for QuadraticTerm {
    fn value(&self, x: f64) -> f64 {
        self.a * (x - self.b) * (x - self.b)
    }

    fn derivative(&self, x: f64) -> f64 {
        2.0 * self.a * (x - self.b)
    }

    fn curvature(&self, _x: f64) -> f64 {
        2.0 * self.a
    }
}

/// Builds a [`ConvexTerm`] from closures.
pub struct FnTerm<F, D, C> {
    pub value: F,
    pub derivative: D,
    pub curvature: C,
}

impl<F, D, C> ConvexTerm for FnTerm<F, D, C>
where
    F: Fn(f64) -> f64 + Send + Sync,
    D: Fn(f64) -> f64 + Send + Sync,
    C: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    fn curvature(&self, x: f64) -> f64 {
        (self.curvature)(x)
    }
}

#[derive(Clone)]
pub enum Objective<'a> {
    /// `Σ c_j η_j`.
    Linear(Vec<f64>),
    /// `Σ a_j (η_j − b_j)² + constant`.
    Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
        constant: f64,
    },
    /// `Σ f_j(η_j)` with each `f_j` convex.
    ConvexSeparable(Vec<Arc<dyn ConvexTerm + 'a>>),
}

impl fmt::Debug for Objective<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Linear(c) => f.debug_tuple("Linear").field(c).finish(),
            Objective::Quadratic { a, b, constant } => f
                .debug_struct("Quadratic")
                .field("a", a)
                .field("b", b)
                .field("constant", constant)
                .finish(),
            Objective::ConvexSeparable(terms) => {
                write!(f, "ConvexSeparable({} terms)", terms.len())
            }
        }
    }
}

impl Objective<'_> {
    pub fn len(&self) -> usize {
        match self {
            Objective::Linear(c) => c.len(),
            Objective::Quadratic { a, .. } => a.len(),
            Objective::ConvexSeparable(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of the `j`-th separable term at `x`.
    pub fn term(&self, j: usize, x: f64) -> f64 {
        match self {
            Objective::Linear(c) => c[j] * x,
            Objective::Quadratic { a, b, .. } => a[j] * (x - b[j]) * (x - b[j]),
            Objective::ConvexSeparable(t) => t[j].value(x),
        }
    }

    pub fn evaluate(&self, eta: &[f64]) -> f64 {
        let constant = match self {
            Objective::Quadratic { constant, .. } => *constant,
            _ => 0.0,
        };
        eta.iter()
            .enumerate()
            .map(|(j, &x)| self.term(j, x))
            .sum::<f64>()
            + constant
    }

    /// Derivative of the `j`-th term at `x`.
    pub fn derivative(&self, j: usize, x: f64) -> f64 {
        match self {
            Objective::Linear(c) => c[j],
            Objective::Quadratic { a, b, .. } => 2.0 * a[j] * (x - b[j]),
            Objective::ConvexSeparable(t) => t[j].derivative(x),
        }
    }
}

/// Optimize a separable objective over `η ∈ ℝᵐ` subject to
/// `box_lo ≤ η ≤ box_hi` and `|η_{j+1} − η_j| ≤ L·(v_{j+1} − v_j)`.
#[derive(Debug, Clone)]
pub struct ChainProblem<'a> {
    pub knots: Vec<f64>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub lipschitz: f64,
    pub objective: Objective<'a>,
    pub sense: Sense,
}

impl<'a> ChainProblem<'a> {
    /// A problem with the same box `[lo, hi]` at every knot.
    pub fn uniform_box(
        knots: Vec<f64>,
        lo: f64,
        hi: f64,
        lipschitz: f64,
        objective: Objective<'a>,
        sense: Sense,
    ) -> Self {
        let m = knots.len();
        ChainProblem {
            knots,
            box_lo: vec![lo; m],
            box_hi: vec![hi; m],
            lipschitz,
            objective,
            sense,
        }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Allowed change `L·(v_{j+1} − v_j)` between knot `j` and `j + 1`.
    pub fn radius(&self, j: usize) -> f64 {
        self.lipschitz * (self.knots[j + 1] - self.knots[j])
    }

    /// Checks shapes, ordering, boxes and objective data, then feasibility.
    pub fn validate(&self) -> Result<()> {
        let m = self.knots.len();
        if m == 0 {
            return Err(Error::InvalidProblem("no knots".into()));
        }
        if self.box_lo.len() != m || self.box_hi.len() != m || self.objective.len() != m {
            return Err(Error::InvalidProblem(
                "knots, boxes and objective differ in length".into(),
            ));
        }
        if self.knots.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("knots must be finite".into()));
        }
        if let Some(j) = self.knots.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProblem(format!(
                "knots not strictly increasing at {}",
                j + 1
            )));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "lipschitz bound {} must be finite and >= 0",
                self.lipschitz
            )));
        }
        for j in 0..m {
            let (lo, hi) = (self.box_lo[j], self.box_hi[j]);
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(Error::InvalidProblem(format!(
                    "bad box [{lo}, {hi}] at knot {j}"
                )));
            }
        }
        match &self.objective {
            Objective::Linear(c) => {
                if c.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidProblem(
                        "linear coefficients must be finite".into(),
                    ));
                }
            }
            Objective::Quadratic { a, b, constant } => {
                if self.sense != Sense::Minimize {
                    return Err(Error::InvalidProblem(
                        "quadratic objectives must be minimized".into(),
                    ));
                }
                if a.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::InvalidProblem(
                        "quadratic weights must be positive".into(),
                    ));
                }
                if b.len() != a.len() || b.iter().any(|x| !x.is_finite()) || !constant.is_finite() {
                    return Err(Error::InvalidProblem(
                        "quadratic targets must be finite".into(),
                    ));
                }
            }
            Objective::ConvexSeparable(terms) => {
                if self.sense != Sense::Minimize {
                    return Err(Error::InvalidProblem(
                        "convex objectives must be minimized".into(),
                    ));
                }
                self.spot_check_convexity(terms)?;
            }
        }
        self.forward_intervals().map(|_| ())
    }

    fn spot_check_convexity(&self, terms: &[Arc<dyn ConvexTerm + 'a>]) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for (j, term) in terms.iter().enumerate() {
            let lo = if self.box_lo[j].is_finite() {
                self.box_lo[j]
            } else {
                -10.0
            };
            let hi = if self.box_hi[j].is_finite() {
                self.box_hi[j]
            } else {
                10.0
            };
            if hi <= lo {
                continue;
            }
            for _ in 0..8 {
                let x = rng.gen_range(lo..=hi);
                let y = rng.gen_range(lo..=hi);
                let (fx, fy, fm) = (term.value(x), term.value(y), term.value(0.5 * (x + y)));
                let scale = 1.0 + fx.abs().max(fy.abs());
                if !(fm <= 0.5 * (fx + fy) + 1e-9 * scale) {
                    return Err(Error::InvalidProblem(format!(
                        "term {j} fails midpoint convexity at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reachable interval of each `η_j` given the constraints on knots `≤ j`.
    pub fn forward_intervals(&self) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(self.len());
        let (mut lo, mut hi) = (self.box_lo[0], self.box_hi[0]);
        out.push((lo, hi));
        for j in 1..self.len() {
            let r = self.radius(j - 1);
            lo = (lo - r).max(self.box_lo[j]);
            hi = (hi + r).min(self.box_hi[j]);
            if lo > hi + 1e-12 {
                return Err(Error::Infeasible { knot: j });
            }
            if lo > hi {
                let mid = 0.5 * (lo + hi);
                lo = mid;
                hi = mid;
            }
            out.push((lo, hi));
        }
        Ok(out)
    }

    /// Largest box or chain violation of `eta` (0 when feasible).
    pub fn feasibility_residual(&self, eta: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &x) in eta.iter().enumerate() {
            worst = worst.max(self.box_lo[j] - x).max(x - self.box_hi[j]);
        }
        for j in 1..eta.len() {
            worst = worst.max((eta[j] - eta[j - 1]).abs() - self.radius(j - 1));
        }
        worst
    }

    pub fn objective_value(&self, eta: &[f64]) -> f64 {
        self.objective.evaluate(eta)
    }

    /// Smallest and largest finite box bounds, used as the certificate range.
    pub fn range(&self) -> (f64, f64) {
        let lo = self.box_lo.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .box_hi
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// A function known at sorted knots, linearly interpolated between them and
/// constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub lipschitz: f64,
    pub range: (f64, f64),
}

impl LipschitzFunction {
    /// Builds and checks the Lipschitz and range constraints.
    pub fn new(
        knots: Vec<f64>,
        values: Vec<f64>,
        lipschitz: f64,
        range: (f64, f64),
    ) -> Result<Self> {
        let f = LipschitzFunction {
            knots,
            values,
            lipschitz,
            range,
        };
        f.check()?;
        Ok(f)
    }

    /// The constant function `c` at the given knots.
    pub fn constant(knots: Vec<f64>, c: f64, lipschitz: f64, range: (f64, f64)) -> Result<Self> {
        let values = vec![c; knots.len()];
        Self::new(knots, values, lipschitz, range)
    }

    pub fn check(&self) -> Result<()> {
        if self.knots.len() != self.values.len() || self.knots.is_empty() {
            return Err(Error::ConstraintViolation(
                "knots and values must be nonempty and equal in length".into(),
            ));
        }
        if self.knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConstraintViolation(
                "knots must be strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConstraintViolation("values must be finite".into()));
        }
        let residual = self.violation();
        if residual > FEASIBILITY_TOLERANCE {
            return Err(Error::ConstraintViolation(format!(
                "constraint residual {residual:e}"
            )));
        }
        Ok(())
    }

    /// Largest violation of the Lipschitz and range constraints.
    pub fn violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.knots.windows(2).zip(self.values.windows(2)) {
            let (k, v) = w;
            worst = worst.max((v[1] - v[0]).abs() - self.lipschitz * (k[1] - k[0]));
        }
        for &v in &self.values {
            worst = worst.max(self.range.0 - v).max(v - self.range.1);
        }
        worst
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[n - 1] {
            return self.values[n - 1];
        }
        let i = k.partition_point(|&v| v <= x);
        let (x0, x1) = (k[i - 1], k[i]);
        let t = (x - x0) / (x1 - x0);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }
}

/// Optimal value and the certificate attaining it.
#[derive(Debug, Clone)]
pub struct ChainSolution {
    pub optimum: f64,
    pub certificate: LipschitzFunction,
}

impl ChainSolution {
    pub(crate) fn from_eta(problem: &ChainProblem, mut eta: Vec<f64>) -> Result<Self> {
        for (j, x) in eta.iter_mut().enumerate() {
            *x = x.clamp(problem.box_lo[j], problem.box_hi[j]);
        }
        let residual = problem.feasibility_residual(&eta);
        if residual > FEASIBILITY_TOLERANCE {
            return Err(Error::ConstraintViolation(format!(
                "solver certificate residual {residual:e}"
            )));
        }
        let optimum = problem.objective_value(&eta);
        let (lo, hi) = problem.range();
        let range = (
            lo.min(eta.iter().cloned().fold(f64::INFINITY, f64::min)),
            hi.max(eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        );
        Ok(ChainSolution {
            optimum,
            certificate: LipschitzFunction {
                knots: problem.knots.clone(),
                values: eta,
                lipschitz: problem.lipschitz,
                range,
            },
        })
    }

    pub fn eta(&self) -> &[f64] {
        &self.certificate.values
    }
}

/// Largest violation of the KKT conditions at a feasible `eta` for a
/// minimization problem with differentiable objective.
///
/// The chain multipliers `θ_j` accumulate the gradient from the left; the
/// reachable interval of `θ_j` is propagated knot by knot through the normal
/// cones of the box and chain constraints, and optimality requires `θ_m` to
/// be able to reach zero. The returned value is the total distance by which
/// the intervals had to be widened to keep the chain consistent.
pub fn kkt_residual(problem: &ChainProblem, eta: &[f64]) -> f64 {
    let m = eta.len();
    let tol = 1e-9;
    let sign = if problem.sense == Sense::Maximize {
        -1.0
    } else {
        1.0
    };
    let mut residual = 0.0;
    // θ_j ranges over [lo, hi]: the net multiplier passed from knot j to j + 1
    let (mut lo, mut hi) = (0.0, 0.0);
    for j in 0..m {
        let x = eta[j];
        let g = sign * problem.objective.derivative(j, x);
        lo += g;
        hi += g;
        // box multipliers: ν ≤ 0 at an active lower bound, ν ≥ 0 at an active upper bound
        if (x - problem.box_lo[j]).abs() <= tol {
            lo = f64::NEG_INFINITY;
        }
        if (problem.box_hi[j] - x).abs() <= tol {
            hi = f64::INFINITY;
        }
        if j + 1 < m {
            // the chain multiplier carried forward must point into an active constraint
            let d = eta[j + 1] - x;
            let r = problem.radius(j);
            let (clo, chi) = if r - d.abs() > tol {
                (0.0, 0.0)
            } else if r <= tol {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else if d > 0.0 {
                (0.0, f64::INFINITY)
            } else {
                (f64::NEG_INFINITY, 0.0)
            };
            let (nlo, nhi) = (lo.max(clo), hi.min(chi));
            if nlo > nhi {
                let gap = nlo - nhi;
                residual += gap;
                let mid = if nlo == clo { clo } else { chi };
                lo = mid;
                hi = mid;
            } else {
                lo = nlo;
                hi = nhi;
            }
        }
    }
    if lo > 0.0 {
        residual += lo;
    } else if hi < 0.0 {
        residual += -hi;
    }
    residual
}
