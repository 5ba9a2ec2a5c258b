//! Quadratic objectives by exact dynamic programming over convex
//! piecewise-quadratic value functions.
//!
//! Each piece is `k + a·(x − h)²` on `[lo, hi]`; plateaus have `a = 0`.
//! Erosion by a chain radius `r` splits the function at its minimizer `p`,
//! shifts the left part by `−r`, the right part by `+r`, and inserts the flat
//! piece `[p − r, p + r]`. Adding a term `a(x − b)²` keeps vertex form.

use super::linear::backtrack;
use super::problem::{ChainProblem, ChainSolution, Objective};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    a: f64,
    h: f64,
    k: f64,
}

impl Piece {
    fn value(&self, x: f64) -> f64 {
        self.k + self.a * (x - self.h) * (x - self.h)
    }

    fn shifted(mut self, s: f64) -> Self {
        self.lo += s;
        self.hi += s;
        self.h += s;
        self
    }
}

struct PiecewiseQuadratic {
    pieces: Vec<Piece>,
}

impl PiecewiseQuadratic {
    fn zero() -> Self {
        PiecewiseQuadratic {
            pieces: vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                a: 0.0,
                h: 0.0,
                k: 0.0,
            }],
        }
    }

    /// A minimizer and the minimum; on a plateau the point nearest 0 is used.
    fn argmin(&self) -> (f64, f64) {
        for p in &self.pieces {
            if p.a > 0.0 {
                if p.h <= p.hi {
                    let x = p.h.clamp(p.lo, p.hi);
                    return (x, p.value(x));
                }
            } else {
                let x = 0.0f64.clamp(p.lo, p.hi);
                return (x, p.k);
            }
        }
        let last = self.pieces.last().unwrap();
        (last.hi, last.value(last.hi))
    }

    fn erode(&mut self, r: f64) {
        if r == 0.0 {
            return;
        }
        let (p, fp) = self.argmin();
        let mut out = Vec::with_capacity(self.pieces.len() + 2);
        for piece in &self.pieces {
            if piece.lo < p {
                let mut left = *piece;
                left.hi = left.hi.min(p);
                out.push(left.shifted(-r));
            }
        }
        out.push(Piece {
            lo: p - r,
            hi: p + r,
            a: 0.0,
            h: p,
            k: fp,
        });
        for piece in &self.pieces {
            if piece.hi > p {
                let mut right = *piece;
                right.lo = right.lo.max(p);
                out.push(right.shifted(r));
            }
        }
        self.pieces = out;
    }

    fn restrict(&mut self, lo: f64, hi: f64) {
        let dlo = self.pieces.first().unwrap().lo;
        let dhi = self.pieces.last().unwrap().hi;
        let (nlo, nhi) = (lo.max(dlo), hi.min(dhi));
        if nlo > nhi {
            // empty only through rounding; keep the single nearest point
            let x = 0.5 * (nlo + nhi);
            let source = if nlo == dlo {
                self.pieces[0]
            } else {
                *self.pieces.last().unwrap()
            };
            self.pieces = vec![Piece {
                lo: x,
                hi: x,
                ..source
            }];
            return;
        }
        let mut kept: Vec<Piece> = self
            .pieces
            .iter()
            .filter(|p| p.hi >= nlo && p.lo <= nhi)
            .map(|p| Piece {
                lo: p.lo.max(nlo),
                hi: p.hi.min(nhi),
                ..*p
            })
            .collect();
        if kept.len() > 1 {
            kept.retain(|p| p.hi > p.lo);
        }
        if kept.is_empty() {
            let source = self.pieces[0];
            kept.push(Piece {
                lo: nlo,
                hi: nlo,
                ..source
            });
        }
        self.pieces = kept;
    }

    /// Adds `a·(x − b)²`.
    fn add_square(&mut self, a: f64, b: f64) {
        for p in &mut self.pieces {
            let total = p.a + a;
            let h = (p.a * p.h + a * b) / total;
            p.k += p.a * a / total * (p.h - b) * (p.h - b);
            p.a = total;
            p.h = h;
        }
    }
}

/// Minimizes `Σ a_j (η_j − b_j)²` over the chain constraints of `problem`
/// (its objective is ignored). `a_j > 0` is assumed.
pub(crate) fn minimize_squares(problem: &ChainProblem, a: &[f64], b: &[f64]) -> Vec<f64> {
    let m = problem.len();
    let mut f = PiecewiseQuadratic::zero();
    let mut anchors = Vec::with_capacity(m);
    for j in 0..m {
        if j > 0 {
            f.erode(problem.radius(j - 1));
        }
        f.restrict(problem.box_lo[j], problem.box_hi[j]);
        f.add_square(a[j], b[j]);
        anchors.push(f.argmin().0);
    }
    backtrack(problem, &anchors)
}

pub fn solve_quadratic_chain(problem: &ChainProblem) -> Result<ChainSolution> {
    problem.validate()?;
    let Objective::Quadratic { a, b, .. } = &problem.objective else {
        return Err(Error::InvalidProblem(
            "solve_quadratic_chain needs a quadratic objective".into(),
        ));
    };
    let eta = minimize_squares(problem, a, b);
    ChainSolution::from_eta(problem, eta)
}
