//! Linear objectives by dynamic programming over convex piecewise-linear
//! value functions, stored as two heaps of breakpoints ("slope trick").
//!
//! `F_j(x)` is the best cost of `η_1..η_j` with `η_j = x`. Moving to the next
//! knot erodes `F_j` by the chain radius (left breakpoints slide left, right
//! ones slide right), adds the new linear term and clips to the new box.
//! Box walls are breakpoints of infinite weight.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::problem::{ChainProblem, ChainSolution, Objective, Sense};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    pos: f64,
    weight: f64,
}

impl PartialEq for Breakpoint {
    fn eq(&self, other: &Self) -> bool {
        self.pos.total_cmp(&other.pos) == Ordering::Equal
    }
}

impl Eq for Breakpoint {}

impl PartialOrd for Breakpoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Breakpoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.pos.total_cmp(&other.pos)
    }
}

/// Convex piecewise-linear function: slope at `x` is the weight of right
/// breakpoints below `x` minus the weight of left breakpoints above `x`.
/// Stored positions are offset lazily so erosion is O(1).
#[derive(Default)]
struct SlopeTrick {
    left: BinaryHeap<Breakpoint>,
    right: BinaryHeap<Reverse<Breakpoint>>,
    left_offset: f64,
    right_offset: f64,
}

impl SlopeTrick {
    fn left_top(&self) -> Option<f64> {
        self.left.peek().map(|b| b.pos + self.left_offset)
    }

    fn right_top(&self) -> Option<f64> {
        self.right
            .peek()
            .map(|Reverse(b)| b.pos + self.right_offset)
    }

    fn push_left(&mut self, pos: f64, weight: f64) {
        self.left.push(Breakpoint {
            pos: pos - self.left_offset,
            weight,
        });
    }

    fn push_right(&mut self, pos: f64, weight: f64) {
        self.right.push(Reverse(Breakpoint {
            pos: pos - self.right_offset,
            weight,
        }));
    }

    /// `G(x) = min_{|y − x| ≤ r} F(y)`.
    fn erode(&mut self, r: f64) {
        self.left_offset -= r;
        self.right_offset += r;
    }

    /// Adds `g·x`.
    fn add_linear(&mut self, g: f64) -> Result<()> {
        if g > 0.0 {
            let mut remaining = g;
            while remaining > 0.0 {
                let Some(top) = self.left.pop() else {
                    return Err(Error::Unbounded(
                        "objective decreases without bound to the left".into(),
                    ));
                };
                let pos = top.pos + self.left_offset;
                if top.weight <= remaining {
                    remaining -= top.weight;
                    self.push_right(pos, top.weight);
                } else {
                    self.push_right(pos, remaining);
                    self.push_left(pos, top.weight - remaining);
                    remaining = 0.0;
                }
            }
        } else if g < 0.0 {
            let mut remaining = -g;
            while remaining > 0.0 {
                let Some(Reverse(top)) = self.right.pop() else {
                    return Err(Error::Unbounded(
                        "objective decreases without bound to the right".into(),
                    ));
                };
                let pos = top.pos + self.right_offset;
                if top.weight <= remaining {
                    remaining -= top.weight;
                    self.push_left(pos, top.weight);
                } else {
                    self.push_left(pos, remaining);
                    self.push_right(pos, top.weight - remaining);
                    remaining = 0.0;
                }
            }
        }
        Ok(())
    }

    /// Restricts the domain to `x ≥ lo`.
    fn wall_below(&mut self, lo: f64) {
        if lo == f64::NEG_INFINITY {
            return;
        }
        // right breakpoints left of the wall now take effect at the wall
        let mut carried = 0.0;
        while let Some(pos) = self.right_top() {
            if pos >= lo {
                break;
            }
            carried += self.right.pop().unwrap().0.weight;
        }
        if carried > 0.0 {
            self.push_right(lo, carried);
        }
        self.push_left(lo, f64::INFINITY);
    }

    /// Restricts the domain to `x ≤ hi`.
    fn wall_above(&mut self, hi: f64) {
        if hi == f64::INFINITY {
            return;
        }
        let mut carried = 0.0;
        while let Some(pos) = self.left_top() {
            if pos <= hi {
                break;
            }
            carried += self.left.pop().unwrap().weight;
        }
        if carried > 0.0 {
            self.push_left(hi, carried);
        }
        self.push_right(hi, f64::INFINITY);
    }

    /// A minimizer, preferring the point of the minimizing interval closest to 0.
    fn argmin(&self) -> f64 {
        let lo = self.left_top().unwrap_or(f64::NEG_INFINITY);
        let hi = self.right_top().unwrap_or(f64::INFINITY);
        if lo <= hi {
            0.0f64.clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        }
    }
}

pub fn solve_linear_chain(problem: &ChainProblem) -> Result<ChainSolution> {
    problem.validate()?;
    let Objective::Linear(c) = &problem.objective else {
        return Err(Error::InvalidProblem(
            "solve_linear_chain needs a linear objective".into(),
        ));
    };
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let m = problem.len();
    let mut f = SlopeTrick::default();
    let mut anchors = Vec::with_capacity(m);
    for (j, &cj) in c.iter().enumerate().take(m) {
        if j > 0 {
            f.erode(problem.radius(j - 1));
        }
        f.wall_below(problem.box_lo[j]);
        f.wall_above(problem.box_hi[j]);
        f.add_linear(sign * cj)?;
        anchors.push(f.argmin().clamp(problem.box_lo[j], problem.box_hi[j]));
    }
    ChainSolution::from_eta(problem, backtrack(problem, &anchors))
}

/// `η_m = p_m`, then `η_j` = the minimizer of `F_j` nearest to the window
/// `[η_{j+1} − r_j, η_{j+1} + r_j]`, which for convex `F_j` is the clamp of `p_j`.
pub(crate) fn backtrack(problem: &ChainProblem, anchors: &[f64]) -> Vec<f64> {
    let m = anchors.len();
    let mut eta = vec![0.0; m];
    eta[m - 1] = anchors[m - 1];
    for j in (0..m - 1).rev() {
        let r = problem.radius(j);
        let x = anchors[j].clamp(eta[j + 1] - r, eta[j + 1] + r);
        eta[j] = x.clamp(problem.box_lo[j], problem.box_hi[j]);
    }
    eta
}
