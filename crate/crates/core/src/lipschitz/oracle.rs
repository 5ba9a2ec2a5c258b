use std::collections::VecDeque;

use super::problem::{ChainProblem, Objective, Sense};
use crate::error::{Error, Result};

pub const ORACLE_MAX_KNOTS: usize = 6;

/// Optimum of `problem` with every `η_j` restricted to the lattice `k·step`.
///
/// Lattice points inside each box are scored exactly and chain feasibility is
/// tested on integer offsets, so the result is the exact optimum of the
/// discretized problem. A dynamic program over knots (with a sliding-window
/// extremum for the chain constraint) replaces explicit enumeration of all
/// tuples; both visit the same feasible set.
pub fn brute_force_chain(problem: &ChainProblem, step: f64) -> Result<f64> {
    let m = problem.knots.len();
    if m == 0 {
        return Err(Error::InvalidProblem("no knots".into()));
    }
    if m > ORACLE_MAX_KNOTS {
        return Err(Error::OracleLimit(format!(
            "{m} knots exceed the limit of {ORACLE_MAX_KNOTS}"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid step {step} must be positive"
        )));
    }
    if problem
        .box_lo
        .iter()
        .chain(&problem.box_hi)
        .any(|b| !b.is_finite())
    {
        return Err(Error::OracleLimit("boxes must be finite".into()));
    }
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let score = |j: usize, x: f64| -> f64 {
        let raw = match &problem.objective {
            Objective::Linear(c) => c[j] * x,
            Objective::Quadratic { a, b, .. } => a[j] * (x - b[j]) * (x - b[j]),
            Objective::ConvexSeparable(t) => t[j].value(x),
        };
        sign * raw
    };
    let lattice = |j: usize| -> (i64, i64) {
        let lo = (problem.box_lo[j] / step - 1e-9).ceil() as i64;
        let hi = (problem.box_hi[j] / step + 1e-9).floor() as i64;
        (lo, hi)
    };

    let (mut lo_prev, hi_prev) = lattice(0);
    if lo_prev > hi_prev {
        return Err(Error::Infeasible { knot: 0 });
    }
    let mut best: Vec<f64> = (lo_prev..=hi_prev)
        .map(|k| score(0, k as f64 * step))
        .collect();
    for j in 1..m {
        let reach = ((problem.lipschitz * (problem.knots[j] - problem.knots[j - 1])) / step + 1e-9)
            .floor() as i64;
        let (lo, hi) = lattice(j);
        let hi_prev = lo_prev + best.len() as i64 - 1;
        let mut next = Vec::with_capacity((hi - lo + 1).max(0) as usize);
        // sliding minimum of best[k'] for k' in [k − reach, k + reach]
        let mut window: VecDeque<i64> = VecDeque::new();
        let mut fed = lo_prev;
        for k in lo..=hi {
            while fed <= (k + reach).min(hi_prev) {
                let v = best[(fed - lo_prev) as usize];
                while let Some(&back) = window.back() {
                    if best[(back - lo_prev) as usize] >= v {
                        window.pop_back();
                    } else {
                        break;
                    }
                }
                window.push_back(fed);
                fed += 1;
            }
            while let Some(&front) = window.front() {
                if front < k - reach {
                    window.pop_front();
                } else {
                    break;
                }
            }
            let inherited = window
                .front()
                .map_or(f64::INFINITY, |&i| best[(i - lo_prev) as usize]);
            next.push(inherited + score(j, k as f64 * step));
        }
        if next.iter().all(|v| v.is_infinite()) {
            return Err(Error::Infeasible { knot: j });
        }
        best = next;
        lo_prev = lo;
    }
    let constant = match &problem.objective {
        Objective::Quadratic { constant, .. } => *constant,
        _ => 0.0,
    };
    let extreme = best.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(sign * extreme + constant)
}

/// Bound on `|brute_force_chain − true optimum|` for problems whose box ends
/// and chain radii are multiples of `step`: the sum over knots of the
/// largest objective slope on the box, times `step`.
pub fn oracle_error_bound(problem: &ChainProblem, step: f64) -> f64 {
    let mut total = 0.0;
    for j in 0..problem.knots.len() {
        let (lo, hi) = (problem.box_lo[j], problem.box_hi[j]);
        let slope = match &problem.objective {
            Objective::Linear(c) => c[j].abs(),
            Objective::Quadratic { a, b, .. } => {
                2.0 * a[j] * (lo - b[j]).abs().max((hi - b[j]).abs())
            }
            Objective::ConvexSeparable(t) => {
                t[j].derivative(lo).abs().max(t[j].derivative(hi).abs())
            }
        };
        total += slope;
    }
    total * step
}
