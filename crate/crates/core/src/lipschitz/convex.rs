//! General convex separable objectives by proximal Newton: each step
//! minimizes the separable second-order model exactly over the chain
//! constraints (a quadratic chain problem), then backtracks along the step.

use super::problem::{ChainProblem, ChainSolution, Objective};
use super::quadratic::minimize_squares;
use crate::error::{Error, Result};

/// Target for the projected-gradient fixed-point residual.
pub const CONVEX_TOLERANCE: f64 = 1e-10;
/// Residual accepted when the line search can make no further progress.
pub const CONVEX_ACCEPT: f64 = 1e-8;
pub const CONVEX_MAX_ITERATIONS: usize = 500;

pub fn solve_convex_chain(problem: &ChainProblem) -> Result<ChainSolution> {
    problem.validate()?;
    let Objective::ConvexSeparable(terms) = &problem.objective else {
        return Err(Error::InvalidProblem(
            "solve_convex_chain needs a convex separable objective".into(),
        ));
    };
    let m = problem.len();
    let total = |eta: &[f64]| -> f64 { terms.iter().zip(eta).map(|(t, &x)| t.value(x)).sum() };
    let gradient = |eta: &[f64]| -> Vec<f64> {
        terms
            .iter()
            .zip(eta)
            .map(|(t, &x)| t.derivative(x))
            .collect()
    };

    let ones = vec![1.0; m];
    let mut eta = minimize_squares(problem, &ones, &vec![0.0; m]);
    let mut value = total(&eta);
    if !value.is_finite() {
        return Err(Error::InvalidProblem(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut residual = f64::INFINITY;
    for iteration in 0..CONVEX_MAX_ITERATIONS {
        let g = gradient(&eta);
        residual = fixed_point_residual(problem, &eta, &g);
        if residual <= CONVEX_TOLERANCE {
            return ChainSolution::from_eta(problem, eta);
        }

        let curv: Vec<f64> = terms
            .iter()
            .zip(&eta)
            .map(|(t, &x)| t.curvature(x))
            .collect();
        let floor = 1e-12 * curv.iter().cloned().fold(1.0, f64::max);
        let a: Vec<f64> = curv.iter().map(|&h| 0.5 * h.max(floor)).collect();
        let b: Vec<f64> = eta
            .iter()
            .zip(&g)
            .zip(&a)
            .map(|((&x, &gj), &aj)| x - gj / (2.0 * aj))
            .collect();
        let target = minimize_squares(problem, &a, &b);
        let direction: Vec<f64> = target.iter().zip(&eta).map(|(t, x)| t - x).collect();
        let slope: f64 = direction.iter().zip(&g).map(|(d, gj)| d * gj).sum();

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = eta
                .iter()
                .zip(&direction)
                .map(|(x, d)| x + step * d)
                .collect();
            let trial_value = total(&trial);
            if trial_value.is_finite() && trial_value <= value + 1e-4 * step * slope.min(0.0) {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_value)) => {
                let stalled = trial_value >= value && iteration > 0;
                eta = trial;
                value = trial_value;
                if stalled && fixed_point_residual(problem, &eta, &gradient(&eta)) <= CONVEX_ACCEPT
                {
                    return ChainSolution::from_eta(problem, eta);
                }
            }
            None => {
                if residual <= CONVEX_ACCEPT {
                    return ChainSolution::from_eta(problem, eta);
                }
                break;
            }
        }
    }
    let g = gradient(&eta);
    residual = residual.min(fixed_point_residual(problem, &eta, &g));
    if residual <= CONVEX_ACCEPT {
        return ChainSolution::from_eta(problem, eta);
    }
    Err(Error::NoConvergence {
        iterations: CONVEX_MAX_ITERATIONS,
        residual,
    })
}

/// `‖η − P(η − ∇F(η))‖_∞` with `P` the Euclidean projection onto the
/// feasible set; zero exactly at a minimizer.
pub fn fixed_point_residual(problem: &ChainProblem, eta: &[f64], gradient: &[f64]) -> f64 {
    let m = eta.len();
    let target: Vec<f64> = eta.iter().zip(gradient).map(|(x, g)| x - g).collect();
    let projected = minimize_squares(problem, &vec![1.0; m], &target);
    projected
        .iter()
        .zip(eta)
        .map(|(p, x)| (p - x).abs())
        .fold(0.0, f64::max)
}
