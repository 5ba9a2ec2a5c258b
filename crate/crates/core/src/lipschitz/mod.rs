//! Optimization over Lipschitz functions evaluated at sorted knots.
//!
//! Every calibration metric reduces to a [`ChainProblem`]: choose values
//! `η_j` at increasing knots `v_j`, each within a box, with neighbouring
//! values differing by at most `L·(v_{j+1} − v_j)`. Any such assignment
//! extends to an `L`-Lipschitz function on the whole line by interpolation,
//! so the optimum over knot values is the optimum over functions.

mod convex;
mod linear;
mod oracle;
mod problem;
mod quadratic;

pub use convex::{
    fixed_point_residual, solve_convex_chain, CONVEX_ACCEPT, CONVEX_MAX_ITERATIONS,
    CONVEX_TOLERANCE,
};
pub use linear::solve_linear_chain;
pub use oracle::{brute_force_chain, oracle_error_bound, ORACLE_MAX_KNOTS};
pub use problem::{
    kkt_residual, ChainProblem, ChainSolution, ConvexTerm, FnTerm, LipschitzFunction, Objective,
    QuadraticTerm, Sense, FEASIBILITY_TOLERANCE,
};
pub use quadratic::solve_quadratic_chain;

use crate::error::Result;

/// Dispatches on the objective kind.
pub fn solve_chain(problem: &ChainProblem) -> Result<ChainSolution> {
    match problem.objective {
        Objective::Linear(_) => solve_linear_chain(problem),
        Objective::Quadratic { .. } => solve_quadratic_chain(problem),
        Objective::ConvexSeparable(_) => solve_convex_chain(problem),
    }
}
