//! Backbone orbit and the boundary-value solve for the deviations from it.

mod backbone;
mod banded;
mod resum;
mod sequence;
mod solver;

pub use backbone::{build_backbone, check_omega, BackboneOrbit, Window};
pub use resum::{
    eval_xi, gaussian_r_tail, linear_coefficients, resum_dg, resum_dg_from, resum_mu,
    resum_mu_from, resum_r,
};
pub use sequence::{
    weighted_distance, weighted_norm, weighted_profile, DeviationSequence, WeightExponents,
};
pub use solver::{
    extend_window, picard_solve, picard_solve_from, picard_sweep, random_initial_guess,
    residuals, solve_orbit, Diagnostics, HeteroclinicSolution, Residuals, SolverConfig,
    TrajectoryPoint,
};
