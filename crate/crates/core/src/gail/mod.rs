//! Alternating minimax solver: gradient descent on the policy, projected
//! gradient ascent on the cost parameter.

mod problem;
mod theta;
mod trace;

pub use problem::{
    grad_theta_m, objective_m, proximal_gradient, Evaluation, ExactOracle, GailProblem,
    GradientOracle, ProxGradient, SolveOutcome, SolverConfig,
};
pub use theta::{
    farthest_distance, project_theta, project_theta_with, MatrixPair, QuadraticPenalty,
    Regularizer, ThetaBox,
};
pub use trace::{gamma_eps, IterateRecord, IterateTrace, SolveStatus};
