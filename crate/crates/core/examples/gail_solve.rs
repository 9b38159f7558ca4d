//! The alternating solver on the scalar problem with stepsizes certified
//! along the path.

use std::sync::Arc;

use gail_lqr::conditions::{compute_constants_for, path_stepsizes};
use gail_lqr::gail::{GailProblem, QuadraticPenalty, SolverConfig, ThetaBox};
use gail_lqr::{CostParam, LqrInstance, Mat, Policy};

fn main() -> gail_lqr::Result<()> {
    let inst = LqrInstance::new(
        Mat::identity(1, 1),
        Mat::identity(1, 1),
        Mat::identity(1, 1),
    )?;
    let tilde = CostParam::scalar(1.0, 1.0)?;
    let bx = ThetaBox::around(&tilde, 1e-3)?;
    let reg = Arc::new(QuadraticPenalty::new(100.0, tilde.clone())?);
    let problem = GailProblem::from_theta_tilde(inst, &tilde, bx, reg)?;
    let k0 = Policy::scalar(1.0);

    let consts = compute_constants_for(&problem, &k0)?;
    let steps = path_stepsizes(problem.instance(), &consts, &k0, &tilde)?;
    println!("eta = {:.4e}, lambda = {:.4e}", steps.eta, steps.lambda);

    let cfg = SolverConfig::new(steps.eta, steps.lambda, 1e-12, 100_000)?;
    let out = problem.solve(&k0, &tilde, &cfg)?;
    for r in out.trace.records.iter().step_by(200) {
        println!(
            "{:>5}  K = {:.8}  |L| = {:.3e}  |K - K_E| = {:.3e}",
            r.iter,
            r.k[(0, 0)],
            r.prox_grad_norm,
            r.k_dist_to_expert
        );
    }
    println!(
        "{:?} after {} iterations: K = {:.8}, Q = {:.8}, R = {:.8}",
        out.status,
        out.trace.len() - 1,
        out.policy.gain()[(0, 0)],
        out.theta.q()[(0, 0)],
        out.theta.r()[(0, 0)]
    );
    Ok(())
}
