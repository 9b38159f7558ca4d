//! Problem constants and the stepsize condition verdicts for a candidate
//! pair of stepsizes.

use std::sync::Arc;

use gail_lqr::conditions::{
    check_condition1, check_condition2, check_condition3, compute_constants_for,
    estimate_lipschitz, global_stepsizes, path_step_bound,
};
use gail_lqr::gail::{GailProblem, QuadraticPenalty, ThetaBox};
use gail_lqr::harness::output::format_verdicts;
use gail_lqr::lqr::state_covariance;
use gail_lqr::numerics::spectral_norm;
use gail_lqr::{CostParam, LqrInstance, Mat, Policy};

fn main() -> gail_lqr::Result<()> {
    let inst = LqrInstance::new(
        Mat::identity(1, 1),
        Mat::identity(1, 1),
        Mat::identity(1, 1),
    )?;
    let tilde = CostParam::scalar(1.0, 1.0)?;
    let bx = ThetaBox::around(&tilde, 1e-5)?;
    let reg = Arc::new(QuadraticPenalty::new(1e6, tilde.clone())?);
    let problem = GailProblem::from_theta_tilde(inst, &tilde, bx, reg)?;
    let k0 = Policy::scalar(1.0);

    let consts = compute_constants_for(&problem, &k0)?;
    println!(
        "alpha = {:.4}, mu = {:.4}, sigma_theta = {:.4e}, M = {:.4}, F = {:.4}, alpha F + 2M = {:.4}",
        consts.alpha, consts.mu, consts.sigma_theta, consts.m, consts.f, consts.envelope
    );
    println!(
        "kappa1 = {:.4}, kappa2 = {:.4}",
        consts.kappa1, consts.kappa2
    );
    for (name, b) in consts.eta_bounds() {
        println!("{name:<22} {b:.4e}");
    }
    println!("lambda/eta bound       {:.4e}", consts.ratio_bound());

    // sample where the iterates will live: twice the larger of ‖Σ_{K0}‖ and ‖Σ_E‖
    let region = 2.0
        * spectral_norm(&state_covariance(problem.instance(), &k0)?)
            .max(spectral_norm(problem.expert_occupancy().0));
    let lip = estimate_lipschitz(problem.instance(), &k0, region, 100, 1)?;
    let consts = consts.with_lipschitz(&lip);
    println!(
        "tau_V = {:.4}, nu_V = {:.4} from {} samples",
        lip.tau_v, lip.nu_v, lip.accepted
    );

    // η is also capped by the per-iterate decrease bound at K0; the solver
    // re-checks that bound along the whole path
    let cap = 0.5 * path_step_bound(problem.instance(), &tilde, &k0)?;
    let steps = global_stepsizes(&consts, cap)?;
    println!(
        "\nstepsizes eta = {:.4e}, lambda = {:.4e}",
        steps.eta, steps.lambda
    );
    let verdicts = vec![
        check_condition1(&consts, steps.eta, steps.lambda),
        check_condition2(&consts)?,
        check_condition3(&consts, steps.eta, steps.lambda)?,
    ];
    print!("{}", format_verdicts(&verdicts));
    Ok(())
}
