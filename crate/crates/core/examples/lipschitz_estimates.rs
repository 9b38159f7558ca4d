//! Sampled Lipschitz and smoothness moduli of the occupancy map
//! `K ↦ (Σ_K, KΣ_K Kᵀ)` and the local moduli at the saddle point.

use std::sync::Arc;

use gail_lqr::conditions::{estimate_lipschitz, estimate_local_moduli};
use gail_lqr::gail::{GailProblem, QuadraticPenalty, ThetaBox};
use gail_lqr::lqr::state_covariance;
use gail_lqr::numerics::spectral_norm;
use gail_lqr::random::generate_instance;
use gail_lqr::{CostParam, Mat};

fn main() -> gail_lqr::Result<()> {
    let inst = generate_instance(3, 1, 0.5, 2)?;
    let tilde = CostParam::new(Mat::identity(3, 3), Mat::identity(1, 1))?;
    let bx = ThetaBox::around(&tilde, 1e-2)?;
    let reg = Arc::new(QuadraticPenalty::new(10.0, tilde.clone())?);
    let problem = GailProblem::from_theta_tilde(inst, &tilde, bx, reg)?;
    let k_e = problem.expert().clone();

    let s_e = spectral_norm(&state_covariance(problem.instance(), &k_e)?);
    for margin in [1.5, 2.0, 4.0] {
        let est = estimate_lipschitz(problem.instance(), &k_e, margin * s_e, 200, 3)?;
        println!(
            "region |Sigma| <= {:.3}: tau_V = {:.4}, nu_V = {:.4}, tau_Sigma = {:.4}, nu_Sigma = {:.4} ({} samples)",
            est.region_bound, est.tau_v, est.nu_v, est.tau_sigma, est.nu_sigma, est.accepted
        );
    }

    let local = estimate_local_moduli(&problem, &k_e, &tilde, 1e-2, 100, 3)?;
    println!(
        "at the saddle, radius {}: tau_K* = {:.4}, nu_K* = {:.4}, nu_m* = {:.4}",
        local.radius, local.tau_kstar, local.nu_kstar, local.nu_mstar
    );
    Ok(())
}
