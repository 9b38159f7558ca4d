//! Closed-loop covariance, value matrix, cost and policy gradient for a
//! scalar system and a random one.

use gail_lqr::lqr::{policy_gradient, solve_closed_loop};
use gail_lqr::random::{generate_instance, random_stabilizing_policy, stream_rng};
use gail_lqr::{CostParam, LqrInstance, Mat, Policy};

fn main() -> gail_lqr::Result<()> {
    // a = 0.5, b = 1, Σ₀ = 1, K = 0: Σ = P = 4/3 and ∇C = −16/9
    let inst = LqrInstance::new(
        Mat::from_element(1, 1, 0.5),
        Mat::identity(1, 1),
        Mat::identity(1, 1),
    )?;
    let theta = CostParam::scalar(1.0, 1.0)?;
    let pol = Policy::scalar(0.0);
    let cl = solve_closed_loop(&inst, &theta, &pol)?;
    println!(
        "scalar: Sigma_K = {:.6}, P_K = {:.6}, rho = {}",
        cl.sigma_k[(0, 0)],
        cl.p_k[(0, 0)],
        cl.rho
    );
    println!(
        "cost = {:.6} (trace form) = {:.6} (value form)",
        cl.cost(&theta, &pol),
        cl.value_cost(inst.sigma0())
    );
    let g = policy_gradient(&inst, &theta, &pol)?;
    println!("grad = {:.6}, expected {:.6}", g.grad[(0, 0)], -16.0 / 9.0);

    let inst = generate_instance(4, 2, 0.9, 1)?;
    let mut rng = stream_rng(1, 0);
    let pol = random_stabilizing_policy(&mut rng, &inst, 0.95, 1000)?.expect("stabilizing policy");
    let theta = CostParam::new(Mat::identity(4, 4), Mat::identity(2, 2))?;
    let g = policy_gradient(&inst, &theta, &pol)?;
    let cl = &g.closed_loop;
    println!(
        "random 4x2: rho = {:.4}, cost = {:.6}, |grad| = {:.6}",
        cl.rho,
        cl.cost(&theta, &pol),
        g.grad.norm()
    );
    Ok(())
}
