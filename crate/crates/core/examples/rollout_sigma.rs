//! State covariance from truncated rollouts, sampled and deterministic,
//! against the Lyapunov solution.

use gail_lqr::estimators::{rollout_sigma, rollout_sigma_deterministic, EstimatorConfig};
use gail_lqr::lqr::state_covariance;
use gail_lqr::random::generate_instance;
use gail_lqr::Policy;

fn main() -> gail_lqr::Result<()> {
    let inst = generate_instance(3, 1, 0.8, 6)?;
    let pol = Policy::zeros(1, 3);
    let exact = state_covariance(&inst, &pol)?;
    for horizon in [10, 50, 200] {
        let det = rollout_sigma_deterministic(&inst, &pol, horizon)?;
        println!(
            "horizon {horizon:>3}: deterministic error {:.3e}, bias bound {:.3e}",
            (&det.sigma - &exact).norm(),
            det.bias_bound
        );
    }
    let cfg = EstimatorConfig {
        horizon: 200,
        n_rollouts: 20_000,
        seed: 1,
        ..EstimatorConfig::default()
    };
    let mc = rollout_sigma(&inst, &pol, &cfg)?;
    println!(
        "sampled, {} rollouts: relative error {:.3e}",
        cfg.n_rollouts,
        (&mc.sigma - &exact).norm() / exact.norm()
    );
    Ok(())
}
