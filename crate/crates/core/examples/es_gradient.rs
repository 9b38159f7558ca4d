//! Zeroth-order policy gradient from Gaussian perturbations against the
//! analytic gradient.

use gail_lqr::estimators::{es_gradient, EstimatorConfig};
use gail_lqr::lqr::policy_gradient;
use gail_lqr::{CostParam, LqrInstance, Mat, Policy};

fn main() -> gail_lqr::Result<()> {
    let inst = LqrInstance::new(
        Mat::from_element(1, 1, 0.5),
        Mat::identity(1, 1),
        Mat::identity(1, 1),
    )?;
    let theta = CostParam::scalar(1.0, 1.0)?;
    let pol = Policy::scalar(0.0);
    let exact = policy_gradient(&inst, &theta, &pol)?.grad[(0, 0)];
    for n in [1_000, 10_000, 200_000] {
        let cfg = EstimatorConfig {
            sigma_pert: 1e-3,
            n_samples: n,
            seed: 5,
            ..EstimatorConfig::default()
        };
        let est = es_gradient(&inst, &theta, &pol, &cfg)?;
        println!(
            "n = {n:>6}: estimate {:.5}, exact {exact:.5}, relative error {:.2e}, {} rejected",
            est.grad[(0, 0)],
            ((est.grad[(0, 0)] - exact) / exact).abs(),
            est.rejected
        );
    }
    Ok(())
}
