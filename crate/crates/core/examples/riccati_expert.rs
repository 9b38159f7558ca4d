//! Expert policy from the Riccati equation and the nonsingularity check on
//! the Jacobian of the Riccati map.

use gail_lqr::random::generate_instance;
use gail_lqr::riccati::{check_condition4, riccati_residual, solve_dare};
use gail_lqr::{CostParam, LqrInstance, Mat};

fn main() -> gail_lqr::Result<()> {
    let inst = LqrInstance::new(
        Mat::identity(1, 1),
        Mat::identity(1, 1),
        Mat::identity(1, 1),
    )?;
    let theta = CostParam::scalar(1.0, 1.0)?;
    let sol = solve_dare(&inst, &theta)?;
    println!(
        "scalar: P* = {:.10} (golden ratio {:.10}), K_E = {:.10}",
        sol.p_star[(0, 0)],
        (1.0 + 5f64.sqrt()) / 2.0,
        sol.k_star[(0, 0)]
    );

    let inst = generate_instance(3, 2, 1.2, 4)?;
    let theta = CostParam::new(Mat::identity(3, 3) * 2.0, Mat::identity(2, 2))?;
    let sol = solve_dare(&inst, &theta)?;
    let res = riccati_residual(&inst, &theta, &sol.p_star)?.norm();
    println!(
        "open-loop unstable 3x2: {} iterations, residual {res:.2e}, closed-loop rho {:.4}",
        sol.iterations,
        gail_lqr::numerics::spectral_radius(&(inst.a() - inst.b() * &sol.k_star))?
    );
    let c4 = check_condition4(&inst, &theta)?;
    println!(
        "Riccati Jacobian: sigma_min = {:.4e}, sigma_max = {:.4e}, nonsingular = {}",
        c4.sigma_min, c4.sigma_max, c4.passes
    );
    Ok(())
}
