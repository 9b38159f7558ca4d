//! Geometric contraction of `Z_i = ‖θ_i − θ*‖ + a‖K_i − K*(θ_i)‖` near the
//! saddle, against the predicted rate.

use gail_lqr::harness::{Experiment, ExperimentConfig};

const CONFIG: &str = r#"
[instance]
a = [[1.0]]
b = [[1.0]]
sigma0 = [[1.0]]
[expert]
theta_tilde = { q = [[1.0]], r = [[1.0]] }
[box]
around = 1e-3
[regularizer]
gamma = 100.0
[solver]
eta = "path"
eps = 1e-14
k0 = [[1.0]]
"#;

fn main() -> gail_lqr::Result<()> {
    let r = Experiment::build(ExperimentConfig::from_toml_str(CONFIG)?)?.run()?;
    let Some(l) = &r.diagnostics.local_rate else {
        println!("run did not converge: {:?}", r.diagnostics.notes);
        return Ok(());
    };
    println!(
        "a = {:.4}, onset {}, noise floor reached at {}",
        l.a, l.onset, l.tail_end
    );
    for i in (0..=l.tail_end).step_by((l.tail_end / 10).max(1)) {
        println!("{i:>6}  Z = {:.6e}", l.z[i]);
    }
    println!(
        "measured max ratio {:.8}, fitted ratio {:.8} (R^2 = {:.5}), predicted {:?}",
        l.upsilon_measured, l.fitted_ratio, l.r_squared, l.upsilon_formula
    );
    if let Some(b) = &l.upsilon_branches {
        println!(
            "predicted branches: cost parameter {:.8}, policy {:.8}",
            b.theta_branch, b.policy_branch
        );
    }
    Ok(())
}
