//! Potential decrement, stability envelope and iteration-count monitors
//! along a run with globally valid stepsizes. The stepsizes are tiny, so
//! the run takes a few million iterations (about a minute in release mode).

use gail_lqr::harness::{Experiment, ExperimentConfig};

const CONFIG: &str = r#"
[instance]
a = [[1.0]]
b = [[1.0]]
sigma0 = [[1.0]]
[expert]
theta_tilde = { q = [[1.0]], r = [[1.0]] }
[box]
around = 1e-5
[regularizer]
gamma = 1e6
[solver]
eta = "global"
eps = 1e-8
k0 = [[1.0]]
max_iter = 4000000
"#;

fn main() -> gail_lqr::Result<()> {
    let exp = Experiment::build(ExperimentConfig::from_toml_str(CONFIG)?)?;
    let r = exp.run()?;
    println!(
        "eta = {:.4e}, lambda = {:.4e}, {} iterations, exit {}",
        r.steps.eta,
        r.steps.lambda,
        r.outcome.trace.len() - 1,
        r.exit_code
    );
    let d = &r.diagnostics;
    if let Some(p) = &d.potential {
        let w = &p.weights;
        println!(
            "potential: s = {:.4e}, phi = ({:.3e}, {:.3e}, {:.3e}), {} decrement violations, P from {:.6} to {:.3e}",
            w.s,
            w.phi1,
            w.phi2,
            w.phi3,
            p.violations.len(),
            p.p[0],
            p.p[p.p.len() - 1]
        );
    }
    let e = &d.envelope;
    println!(
        "envelope: max cost {:.4} <= {:.4}, max |Sigma| {:.4} <= {:.4}, {} violations",
        e.max_cost,
        e.cost_bound,
        e.max_covariance,
        e.covariance_bound,
        e.violations.len()
    );
    if let Some(f) = &d.decay {
        println!(
            "running min |L|^2: log-log slope {:.3} over {} points",
            f.slope, f.points
        );
    }
    for b in &d.iteration_bounds {
        println!("{b:?}");
    }
    Ok(())
}
