//! Experiment from a TOML config: generate an instance, solve with
//! path-certified stepsizes and write the trace and summary.

use gail_lqr::harness::{cmd_gen, cmd_solve, output, Experiment, ExperimentConfig, OutputFormat};

fn main() -> gail_lqr::Result<()> {
    let dir = std::env::temp_dir().join("gail-lqr-harness-example");
    cmd_gen(2, 1, 0.3, 6, &dir)?;
    let text = r#"
seed = 6
[instance]
path = "instance.json"
[expert]
theta_tilde = { q = [[1.0, 0.0], [0.0, 1.0]], r = [[1.0]] }
[box]
around = 1e-5
[regularizer]
gamma = 1e4
[solver]
eta = "path"
eps = 1e-12
"#;
    std::fs::write(dir.join("experiment.toml"), text)?;
    let exp = Experiment::build(ExperimentConfig::load(&dir.join("experiment.toml"))?)?;
    let r = cmd_solve(&exp, &dir.join("run"), OutputFormat::Csv)?;
    println!(
        "exit code {}, outputs in {}",
        r.exit_code,
        dir.join("run").display()
    );
    println!(
        "{}",
        std::fs::read_to_string(dir.join("run/summary.json"))?
            .lines()
            .take(6)
            .collect::<Vec<_>>()
            .join("\n")
    );
    print!("{}", output::format_verdicts(&r.summary.condition_verdicts));
    Ok(())
}
