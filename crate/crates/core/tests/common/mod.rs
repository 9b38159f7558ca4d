#![allow(dead_code)]

use gail_lqr::harness::ExperimentConfig;
use gail_lqr::random::generate_instance;
use gail_lqr::{LqrInstance, Mat};

pub fn toml_mat(m: &Mat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
            format!("[{}]", row.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// a = b = 1, θ̃ = (1, 1), path-certified stepsizes.
pub const SCALAR_PATH: &str = r#"
seed = 7
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
eps = 1e-12
k0 = [[1.0]]
max_iter = 200000
"#;

pub fn scalar_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SCALAR_PATH).unwrap()
}

/// Dimensions used for the random family: d in 2..=4, k in 1..=2.
pub fn random_dims(seed: u64) -> (usize, usize) {
    (2 + (seed as usize % 3), 1 + (seed as usize % 2))
}

pub fn random_instance(seed: u64) -> LqrInstance {
    let (d, k) = random_dims(seed);
    generate_instance(d, k, 0.3, seed).unwrap()
}

/// Random instance with identity θ̃, a narrow box and a strong regularizer.
pub fn random_config_text(seed: u64, k0: Option<&Mat>) -> String {
    let inst = random_instance(seed);
    let (d, k) = random_dims(seed);
    let mut text = format!(
        "seed = {seed}\n[instance]\na = {}\nb = {}\nsigma0 = {}\n\
         [expert]\ntheta_tilde = {{ q = {}, r = {} }}\n\
         [box]\naround = 1e-5\n[regularizer]\ngamma = 1e4\n\
         [solver]\neta = \"path\"\neps = 1e-12\nmax_iter = 2000000\n",
        toml_mat(inst.a()),
        toml_mat(inst.b()),
        toml_mat(inst.sigma0()),
        toml_mat(&Mat::identity(d, d)),
        toml_mat(&Mat::identity(k, k)),
    );
    if let Some(k0) = k0 {
        text.push_str(&format!("k0 = {}\n", toml_mat(k0)));
    }
    text
}

pub fn random_config(seed: u64, k0: Option<&Mat>) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&random_config_text(seed, k0)).unwrap()
}
