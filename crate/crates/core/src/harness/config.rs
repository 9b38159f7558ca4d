//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [instance]            # inline matrices or `path = "inst.json"`
//! a = [[1.0]]
//! b = [[1.0]]
//! sigma0 = [[1.0]]
//!
//! [expert]              # exactly one of `theta_tilde` / `k_e`
//! theta_tilde = { q = [[1.0]], r = [[1.0]] }
//!
//! [box]                 # explicit bounds or `around = w` (relative width)
//! alpha_q = 0.5
//! beta_q = 2.0
//! alpha_r = 0.5
//! beta_r = 2.0
//!
//! [regularizer]         # center defaults to theta_tilde
//! gamma = 1.0
//!
//! [solver]
//! eta = "path"          # number, "auto", "path" or "global"
//! eps = 1e-12
//! max_iter = 50000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GailError, Result};
use crate::estimators::EstimatorConfig;
use crate::lqr::{CostParam, LqrInstance};
use crate::numerics::{mat_rows, Mat, NumericsConfig};

/// Matrices of an instance as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(with = "mat_rows")]
    pub a: Mat,
    #[serde(with = "mat_rows")]
    pub b: Mat,
    #[serde(with = "mat_rows")]
    pub sigma0: Mat,
}

impl InstanceFile {
    pub fn from_instance(inst: &LqrInstance) -> Self {
        InstanceFile {
            a: inst.a().clone(),
            b: inst.b().clone(),
            sigma0: inst.sigma0().clone(),
        }
    }

    pub fn into_instance(self, numerics: NumericsConfig) -> Result<LqrInstance> {
        LqrInstance::with_numerics(self.a, self.b, self.sigma0, numerics)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| GailError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSpec {
    Path { path: PathBuf },
    Inline(InstanceFile),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertSpec {
    pub theta_tilde: Option<CostParam>,
    #[serde(default, with = "opt_mat")]
    pub k_e: Option<Mat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub alpha_q: Option<f64>,
    pub beta_q: Option<f64>,
    pub alpha_r: Option<f64>,
    pub beta_r: Option<f64>,
    /// Box `[(1 − w)λ_min, (1 + w)λ_max]` around the regularizer center.
    pub around: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub gamma: f64,
    pub center: Option<CostParam>,
}

/// How `(η, λ)` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Largest `η` passing the closed-form Condition 1, `λ = η·ratio/2`.
    Auto,
    /// Per-iterate decrement requirement, certified along the run.
    Path,
    /// Condition 3 window with the Condition 1 ratio, certified along the run.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Value(f64),
    Mode(StepMode),
}

fn default_eps() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    100_000
}

fn default_certify() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub eta: StepSpec,
    /// Required when `eta` is a number.
    pub lambda: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Initial policy; the zero policy when omitted (if stabilizing).
    #[serde(default, with = "opt_mat")]
    pub k0: Option<Mat>,
    /// Initial cost parameter; the regularizer center when omitted.
    pub theta0: Option<CostParam>,
    #[serde(default)]
    pub record_wall_time: bool,
    /// Halvings allowed while certifying the path.
    #[serde(default = "default_certify")]
    pub max_certify_attempts: usize,
    /// Use the model-free estimators from `[estimator]`.
    #[serde(default)]
    pub model_free: bool,
}

/// Region over which `τ_V, ν_V` are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    /// `‖Σ_K‖ ≤ (αF + 2M)/α_Q`
    Envelope,
    /// `‖Σ_K‖ ≤ margin·max{‖Σ_{K₀}‖, ‖Σ_{K_E}‖}`, verified after the run.
    Path,
}

fn default_true() -> bool {
    true
}

fn default_samples() -> usize {
    200
}

fn default_margin() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_region")]
    pub region: RegionKind,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Skip sampling and use these values.
    pub tau_v: Option<f64>,
    pub nu_v: Option<f64>,
}

fn default_region() -> RegionKind {
    RegionKind::Path
}

impl Default for LipschitzSpec {
    fn default() -> Self {
        LipschitzSpec {
            enabled: true,
            samples: default_samples(),
            region: default_region(),
            margin: default_margin(),
            tau_v: None,
            nu_v: None,
        }
    }
}

fn default_radius() -> f64 {
    1e-2
}

fn default_local_samples() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_local_samples")]
    pub samples: usize,
}

impl Default for LocalSpec {
    fn default() -> Self {
        LocalSpec {
            enabled: true,
            radius: default_radius(),
            samples: default_local_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub instance: InstanceSpec,
    pub expert: ExpertSpec,
    #[serde(rename = "box")]
    pub theta_box: BoxSpec,
    pub regularizer: RegularizerSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub lipschitz: LipschitzSpec,
    #[serde(default)]
    pub local: LocalSpec,
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GailError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| {
            GailError::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config error: ")
            ))
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GailError::Config(e.to_string()))
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn load_instance(&self) -> Result<LqrInstance> {
        let file = match &self.instance {
            InstanceSpec::Inline(f) => f.clone(),
            InstanceSpec::Path { path } => InstanceFile::load(&self.resolve_path(path))?,
        };
        file.into_instance(self.numerics)
    }
}

mod opt_mat {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::{from_rows, to_rows, Mat};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Mat>, D::Error> {
        match Option::<Vec<Vec<f64>>>::deserialize(d)? {
            Some(rows) => from_rows(&rows).map(Some).map_err(serde::de::Error::custom),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
seed = 3
[instance]
a = [[1.0]]
b = [[1.0]]
sigma0 = [[1.0]]
[expert]
theta_tilde = { q = [[1.0]], r = [[1.0]] }
[box]
alpha_q = 0.5
beta_q = 2.0
alpha_r = 0.5
beta_r = 2.0
[regularizer]
gamma = 1.0
[solver]
eta = 0.05
lambda = 0.02
"#;

    #[test]
    fn parses_scalar_config() {
        let c = ExperimentConfig::from_toml_str(SCALAR).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.solver.eta, StepSpec::Value(0.05));
        assert_eq!(c.solver.eps, 1e-12);
        assert!(c.lipschitz.enabled);
        assert_eq!(c.load_instance().unwrap().state_dim(), 1);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn step_modes_parse() {
        let c = ExperimentConfig::from_toml_str(&SCALAR.replace("eta = 0.05", "eta = \"global\""))
            .unwrap();
        assert_eq!(c.solver.eta, StepSpec::Mode(StepMode::Global));
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_toml_str(&SCALAR.replace("gamma = 1.0", "gama = 1.0"))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gama") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn instance_file_round_trip() {
        let f = InstanceFile {
            a: Mat::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
            b: Mat::from_row_slice(2, 1, &[1.0, -1.0]),
            sigma0: Mat::identity(2, 2),
        };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<InstanceFile>(&s).unwrap(), f);
    }
}
