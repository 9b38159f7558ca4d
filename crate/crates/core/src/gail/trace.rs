use serde::{Deserialize, Serialize};

use crate::lqr::CostParam;
use crate::numerics::{mat_rows, Mat};

/// Everything recorded about one iterate `(K_i, θ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    #[serde(with = "mat_rows")]
    pub k: Mat,
    pub theta: CostParam,
    /// `C(K_i; θ_i)`
    pub cost: f64,
    /// `m(K_i, θ_i)`
    pub objective_m: f64,
    /// `‖L(K_i, θ_i)‖_F`
    pub prox_grad_norm: f64,
    pub rho: f64,
    pub k_dist_to_expert: f64,
    pub theta_dist_to_center: f64,
    /// `‖Σ_{K_i}‖` (spectral)
    pub sigma_norm: f64,
    /// `‖K_i‖` (spectral)
    pub k_norm: f64,
    /// `C(K_i; θ_{i−1})`, absent at the first iterate.
    pub cost_prev_theta: Option<f64>,
    pub potential_p: Option<f64>,
    pub z_local: Option<f64>,
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// The policy produced at `iteration` was not stabilizing.
    Unstable {
        iteration: usize,
        rho: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// `Γ(ε)` for this trace.
    pub fn gamma_eps(&self, eps: f64) -> Option<usize> {
        gamma_eps(self, eps)
    }

    /// `min_{i ≤ N} ‖L_i‖²_F` for every `N`.
    pub fn min_so_far_sq(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.prox_grad_norm.powi(2));
                best
            })
            .collect()
    }
}

/// Smallest index with `‖L(K_i, θ_i)‖²_F ≤ ε`.
pub fn gamma_eps(trace: &IterateTrace, eps: f64) -> Option<usize> {
    trace
        .records
        .iter()
        .find(|r| r.prox_grad_norm.powi(2) <= eps)
        .map(|r| r.iter)
}
