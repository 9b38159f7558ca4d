//! Model-free estimates: the evolution-strategy policy gradient
//! `E[C(K+ε; θ)·ε]/σ²` and truncated-rollout state covariances.
//!
//! Sample `j` draws from its own stream `(seed, j)` and sums are taken in
//! index order, so results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GailError, Result};
use crate::gail::GradientOracle;
use crate::lqr::{cost, CostParam, LqrInstance, Policy};
use crate::numerics::{spectral_norm, spectral_radius, symmetrize, Mat};
use crate::random::{gaussian_matrix, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Standard deviation `σ` of each perturbation entry.
    pub sigma_pert: f64,
    pub n_samples: usize,
    pub horizon: usize,
    pub n_rollouts: usize,
    pub seed: u64,
    /// Evaluate `±ε` per draw.
    #[serde(default = "default_true")]
    pub antithetic: bool,
    /// Subtract `C(K; θ)` from every evaluation.
    #[serde(default)]
    pub baseline: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            sigma_pert: 1e-3,
            n_samples: 10_000,
            horizon: 200,
            n_rollouts: 1000,
            seed: 0,
            antithetic: true,
            baseline: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_pert > 0.0 && self.sigma_pert.is_finite()) {
            return Err(GailError::Config(format!(
                "sigma_pert must be positive, got {}",
                self.sigma_pert
            )));
        }
        if self.n_samples == 0 || self.horizon == 0 || self.n_rollouts == 0 {
            return Err(GailError::Config(
                "n_samples, horizon and n_rollouts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsEstimate {
    pub grad: Mat,
    pub accepted: usize,
    /// Draws discarded because a perturbed policy was not stabilizing.
    pub rejected: usize,
    /// Mean squared Frobenius deviation of the per-draw terms from `grad`.
    pub sample_variance: f64,
}

fn cost_or_reject(inst: &LqrInstance, theta: &CostParam, pol: &Policy) -> Result<Option<f64>> {
    match cost(inst, theta, pol) {
        Ok(c) => Ok(Some(c)),
        Err(GailError::Unstable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Zeroth-order estimate of `∇_K C(K; θ)` from `n_samples` Gaussian
/// perturbations. More than half of the draws destabilizing the policy is
/// reported as [`GailError::MarginTooSmall`].
pub fn es_gradient(
    inst: &LqrInstance,
    theta: &CostParam,
    pol: &Policy,
    cfg: &EstimatorConfig,
) -> Result<EsEstimate> {
    cfg.validate()?;
    inst.check_policy(pol)?;
    let base = if cfg.baseline {
        cost(inst, theta, pol)?
    } else {
        0.0
    };
    let (k, d) = (inst.input_dim(), inst.state_dim());
    let s2 = cfg.sigma_pert * cfg.sigma_pert;
    let terms: Vec<Option<Mat>> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, j as u64);
            let eps = gaussian_matrix(&mut rng, k, d) * cfg.sigma_pert;
            let Some(cp) = cost_or_reject(inst, theta, &Policy::new(pol.gain() + &eps))? else {
                return Ok(None);
            };
            let w = if cfg.antithetic {
                let Some(cm) = cost_or_reject(inst, theta, &Policy::new(pol.gain() - &eps))? else {
                    return Ok(None);
                };
                0.5 * (cp - cm)
            } else {
                cp - base
            };
            Ok(Some(eps * (w / s2)))
        })
        .collect::<Result<_>>()?;
    let rejected = terms.iter().filter(|t| t.is_none()).count();
    if 2 * rejected > cfg.n_samples {
        return Err(GailError::MarginTooSmall {
            rejected,
            drawn: cfg.n_samples,
        });
    }
    let accepted = cfg.n_samples - rejected;
    let mut sum = Mat::zeros(k, d);
    for t in terms.iter().flatten() {
        sum += t;
    }
    let grad = sum / accepted as f64;
    let sample_variance = terms
        .iter()
        .flatten()
        .map(|t| (t - &grad).norm_squared())
        .sum::<f64>()
        / accepted as f64;
    Ok(EsEstimate {
        grad,
        accepted,
        rejected,
        sample_variance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutEstimate {
    pub sigma: Mat,
    /// `ρ^{2H}/(1 − ρ²)·‖Σ₀‖`
    pub bias_bound: f64,
    pub rho: f64,
}

fn closed_loop_checked(inst: &LqrInstance, pol: &Policy) -> Result<(Mat, f64)> {
    let t = inst.closed_loop_matrix(pol)?;
    let rho = spectral_radius(&t)?;
    if rho >= 1.0 {
        return Err(GailError::unstable("given", rho));
    }
    Ok((t, rho))
}

fn bias_bound(inst: &LqrInstance, rho: f64, horizon: usize) -> f64 {
    rho.powi(2 * horizon as i32) / (1.0 - rho * rho) * spectral_norm(inst.sigma0())
}

/// Mean of `Σ_{t<H} x_t x_tᵀ` over `n_rollouts` trajectories with
/// `x₀ ~ N(0, Σ₀)`.
pub fn rollout_sigma(
    inst: &LqrInstance,
    pol: &Policy,
    cfg: &EstimatorConfig,
) -> Result<RolloutEstimate> {
    cfg.validate()?;
    let (t, rho) = closed_loop_checked(inst, pol)?;
    let chol = inst
        .sigma0()
        .clone()
        .cholesky()
        .ok_or_else(|| GailError::Numerical("Σ₀ is not positive definite".into()))?
        .l();
    let d = inst.state_dim();
    let sums: Vec<Mat> = (0..cfg.n_rollouts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r as u64);
            let mut x = &chol * gaussian_matrix(&mut rng, d, 1);
            let mut acc = Mat::zeros(d, d);
            for _ in 0..cfg.horizon {
                acc += &x * x.transpose();
                x = &t * x;
            }
            acc
        })
        .collect();
    let mut total = Mat::zeros(d, d);
    for s in &sums {
        total += s;
    }
    Ok(RolloutEstimate {
        sigma: symmetrize(&(total / cfg.n_rollouts as f64)),
        bias_bound: bias_bound(inst, rho, cfg.horizon),
        rho,
    })
}

/// Noise-free variant: initial states run over the columns of a square
/// root of `Σ₀`, giving exactly `Σ_{t<H} TᵗΣ₀(Tᵀ)ᵗ`.
pub fn rollout_sigma_deterministic(
    inst: &LqrInstance,
    pol: &Policy,
    horizon: usize,
) -> Result<RolloutEstimate> {
    let (t, rho) = closed_loop_checked(inst, pol)?;
    let mut term = inst.sigma0().clone();
    let mut acc = Mat::zeros(term.nrows(), term.ncols());
    for _ in 0..horizon {
        acc += &term;
        term = &t * term * t.transpose();
    }
    Ok(RolloutEstimate {
        sigma: symmetrize(&acc),
        bias_bound: bias_bound(inst, rho, horizon),
        rho,
    })
}

/// Gradient oracle backed by [`es_gradient`] and [`rollout_sigma`]. Every
/// call draws from a fresh seed `cfg.seed + call index`.
#[derive(Debug, Clone)]
pub struct EsOracle {
    pub cfg: EstimatorConfig,
    calls: u64,
    pub rejected: usize,
}

impl EsOracle {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(EsOracle {
            cfg,
            calls: 0,
            rejected: 0,
        })
    }

    fn next_cfg(&mut self) -> EstimatorConfig {
        let mut c = self.cfg;
        c.seed = self.cfg.seed.wrapping_add(self.calls);
        self.calls += 1;
        c
    }
}

impl GradientOracle for EsOracle {
    fn policy_gradient(
        &mut self,
        inst: &LqrInstance,
        theta: &CostParam,
        pol: &Policy,
    ) -> Result<Mat> {
        let c = self.next_cfg();
        let est = es_gradient(inst, theta, pol, &c)?;
        self.rejected += est.rejected;
        Ok(est.grad)
    }

    fn occupancy(&mut self, inst: &LqrInstance, pol: &Policy) -> Result<(Mat, Mat)> {
        let c = self.next_cfg();
        let s = rollout_sigma(inst, pol, &c)?.sigma;
        let k = pol.gain();
        let ksk = symmetrize(&(k * &s * k.transpose()));
        Ok((s, ksk))
    }
}

/// Draws one `N(0, Σ)` vector; used by examples that simulate the system.
pub fn sample_state<R: Rng + ?Sized>(rng: &mut R, sigma: &Mat) -> Result<Mat> {
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| GailError::Numerical("covariance is not positive definite".into()))?
        .l();
    Ok(l * gaussian_matrix(rng, sigma.nrows(), 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::{policy_gradient, state_covariance};
    use crate::riccati::expert_policy;

    fn scalar(a: f64) -> LqrInstance {
        LqrInstance::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn cfg(n: usize, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            n_samples: n,
            seed,
            ..EstimatorConfig::default()
        }
    }

    #[test]
    fn es_matches_analytic_scalar_gradient() {
        let inst = scalar(0.5);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let est = es_gradient(&inst, &theta, &Policy::scalar(0.0), &cfg(50_000, 1)).unwrap();
        let g = est.grad[(0, 0)];
        assert!((g + 16.0 / 9.0).abs() < 0.05 * 16.0 / 9.0, "{g}");
        assert_eq!(est.rejected, 0);
    }

    #[test]
    fn es_is_deterministic_given_seed() {
        let inst = scalar(0.5);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let a = es_gradient(&inst, &theta, &Policy::scalar(0.1), &cfg(2000, 9)).unwrap();
        let b = es_gradient(&inst, &theta, &Policy::scalar(0.1), &cfg(2000, 9)).unwrap();
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn es_near_zero_at_optimum() {
        let inst = scalar(0.5);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let ks = expert_policy(&inst, &theta).unwrap();
        let est = es_gradient(&inst, &theta, &ks, &cfg(50_000, 2)).unwrap();
        assert!(est.grad.norm() < 0.1 * 16.0 / 9.0);
    }

    #[test]
    fn antithetic_reduces_variance() {
        let inst = scalar(0.5);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let mut c = cfg(5000, 3);
        let anti = es_gradient(&inst, &theta, &Policy::scalar(0.0), &c).unwrap();
        c.antithetic = false;
        let naive = es_gradient(&inst, &theta, &Policy::scalar(0.0), &c).unwrap();
        assert!(anti.sample_variance < naive.sample_variance);
    }

    #[test]
    fn marginal_policy_is_rejected() {
        let inst = scalar(0.5);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        // T = 0.5 − k = 0.9999: almost every positive-drift draw destabilizes
        let mut c = cfg(1000, 4);
        c.sigma_pert = 1.0;
        let r = es_gradient(&inst, &theta, &Policy::scalar(-0.4999), &c);
        assert!(matches!(r, Err(GailError::MarginTooSmall { .. })));
    }

    #[test]
    fn rollout_horizon_one_estimates_sigma0() {
        let inst = scalar(0.5);
        let c = EstimatorConfig {
            horizon: 1,
            n_rollouts: 20_000,
            ..EstimatorConfig::default()
        };
        let est = rollout_sigma(&inst, &Policy::scalar(0.0), &c).unwrap();
        assert!((est.sigma[(0, 0)] - 1.0).abs() < 0.05);
    }

    #[test]
    fn rollout_scalar_matches_lyapunov() {
        let inst = scalar(0.5);
        let c = EstimatorConfig {
            horizon: 50,
            n_rollouts: 40_000,
            ..EstimatorConfig::default()
        };
        let est = rollout_sigma(&inst, &Policy::scalar(0.0), &c).unwrap();
        assert!((est.sigma[(0, 0)] - 4.0 / 3.0).abs() < 0.02 * 4.0 / 3.0);
        assert!(est.bias_bound < 1e-20);
    }

    #[test]
    fn deterministic_rollout_is_partial_lyapunov_sum() {
        let inst = LqrInstance::new(
            Mat::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 0.4]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let pol = Policy::new(Mat::from_row_slice(1, 2, &[0.1, 0.2]));
        let est = rollout_sigma_deterministic(&inst, &pol, 400).unwrap();
        let exact = state_covariance(&inst, &pol).unwrap();
        assert!((est.sigma - exact).norm() < 1e-12);
    }

    #[test]
    fn unstable_policy_errors() {
        let inst = scalar(1.5);
        let c = EstimatorConfig::default();
        assert!(matches!(
            rollout_sigma(&inst, &Policy::scalar(0.0), &c),
            Err(GailError::Unstable { .. })
        ));
    }

    #[test]
    fn oracle_tracks_exact_gradient() {
        let inst = scalar(0.5);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let mut o = EsOracle::new(cfg(20_000, 5)).unwrap();
        let g = o
            .policy_gradient(&inst, &theta, &Policy::scalar(0.2))
            .unwrap();
        let exact = policy_gradient(&inst, &theta, &Policy::scalar(0.2))
            .unwrap()
            .grad;
        assert!((g - &exact).norm() < 0.05 * exact.norm());
    }
}
