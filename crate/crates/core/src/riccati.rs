//! Discrete algebraic Riccati equation: optimal gains `K*(θ)` and the
//! regularity check on the Jacobian of the Riccati map.

use serde::Serialize;

use crate::error::{GailError, Result};
use crate::lqr::{CostParam, LqrInstance, Policy};
use crate::numerics::{
    min_singular_value, spectral_norm, spectral_radius, symmetrize, Lyapunov, Mat,
};

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p_star: Mat,
    pub k_star: Mat,
    /// `‖f(P*, Q, R)‖_F / max(1, ‖P*‖_F)`
    pub residual: f64,
    /// Value-iteration sweeps plus Newton refinements.
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn policy(&self) -> Policy {
        Policy::new(self.k_star.clone())
    }
}

fn invert(m: &Mat) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| GailError::Numerical("singular matrix R + BᵀPB".into()))
}

/// `(BᵀPB + R)⁻¹ BᵀPA`
pub fn gain_from_p(inst: &LqrInstance, theta: &CostParam, p: &Mat) -> Result<Mat> {
    let bt_p = inst.b().transpose() * p;
    let g = invert(&(&bt_p * inst.b() + theta.r()))?;
    Ok(g * bt_p * inst.a())
}

/// `f(P,Q,R) = P − AᵀPA − Q + AᵀPB(BᵀPB+R)⁻¹BᵀPA`
pub fn riccati_residual(inst: &LqrInstance, theta: &CostParam, p: &Mat) -> Result<Mat> {
    let a = inst.a();
    let k = gain_from_p(inst, theta, p)?;
    let at_p_b = a.transpose() * p * inst.b();
    Ok(p - a.transpose() * p * a - theta.q() + at_p_b * k)
}

fn rel_residual(inst: &LqrInstance, theta: &CostParam, p: &Mat) -> Result<f64> {
    Ok(riccati_residual(inst, theta, p)?.norm() / p.norm().max(1.0))
}

/// Stabilizing solution of the DARE by value iteration from `P₀ = Q`,
/// polished by Newton (Hewer) steps when the residual is above tolerance.
pub fn solve_dare(inst: &LqrInstance, theta: &CostParam) -> Result<RiccatiSolution> {
    inst.check_theta(theta)?;
    let cfg = *inst.numerics();
    let a = inst.a();
    let b = inst.b();
    let mut p = theta.q().clone();
    let mut iterations = 0;
    loop {
        if iterations >= cfg.dare_max_iter {
            return Err(GailError::NotStabilizable(format!(
                "value iteration did not converge in {} sweeps",
                cfg.dare_max_iter
            )));
        }
        iterations += 1;
        let k = gain_from_p(inst, theta, &p)?;
        let at_p = a.transpose() * &p;
        let next = symmetrize(&(theta.q() + &at_p * a - &at_p * b * k));
        let change = (&next - &p).norm();
        let size = next.norm();
        p = next;
        if !size.is_finite() || size > cfg.dare_divergence_norm {
            return Err(GailError::NotStabilizable(format!(
                "value iteration diverged (‖P‖_F = {size:.3e})"
            )));
        }
        if change <= cfg.dare_step_tol * size.max(1.0) {
            break;
        }
    }

    let mut residual = rel_residual(inst, theta, &p)?;
    let mut newton = 0;
    while residual > cfg.dare_residual_tol && newton < 20 {
        newton += 1;
        let k = gain_from_p(inst, theta, &p)?;
        let t = a - b * &k;
        if spectral_radius(&t)? >= 1.0 {
            break;
        }
        let stage = theta.q() + k.transpose() * theta.r() * &k;
        let next = Lyapunov::new(&t.transpose(), &cfg)?.solve_sym(&stage)?;
        let next_res = rel_residual(inst, theta, &next)?;
        if next_res >= residual {
            break;
        }
        p = next;
        residual = next_res;
    }

    let k_star = gain_from_p(inst, theta, &p)?;
    let rho = spectral_radius(&(a - b * &k_star))?;
    if rho >= 1.0 {
        return Err(GailError::NotStabilizable(format!(
            "Riccati gain leaves closed-loop spectral radius {rho:.6}"
        )));
    }
    if residual > cfg.dare_residual_tol {
        return Err(GailError::Numerical(format!(
            "DARE residual {residual:.3e} above tolerance"
        )));
    }
    Ok(RiccatiSolution {
        p_star: p,
        k_star,
        residual,
        iterations: iterations + newton,
    })
}

/// Newton (Hewer) iteration from a stabilizing gain; converges quadratically
/// when `k_init` is close to the optimum. Falls back to [`solve_dare`] if an
/// iterate loses stability or the residual stalls.
pub fn solve_dare_from(
    inst: &LqrInstance,
    theta: &CostParam,
    k_init: &Policy,
) -> Result<RiccatiSolution> {
    inst.check_theta(theta)?;
    inst.check_policy(k_init)?;
    let cfg = *inst.numerics();
    let a = inst.a();
    let b = inst.b();
    let mut k = k_init.gain().clone();
    let mut best: Option<(Mat, f64)> = None;
    for it in 1..=50 {
        let t = a - b * &k;
        if spectral_radius(&t)? >= 1.0 {
            break;
        }
        let stage = theta.q() + k.transpose() * theta.r() * &k;
        let p = Lyapunov::new(&t.transpose(), &cfg)?.solve_sym(&stage)?;
        let res = rel_residual(inst, theta, &p)?;
        k = gain_from_p(inst, theta, &p)?;
        let improved = best.as_ref().map_or(true, |(_, r)| res < *r);
        if improved {
            best = Some((p, res));
        }
        if res <= cfg.dare_residual_tol * 1e-2 || (!improved && res <= cfg.dare_residual_tol) {
            let (p, residual) = best.expect("set above");
            let k_star = gain_from_p(inst, theta, &p)?;
            if spectral_radius(&(a - b * &k_star))? < 1.0 {
                return Ok(RiccatiSolution {
                    p_star: p,
                    k_star,
                    residual,
                    iterations: it,
                });
            }
            break;
        }
        if !improved {
            break;
        }
    }
    solve_dare(inst, theta)
}

/// Optimal policy for the (unknown to the learner) true cost parameter.
pub fn expert_policy(inst: &LqrInstance, theta_tilde: &CostParam) -> Result<Policy> {
    Ok(solve_dare(inst, theta_tilde)?.policy())
}

/// Directional derivative `Df[Δ]` of the Riccati map at `P`.
pub fn riccati_directional(
    inst: &LqrInstance,
    theta: &CostParam,
    p: &Mat,
    delta: &Mat,
) -> Result<Mat> {
    let a = inst.a();
    let b = inst.b();
    let g = invert(&(b.transpose() * p * b + theta.r()))?;
    let bt_p_a = b.transpose() * p * a;
    let at_p_b = a.transpose() * p * b;
    let at_d_b = a.transpose() * delta * b;
    let bt_d_a = b.transpose() * delta * a;
    let bt_d_b = b.transpose() * delta * b;
    Ok(
        delta - a.transpose() * delta * a + at_d_b * &g * &bt_p_a + &at_p_b * &g * bt_d_a
            - &at_p_b * &g * bt_d_b * &g * &bt_p_a,
    )
}

/// Jacobian `Y` of `f` with respect to `P` at `P*(θ)`, with row-major
/// vectorization: row `i·d + j` is `f_ij`, column `k·d + l` is `P_kl`.
pub fn riccati_jacobian_y(inst: &LqrInstance, theta: &CostParam) -> Result<Mat> {
    let sol = solve_dare(inst, theta)?;
    jacobian_at(inst, theta, &sol.p_star)
}

pub fn jacobian_at(inst: &LqrInstance, theta: &CostParam, p: &Mat) -> Result<Mat> {
    let d = inst.state_dim();
    let mut y = Mat::zeros(d * d, d * d);
    for k in 0..d {
        for l in 0..d {
            let mut e = Mat::zeros(d, d);
            e[(k, l)] = 1.0;
            let df = riccati_directional(inst, theta, p, &e)?;
            for i in 0..d {
                for j in 0..d {
                    y[(i * d + j, k * d + l)] = df[(i, j)];
                }
            }
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Condition4Report {
    pub passes: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Non-singularity of `Y`, gated as `σ_min(Y) > gate·σ_max(Y)`.
pub fn check_condition4(inst: &LqrInstance, theta: &CostParam) -> Result<Condition4Report> {
    let y = riccati_jacobian_y(inst, theta)?;
    let sigma_min = min_singular_value(&y);
    let sigma_max = spectral_norm(&y);
    Ok(Condition4Report {
        passes: sigma_min > inst.numerics().condition4_rel_gate * sigma_max,
        sigma_min,
        sigma_max,
    })
}
