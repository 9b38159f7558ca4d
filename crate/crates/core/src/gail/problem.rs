use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::theta::{project_theta_with, MatrixPair, Regularizer, ThetaBox};
use super::trace::{IterateRecord, IterateTrace, SolveStatus};
use crate::error::{GailError, Result};
use crate::lqr::{
    gradient_from, occupancy, policy_gradient, solve_closed_loop_with_sigma, ClosedLoopSolution,
    CostParam, LqrInstance, Policy,
};
use crate::numerics::{
    spectral_norm, spectral_radius, symmetrize, trace_product, Lyapunov, Mat, NumericsConfig,
};
use crate::riccati::expert_policy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Policy stepsize `η`.
    pub eta: f64,
    /// Cost-parameter stepsize `λ`.
    pub lambda: f64,
    /// Stop once `‖L‖²_F ≤ eps`.
    pub eps: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub numerics: NumericsConfig,
    /// Fill `wall_time_ms`; off by default so traces are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl SolverConfig {
    pub fn new(eta: f64, lambda: f64, eps: f64, max_iter: usize) -> Result<Self> {
        let cfg = SolverConfig {
            eta,
            lambda,
            eps,
            max_iter,
            numerics: NumericsConfig::default(),
            record_wall_time: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("eps", self.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GailError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(GailError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Source of the two gradients the update rule consumes. The exact oracle
/// solves Lyapunov equations; model-free oracles estimate from samples.
pub trait GradientOracle {
    /// `∇_K C(K; θ)`
    fn policy_gradient(
        &mut self,
        inst: &LqrInstance,
        theta: &CostParam,
        pol: &Policy,
    ) -> Result<Mat>;

    /// `(Σ_K, K Σ_K Kᵀ)`
    fn occupancy(&mut self, inst: &LqrInstance, pol: &Policy) -> Result<(Mat, Mat)>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ExactOracle;

impl GradientOracle for ExactOracle {
    fn policy_gradient(
        &mut self,
        inst: &LqrInstance,
        theta: &CostParam,
        pol: &Policy,
    ) -> Result<Mat> {
        Ok(policy_gradient(inst, theta, pol)?.grad)
    }

    fn occupancy(&mut self, inst: &LqrInstance, pol: &Policy) -> Result<(Mat, Mat)> {
        occupancy(inst, pol)
    }
}

/// `L(K, θ)` split into blocks.
#[derive(Debug, Clone)]
pub struct ProxGradient {
    /// `∇_K m = ∇_K C(K; θ)`
    pub k_block: Mat,
    /// `Π_Θ[θ + ∇_θ m] − θ`
    pub theta_block: MatrixPair,
    pub norm: f64,
}

/// All first-order information at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub closed_loop: ClosedLoopSolution,
    pub ksk: Mat,
    pub e_k: Mat,
    pub grad_k: Mat,
    pub grad_theta: MatrixPair,
    pub prox: ProxGradient,
    pub cost: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub policy: Policy,
    pub theta: CostParam,
    pub trace: IterateTrace,
    pub status: SolveStatus,
    /// First index with `‖L‖²_F ≤ eps`.
    pub gamma_eps: Option<usize>,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// An imitation problem: dynamics, expert, feasible set and regularizer.
#[derive(Debug, Clone)]
pub struct GailProblem {
    inst: LqrInstance,
    expert: Policy,
    expert_sigma: Mat,
    expert_ksk: Mat,
    bx: ThetaBox,
    reg: Arc<dyn Regularizer>,
}

fn learner_unstable(e: GailError, which: &str) -> GailError {
    match e {
        GailError::Unstable { rho, .. } => GailError::unstable(which, rho),
        other => other,
    }
}

impl GailProblem {
    pub fn new(
        inst: LqrInstance,
        expert: Policy,
        bx: ThetaBox,
        reg: Arc<dyn Regularizer>,
    ) -> Result<Self> {
        let (expert_sigma, expert_ksk) =
            occupancy(&inst, &expert).map_err(|e| learner_unstable(e, "expert"))?;
        if !bx.contains(reg.center(), 1e-9) {
            return Err(GailError::Contract(
                "regularizer center lies outside the box".into(),
            ));
        }
        Ok(GailProblem {
            inst,
            expert,
            expert_sigma,
            expert_ksk,
            bx,
            reg,
        })
    }

    /// Expert taken as the Riccati-optimal policy for `theta_tilde`.
    pub fn from_theta_tilde(
        inst: LqrInstance,
        theta_tilde: &CostParam,
        bx: ThetaBox,
        reg: Arc<dyn Regularizer>,
    ) -> Result<Self> {
        let expert = expert_policy(&inst, theta_tilde)?;
        Self::new(inst, expert, bx, reg)
    }

    pub fn instance(&self) -> &LqrInstance {
        &self.inst
    }

    pub fn expert(&self) -> &Policy {
        &self.expert
    }

    /// `(Σ_{K_E}, K_E Σ_{K_E} K_Eᵀ)`
    pub fn expert_occupancy(&self) -> (&Mat, &Mat) {
        (&self.expert_sigma, &self.expert_ksk)
    }

    pub fn theta_box(&self) -> &ThetaBox {
        &self.bx
    }

    pub fn regularizer(&self) -> &dyn Regularizer {
        self.reg.as_ref()
    }

    pub fn numerics(&self) -> &NumericsConfig {
        self.inst.numerics()
    }

    /// `C(K_E; θ)`, linear in θ.
    pub fn expert_cost(&self, theta: &CostParam) -> f64 {
        trace_product(&self.expert_sigma, theta.q()) + trace_product(&self.expert_ksk, theta.r())
    }

    pub fn objective(&self, theta: &CostParam, pol: &Policy) -> Result<f64> {
        let (sigma, ksk) =
            occupancy(&self.inst, pol).map_err(|e| learner_unstable(e, "learner"))?;
        Ok(
            trace_product(&sigma, theta.q()) + trace_product(&ksk, theta.r())
                - self.expert_cost(theta)
                - self.reg.value(theta),
        )
    }

    /// `∇_θ m` from the learner occupancy, with `∇ψ` at `theta`.
    pub fn grad_theta_from_occupancy(
        &self,
        theta: &CostParam,
        sigma: &Mat,
        ksk: &Mat,
    ) -> MatrixPair {
        let g = self.reg.gradient(theta);
        MatrixPair::new(
            symmetrize(&(sigma - &self.expert_sigma - g.q)),
            symmetrize(&(ksk - &self.expert_ksk - g.r)),
        )
    }

    pub fn grad_theta(&self, theta: &CostParam, pol: &Policy) -> Result<MatrixPair> {
        let (sigma, ksk) =
            occupancy(&self.inst, pol).map_err(|e| learner_unstable(e, "learner"))?;
        Ok(self.grad_theta_from_occupancy(theta, &sigma, &ksk))
    }

    /// `Π_Θ[θ + step·g]`
    pub fn ascend(&self, theta: &CostParam, g: &MatrixPair, step: f64) -> Result<CostParam> {
        let raw = &MatrixPair::from_theta(theta) + &(g * step);
        project_theta_with(&raw, &self.bx, self.numerics())
    }

    fn theta_block(&self, theta: &CostParam, g: &MatrixPair) -> Result<MatrixPair> {
        let projected = self.ascend(theta, g, 1.0)?;
        Ok(&MatrixPair::from_theta(&projected) - &MatrixPair::from_theta(theta))
    }

    pub fn evaluate(&self, pol: &Policy, theta: &CostParam) -> Result<Evaluation> {
        self.evaluate_with_sigma(pol, theta, None)
    }

    fn evaluate_with_sigma(
        &self,
        pol: &Policy,
        theta: &CostParam,
        sigma: Option<&Mat>,
    ) -> Result<Evaluation> {
        let cl = solve_closed_loop_with_sigma(&self.inst, theta, pol, sigma)
            .map_err(|e| learner_unstable(e, "learner"))?;
        let k = pol.gain();
        let ksk = symmetrize(&(k * &cl.sigma_k * k.transpose()));
        let cost = trace_product(&cl.sigma_k, theta.q()) + trace_product(&ksk, theta.r());
        let objective = cost - self.expert_cost(theta) - self.reg.value(theta);
        let grad_theta = self.grad_theta_from_occupancy(theta, &cl.sigma_k, &ksk);
        let theta_block = self.theta_block(theta, &grad_theta)?;
        let pg = gradient_from(&self.inst, theta, pol, cl);
        let norm = (pg.grad.norm_squared() + theta_block.norm_squared()).sqrt();
        Ok(Evaluation {
            closed_loop: pg.closed_loop,
            ksk,
            e_k: pg.e_k,
            grad_k: pg.grad.clone(),
            grad_theta,
            prox: ProxGradient {
                k_block: pg.grad,
                theta_block,
                norm,
            },
            cost,
            objective,
        })
    }

    pub fn proximal_gradient(&self, pol: &Policy, theta: &CostParam) -> Result<ProxGradient> {
        Ok(self.evaluate(pol, theta)?.prox)
    }

    /// One alternating update from `(K_i, θ_i)`.
    pub fn step(
        &self,
        pol: &Policy,
        theta: &CostParam,
        cfg: &SolverConfig,
    ) -> Result<(Policy, CostParam)> {
        let grad = policy_gradient(&self.inst, theta, pol)
            .map_err(|e| learner_unstable(e, "learner"))?
            .grad;
        let next = Policy::new(pol.gain() - grad * cfg.eta);
        let (sigma, ksk) =
            occupancy(&self.inst, &next).map_err(|e| learner_unstable(e, "updated"))?;
        let g = self.grad_theta_from_occupancy(theta, &sigma, &ksk);
        let theta_next = self.ascend(theta, &g, cfg.lambda)?;
        Ok((next, theta_next))
    }

    fn record(
        &self,
        iter: usize,
        pol: &Policy,
        theta: &CostParam,
        ev: &Evaluation,
        cost_prev_theta: Option<f64>,
        started: Option<Instant>,
    ) -> IterateRecord {
        IterateRecord {
            iter,
            k: pol.gain().clone(),
            theta: theta.clone(),
            cost: ev.cost,
            objective_m: ev.objective,
            prox_grad_norm: ev.prox.norm,
            rho: ev.closed_loop.rho,
            k_dist_to_expert: pol.distance(&self.expert),
            theta_dist_to_center: theta.distance(self.reg.center()),
            sigma_norm: spectral_norm(&ev.closed_loop.sigma_k),
            k_norm: spectral_norm(pol.gain()),
            cost_prev_theta,
            potential_p: None,
            z_local: None,
            wall_time_ms: started.map(|t| t.elapsed().as_secs_f64() * 1e3),
        }
    }

    /// Runs the exact alternating scheme until `‖L‖²_F ≤ eps` or `max_iter`
    /// updates.
    pub fn solve(
        &self,
        k0: &Policy,
        theta0: &CostParam,
        cfg: &SolverConfig,
    ) -> Result<SolveOutcome> {
        self.run(k0, theta0, cfg, None)
    }

    /// Same scheme with the update gradients supplied by `oracle`; the trace
    /// still records exact quantities.
    pub fn solve_with_oracle(
        &self,
        k0: &Policy,
        theta0: &CostParam,
        cfg: &SolverConfig,
        oracle: &mut dyn GradientOracle,
    ) -> Result<SolveOutcome> {
        self.run(k0, theta0, cfg, Some(oracle))
    }

    fn run(
        &self,
        k0: &Policy,
        theta0: &CostParam,
        cfg: &SolverConfig,
        mut oracle: Option<&mut dyn GradientOracle>,
    ) -> Result<SolveOutcome> {
        cfg.validate()?;
        self.inst.check_policy(k0)?;
        self.inst.check_theta(theta0)?;
        if !self.bx.contains(theta0, 1e-9) {
            return Err(GailError::Contract(
                "initial cost parameter lies outside the box".into(),
            ));
        }
        let started = cfg.record_wall_time.then(Instant::now);
        let mut pol = k0.clone();
        let mut theta = theta0.clone();
        let mut ev = self.evaluate(&pol, &theta)?;
        let mut trace = IterateTrace::default();
        trace
            .records
            .push(self.record(0, &pol, &theta, &ev, None, started));
        let mut status = SolveStatus::MaxIterations;

        if ev.prox.norm.powi(2) <= cfg.eps {
            status = SolveStatus::Converged;
        } else {
            for i in 0..cfg.max_iter {
                let grad_k = match oracle.as_deref_mut() {
                    Some(o) => o.policy_gradient(&self.inst, &theta, &pol)?,
                    None => ev.grad_k.clone(),
                };
                let next = Policy::new(pol.gain() - grad_k * cfg.eta);
                let t = self.inst.a() - self.inst.b() * next.gain();
                let rho = spectral_radius(&t)?;
                if rho >= 1.0 - self.numerics().stability_margin {
                    status = SolveStatus::Unstable {
                        iteration: i + 1,
                        rho,
                    };
                    break;
                }
                let (sigma, ksk) = match oracle.as_deref_mut() {
                    Some(o) => o.occupancy(&self.inst, &next)?,
                    None => {
                        let sigma =
                            Lyapunov::new(&t, self.numerics())?.solve_sym(self.inst.sigma0())?;
                        let k = next.gain();
                        let ksk = symmetrize(&(k * &sigma * k.transpose()));
                        (sigma, ksk)
                    }
                };
                let cost_prev = trace_product(&sigma, theta.q()) + trace_product(&ksk, theta.r());
                let g = self.grad_theta_from_occupancy(&theta, &sigma, &ksk);
                let theta_next = self.ascend(&theta, &g, cfg.lambda)?;
                let exact_sigma = if oracle.is_none() { Some(&sigma) } else { None };
                ev = self.evaluate_with_sigma(&next, &theta_next, exact_sigma)?;
                let cost_prev = if oracle.is_none() {
                    cost_prev
                } else {
                    let s = &ev.closed_loop.sigma_k;
                    trace_product(s, theta.q()) + trace_product(&ev.ksk, theta.r())
                };
                pol = next;
                theta = theta_next;
                trace
                    .records
                    .push(self.record(i + 1, &pol, &theta, &ev, Some(cost_prev), started));
                if ev.prox.norm.powi(2) <= cfg.eps {
                    status = SolveStatus::Converged;
                    break;
                }
            }
        }
        let gamma_eps = trace.gamma_eps(cfg.eps);
        Ok(SolveOutcome {
            policy: pol,
            theta,
            trace,
            status,
            gamma_eps,
        })
    }
}

/// `m(K, θ) = C(K; θ) − C(K_E; θ) − ψ(θ)`
pub fn objective_m(
    inst: &LqrInstance,
    theta: &CostParam,
    pol: &Policy,
    k_e: &Policy,
    reg: &dyn Regularizer,
) -> Result<f64> {
    let (se, kse) = occupancy(inst, k_e).map_err(|e| learner_unstable(e, "expert"))?;
    let (s, ks) = occupancy(inst, pol).map_err(|e| learner_unstable(e, "learner"))?;
    Ok(
        trace_product(&(s - se), theta.q()) + trace_product(&(ks - kse), theta.r())
            - reg.value(theta),
    )
}

/// `(Σ_K − Σ_{K_E} − ∇_Q ψ, KΣ_K Kᵀ − K_E Σ_{K_E} K_Eᵀ − ∇_R ψ)` with `∇ψ`
/// at `theta`.
pub fn grad_theta_m(
    inst: &LqrInstance,
    theta: &CostParam,
    pol_next: &Policy,
    k_e: &Policy,
    reg: &dyn Regularizer,
) -> Result<MatrixPair> {
    let (se, kse) = occupancy(inst, k_e).map_err(|e| learner_unstable(e, "expert"))?;
    let (s, ks) = occupancy(inst, pol_next).map_err(|e| learner_unstable(e, "learner"))?;
    let g = reg.gradient(theta);
    Ok(MatrixPair::new(
        symmetrize(&(s - se - g.q)),
        symmetrize(&(ks - kse - g.r)),
    ))
}

/// `L(K, θ)` without building a [`GailProblem`].
pub fn proximal_gradient(
    inst: &LqrInstance,
    k_e: &Policy,
    pol: &Policy,
    theta: &CostParam,
    bx: &ThetaBox,
    reg: Arc<dyn Regularizer>,
) -> Result<ProxGradient> {
    GailProblem::new(inst.clone(), k_e.clone(), *bx, reg)?.proximal_gradient(pol, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gail::QuadraticPenalty;
    use crate::riccati::solve_dare;
    use approx::assert_abs_diff_eq;

    fn scalar_inst(a: f64, b: f64) -> LqrInstance {
        LqrInstance::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn sigma_scalar(a: f64, b: f64, k: f64) -> f64 {
        1.0 / (1.0 - (a - b * k).powi(2))
    }

    fn unit_problem(gamma: f64) -> GailProblem {
        let inst = scalar_inst(1.0, 1.0);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let reg = Arc::new(QuadraticPenalty::new(gamma, theta.clone()).unwrap());
        GailProblem::from_theta_tilde(inst, &theta, ThetaBox::uniform(0.5, 2.0).unwrap(), reg)
            .unwrap()
    }

    #[test]
    fn objective_vanishes_at_expert_and_center() {
        let p = unit_problem(1e-9);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            p.objective(&theta, p.expert()).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        let off = CostParam::scalar(1.5, 0.8).unwrap();
        let m = p.objective(&off, p.expert()).unwrap();
        assert_abs_diff_eq!(m, -p.regularizer().value(&off), epsilon = 1e-13);
        assert!(m <= 0.0);
    }

    #[test]
    fn scalar_objective_closed_form() {
        let p = unit_problem(1.0);
        let ke = p.expert().gain()[(0, 0)];
        let k = ke + 0.1;
        let theta = CostParam::scalar(1.3, 0.9).unwrap();
        let c = |k: f64| sigma_scalar(1.0, 1.0, k) * (1.3 + 0.9 * k * k);
        let psi = 0.3f64.powi(2) + 0.1f64.powi(2);
        let m = p.objective(&theta, &Policy::scalar(k)).unwrap();
        assert_abs_diff_eq!(m, c(k) - c(ke) - psi, epsilon = 1e-12);
        let free = objective_m(
            p.instance(),
            &theta,
            &Policy::scalar(k),
            p.expert(),
            p.regularizer(),
        )
        .unwrap();
        assert_abs_diff_eq!(m, free, epsilon = 1e-13);
    }

    #[test]
    fn scalar_theta_gradient_closed_form() {
        let p = unit_problem(2.0);
        let ke = p.expert().gain()[(0, 0)];
        let k = 0.9;
        let theta = CostParam::scalar(1.2, 0.7).unwrap();
        let g = p.grad_theta(&theta, &Policy::scalar(k)).unwrap();
        let (s, se) = (sigma_scalar(1.0, 1.0, k), sigma_scalar(1.0, 1.0, ke));
        assert_abs_diff_eq!(g.q[(0, 0)], s - se - 4.0 * 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            g.r[(0, 0)],
            k * s * k - ke * se * ke - 4.0 * (-0.3),
            epsilon = 1e-12
        );
        let zero = p
            .grad_theta(&CostParam::scalar(1.0, 1.0).unwrap(), p.expert())
            .unwrap();
        assert!(zero.norm() < 1e-12);
    }

    #[test]
    fn theta_block_respects_box() {
        let p = unit_problem(1e-6);
        // K far from expert with θ at the upper Q face: the gradient pushes outward
        let theta = CostParam::scalar(2.0, 1.0).unwrap();
        let pol = Policy::scalar(0.2);
        let ev = p.evaluate(&pol, &theta).unwrap();
        assert!(ev.grad_theta.q[(0, 0)] > 0.0);
        assert_abs_diff_eq!(ev.prox.theta_block.q[(0, 0)], 0.0, epsilon = 1e-15);

        // interior point with a small raw gradient
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let pol = Policy::scalar(p.expert().gain()[(0, 0)] + 1e-3);
        let ev = p.evaluate(&pol, &theta).unwrap();
        assert!((&ev.prox.theta_block - &ev.grad_theta).norm() < 1e-14);
    }

    #[test]
    fn scalar_worked_step() {
        let p = unit_problem(1.0);
        let cfg = SolverConfig::new(1e-3, 1e-4, 1e-12, 10).unwrap();
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let (k1, th1) = p.step(&Policy::scalar(1.2), &theta, &cfg).unwrap();
        // T = −0.2, Σ = 1/(1−0.04), P = (1 + 1.44)/(1−0.04)
        let sig = 1.0 / 0.96;
        let pk = 2.44 / 0.96;
        let e = (1.0 + pk) * 1.2 - pk;
        let k_next = 1.2 - 1e-3 * 2.0 * e * sig;
        assert_abs_diff_eq!(k1.gain()[(0, 0)], k_next, epsilon = 1e-13);
        let ke = p.expert().gain()[(0, 0)];
        let (s1, se) = (sigma_scalar(1.0, 1.0, k_next), sigma_scalar(1.0, 1.0, ke));
        let q1 = (1.0 + 1e-4 * (s1 - se)).clamp(0.5, 2.0);
        let r1 = (1.0 + 1e-4 * (k_next * k_next * s1 - ke * ke * se)).clamp(0.5, 2.0);
        assert_abs_diff_eq!(th1.q()[(0, 0)], q1, epsilon = 1e-13);
        assert_abs_diff_eq!(th1.r()[(0, 0)], r1, epsilon = 1e-13);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let p = unit_problem(1.0);
        let cfg = SolverConfig::new(1e-2, 1e-3, 1e-20, 5).unwrap();
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let (k1, th1) = p.step(p.expert(), &theta, &cfg).unwrap();
        assert!(k1.distance(p.expert()) < 1e-12);
        assert!(th1.distance(&theta) < 1e-12);
        let out = p.solve(
            p.expert(),
            &theta,
            &SolverConfig::new(1e-2, 1e-3, 1e-20, 5).unwrap(),
        );
        let out = out.unwrap();
        assert!(out.trace.records[0].prox_grad_norm < 1e-10);
    }

    #[test]
    fn converges_at_iteration_zero_from_saddle() {
        let p = unit_problem(1.0);
        let cfg = SolverConfig::new(1e-2, 1e-3, 1e-12, 5).unwrap();
        let out = p
            .solve(p.expert(), &CostParam::scalar(1.0, 1.0).unwrap(), &cfg)
            .unwrap();
        assert!(out.converged());
        assert_eq!(out.gamma_eps, Some(0));
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn destabilizing_step_is_reported() {
        let p = unit_problem(1.0);
        let cfg = SolverConfig::new(5.0, 1e-3, 1e-12, 5).unwrap();
        let out = p
            .solve(
                &Policy::scalar(1.2),
                &CostParam::scalar(1.0, 1.0).unwrap(),
                &cfg,
            )
            .unwrap();
        assert!(matches!(
            out.status,
            SolveStatus::Unstable { iteration: 1, .. }
        ));
        assert_eq!(out.trace.len(), 1);
        assert!(matches!(
            p.step(
                &Policy::scalar(1.2),
                &CostParam::scalar(1.0, 1.0).unwrap(),
                &cfg
            ),
            Err(GailError::Unstable { .. })
        ));
    }

    #[test]
    fn max_iter_gives_partial_trace() {
        let p = unit_problem(1.0);
        let cfg = SolverConfig::new(1e-3, 1e-4, 1e-12, 1).unwrap();
        let out = p
            .solve(
                &Policy::scalar(1.0),
                &CostParam::scalar(1.0, 1.0).unwrap(),
                &cfg,
            )
            .unwrap();
        assert_eq!(out.status, SolveStatus::MaxIterations);
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.gamma_eps, None);
    }

    #[test]
    fn scalar_solve_recovers_expert() {
        let p = unit_problem(1.0);
        let cfg = SolverConfig::new(0.05, 0.02, 1e-14, 200_000).unwrap();
        let out = p
            .solve(
                &Policy::scalar(1.0),
                &CostParam::scalar(1.0, 1.0).unwrap(),
                &cfg,
            )
            .unwrap();
        assert!(out.converged(), "{:?}", out.status);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert_abs_diff_eq!(out.policy.gain()[(0, 0)], golden, epsilon = 1e-4);
        let kstar = solve_dare(p.instance(), &out.theta).unwrap().k_star;
        assert!((out.policy.gain() - kstar).norm() < 1e-6);
    }

    #[test]
    fn rejects_unstable_expert() {
        let inst = scalar_inst(2.0, 1.0);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let reg = Arc::new(QuadraticPenalty::new(1.0, theta).unwrap());
        match GailProblem::new(
            inst,
            Policy::scalar(0.5),
            ThetaBox::uniform(0.5, 2.0).unwrap(),
            reg,
        ) {
            Err(GailError::Unstable { which, .. }) => assert_eq!(which, "expert"),
            other => panic!("{other:?}"),
        }
    }
}
