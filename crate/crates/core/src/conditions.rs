//! Problem constants, the stepsize conditions built on them, and sampling
//! estimators for the smoothness moduli that have no closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GailError, Result};
use crate::gail::{GailProblem, IterateTrace, Regularizer, ThetaBox};
use crate::lqr::{occupancy, policy_gradient, solve_closed_loop, CostParam, LqrInstance, Policy};
use crate::numerics::{min_eigenvalue_sym, spectral_norm, spectral_radius, Lyapunov, Mat};
use crate::random::{stream_rng, unit_direction, unit_symmetric};
use crate::riccati::solve_dare_from;

/// Multiplier applied to every sampled modulus.
pub const SAFETY_FACTOR: f64 = 2.0;
/// Fewest accepted samples an estimator will report on.
pub const MIN_ACCEPTED: usize = 10;

/// Sampled Lipschitz and smoothness moduli of `Σ_K` and
/// `V(K) = diag(Σ_K, KΣ_K Kᵀ)` over `{K : ‖Σ_K‖ ≤ S}`. These are inflated
/// observed maxima, i.e. lower-bound-style estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimates {
    pub tau_sigma: f64,
    pub nu_sigma: f64,
    pub tau_v: f64,
    pub nu_v: f64,
    pub region_bound: f64,
    pub accepted: usize,
    pub safety_factor: f64,
}

/// Sampled moduli near the saddle: Lipschitz constant of `K*(θ)`,
/// smoothness of `C(·; θ*)` near `K*` and of `m*(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalModuli {
    pub tau_kstar: f64,
    pub nu_kstar: f64,
    pub nu_mstar: f64,
    pub radius: f64,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub state_dim: usize,
    pub input_dim: usize,
    pub theta_box: ThetaBox,
    /// `min{α_Q, α_R}`
    pub alpha: f64,
    /// `σ_min(Σ₀)`
    pub mu: f64,
    pub sigma_theta: f64,
    /// `β_Q Tr Σ_{K₀} + β_R Tr(K₀ Σ_{K₀} K₀ᵀ)`
    pub m: f64,
    pub f: f64,
    /// `αF + 2M`
    pub envelope: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// `‖B‖`
    pub b_norm: f64,
    /// Strong-convexity modulus of the regularizer.
    pub gamma: f64,
    /// Smoothness modulus of the regularizer.
    pub nu: f64,
    /// `sup_Θ C(K_E; θ)` bound `β_Q Tr Σ_E + β_R Tr(K_E Σ_E K_Eᵀ)`.
    pub expert_cost_sup: f64,
    /// `sup_Θ ψ`
    pub psi_sup: f64,
    pub tau_v: Option<f64>,
    pub nu_v: Option<f64>,
    pub tau_sigma: Option<f64>,
    pub nu_sigma: Option<f64>,
    pub local: Option<LocalModuli>,
}

impl ProblemConstants {
    pub fn with_lipschitz(mut self, est: &LipschitzEstimates) -> Self {
        self.tau_v = Some(est.tau_v);
        self.nu_v = Some(est.nu_v);
        self.tau_sigma = Some(est.tau_sigma);
        self.nu_sigma = Some(est.nu_sigma);
        self
    }

    pub fn with_local(mut self, local: LocalModuli) -> Self {
        self.local = Some(local);
        self
    }

    /// `S = (αF + 2M)/α_Q`, the covariance bound defining the region that
    /// contains every iterate of a conforming run.
    pub fn default_region_bound(&self) -> f64 {
        self.envelope / self.theta_box.alpha_q
    }

    /// Lower bound on `inf_Θ {−C(K_E; θ) − ψ(θ)}`.
    pub fn objective_lower_bound(&self) -> f64 {
        -self.expert_cost_sup - self.psi_sup
    }

    /// `α_Q α_R α² μ² / (2M(αF + 2M))`
    pub fn ratio_bound(&self) -> f64 {
        let b = &self.theta_box;
        b.alpha_q * b.alpha_r * self.alpha.powi(2) * self.mu.powi(2)
            / (2.0 * self.m * self.envelope)
    }

    /// The three closed-form `η` bounds of Condition 1.
    pub fn eta_bounds(&self) -> [(&'static str, f64); 3] {
        let b = &self.theta_box;
        let e = self.envelope;
        let first = if self.b_norm > 0.0 {
            b.alpha_q.powi(3) * self.mu.powf(2.5) * e.powf(-3.5)
                / (16.0 * self.kappa1.sqrt() * self.kappa2 * self.b_norm)
        } else {
            f64::INFINITY
        };
        [
            ("eta_bound_gradient", first),
            ("eta_bound_curvature", b.alpha_q / (32.0 * self.kappa1 * e)),
            (
                "eta_bound_descent",
                2.0 * self.m / (b.alpha_q * b.alpha_r * self.mu.powi(2)),
            ),
        ]
    }

    fn require_v(&self) -> Result<(f64, f64)> {
        match (self.tau_v, self.nu_v) {
            (Some(t), Some(n)) => Ok((t, n)),
            _ => Err(GailError::Unsupported(
                "tau_V and nu_V are required; run estimate_lipschitz or supply them in the config"
                    .into(),
            )),
        }
    }

    fn require_local(&self) -> Result<LocalModuli> {
        self.local.ok_or_else(|| {
            GailError::Unsupported(
                "local moduli tau_K*, nu_K*, nu_m* are required; run estimate_local_moduli".into(),
            )
        })
    }
}

/// Closed-form constants for a run started at `k0`.
pub fn compute_constants(
    inst: &LqrInstance,
    k0: &Policy,
    bx: &ThetaBox,
    reg: &dyn Regularizer,
    k_e: &Policy,
) -> Result<ProblemConstants> {
    let (s0, ks0) = occupancy(inst, k0)?;
    let (se, kse) = occupancy(inst, k_e).map_err(|e| match e {
        GailError::Unstable { rho, .. } => GailError::unstable("expert", rho),
        other => other,
    })?;
    let (d, k) = (inst.state_dim(), inst.input_dim());
    let alpha = bx.alpha();
    let mu = inst.mu();
    let m = bx.beta_q * s0.trace() + bx.beta_r * ks0.trace();
    let (gq, gr) = reg.sup_gradient_norms(bx)?;
    let f = (se.norm() + gq).max(kse.norm() + gr);
    let envelope = alpha * f + 2.0 * m;
    let b_norm = spectral_norm(inst.b());
    let kappa1 = bx.beta_r + envelope * b_norm.powi(2) / mu;
    let kappa2 = 1.0 + (mu * bx.alpha_q).powf(-0.5) * envelope.sqrt();
    Ok(ProblemConstants {
        state_dim: d,
        input_dim: k,
        theta_box: *bx,
        alpha,
        mu,
        sigma_theta: bx.sigma_theta(d, k),
        m,
        f,
        envelope,
        kappa1,
        kappa2,
        b_norm,
        gamma: reg.strong_convexity(),
        nu: reg.smoothness(),
        expert_cost_sup: bx.beta_q * se.trace() + bx.beta_r * kse.trace(),
        psi_sup: reg.sup_value(bx)?,
        tau_v: None,
        nu_v: None,
        tau_sigma: None,
        nu_sigma: None,
        local: None,
    })
}

pub fn compute_constants_for(problem: &GailProblem, k0: &Policy) -> Result<ProblemConstants> {
    compute_constants(
        problem.instance(),
        k0,
        problem.theta_box(),
        problem.regularizer(),
        problem.expert(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `value < bound` instead of `value ≤ bound`.
    pub strict: bool,
    pub holds: bool,
}

impl BoundCheck {
    fn le(name: &str, value: f64, bound: f64) -> Self {
        BoundCheck {
            name: name.into(),
            value,
            bound,
            strict: false,
            holds: value <= bound,
        }
    }

    fn lt(name: &str, value: f64, bound: f64) -> Self {
        BoundCheck {
            name: name.into(),
            value,
            bound,
            strict: true,
            holds: value < bound,
        }
    }

    fn slack_ratio(&self) -> f64 {
        if self.value <= 0.0 {
            f64::INFINITY
        } else {
            self.bound / self.value
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: String,
    pub passes: bool,
    /// Violated checks when failing, otherwise the tightest one.
    pub binding: String,
    pub checks: Vec<BoundCheck>,
    pub upsilon: Option<f64>,
    pub note: Option<String>,
}

impl ConditionVerdict {
    fn from_checks(condition: &str, checks: Vec<BoundCheck>) -> Self {
        let failing: Vec<&str> = checks
            .iter()
            .filter(|c| !c.holds)
            .map(|c| c.name.as_str())
            .collect();
        let binding = if failing.is_empty() {
            checks
                .iter()
                .min_by(|a, b| a.slack_ratio().total_cmp(&b.slack_ratio()))
                .map(|c| c.name.clone())
                .unwrap_or_default()
        } else {
            failing.join(",")
        };
        ConditionVerdict {
            condition: condition.into(),
            passes: failing.is_empty(),
            binding,
            checks,
            upsilon: None,
            note: None,
        }
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Closed-form Condition 1: three `η` bounds and the `λ/η` ratio bound.
pub fn check_condition1(consts: &ProblemConstants, eta: f64, lambda: f64) -> ConditionVerdict {
    let mut checks: Vec<BoundCheck> = consts
        .eta_bounds()
        .iter()
        .map(|&(name, b)| BoundCheck::le(name, eta, b))
        .collect();
    let ratio = if eta > 0.0 { lambda / eta } else { 0.0 };
    checks.push(BoundCheck::le(
        "lambda_eta_ratio",
        ratio,
        consts.ratio_bound(),
    ));
    ConditionVerdict::from_checks("condition1", checks)
}

/// Per-iterate stepsize under which one policy step decreases `C(·; θ)`:
/// `η ≤ (1/16)·min{(μσ_min(Q)/C)² / (‖B‖‖∇C‖_F(1 + ‖A − BK‖)), σ_min(Q)/(2C‖R + BᵀP_K B‖)}`.
pub fn path_step_bound(inst: &LqrInstance, theta: &CostParam, pol: &Policy) -> Result<f64> {
    let pg = policy_gradient(inst, theta, pol)?;
    let cl = &pg.closed_loop;
    let c = cl.cost(theta, pol);
    let qmin = min_eigenvalue_sym(theta.q())?;
    let mu = inst.mu();
    let b_norm = spectral_norm(inst.b());
    let g = pg.grad.norm();
    let first = if b_norm * g > 0.0 {
        (mu * qmin / c).powi(2) / (b_norm * g * (1.0 + spectral_norm(&cl.t)))
    } else {
        f64::INFINITY
    };
    let second = qmin / (2.0 * c * spectral_norm(&cl.curvature(inst, theta)));
    Ok(first.min(second) / 16.0)
}

/// Condition 1 certified along an actual path: the per-iterate decrement
/// requirement at every traced `(K_i, θ_i)`, the descent bound on `η`, and
/// the exact `λ/η` ratio bound.
pub fn check_condition1_path(
    inst: &LqrInstance,
    consts: &ProblemConstants,
    trace: &IterateTrace,
    eta: f64,
    lambda: f64,
) -> Result<ConditionVerdict> {
    let bounds: Vec<f64> = trace
        .records
        .par_iter()
        .map(|r| path_step_bound(inst, &r.theta, &Policy::new(r.k.clone())))
        .collect::<Result<_>>()?;
    let path_min = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let descent = consts.eta_bounds()[2].1;
    let checks = vec![
        BoundCheck::le("eta_bound_path", eta, path_min),
        BoundCheck::le("eta_bound_descent", eta, descent),
        BoundCheck::le("lambda_eta_ratio", lambda / eta, consts.ratio_bound()),
    ];
    Ok(ConditionVerdict::from_checks("condition1_path", checks))
}

/// `α_Q α_R α² γ ≥ 14 σ_θ ν_V M (αF + 2M)`
pub fn check_condition2(consts: &ProblemConstants) -> Result<ConditionVerdict> {
    let (_, nu_v) = consts.require_v()?;
    let b = &consts.theta_box;
    let lhs = b.alpha_q * b.alpha_r * consts.alpha.powi(2) * consts.gamma;
    let rhs = 14.0 * consts.sigma_theta * nu_v * consts.m * consts.envelope;
    let mut v = ConditionVerdict::from_checks(
        "condition2",
        vec![BoundCheck::le("curvature_dominance", rhs, lhs)],
    );
    v.note = Some("uses sampled nu_V".into());
    Ok(v)
}

/// Upper bounds on `λ` from Condition 3.
pub fn condition3_lambda_bounds(consts: &ProblemConstants) -> Result<[(&'static str, f64); 3]> {
    let (tau_v, nu_v) = consts.require_v()?;
    Ok([
        (
            "lambda_bound_lipschitz",
            1.0 / (100.0 * (tau_v + consts.nu)),
        ),
        (
            "lambda_bound_smoothness",
            3.0 * nu_v * consts.sigma_theta / (100.0 * tau_v.powi(2)),
        ),
        (
            "lambda_bound_regularizer",
            consts.gamma / (100.0 * consts.nu.powi(2)),
        ),
    ])
}

pub fn check_condition3(
    consts: &ProblemConstants,
    eta: f64,
    lambda: f64,
) -> Result<ConditionVerdict> {
    let (tau_v, nu_v) = consts.require_v()?;
    let mut checks = vec![
        BoundCheck::le("eta_bound_lipschitz", eta, 1.0 / (100.0 * tau_v)),
        BoundCheck::le(
            "eta_bound_smoothness",
            eta,
            1.0 / (2.0 * consts.sigma_theta * nu_v),
        ),
    ];
    for (name, b) in condition3_lambda_bounds(consts)? {
        checks.push(BoundCheck::le(name, lambda, b));
    }
    checks.push(BoundCheck::lt(
        "eta_lambda_ratio",
        eta / lambda,
        consts.gamma / (7.0 * nu_v * consts.sigma_theta),
    ));
    let mut v = ConditionVerdict::from_checks("condition3", checks);
    v.note = Some("uses sampled tau_V, nu_V".into());
    Ok(v)
}

/// The two branches of the local contraction factor and the weight `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsilonReport {
    pub a: f64,
    pub theta_branch: f64,
    pub policy_branch: f64,
    pub upsilon: f64,
}

/// `υ = max{1 − λγ + aλν_{m*}τ_{K*}, (1 − ηα_Rμ)(1 + λτ_V/a + λτ_Vτ_{K*})}`
/// with `a = γ/(3τ_{K*}ν_{m*})`.
#[allow(clippy::too_many_arguments)]
pub fn upsilon(
    eta: f64,
    lambda: f64,
    gamma: f64,
    alpha_r: f64,
    mu: f64,
    tau_v: f64,
    tau_kstar: f64,
    nu_mstar: f64,
) -> UpsilonReport {
    let a = gamma / (3.0 * tau_kstar * nu_mstar);
    let theta_branch = 1.0 - lambda * gamma + a * lambda * nu_mstar * tau_kstar;
    let policy_branch =
        (1.0 - eta * alpha_r * mu) * (1.0 + lambda * tau_v / a + lambda * tau_v * tau_kstar);
    UpsilonReport {
        a,
        theta_branch,
        policy_branch,
        upsilon: theta_branch.max(policy_branch),
    }
}

pub fn upsilon_for(consts: &ProblemConstants, eta: f64, lambda: f64) -> Result<UpsilonReport> {
    let (tau_v, _) = consts.require_v()?;
    let l = consts.require_local()?;
    Ok(upsilon(
        eta,
        lambda,
        consts.gamma,
        consts.theta_box.alpha_r,
        consts.mu,
        tau_v,
        l.tau_kstar,
        l.nu_mstar,
    ))
}

/// `η ≤ 2/(α_R μ + ν_{K*})`, `λ ≤ 2/(γ + ν_{m*})`, plus the contraction
/// factor `υ`.
pub fn check_condition5(
    consts: &ProblemConstants,
    eta: f64,
    lambda: f64,
) -> Result<ConditionVerdict> {
    let l = consts.require_local()?;
    let checks = vec![
        BoundCheck::le(
            "eta_bound_local",
            eta,
            2.0 / (consts.theta_box.alpha_r * consts.mu + l.nu_kstar),
        ),
        BoundCheck::le(
            "lambda_bound_local",
            lambda,
            2.0 / (consts.gamma + l.nu_mstar),
        ),
    ];
    let mut v = ConditionVerdict::from_checks("condition5", checks);
    v.upsilon = Some(upsilon_for(consts, eta, lambda)?.upsilon);
    v.note = Some("uses sampled local moduli".into());
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeChoice {
    pub eta: f64,
    pub lambda: f64,
}

/// Largest `η` passing closed-form Condition 1 (bisected downward from the
/// minimum of the three bounds), with `λ = η·ratio/2`.
pub fn auto_stepsizes(consts: &ProblemConstants) -> Result<StepsizeChoice> {
    let mut eta = consts
        .eta_bounds()
        .iter()
        .map(|b| b.1)
        .fold(f64::INFINITY, f64::min);
    let ratio = consts.ratio_bound();
    if !(eta.is_finite() && eta > 0.0 && ratio > 0.0) {
        return Err(GailError::Numerical(
            "Condition 1 bounds are degenerate".into(),
        ));
    }
    for _ in 0..200 {
        let lambda = eta * ratio / 2.0;
        if check_condition1(consts, eta, lambda).passes {
            return Ok(StepsizeChoice { eta, lambda });
        }
        eta /= 2.0;
    }
    Err(GailError::Numerical(
        "no stepsize passes Condition 1".into(),
    ))
}

/// Stepsizes from the per-iterate requirement at the starting point:
/// `η = ½·min{bound at (K₀, θ₀), 2M/(α_Q α_R μ²)}`, `λ = η·ratio/2`.
/// The requirement must still be certified along the run with
/// [`check_condition1_path`].
pub fn path_stepsizes(
    inst: &LqrInstance,
    consts: &ProblemConstants,
    k0: &Policy,
    theta0: &CostParam,
) -> Result<StepsizeChoice> {
    let eta = 0.5 * path_step_bound(inst, theta0, k0)?.min(consts.eta_bounds()[2].1);
    Ok(StepsizeChoice {
        eta,
        lambda: eta * consts.ratio_bound() / 2.0,
    })
}

/// Stepsizes meeting Condition 3 and the Condition 1 ratio bound with
/// `η ≤ eta_cap`; fails when Condition 2 leaves no room between the two
/// ratio requirements.
pub fn global_stepsizes(consts: &ProblemConstants, eta_cap: f64) -> Result<StepsizeChoice> {
    let (tau_v, nu_v) = consts.require_v()?;
    let ratio = consts.ratio_bound();
    let eta_max = eta_cap
        .min(1.0 / (100.0 * tau_v))
        .min(1.0 / (2.0 * consts.sigma_theta * nu_v));
    let lambda_max = condition3_lambda_bounds(consts)?
        .iter()
        .map(|b| b.1)
        .fold(f64::INFINITY, f64::min);
    let lambda = 0.9 * lambda_max.min(ratio * eta_max);
    let eta_lo = lambda / ratio;
    let eta_hi = (0.99 * lambda * consts.gamma / (7.0 * nu_v * consts.sigma_theta)).min(eta_max);
    if eta_lo > eta_hi {
        return Err(GailError::Unsupported(format!(
            "no stepsizes satisfy both ratio requirements (eta in [{eta_lo:.3e}, {eta_hi:.3e}]); increase gamma"
        )));
    }
    Ok(StepsizeChoice {
        eta: (eta_lo * eta_hi).sqrt(),
        lambda,
    })
}

/// `(Σ_K, KΣ_K Kᵀ)` and the Jacobian of their entries with respect to `K`:
/// row `j·d + l` is `∂Σ_jl`, row `d² + j·k + l` is `∂(KΣKᵀ)_jl`, column
/// `a·d + b` is the direction `E_ab`.
pub fn v_jacobian(inst: &LqrInstance, pol: &Policy) -> Result<(Mat, Mat, Mat)> {
    let (d, k) = (inst.state_dim(), inst.input_dim());
    let t = inst.closed_loop_matrix(pol)?;
    let rho = spectral_radius(&t)?;
    if rho >= 1.0 {
        return Err(GailError::unstable("given", rho));
    }
    let lyap = Lyapunov::new(&t, inst.numerics())?;
    let sigma = lyap.solve_sym(inst.sigma0())?;
    let kg = pol.gain();
    let ksk = kg * &sigma * kg.transpose();
    let b = inst.b();
    let mut jac = Mat::zeros(d * d + k * k, k * d);
    for a_ in 0..k {
        for b_ in 0..d {
            let mut delta = Mat::zeros(k, d);
            delta[(a_, b_)] = 1.0;
            let bds = b * &delta * &sigma * t.transpose();
            let rhs = -(&bds + bds.transpose());
            let dsigma = lyap.solve(&rhs)?;
            let dks = &delta * &sigma * kg.transpose()
                + kg * &sigma * delta.transpose()
                + kg * &dsigma * kg.transpose();
            let col = a_ * d + b_;
            for j in 0..d {
                for l in 0..d {
                    jac[(j * d + l, col)] = dsigma[(j, l)];
                }
            }
            for j in 0..k {
                for l in 0..k {
                    jac[(d * d + j * k + l, col)] = dks[(j, l)];
                }
            }
        }
    }
    Ok((sigma, ksk, jac))
}

struct Probe {
    k: Mat,
    sigma: Mat,
    ksk: Mat,
    jac: Mat,
}

fn probe(inst: &LqrInstance, k: Mat, s_bound: f64) -> Option<Probe> {
    let pol = Policy::new(k);
    let (sigma, ksk, jac) = v_jacobian(inst, &pol).ok()?;
    if spectral_norm(&sigma) > s_bound {
        return None;
    }
    Some(Probe {
        k: pol.into_gain(),
        sigma,
        ksk,
        jac,
    })
}

fn in_region(inst: &LqrInstance, k: &Mat, s_bound: f64) -> bool {
    let pol = Policy::new(k.clone());
    match crate::lqr::state_covariance(inst, &pol) {
        Ok(s) => spectral_norm(&s) <= s_bound,
        Err(_) => false,
    }
}

/// Distance along `dir` from `anchor` to the region boundary, capped.
fn ray_extent(inst: &LqrInstance, anchor: &Mat, dir: &Mat, s_bound: f64, cap: f64) -> f64 {
    let mut hi = cap.min(1e-3 * (1.0 + anchor.norm()));
    while hi < cap && in_region(inst, &(anchor + dir * hi), s_bound) {
        hi *= 2.0;
    }
    if hi >= cap && in_region(inst, &(anchor + dir * cap), s_bound) {
        return cap;
    }
    let mut lo = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if in_region(inst, &(anchor + dir * mid), s_bound) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Default, Clone, Copy)]
struct Ratios {
    tau_sigma: f64,
    tau_v: f64,
    grad_sigma: f64,
    grad_v: f64,
}

impl Ratios {
    fn max(self, o: Ratios) -> Ratios {
        Ratios {
            tau_sigma: self.tau_sigma.max(o.tau_sigma),
            tau_v: self.tau_v.max(o.tau_v),
            grad_sigma: self.grad_sigma.max(o.grad_sigma),
            grad_v: self.grad_v.max(o.grad_v),
        }
    }
}

fn pair_ratios(p: &Probe, q: &Probe, d: usize) -> Option<Ratios> {
    let dk = (&p.k - &q.k).norm();
    if dk <= 1e-12 {
        return None;
    }
    let ds = (&p.sigma - &q.sigma).norm_squared();
    let dks = (&p.ksk - &q.ksk).norm_squared();
    let dj = &p.jac - &q.jac;
    let row_norm = |i: usize| dj.row(i).norm();
    let grad_sigma = (0..d * d).map(row_norm).fold(0.0, f64::max);
    let grad_v = (0..dj.nrows()).map(row_norm).fold(0.0, f64::max);
    Some(Ratios {
        tau_sigma: ds.sqrt() / dk,
        tau_v: (ds + dks).sqrt() / dk,
        grad_sigma: grad_sigma / dk,
        grad_v: grad_v / dk,
    })
}

/// Sampled moduli of `Σ_K` and `V(K)` over `{K : ‖Σ_K‖ ≤ s_bound}`.
///
/// Sample `j` draws, from its own stream, a point on a random ray from
/// `anchor` inside the region, a nearby point and an independent far point;
/// the largest difference quotients over all accepted pairs are multiplied
/// by [`SAFETY_FACTOR`]. Gradient quotients are scaled by `d` (for `Σ`) and
/// `d + k` (for `V`) to match the entrywise smoothness convention.
pub fn estimate_lipschitz(
    inst: &LqrInstance,
    anchor: &Policy,
    s_bound: f64,
    samples: usize,
    seed: u64,
) -> Result<LipschitzEstimates> {
    inst.check_policy(anchor)?;
    if !in_region(inst, anchor.gain(), s_bound) {
        return Err(GailError::Contract(format!(
            "anchor policy lies outside the region ‖Σ_K‖ ≤ {s_bound}"
        )));
    }
    let (d, k) = (inst.state_dim(), inst.input_dim());
    let cap = 10.0 * (1.0 + anchor.gain().norm());
    let a0 = anchor.gain();
    let per_sample: Vec<(usize, Ratios)> = (0..samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j as u64);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let dir = unit_direction(rng, k, d);
                let ext = ray_extent(inst, a0, &dir, s_bound, cap);
                let t: f64 = rand::Rng::random::<f64>(rng) * ext;
                a0 + dir * t
            };
            let k1 = draw(&mut rng);
            let k_far = draw(&mut rng);
            let h = 1e-3 * (1.0 + k1.norm()) * rand::Rng::random::<f64>(&mut rng).max(1e-3);
            let k_near = &k1 + unit_direction(&mut rng, k, d) * h;
            let mut accepted = 0;
            let mut best = Ratios::default();
            if let Some(p1) = probe(inst, k1, s_bound) {
                for other in [k_near, k_far] {
                    if let Some(p2) = probe(inst, other, s_bound) {
                        if let Some(r) = pair_ratios(&p1, &p2, d) {
                            best = best.max(r);
                            accepted += 1;
                        }
                    }
                }
            }
            (accepted, best)
        })
        .collect();
    let accepted: usize = per_sample.iter().map(|s| s.0).sum();
    if accepted < MIN_ACCEPTED {
        return Err(GailError::InsufficientCoverage {
            accepted,
            required: MIN_ACCEPTED,
        });
    }
    let best = per_sample
        .iter()
        .fold(Ratios::default(), |acc, s| acc.max(s.1));
    Ok(LipschitzEstimates {
        tau_sigma: SAFETY_FACTOR * best.tau_sigma,
        nu_sigma: SAFETY_FACTOR * d as f64 * best.grad_sigma,
        tau_v: SAFETY_FACTOR * best.tau_v,
        nu_v: SAFETY_FACTOR * (d + k) as f64 * best.grad_v,
        region_bound: s_bound,
        accepted,
        safety_factor: SAFETY_FACTOR,
    })
}

fn perturb_theta(
    rng: &mut rand_chacha::ChaCha8Rng,
    theta: &CostParam,
    radius: f64,
) -> Option<CostParam> {
    let (d, k) = (theta.q().nrows(), theta.r().nrows());
    let dq = unit_symmetric(rng, d);
    let dr = unit_symmetric(rng, k);
    let norm = (dq.norm_squared() + dr.norm_squared()).sqrt();
    let t = radius * rand::Rng::random::<f64>(rng) / norm;
    CostParam::with_tolerance(theta.q() + dq * t, theta.r() + dr * t, f64::INFINITY).ok()
}

/// Sampled moduli near a saddle `(K*, θ*)` within `radius` (Frobenius) of
/// each point, inflated by [`SAFETY_FACTOR`].
pub fn estimate_local_moduli(
    problem: &GailProblem,
    k_star: &Policy,
    theta_star: &CostParam,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<LocalModuli> {
    let inst = problem.instance();
    let (se, kse) = problem.expert_occupancy();
    let reg = problem.regularizer();
    let grad_mstar = |theta: &CostParam, kst: &Mat| -> Result<(Mat, Mat)> {
        let (s, ks) = occupancy(inst, &Policy::new(kst.clone()))?;
        let g = reg.gradient(theta);
        Ok((s - se - g.q, ks - kse - g.r))
    };
    let (d, k) = (inst.state_dim(), inst.input_dim());
    let per: Vec<Option<(f64, f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j as u64);
            let t1 = perturb_theta(&mut rng, theta_star, radius)?;
            let t2 = perturb_theta(&mut rng, theta_star, radius)?;
            let k1 = solve_dare_from(inst, &t1, k_star).ok()?.k_star;
            let k2 = solve_dare_from(inst, &t2, k_star).ok()?.k_star;
            let dth = t1.distance(&t2);
            if dth <= 1e-14 {
                return None;
            }
            let tau = (&k1 - &k2).norm() / dth;
            let (gq1, gr1) = grad_mstar(&t1, &k1).ok()?;
            let (gq2, gr2) = grad_mstar(&t2, &k2).ok()?;
            let num = ((gq1 - gq2).norm_squared() + (gr1 - gr2).norm_squared()).sqrt();
            let nu_m = num / dth;
            let scale = radius * rand::Rng::random::<f64>(&mut rng);
            let p1 = Policy::new(k_star.gain() + unit_direction(&mut rng, k, d) * scale);
            let p2 = Policy::new(k_star.gain() + unit_direction(&mut rng, k, d) * scale);
            let g1 = policy_gradient(inst, theta_star, &p1).ok()?.grad;
            let g2 = policy_gradient(inst, theta_star, &p2).ok()?.grad;
            let dk = p1.distance(&p2);
            if dk <= 1e-14 {
                return None;
            }
            Some((tau, (g1 - g2).norm() / dk, nu_m))
        })
        .collect();
    let ok: Vec<(f64, f64, f64)> = per.into_iter().flatten().collect();
    if ok.len() < MIN_ACCEPTED {
        return Err(GailError::InsufficientCoverage {
            accepted: ok.len(),
            required: MIN_ACCEPTED,
        });
    }
    let max = |f: fn(&(f64, f64, f64)) -> f64| ok.iter().map(f).fold(0.0, f64::max);
    Ok(LocalModuli {
        tau_kstar: SAFETY_FACTOR * max(|x| x.0),
        nu_kstar: SAFETY_FACTOR * max(|x| x.1),
        nu_mstar: SAFETY_FACTOR
            * max(|x| x.2).max(problem.regularizer().smoothness() / SAFETY_FACTOR),
        radius,
        accepted: ok.len(),
    })
}

/// Closed-loop covariance bound at the optimum for `theta`, used by the
/// cost-at-optimum check `C(K*(θ); θ) ≤ M`.
pub fn optimal_cost(inst: &LqrInstance, theta: &CostParam, warm: &Policy) -> Result<(f64, Mat)> {
    let sol = solve_dare_from(inst, theta, warm)?;
    let pol = sol.policy();
    let cl = solve_closed_loop(inst, theta, &pol)?;
    Ok((cl.cost(theta, &pol), cl.sigma_k))
}
