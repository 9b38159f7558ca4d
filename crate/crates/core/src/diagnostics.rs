//! Monitors evaluated along a solver trace: the potential function, the
//! stability envelope, the local contraction of `Z_i`, and numerical checks
//! of the policy-optimization inequalities the analysis rests on.
//!
//! Checks that depend on sampled moduli report the moduli they used, so a
//! failure can be traced to the estimate rather than to the iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    compute_constants, upsilon_for, ProblemConstants, StepsizeChoice, UpsilonReport,
};
use crate::error::{GailError, Result};
use crate::gail::{GailProblem, IterateTrace, Regularizer, ThetaBox};
use crate::lqr::{
    cost, is_stabilizing, policy_gradient, solve_closed_loop, CostParam, LqrInstance, Policy,
};
use crate::numerics::{min_eigenvalue_sym, spectral_norm, trace_product};
use crate::random::{random_theta, stream_rng, unit_direction};
use crate::riccati::{solve_dare, solve_dare_from};

fn rel_tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Weights of the potential `P_i = m_i + s·D_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialWeights {
    pub s: f64,
    /// `12/(13η²ν_Vσ_θ)`, kept for comparison.
    pub s_nominal: f64,
    /// Open interval of `s` for which `φ₁, φ₂ > 0`; empty when `lo ≥ hi`.
    pub s_interval: (f64, f64),
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    /// Coefficient of `‖K_i − K_{i−1}‖²` in `D_i`.
    pub d_policy: f64,
    /// Coefficient of `‖θ_i − θ_{i−1}‖²` in `D_i`.
    pub d_theta: f64,
}

fn phis(
    s: f64,
    eta: f64,
    lambda: f64,
    gamma: f64,
    nu: f64,
    tau_v: f64,
    nu_v: f64,
    sig: f64,
) -> (f64, f64, f64) {
    let phi1 = 1.0 / (2.0 * eta)
        - tau_v / 2.0
        - s * (eta * lambda * tau_v * tau_v + 3.0 * eta * nu_v * sig);
    let curv = s * (eta * gamma - eta * lambda * nu * nu) / 2.0;
    (
        phi1,
        curv - (1.0 / lambda + tau_v + nu) / 2.0,
        curv - (1.0 / lambda + nu) / 2.0,
    )
}

/// Chooses `s`: `2/(13η²ν_Vσ_θ)` when it makes `φ₁, φ₂` positive,
/// otherwise the midpoint of the admissible interval (or the nominal value
/// when the interval is empty).
pub fn potential_weights(
    consts: &ProblemConstants,
    eta: f64,
    lambda: f64,
) -> Result<PotentialWeights> {
    let (tau_v, nu_v) = match (consts.tau_v, consts.nu_v) {
        (Some(t), Some(n)) => (t, n),
        _ => {
            return Err(GailError::Unsupported(
                "potential needs tau_V and nu_V".into(),
            ))
        }
    };
    if !(eta > 0.0 && lambda > 0.0) {
        return Err(GailError::Contract("stepsizes must be positive".into()));
    }
    let (g, nu, sig) = (consts.gamma, consts.nu, consts.sigma_theta);
    let s_nominal = 12.0 / (13.0 * eta * eta * nu_v * sig);
    let curv = eta * g - eta * lambda * nu * nu;
    let lo = if curv > 0.0 {
        (1.0 / lambda + tau_v + nu) / curv
    } else {
        f64::INFINITY
    };
    let hi = (1.0 / eta - tau_v) / (2.0 * eta * lambda * tau_v * tau_v + 6.0 * eta * nu_v * sig);
    let s_alt = 2.0 / (13.0 * eta * eta * nu_v * sig);
    let s = if s_alt > lo && s_alt < hi {
        s_alt
    } else if lo < hi {
        0.5 * (lo + hi)
    } else {
        s_nominal
    };
    let (phi1, phi2, phi3) = phis(s, eta, lambda, g, nu, tau_v, nu_v, sig);
    Ok(PotentialWeights {
        s,
        s_nominal,
        s_interval: (lo, hi),
        phi1,
        phi2,
        phi3,
        d_policy: (1.0 + eta * nu_v * sig) / 2.0,
        d_theta: (eta / lambda - eta * g + eta * lambda * nu * nu) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub p: Vec<f64>,
    pub weights: PotentialWeights,
    /// `φ₁, φ₂, φ₃` with the nominal `s`.
    pub phis_nominal: (f64, f64, f64),
    /// Steps `i` where `P_{i+1} − P_i` exceeds the decrement bound.
    pub violations: Vec<usize>,
    /// Steps `i` where `P_{i+1} > P_i`, both with tolerance `1e-9·max(1, |P_i|)`.
    pub increases: Vec<usize>,
    pub tau_v: f64,
    pub nu_v: f64,
}

impl PotentialReport {
    pub fn phis_positive(&self) -> bool {
        self.weights.phi1 > 0.0 && self.weights.phi2 > 0.0 && self.weights.phi3 > 0.0
    }
}

/// Potential values along the trace and the per-step decrement check
/// `P_{i+1} − P_i ≤ −φ₁‖K_{i+1}−K_i‖² − φ₂‖θ_{i+1}−θ_i‖² − φ₃‖θ_i−θ_{i−1}‖²`
/// for every `i ≥ 1`.
pub fn potential_trace(
    trace: &IterateTrace,
    consts: &ProblemConstants,
    eta: f64,
    lambda: f64,
) -> Result<PotentialReport> {
    let w = potential_weights(consts, eta, lambda)?;
    let r = &trace.records;
    if r.len() < 3 {
        return Err(GailError::Contract(format!(
            "potential check needs at least 3 iterates, got {}",
            r.len()
        )));
    }
    let dk: Vec<f64> = r
        .windows(2)
        .map(|p| (&p[1].k - &p[0].k).norm_squared())
        .collect();
    let dth: Vec<f64> = r
        .windows(2)
        .map(|p| p[1].theta.distance(&p[0].theta).powi(2))
        .collect();
    let p: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let d = if i == 0 {
                0.0
            } else {
                w.d_policy * dk[i - 1] + w.d_theta * dth[i - 1]
            };
            rec.objective_m + w.s * d
        })
        .collect();
    let mut violations = Vec::new();
    let mut increases = Vec::new();
    for i in 0..p.len() - 1 {
        let tol = rel_tol(p[i]);
        if p[i + 1] > p[i] + tol {
            increases.push(i);
        }
        if i >= 1 {
            let bound = -w.phi1 * dk[i] - w.phi2 * dth[i] - w.phi3 * dth[i - 1];
            if p[i + 1] - p[i] > bound + tol {
                violations.push(i);
            }
        }
    }
    let (tau_v, nu_v) = (
        consts.tau_v.unwrap_or_default(),
        consts.nu_v.unwrap_or_default(),
    );
    Ok(PotentialReport {
        p,
        phis_nominal: phis(
            w.s_nominal,
            eta,
            lambda,
            consts.gamma,
            consts.nu,
            tau_v,
            nu_v,
            consts.sigma_theta,
        ),
        weights: w,
        violations,
        increases,
        tau_v,
        nu_v,
    })
}

/// `ζ = φ′·φ·(P₀ − P̲)` with `φ = 1/min{φ₁, φ₂}` and
/// `φ′ = max{1, 1/η², 1/λ²}`; `None` when `min{φ₁, φ₂} ≤ 0`.
pub fn zeta(
    report: &PotentialReport,
    consts: &ProblemConstants,
    eta: f64,
    lambda: f64,
) -> Option<f64> {
    let m = report.weights.phi1.min(report.weights.phi2);
    if m <= 0.0 {
        return None;
    }
    let phi_prime = 1f64.max(1.0 / (eta * eta)).max(1.0 / (lambda * lambda));
    Some(phi_prime / m * (report.p[0] - consts.objective_lower_bound()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationBoundCheck {
    pub eps: f64,
    pub gamma_eps: Option<usize>,
    pub zeta: f64,
    /// `Γ(ε)·ε ≤ ζ`; reached-or-not is judged on the trace only.
    pub holds: bool,
    /// Always true: `ζ` inherits the sampled `ν_V`.
    pub soft: bool,
}

pub fn iteration_bound_checks(
    trace: &IterateTrace,
    zeta: f64,
    eps_list: &[f64],
) -> Vec<IterationBoundCheck> {
    eps_list
        .iter()
        .map(|&eps| {
            let g = trace.gamma_eps(eps);
            IterationBoundCheck {
                eps,
                gamma_eps: g,
                zeta,
                holds: g.is_some_and(|g| g as f64 * eps <= zeta),
                soft: true,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeBound {
    Cost,
    PolicyNorm,
    Covariance,
    SpectralRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub iter: usize,
    pub bound: EnvelopeBound,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// `αF + 2M`
    pub cost_bound: f64,
    /// `(αF + 2M)/(α_R μ)`, bounds `‖K_i‖²`.
    pub policy_norm_sq_bound: f64,
    /// `(αF + 2M)/α_Q`
    pub covariance_bound: f64,
    pub max_cost: f64,
    pub max_policy_norm_sq: f64,
    pub max_covariance: f64,
    pub max_rho: f64,
    pub violations: Vec<EnvelopeViolation>,
}

impl EnvelopeReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn stability_envelope(trace: &IterateTrace, consts: &ProblemConstants) -> EnvelopeReport {
    let e = consts.envelope;
    let bx = &consts.theta_box;
    let mut rep = EnvelopeReport {
        cost_bound: e,
        policy_norm_sq_bound: e / (bx.alpha_r * consts.mu),
        covariance_bound: e / bx.alpha_q,
        max_cost: 0.0,
        max_policy_norm_sq: 0.0,
        max_covariance: 0.0,
        max_rho: 0.0,
        violations: Vec::new(),
    };
    for r in &trace.records {
        let items = [
            (EnvelopeBound::Cost, r.cost, rep.cost_bound),
            (
                EnvelopeBound::PolicyNorm,
                r.k_norm.powi(2),
                rep.policy_norm_sq_bound,
            ),
            (
                EnvelopeBound::Covariance,
                r.sigma_norm,
                rep.covariance_bound,
            ),
        ];
        for (bound, value, limit) in items {
            if !(value <= limit) {
                rep.violations.push(EnvelopeViolation {
                    iter: r.iter,
                    bound,
                    value,
                    limit,
                });
            }
        }
        if !(r.rho < 1.0) {
            rep.violations.push(EnvelopeViolation {
                iter: r.iter,
                bound: EnvelopeBound::SpectralRadius,
                value: r.rho,
                limit: 1.0,
            });
        }
        rep.max_cost = rep.max_cost.max(r.cost);
        rep.max_policy_norm_sq = rep.max_policy_norm_sq.max(r.k_norm.powi(2));
        rep.max_covariance = rep.max_covariance.max(r.sigma_norm);
        rep.max_rho = rep.max_rho.max(r.rho);
    }
    rep
}

/// Ordinary least squares `y ≈ c + slope·x`; returns `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some((slope, my - slope * mx, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub r_squared: f64,
    pub points: usize,
    /// Fit covers iterations whose running minimum of `‖L‖²` is above this.
    pub eps_pre: f64,
}

/// Log-log slope of the running minimum of `‖L_i‖²` against `N`, over
/// `N ≥ 1` while the minimum stays above `eps_pre`.
pub fn decay_fit(trace: &IterateTrace, eps_pre: f64) -> Option<DecayFit> {
    let mins = trace.min_so_far_sq();
    let (x, y): (Vec<f64>, Vec<f64>) = mins
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(_, v)| **v > eps_pre)
        .map(|(i, v)| ((i as f64).ln(), v.ln()))
        .unzip();
    let (slope, _, r2) = linear_fit(&x, &y)?;
    Some(DecayFit {
        slope,
        r_squared: r2,
        points: x.len(),
        eps_pre,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRateReport {
    pub z: Vec<f64>,
    pub a: f64,
    pub upsilon_formula: Option<f64>,
    pub upsilon_branches: Option<UpsilonReport>,
    /// Largest `Z_{i+1}/Z_i` from the onset to the noise floor.
    pub upsilon_measured: f64,
    /// `exp` of the fitted slope of `ln Z_i` over the later half of that
    /// window, where the iterates are in the asymptotic regime.
    pub fitted_ratio: f64,
    pub r_squared: f64,
    pub onset: usize,
    /// Last index with `Z_i` above the noise floor.
    pub tail_end: usize,
    pub noise_floor: f64,
}

impl LocalRateReport {
    pub fn tail_len(&self) -> usize {
        self.tail_end.saturating_sub(self.onset) + 1
    }
}

/// Relative noise floor below which `Z_i` is treated as converged.
pub const Z_FLOOR_REL: f64 = 1e-9;

/// `Z_i = ‖θ_i − θ*‖ + a·‖K_i − K*(θ_i)‖` along the trace.
pub fn z_values(
    problem: &GailProblem,
    trace: &IterateTrace,
    k_star: &Policy,
    theta_star: &CostParam,
    a: f64,
) -> Result<Vec<f64>> {
    let inst = problem.instance();
    let mut warm = k_star.clone();
    let mut z = Vec::with_capacity(trace.len());
    for r in &trace.records {
        let sol = solve_dare_from(inst, &r.theta, &warm)?;
        let kst = sol.policy();
        z.push(r.theta.distance(theta_star) + a * (&r.k - kst.gain()).norm());
        warm = kst;
    }
    Ok(z)
}

/// Contraction of `Z_i` after the onset `N`, the first index after which
/// `Z_{i+1} ≤ Z_i` persistently (up to the noise floor).
///
/// When the constants carry local moduli, `a = γ/(3τ_{K*}ν_{m*})` and the
/// predicted factor `υ` is reported; otherwise `a = 1`.
pub fn local_rate(
    problem: &GailProblem,
    trace: &IterateTrace,
    saddle: (&Policy, &CostParam),
    consts: &ProblemConstants,
    steps: StepsizeChoice,
    eps: f64,
) -> Result<LocalRateReport> {
    let last = trace
        .last()
        .ok_or_else(|| GailError::Contract("empty trace".into()))?;
    if last.prox_grad_norm.powi(2) > eps {
        return Err(GailError::Unsupported(format!(
            "local rate needs a converged trace (final ‖L‖² = {:.3e} > {eps:.3e})",
            last.prox_grad_norm.powi(2)
        )));
    }
    let ups = if consts.local.is_some() && consts.tau_v.is_some() {
        Some(upsilon_for(consts, steps.eta, steps.lambda)?)
    } else {
        None
    };
    let a = ups.map_or(1.0, |u| u.a);
    let z = z_values(problem, trace, saddle.0, saddle.1, a)?;
    let zmax = z.iter().copied().fold(0.0, f64::max);
    let floor = (Z_FLOOR_REL * zmax).max(1e-14);
    let tail_end = z.iter().rposition(|&v| v > floor).unwrap_or(0);
    let mut onset = tail_end;
    while onset > 0 && z[onset] <= z[onset - 1] && z[onset - 1] > floor {
        onset -= 1;
    }
    let ratios: Vec<f64> = (onset..tail_end).map(|i| z[i + 1] / z[i]).collect();
    let measured = ratios.iter().copied().fold(0.0, f64::max);
    let fit_start = onset + (tail_end - onset) / 2;
    let xs: Vec<f64> = (fit_start..=tail_end).map(|i| i as f64).collect();
    let ys: Vec<f64> = (fit_start..=tail_end).map(|i| z[i].ln()).collect();
    let (fitted_ratio, r2) = match linear_fit(&xs, &ys) {
        Some((slope, _, r2)) => (slope.exp(), r2),
        None => (f64::NAN, 0.0),
    };
    Ok(LocalRateReport {
        z,
        a,
        upsilon_formula: ups.map(|u| u.upsilon),
        upsilon_branches: ups,
        upsilon_measured: measured,
        fitted_ratio,
        r_squared: r2,
        onset,
        tail_end,
        noise_floor: floor,
    })
}

/// First-order optimality at a candidate saddle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleCheck {
    /// Relative gap between `Tr(Σ_K Q) + Tr(KΣ_K KᵀR)` and `⟨Σ₀, P_K⟩`.
    pub cost_formula_gap: f64,
    pub grad_k_norm: f64,
    pub theta_block_norm: f64,
}

pub fn saddle_check(problem: &GailProblem, pol: &Policy, theta: &CostParam) -> Result<SaddleCheck> {
    let ev = problem.evaluate(pol, theta)?;
    let c2 = ev.closed_loop.value_cost(problem.instance().sigma0());
    Ok(SaddleCheck {
        cost_formula_gap: (ev.cost - c2).abs() / ev.cost.abs().max(f64::MIN_POSITIVE),
        grad_k_norm: ev.grad_k.norm(),
        theta_block_norm: ev.prox.theta_block.norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub name: String,
    /// Identity (two-sided, `1e-8` relative) or one-sided inequality.
    pub identity: bool,
    /// Reported but not part of the verdict.
    pub informational: bool,
    pub checked: usize,
    pub violations: usize,
    /// Most negative normalized slack (identities: largest relative error).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteReport {
    pub trials: usize,
    pub accepted: usize,
    pub rows: Vec<LemmaRow>,
}

impl LemmaSuiteReport {
    pub fn passes(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.informational || r.violations == 0)
    }

    pub fn row(&self, name: &str) -> Option<&LemmaRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub const IDENTITY_TOL: f64 = 1e-8;
pub const SLACK_TOL: f64 = 1e-9;

const ROWS: [(&str, bool, bool); 7] = [
    ("difference_of_cost", true, false),
    ("gradient_dominance", false, false),
    ("gradient_upper_bound", false, false),
    ("gradient_upper_bound_without_factor_2", false, true),
    ("curvature_kappa1", false, false),
    ("closed_loop_kappa2", false, false),
    ("local_strong_convexity", false, false),
];

/// One measurement per row: `(value, ok)`.
type Sample = [(f64, bool); 7];

fn ineq(lhs: f64, rhs: f64) -> (f64, bool) {
    let slack = (rhs - lhs) / lhs.abs().max(rhs.abs()).max(1.0);
    (slack, slack >= -SLACK_TOL)
}

fn perturbed_stabilizing(
    rng: &mut rand_chacha::ChaCha8Rng,
    inst: &LqrInstance,
    center: &Policy,
    scale: f64,
) -> Result<Option<Policy>> {
    let (k, d) = (inst.input_dim(), inst.state_dim());
    for _ in 0..100 {
        let r = scale * rand::Rng::random::<f64>(rng);
        let cand = Policy::new(center.gain() + unit_direction(rng, k, d) * r);
        if is_stabilizing(inst, &cand)? {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

fn lemma_trial(
    inst: &LqrInstance,
    bx: &ThetaBox,
    reg: &dyn Regularizer,
    k_e: &Policy,
    seed: u64,
    j: usize,
) -> Result<Option<Sample>> {
    let (d, k) = (inst.state_dim(), inst.input_dim());
    let mut rng = stream_rng(seed, j as u64);
    let theta = random_theta(&mut rng, bx, d, k)?;
    let opt = solve_dare(inst, &theta)?;
    let kstar = opt.policy();
    let scale = 0.5 * (1.0 + kstar.gain().norm());
    let (Some(pol), Some(pol2)) = (
        perturbed_stabilizing(&mut rng, inst, &kstar, scale)?,
        perturbed_stabilizing(&mut rng, inst, &kstar, scale)?,
    ) else {
        return Ok(None);
    };
    let mu = inst.mu();
    let rmin = min_eigenvalue_sym(theta.r())?;
    let qmin = min_eigenvalue_sym(theta.q())?;
    let pg = policy_gradient(inst, &theta, &pol)?;
    let cl = &pg.closed_loop;
    let c = cl.cost(&theta, &pol);
    let cl_star = solve_closed_loop(inst, &theta, &kstar)?;
    let c_star = cl_star.cost(&theta, &kstar);
    let curv = cl.curvature(inst, &theta);
    let curv_norm = spectral_norm(&curv);
    let gnorm = pg.grad.norm();

    // difference of cost
    let cl2 = solve_closed_loop(inst, &theta, &pol2)?;
    let c2 = cl2.cost(&theta, &pol2);
    let dk = pol.gain() - pol2.gain();
    let rhs = -2.0 * trace_product(&(&cl2.sigma_k * dk.transpose()), &pg.e_k.transpose())
        + (&cl2.sigma_k * dk.transpose() * &curv * &dk).trace();
    let id_err = ((c2 - c) - rhs).abs() / c.abs().max(c2.abs());
    let diff = (id_err, id_err <= IDENTITY_TOL);

    let gap = (c - c_star).max(0.0);
    let dom = ineq(
        c - c_star,
        spectral_norm(&cl_star.sigma_k) / (mu * mu * rmin) * gnorm * gnorm,
    );
    let nominal = c / (mu.sqrt() * qmin) * (curv_norm * gap).sqrt();
    let up = ineq(gnorm, 2.0 * nominal);
    let up_nominal = ineq(gnorm, nominal);

    let consts = compute_constants(inst, &pol, bx, reg, k_e)?;
    let kappa1 = ineq(curv_norm, consts.kappa1);
    let kappa2 = ineq(1.0 + spectral_norm(&cl.t), consts.kappa2);

    // local strong convexity near K*(θ)
    let rloc = 1e-3 * (1.0 + kstar.gain().norm());
    let p1 = Policy::new(
        kstar.gain() + unit_direction(&mut rng, k, d) * (rloc * rand::Rng::random::<f64>(&mut rng)),
    );
    let p2 = Policy::new(
        kstar.gain() + unit_direction(&mut rng, k, d) * (rloc * rand::Rng::random::<f64>(&mut rng)),
    );
    let g1 = policy_gradient(inst, &theta, &p1)?;
    let c1 = g1.closed_loop.cost(&theta, &p1);
    let cp2 = cost(inst, &theta, &p2)?;
    let delta = p2.gain() - p1.gain();
    let lower = c1 + g1.grad.dot(&delta) + 0.5 * rmin * mu * delta.norm_squared();
    let sc = ineq(lower, cp2);

    Ok(Some([diff, dom, up, up_nominal, kappa1, kappa2, sc]))
}

/// Samples stabilizing `(K, θ)` with `θ` in the box and checks the
/// difference-of-cost identity, gradient dominance, the gradient upper
/// bound (with and without the factor 2 that `∇C = 2E_KΣ_K` requires), the
/// curvature bound `κ₁`, `1 + ‖A − BK‖ ≤ κ₂` and local strong convexity.
pub fn lemma_inequality_suite(
    inst: &LqrInstance,
    bx: &ThetaBox,
    reg: &dyn Regularizer,
    seed: u64,
    trials: usize,
) -> Result<LemmaSuiteReport> {
    if trials == 0 {
        return Err(GailError::Contract("trials must be at least 1".into()));
    }
    let k_e = solve_dare(inst, reg.center())?.policy();
    let samples: Vec<Option<Sample>> = (0..trials)
        .into_par_iter()
        .map(|j| lemma_trial(inst, bx, reg, &k_e, seed, j))
        .collect::<Result<_>>()?;
    let ok: Vec<Sample> = samples.into_iter().flatten().collect();
    if ok.len() * 2 < trials {
        return Err(GailError::InsufficientCoverage {
            accepted: ok.len(),
            required: trials.div_ceil(2),
        });
    }
    let rows = ROWS
        .iter()
        .enumerate()
        .map(|(idx, &(name, identity, informational))| {
            let vals = ok.iter().map(|s| s[idx]);
            let worst = if identity {
                vals.clone().map(|v| v.0).fold(0.0, f64::max)
            } else {
                vals.clone().map(|v| v.0).fold(f64::INFINITY, f64::min)
            };
            LemmaRow {
                name: name.into(),
                identity,
                informational,
                checked: ok.len(),
                violations: vals.filter(|v| !v.1).count(),
                worst,
            }
        })
        .collect();
    Ok(LemmaSuiteReport {
        trials,
        accepted: ok.len(),
        rows,
    })
}

/// Per-step checks of the one-step policy decrement
/// `C(K_{i+1};θ_i) − C(K_i;θ_i) ≤ −ησ_min(R_i)μ²/‖Σ_{K*_i}‖·(C_i − C*_i)` and the
/// cost-parameter increment
/// `C(K_{i+1};θ_{i+1}) − C(K_{i+1};θ_i) ≤ (λ/α²)C_i² + (λF/α)C_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLemmaReport {
    pub checked: usize,
    pub decrement_violations: Vec<usize>,
    pub increment_violations: Vec<usize>,
}

pub fn step_lemma_checks(
    problem: &GailProblem,
    trace: &IterateTrace,
    consts: &ProblemConstants,
    eta: f64,
    lambda: f64,
) -> Result<StepLemmaReport> {
    let inst = problem.instance();
    let mu = inst.mu();
    let r = &trace.records;
    let pairs: Vec<(bool, bool)> = (0..r.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let (cur, next) = (&r[i], &r[i + 1]);
            let Some(c_next_prev) = next.cost_prev_theta else {
                return Ok((true, true));
            };
            let opt = solve_dare(inst, &cur.theta)?;
            let kst = opt.policy();
            let cl = solve_closed_loop(inst, &cur.theta, &kst)?;
            let c_star = cl.cost(&cur.theta, &kst);
            let rmin = min_eigenvalue_sym(cur.theta.r())?;
            let dec_bound =
                -eta * rmin * mu * mu / spectral_norm(&cl.sigma_k) * (cur.cost - c_star);
            let dec = c_next_prev - cur.cost <= dec_bound + rel_tol(cur.cost);
            let c = cur.cost;
            let inc_bound =
                lambda / consts.alpha.powi(2) * c * c + lambda * consts.f / consts.alpha * c;
            let inc = next.cost - c_next_prev <= inc_bound + rel_tol(next.cost);
            Ok((dec, inc))
        })
        .collect::<Result<_>>()?;
    Ok(StepLemmaReport {
        checked: pairs.len(),
        decrement_violations: pairs
            .iter()
            .enumerate()
            .filter(|p| !p.1 .0)
            .map(|p| p.0)
            .collect(),
        increment_violations: pairs
            .iter()
            .enumerate()
            .filter(|p| !p.1 .1)
            .map(|p| p.0)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{compute_constants_for, LocalModuli};
    use crate::gail::{QuadraticPenalty, SolverConfig};
    use crate::numerics::Mat;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn scalar_problem(a: f64) -> GailProblem {
        let inst = LqrInstance::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap();
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let reg = Arc::new(QuadraticPenalty::new(1.0, theta.clone()).unwrap());
        GailProblem::from_theta_tilde(inst, &theta, ThetaBox::uniform(0.5, 2.0).unwrap(), reg)
            .unwrap()
    }

    fn with_moduli(mut c: ProblemConstants) -> ProblemConstants {
        c.tau_v = Some(1.0);
        c.nu_v = Some(1.0);
        c
    }

    #[test]
    fn stationary_trace_has_constant_potential() {
        let p = scalar_problem(1.0);
        let theta = p.regularizer().center().clone();
        let ke = p.expert().clone();
        let out = p
            .solve(
                &ke,
                &theta,
                &SolverConfig::new(0.05, 0.02, 1e-30, 1).unwrap(),
            )
            .unwrap();
        let mut trace = out.trace.clone();
        trace.records.truncate(1);
        for i in 1..4 {
            let mut r = out.trace.records[0].clone();
            r.iter = i;
            trace.records.push(r);
        }
        let c = with_moduli(compute_constants_for(&p, &ke).unwrap());
        let rep = potential_trace(&trace, &c, 0.05, 0.02).unwrap();
        assert!(rep.p.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
        assert!(rep.violations.is_empty() && rep.increases.is_empty());
    }

    #[test]
    fn potential_requires_moduli_and_three_iterates() {
        let p = scalar_problem(1.0);
        let ke = p.expert().clone();
        let theta = p.regularizer().center().clone();
        let c = compute_constants_for(&p, &ke).unwrap();
        let out = p
            .solve(
                &ke,
                &theta,
                &SolverConfig::new(0.05, 0.02, 1e-30, 1).unwrap(),
            )
            .unwrap();
        assert!(matches!(
            potential_trace(&out.trace, &c, 0.05, 0.02),
            Err(GailError::Unsupported(_))
        ));
        assert!(matches!(
            potential_trace(&out.trace, &with_moduli(c), 0.05, 0.02),
            Err(GailError::Contract(_))
        ));
    }

    #[test]
    fn weights_pick_a_valid_s_when_possible() {
        let p = scalar_problem(1.0);
        let mut c = with_moduli(compute_constants_for(&p, p.expert()).unwrap());
        c.gamma = 1e4;
        c.nu = 1e4;
        let w = potential_weights(&c, 1e-4, 1e-6).unwrap();
        assert!(w.s > w.s_interval.0 && w.s < w.s_interval.1);
        assert!(w.phi1 > 0.0 && w.phi2 > 0.0 && w.phi3 > 0.0);
    }

    #[test]
    fn initial_iterate_sits_inside_envelope() {
        let p = scalar_problem(1.0);
        let k0 = Policy::scalar(1.0);
        let theta = p.regularizer().center().clone();
        let c = compute_constants_for(&p, &k0).unwrap();
        let out = p
            .solve(
                &k0,
                &theta,
                &SolverConfig::new(0.01, 0.001, 1e-30, 1).unwrap(),
            )
            .unwrap();
        let mut trace = out.trace.clone();
        trace.records.truncate(1);
        assert!(trace.records[0].cost <= c.m + 1e-12);
        assert!(stability_envelope(&trace, &c).passes());
    }

    #[test]
    fn diverging_trace_breaks_envelope() {
        let p = scalar_problem(1.0);
        let k0 = Policy::scalar(1.0);
        let theta = p.regularizer().center().clone();
        let c = compute_constants_for(&p, &k0).unwrap();
        let out = p
            .solve(
                &k0,
                &theta,
                &SolverConfig::new(0.49, 0.001, 1e-30, 20).unwrap(),
            )
            .unwrap();
        let rep = stability_envelope(&out.trace, &c);
        assert!(!rep.passes());
    }

    #[test]
    fn local_rate_needs_convergence_and_is_zero_at_saddle() {
        let p = scalar_problem(1.0);
        let ke = p.expert().clone();
        let theta = p.regularizer().center().clone();
        let c = compute_constants_for(&p, &ke).unwrap();
        let steps = StepsizeChoice {
            eta: 0.05,
            lambda: 0.02,
        };
        let out = p
            .solve(
                &ke,
                &theta,
                &SolverConfig::new(0.05, 0.02, 1e-20, 3).unwrap(),
            )
            .unwrap();
        let rep = local_rate(&p, &out.trace, (&ke, &theta), &c, steps, 1e-20).unwrap();
        assert!(rep.z.iter().all(|z| *z < 1e-10));
        let k0 = Policy::scalar(1.0);
        let out = p
            .solve(
                &k0,
                &theta,
                &SolverConfig::new(0.05, 0.02, 1e-20, 3).unwrap(),
            )
            .unwrap();
        assert!(matches!(
            local_rate(&p, &out.trace, (&ke, &theta), &c, steps, 1e-20),
            Err(GailError::Unsupported(_))
        ));
    }

    #[test]
    fn local_rate_on_scalar_run() {
        let p = scalar_problem(1.0);
        let ke = p.expert().clone();
        let theta0 = CostParam::scalar(1.5, 0.8).unwrap();
        let out = p
            .solve(
                &Policy::scalar(1.0),
                &theta0,
                &SolverConfig::new(0.05, 0.02, 1e-14, 20000).unwrap(),
            )
            .unwrap();
        assert!(out.converged());
        let center = p.regularizer().center().clone();
        let c = compute_constants_for(&p, &Policy::scalar(1.0))
            .unwrap()
            .with_local(LocalModuli {
                tau_kstar: 1.0,
                nu_kstar: 1.0,
                nu_mstar: 2.0,
                radius: 0.0,
                accepted: 0,
            });
        let rep = local_rate(
            &p,
            &out.trace,
            (&ke, &center),
            &c,
            StepsizeChoice {
                eta: 0.05,
                lambda: 0.02,
            },
            1e-14,
        )
        .unwrap();
        assert!(rep.upsilon_measured < 1.0);
        assert!(rep.r_squared >= 0.98, "{}", rep.r_squared);
        assert!(rep.tail_len() > 10);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, c, r2) = linear_fit(&x, &y).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_difference_of_cost_closed_form() {
        // a = 0.5, b = 1, θ = (1, 1): C(k) = (1 + k²)/(1 − (0.5 − k)²)
        let inst = LqrInstance::new(
            Mat::from_element(1, 1, 0.5),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap();
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let c = |k: f64| (1.0 + k * k) / (1.0 - (0.5 - k).powi(2));
        let k2 = 0.3;
        let pg = policy_gradient(&inst, &theta, &Policy::scalar(0.0)).unwrap();
        let e = pg.e_k[(0, 0)];
        let curv = pg.closed_loop.curvature(&inst, &theta)[(0, 0)];
        let sigma2 = 1.0 / (1.0 - (0.5f64 - k2).powi(2));
        let rhs = -2.0 * sigma2 * (0.0 - k2) * e + sigma2 * k2 * k2 * curv;
        assert_abs_diff_eq!(c(k2) - c(0.0), rhs, epsilon = 1e-12);
    }

    #[test]
    fn lemma_suite_small_run() {
        let p = scalar_problem(0.5);
        let rep =
            lemma_inequality_suite(p.instance(), p.theta_box(), p.regularizer(), 5, 50).unwrap();
        assert!(rep.passes(), "{rep:?}");
        assert!(
            rep.row("gradient_upper_bound_without_factor_2")
                .unwrap()
                .violations
                > 0
        );
    }
}
