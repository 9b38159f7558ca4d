//! Exact LQR evaluation: stability, state covariance, cost-to-go, cost and
//! the analytic policy gradient.

use serde::{Deserialize, Serialize};

use crate::error::{GailError, Result};
use crate::numerics::{
    mat_rows, max_asymmetry, min_eigenvalue_sym, spectral_radius, symmetrize, trace_product,
    Lyapunov, Mat, NumericsConfig,
};

/// Dynamics `x_{t+1} = A x_t + B u_t` with initial second moment `Σ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrInstance {
    a: Mat,
    b: Mat,
    sigma0: Mat,
    mu: f64,
    numerics: NumericsConfig,
}

impl LqrInstance {
    pub fn new(a: Mat, b: Mat, sigma0: Mat) -> Result<Self> {
        Self::with_numerics(a, b, sigma0, NumericsConfig::default())
    }

    pub fn with_numerics(a: Mat, b: Mat, sigma0: Mat, numerics: NumericsConfig) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || !a.is_square() {
            return Err(GailError::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != d || b.ncols() == 0 {
            return Err(GailError::Dimension(format!(
                "B must be {d}xk with k >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if sigma0.nrows() != d || sigma0.ncols() != d {
            return Err(GailError::Dimension(format!(
                "Sigma0 must be {d}x{d}, got {}x{}",
                sigma0.nrows(),
                sigma0.ncols()
            )));
        }
        let asym = max_asymmetry(&sigma0);
        if asym > numerics.symmetry_tol {
            return Err(GailError::Contract(format!(
                "Sigma0 is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let mu = min_eigenvalue_sym(&sigma0)?;
        if mu <= 0.0 {
            return Err(GailError::Contract(format!(
                "Sigma0 must be positive definite (min eigenvalue {mu:.3e})"
            )));
        }
        Ok(LqrInstance {
            a,
            b,
            sigma0,
            mu,
            numerics,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn sigma0(&self) -> &Mat {
        &self.sigma0
    }

    /// `σ_min(Σ₀)`
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn numerics(&self) -> &NumericsConfig {
        &self.numerics
    }

    pub fn set_numerics(&mut self, numerics: NumericsConfig) {
        self.numerics = numerics;
    }

    /// `A − B K`
    pub fn closed_loop_matrix(&self, pol: &Policy) -> Result<Mat> {
        self.check_policy(pol)?;
        Ok(&self.a - &self.b * pol.gain())
    }

    pub(crate) fn check_policy(&self, pol: &Policy) -> Result<()> {
        let k = pol.gain();
        if k.nrows() != self.input_dim() || k.ncols() != self.state_dim() {
            return Err(GailError::Dimension(format!(
                "policy must be {}x{}, got {}x{}",
                self.input_dim(),
                self.state_dim(),
                k.nrows(),
                k.ncols()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_theta(&self, theta: &CostParam) -> Result<()> {
        let (d, k) = (self.state_dim(), self.input_dim());
        if theta.q().nrows() != d || theta.r().nrows() != k {
            return Err(GailError::Dimension(format!(
                "cost parameter must be ({d}x{d}, {k}x{k}), got ({}x{}, {}x{})",
                theta.q().nrows(),
                theta.q().ncols(),
                theta.r().nrows(),
                theta.r().ncols()
            )));
        }
        Ok(())
    }
}

/// Cost parameter `θ = (Q, R)`, both symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCostParam")]
pub struct CostParam {
    #[serde(with = "mat_rows")]
    q: Mat,
    #[serde(with = "mat_rows")]
    r: Mat,
}

#[derive(Deserialize)]
struct RawCostParam {
    #[serde(with = "mat_rows")]
    q: Mat,
    #[serde(with = "mat_rows")]
    r: Mat,
}

impl TryFrom<RawCostParam> for CostParam {
    type Error = GailError;

    fn try_from(raw: RawCostParam) -> Result<Self> {
        CostParam::new(raw.q, raw.r)
    }
}

impl CostParam {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        Self::with_tolerance(q, r, NumericsConfig::default().symmetry_tol)
    }

    pub fn with_tolerance(q: Mat, r: Mat, symmetry_tol: f64) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !m.is_square() || m.nrows() == 0 {
                return Err(GailError::Dimension(format!(
                    "{name} must be square and non-empty"
                )));
            }
            let asym = max_asymmetry(m);
            if asym > symmetry_tol {
                return Err(GailError::Contract(format!(
                    "{name} is not symmetric (max asymmetry {asym:.3e})"
                )));
            }
            let lo = min_eigenvalue_sym(m)?;
            if lo <= 0.0 {
                return Err(GailError::Contract(format!(
                    "{name} must be positive definite (min eigenvalue {lo:.3e})"
                )));
            }
        }
        Ok(CostParam { q, r })
    }

    /// Scalar convenience constructor for 1×1 problems.
    pub fn scalar(q: f64, r: f64) -> Result<Self> {
        Self::new(Mat::from_element(1, 1, q), Mat::from_element(1, 1, r))
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    /// `(‖ΔQ‖²_F + ‖ΔR‖²_F)^{1/2}`
    pub fn distance(&self, other: &CostParam) -> f64 {
        ((&self.q - &other.q).norm_squared() + (&self.r - &other.r).norm_squared()).sqrt()
    }
}

/// Linear state feedback `u = −K x`, `K` is `k×d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(#[serde(with = "mat_rows")] Mat);

impl Policy {
    pub fn new(k: Mat) -> Self {
        Policy(k)
    }

    pub fn scalar(k: f64) -> Self {
        Policy(Mat::from_element(1, 1, k))
    }

    pub fn zeros(input_dim: usize, state_dim: usize) -> Self {
        Policy(Mat::zeros(input_dim, state_dim))
    }

    pub fn gain(&self) -> &Mat {
        &self.0
    }

    pub fn into_gain(self) -> Mat {
        self.0
    }

    pub fn distance(&self, other: &Policy) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

/// Closed-loop quantities of a stabilizing policy under a cost parameter.
#[derive(Debug, Clone)]
pub struct ClosedLoopSolution {
    /// `A − BK`
    pub t: Mat,
    /// `Σ_K = Σ₀ + T Σ_K Tᵀ`
    pub sigma_k: Mat,
    /// `P_K = Q + KᵀRK + Tᵀ P_K T`
    pub p_k: Mat,
    pub rho: f64,
}

impl ClosedLoopSolution {
    /// `Tr(Σ_K Q) + Tr(K Σ_K Kᵀ R)`
    pub fn cost(&self, theta: &CostParam, pol: &Policy) -> f64 {
        let k = pol.gain();
        trace_product(&self.sigma_k, theta.q())
            + trace_product(&(k * &self.sigma_k * k.transpose()), theta.r())
    }

    /// `⟨Σ₀, P_K⟩`, the value-function form of the same cost.
    pub fn value_cost(&self, sigma0: &Mat) -> f64 {
        trace_product(sigma0, &self.p_k)
    }

    /// `E_K = (R + BᵀP_K B)K − BᵀP_K A`
    pub fn natural_gradient(&self, inst: &LqrInstance, theta: &CostParam, pol: &Policy) -> Mat {
        let bt_p = inst.b().transpose() * &self.p_k;
        (theta.r() + &bt_p * inst.b()) * pol.gain() - bt_p * inst.a()
    }

    /// `R + BᵀP_K B`
    pub fn curvature(&self, inst: &LqrInstance, theta: &CostParam) -> Mat {
        theta.r() + inst.b().transpose() * &self.p_k * inst.b()
    }
}

/// Analytic gradient `∇_K C = 2 E_K Σ_K` together with its by-products.
#[derive(Debug, Clone)]
pub struct PolicyGradient {
    pub grad: Mat,
    pub e_k: Mat,
    pub closed_loop: ClosedLoopSolution,
}

pub fn is_stabilizing(inst: &LqrInstance, pol: &Policy) -> Result<bool> {
    is_stabilizing_with_margin(inst, pol, inst.numerics().stability_margin)
}

/// `ρ(A − BK) < 1 − margin`
pub fn is_stabilizing_with_margin(inst: &LqrInstance, pol: &Policy, margin: f64) -> Result<bool> {
    let t = inst.closed_loop_matrix(pol)?;
    Ok(spectral_radius(&t)? < 1.0 - margin)
}

fn stable_closed_loop(inst: &LqrInstance, pol: &Policy, which: &str) -> Result<(Mat, f64)> {
    let t = inst.closed_loop_matrix(pol)?;
    let rho = spectral_radius(&t)?;
    if rho >= 1.0 - inst.numerics().stability_margin {
        return Err(GailError::unstable(which, rho));
    }
    Ok((t, rho))
}

/// `Σ_K` alone; independent of the cost parameter.
pub fn state_covariance(inst: &LqrInstance, pol: &Policy) -> Result<Mat> {
    let (t, _) = stable_closed_loop(inst, pol, "given")?;
    Lyapunov::new(&t, inst.numerics())?.solve_sym(inst.sigma0())
}

/// `(Σ_K, K Σ_K Kᵀ)`: the occupancy blocks that pair linearly with `(Q, R)`.
pub fn occupancy(inst: &LqrInstance, pol: &Policy) -> Result<(Mat, Mat)> {
    let sigma = state_covariance(inst, pol)?;
    let k = pol.gain();
    let ksk = symmetrize(&(k * &sigma * k.transpose()));
    Ok((sigma, ksk))
}

pub fn solve_closed_loop(
    inst: &LqrInstance,
    theta: &CostParam,
    pol: &Policy,
) -> Result<ClosedLoopSolution> {
    solve_closed_loop_with_sigma(inst, theta, pol, None)
}

/// Like [`solve_closed_loop`], reusing a previously computed `Σ_K`.
pub(crate) fn solve_closed_loop_with_sigma(
    inst: &LqrInstance,
    theta: &CostParam,
    pol: &Policy,
    sigma: Option<&Mat>,
) -> Result<ClosedLoopSolution> {
    inst.check_theta(theta)?;
    let (t, rho) = stable_closed_loop(inst, pol, "given")?;
    let k = pol.gain();
    let sigma_k = match sigma {
        Some(s) => s.clone(),
        None => Lyapunov::new(&t, inst.numerics())?.solve_sym(inst.sigma0())?,
    };
    let stage = theta.q() + k.transpose() * theta.r() * k;
    let p_k = Lyapunov::new(&t.transpose(), inst.numerics())?.solve_sym(&stage)?;
    Ok(ClosedLoopSolution {
        t,
        sigma_k,
        p_k,
        rho,
    })
}

/// `C(K; Q, R)`
pub fn cost(inst: &LqrInstance, theta: &CostParam, pol: &Policy) -> Result<f64> {
    inst.check_theta(theta)?;
    let (sigma, ksk) = occupancy(inst, pol)?;
    Ok(trace_product(&sigma, theta.q()) + trace_product(&ksk, theta.r()))
}

pub fn policy_gradient(
    inst: &LqrInstance,
    theta: &CostParam,
    pol: &Policy,
) -> Result<PolicyGradient> {
    let closed_loop = solve_closed_loop(inst, theta, pol)?;
    Ok(gradient_from(inst, theta, pol, closed_loop))
}

pub(crate) fn gradient_from(
    inst: &LqrInstance,
    theta: &CostParam,
    pol: &Policy,
    closed_loop: ClosedLoopSolution,
) -> PolicyGradient {
    let e_k = closed_loop.natural_gradient(inst, theta, pol);
    let grad = &e_k * &closed_loop.sigma_k * 2.0;
    PolicyGradient {
        grad,
        e_k,
        closed_loop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(a: f64, b: f64) -> LqrInstance {
        LqrInstance::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn stabilizing_examples() {
        assert!(is_stabilizing(&scalar(0.5, 1.0), &Policy::scalar(0.0)).unwrap());
        assert!(!is_stabilizing(&scalar(2.0, 1.0), &Policy::scalar(0.5)).unwrap());
        assert!(is_stabilizing(&scalar(2.0, 1.0), &Policy::scalar(1.5)).unwrap());
    }

    #[test]
    fn margin_tightens_stability() {
        let inst = scalar(0.5, 1.0);
        assert!(!is_stabilizing_with_margin(&inst, &Policy::scalar(0.0), 0.6).unwrap());
    }

    #[test]
    fn scalar_closed_loop_matches_geometric_series() {
        let inst = scalar(0.5, 1.0);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let cl = solve_closed_loop(&inst, &theta, &Policy::scalar(0.0)).unwrap();
        assert_abs_diff_eq!(cl.sigma_k[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cl.p_k[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            cost(&inst, &theta, &Policy::scalar(0.0)).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_closed_loop() {
        // B K = A  =>  T = 0
        let a = Mat::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]);
        let b = Mat::identity(2, 2);
        let s0 = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inst = LqrInstance::new(a.clone(), b, s0.clone()).unwrap();
        let theta = CostParam::new(Mat::identity(2, 2) * 2.0, Mat::identity(2, 2)).unwrap();
        let pol = Policy::new(a.clone());
        let cl = solve_closed_loop(&inst, &theta, &pol).unwrap();
        assert!((&cl.sigma_k - &s0).norm() < 1e-14);
        let expected_p = theta.q() + a.transpose() * theta.r() * &a;
        assert!((&cl.p_k - expected_p).norm() < 1e-14);
        let expected_cost =
            trace_product(&s0, theta.q()) + trace_product(&(&a * &s0 * a.transpose()), theta.r());
        assert_abs_diff_eq!(
            cost(&inst, &theta, &pol).unwrap(),
            expected_cost,
            epsilon = 1e-12
        );
    }

    #[test]
    fn decoupled_diagonal_cost() {
        let inst = LqrInstance::new(
            Mat::identity(2, 2) * 0.5,
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let theta = CostParam::new(Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(
            cost(&inst, &theta, &Policy::zeros(2, 2)).unwrap(),
            8.0 / 3.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn scalar_gradient() {
        // E = −p a b = −2/3, Σ = 4/3, ∇ = 2EΣ = −16/9
        let inst = scalar(0.5, 1.0);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        let g = policy_gradient(&inst, &theta, &Policy::scalar(0.0)).unwrap();
        assert_abs_diff_eq!(g.e_k[(0, 0)], -2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.grad[(0, 0)], -16.0 / 9.0, epsilon = 1e-13);
    }

    #[test]
    fn unstable_policy_reports_rho() {
        let inst = scalar(2.0, 1.0);
        let theta = CostParam::scalar(1.0, 1.0).unwrap();
        match solve_closed_loop(&inst, &theta, &Policy::scalar(0.5)) {
            Err(GailError::Unstable { rho, .. }) => assert_abs_diff_eq!(rho, 1.5, epsilon = 1e-14),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn instance_validation() {
        let bad = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            LqrInstance::new(Mat::identity(2, 2), Mat::identity(2, 1), bad),
            Err(GailError::Contract(_))
        ));
        assert!(matches!(
            LqrInstance::new(
                Mat::identity(2, 2),
                Mat::identity(3, 1),
                Mat::identity(2, 2)
            ),
            Err(GailError::Dimension(_))
        ));
        let inst = LqrInstance::new(
            Mat::identity(2, 2),
            Mat::identity(2, 1),
            Mat::identity(2, 2) * 3.0,
        )
        .unwrap();
        assert_abs_diff_eq!(inst.mu(), 3.0, epsilon = 1e-14);
        assert!(matches!(
            is_stabilizing(&inst, &Policy::zeros(2, 2)),
            Err(GailError::Dimension(_))
        ));
    }

    #[test]
    fn cost_param_rejects_indefinite() {
        assert!(CostParam::scalar(-1.0, 1.0).is_err());
        assert!(CostParam::scalar(1.0, 0.0).is_err());
    }
}
