//! The feasible set of cost parameters, projection onto it, and the
//! regularizer on the cost player.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{GailError, Result};
use crate::lqr::CostParam;
use crate::numerics::{max_asymmetry, sym_eigen, symmetrize, Mat, NumericsConfig};

/// `{(Q, R) : α_Q I ⪯ Q ⪯ β_Q I, α_R I ⪯ R ⪯ β_R I}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct ThetaBox {
    pub alpha_q: f64,
    pub beta_q: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
}

#[derive(Deserialize)]
struct RawBox {
    alpha_q: f64,
    beta_q: f64,
    alpha_r: f64,
    beta_r: f64,
}

impl TryFrom<RawBox> for ThetaBox {
    type Error = GailError;

    fn try_from(r: RawBox) -> Result<Self> {
        ThetaBox::new(r.alpha_q, r.beta_q, r.alpha_r, r.beta_r)
    }
}

impl ThetaBox {
    pub fn new(alpha_q: f64, beta_q: f64, alpha_r: f64, beta_r: f64) -> Result<Self> {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= hi && hi.is_finite();
        if !ok(alpha_q, beta_q) || !ok(alpha_r, beta_r) {
            return Err(GailError::Contract(format!(
                "box needs 0 < alpha <= beta per block, got Q [{alpha_q}, {beta_q}], R [{alpha_r}, {beta_r}]"
            )));
        }
        Ok(ThetaBox {
            alpha_q,
            beta_q,
            alpha_r,
            beta_r,
        })
    }

    /// Same interval for both blocks.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, lo, hi)
    }

    /// Box of half-width `w` (relative) around the eigenvalues of `center`:
    /// `[(1−w)·λ_min, (1+w)·λ_max]` per block.
    pub fn around(center: &CostParam, w: f64) -> Result<Self> {
        let cfg = NumericsConfig::default();
        let eq = sym_eigen(center.q(), cfg.eigen_max_iter)?.eigenvalues;
        let er = sym_eigen(center.r(), cfg.eigen_max_iter)?.eigenvalues;
        Self::new(
            (1.0 - w) * eq.min(),
            (1.0 + w) * eq.max(),
            (1.0 - w) * er.min(),
            (1.0 + w) * er.max(),
        )
    }

    /// `α = min{α_Q, α_R}`
    pub fn alpha(&self) -> f64 {
        self.alpha_q.min(self.alpha_r)
    }

    /// `sup_Θ (‖Q‖²_F + ‖R‖²_F)^{1/2} = (d β_Q² + k β_R²)^{1/2}`
    pub fn sigma_theta(&self, d: usize, k: usize) -> f64 {
        (d as f64 * self.beta_q.powi(2) + k as f64 * self.beta_r.powi(2)).sqrt()
    }

    /// Eigenvalues of both blocks inside their intervals, up to `tol`.
    pub fn contains(&self, theta: &CostParam, tol: f64) -> bool {
        let cfg = NumericsConfig::default();
        let inside = |m: &Mat, lo: f64, hi: f64| match sym_eigen(m, cfg.eigen_max_iter) {
            Ok(e) => e.eigenvalues.min() >= lo - tol && e.eigenvalues.max() <= hi + tol,
            Err(_) => false,
        };
        inside(theta.q(), self.alpha_q, self.beta_q) && inside(theta.r(), self.alpha_r, self.beta_r)
    }
}

/// A `(d×d, k×k)` pair: raw cost-parameter steps and θ-gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPair {
    #[serde(with = "crate::numerics::mat_rows")]
    pub q: Mat,
    #[serde(with = "crate::numerics::mat_rows")]
    pub r: Mat,
}

impl MatrixPair {
    pub fn new(q: Mat, r: Mat) -> Self {
        MatrixPair { q, r }
    }

    pub fn zeros(d: usize, k: usize) -> Self {
        MatrixPair::new(Mat::zeros(d, d), Mat::zeros(k, k))
    }

    pub fn from_theta(theta: &CostParam) -> Self {
        MatrixPair::new(theta.q().clone(), theta.r().clone())
    }

    pub fn norm_squared(&self) -> f64 {
        self.q.norm_squared() + self.r.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `⟨self, other⟩` summed over both blocks.
    pub fn dot(&self, other: &MatrixPair) -> f64 {
        self.q.dot(&other.q) + self.r.dot(&other.r)
    }
}

impl Add for &MatrixPair {
    type Output = MatrixPair;
    fn add(self, o: &MatrixPair) -> MatrixPair {
        MatrixPair::new(&self.q + &o.q, &self.r + &o.r)
    }
}

impl Sub for &MatrixPair {
    type Output = MatrixPair;
    fn sub(self, o: &MatrixPair) -> MatrixPair {
        MatrixPair::new(&self.q - &o.q, &self.r - &o.r)
    }
}

impl Mul<f64> for &MatrixPair {
    type Output = MatrixPair;
    fn mul(self, s: f64) -> MatrixPair {
        MatrixPair::new(&self.q * s, &self.r * s)
    }
}

fn clip_block(m: &Mat, lo: f64, hi: f64, cfg: &NumericsConfig, name: &str) -> Result<Mat> {
    let asym = max_asymmetry(m);
    if asym > cfg.projection_symmetry_tol {
        return Err(GailError::Contract(format!(
            "{name} block is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let mut eig = sym_eigen(m, cfg.eigen_max_iter)?;
    eig.eigenvalues.apply(|v| *v = v.clamp(lo, hi));
    Ok(symmetrize(&eig.recompose()))
}

/// Frobenius projection onto the box: eigenvalues of each block clipped to
/// its interval.
pub fn project_theta(raw: &MatrixPair, bx: &ThetaBox) -> Result<CostParam> {
    project_theta_with(raw, bx, &NumericsConfig::default())
}

pub fn project_theta_with(
    raw: &MatrixPair,
    bx: &ThetaBox,
    cfg: &NumericsConfig,
) -> Result<CostParam> {
    let q = clip_block(&raw.q, bx.alpha_q, bx.beta_q, cfg, "Q")?;
    let r = clip_block(&raw.r, bx.alpha_r, bx.beta_r, cfg, "R")?;
    // Clipped eigenvalues are ≥ α > 0, so only roundoff asymmetry remains.
    CostParam::with_tolerance(q, r, f64::INFINITY)
}

/// Strongly convex, smooth penalty `ψ(θ)` subtracted from the objective.
pub trait Regularizer: Send + Sync + std::fmt::Debug {
    fn value(&self, theta: &CostParam) -> f64;

    fn gradient(&self, theta: &CostParam) -> MatrixPair;

    /// Strong-convexity modulus.
    fn strong_convexity(&self) -> f64;

    /// Smoothness modulus (Lipschitz constant of the gradient).
    fn smoothness(&self) -> f64;

    /// `(sup_Θ ‖∇_Q ψ‖_F, sup_Θ ‖∇_R ψ‖_F)`.
    fn sup_gradient_norms(&self, bx: &ThetaBox) -> Result<(f64, f64)>;

    /// `sup_Θ ψ`, used to bound the objective from below.
    fn sup_value(&self, bx: &ThetaBox) -> Result<f64>;

    /// Reference point used for distances in traces.
    fn center(&self) -> &CostParam;
}

/// `ψ(Q, R) = γ (‖Q − Q̄‖²_F + ‖R − R̄‖²_F)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticPenalty {
    pub gamma: f64,
    pub center: CostParam,
}

impl QuadraticPenalty {
    pub fn new(gamma: f64, center: CostParam) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(GailError::Contract(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(QuadraticPenalty { gamma, center })
    }

    /// Center must lie in the box.
    pub fn validate_in(&self, bx: &ThetaBox) -> Result<()> {
        if !bx.contains(&self.center, 1e-12) {
            return Err(GailError::Contract(
                "regularizer center lies outside the box".into(),
            ));
        }
        Ok(())
    }
}

/// `sup {‖M − C‖_F : lo·I ⪯ M ⪯ hi·I}`, attained at a corner sharing the
/// eigenvectors of `C` with each eigenvalue pushed to the far endpoint.
pub fn farthest_distance(c: &Mat, lo: f64, hi: f64) -> Result<f64> {
    let eig = sym_eigen(c, NumericsConfig::default().eigen_max_iter)?;
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&v| (hi - v).max(v - lo).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt())
}

impl Regularizer for QuadraticPenalty {
    fn value(&self, theta: &CostParam) -> f64 {
        self.gamma
            * ((theta.q() - self.center.q()).norm_squared()
                + (theta.r() - self.center.r()).norm_squared())
    }

    fn gradient(&self, theta: &CostParam) -> MatrixPair {
        let s = 2.0 * self.gamma;
        MatrixPair::new(
            (theta.q() - self.center.q()) * s,
            (theta.r() - self.center.r()) * s,
        )
    }

    fn strong_convexity(&self) -> f64 {
        2.0 * self.gamma
    }

    fn smoothness(&self) -> f64 {
        2.0 * self.gamma
    }

    fn sup_gradient_norms(&self, bx: &ThetaBox) -> Result<(f64, f64)> {
        let s = 2.0 * self.gamma;
        Ok((
            s * farthest_distance(self.center.q(), bx.alpha_q, bx.beta_q)?,
            s * farthest_distance(self.center.r(), bx.alpha_r, bx.beta_r)?,
        ))
    }

    fn sup_value(&self, bx: &ThetaBox) -> Result<f64> {
        let dq = farthest_distance(self.center.q(), bx.alpha_q, bx.beta_q)?;
        let dr = farthest_distance(self.center.r(), bx.alpha_r, bx.beta_r)?;
        Ok(self.gamma * (dq * dq + dr * dr))
    }

    fn center(&self) -> &CostParam {
        &self.center
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn projection_examples() {
        let bx = ThetaBox::uniform(0.5, 2.0).unwrap();
        let inside = MatrixPair::new(Mat::from_element(1, 1, 1.3), Mat::from_element(1, 1, 0.7));
        let p = project_theta(&inside, &bx).unwrap();
        assert_abs_diff_eq!(p.q()[(0, 0)], 1.3, epsilon = 1e-15);
        assert_abs_diff_eq!(p.r()[(0, 0)], 0.7, epsilon = 1e-15);

        let out = MatrixPair::new(Mat::from_element(1, 1, 10.0), Mat::from_element(1, 1, 1.0));
        assert_abs_diff_eq!(
            project_theta(&out, &bx).unwrap().q()[(0, 0)],
            2.0,
            epsilon = 1e-15
        );

        let d2 = MatrixPair::new(diag(&[0.1, 5.0]), Mat::identity(1, 1));
        let p = project_theta(&d2, &bx).unwrap();
        assert!((p.q() - diag(&[0.5, 2.0])).norm() < 1e-14);
    }

    #[test]
    fn projection_symmetrizes_small_asymmetry_and_rejects_large() {
        let bx = ThetaBox::uniform(0.5, 2.0).unwrap();
        let mut q = Mat::identity(2, 2);
        q[(0, 1)] = 1e-10;
        assert!(project_theta(&MatrixPair::new(q.clone(), Mat::identity(1, 1)), &bx).is_ok());
        q[(0, 1)] = 1e-3;
        assert!(matches!(
            project_theta(&MatrixPair::new(q, Mat::identity(1, 1)), &bx),
            Err(GailError::Contract(_))
        ));
    }

    #[test]
    fn sigma_theta_and_alpha() {
        let bx = ThetaBox::new(0.5, 2.0, 0.25, 3.0).unwrap();
        assert_abs_diff_eq!(bx.alpha(), 0.25);
        assert_abs_diff_eq!(
            bx.sigma_theta(2, 1),
            (2.0 * 4.0 + 9.0f64).sqrt(),
            epsilon = 1e-15
        );
        assert!(ThetaBox::new(1.0, 0.5, 1.0, 1.0).is_err());
        assert!(ThetaBox::new(0.0, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn quadratic_penalty_moduli_and_sup() {
        let center = CostParam::new(diag(&[1.0, 1.5]), Mat::from_element(1, 1, 1.0)).unwrap();
        let reg = QuadraticPenalty::new(3.0, center.clone()).unwrap();
        assert_eq!(reg.strong_convexity(), 6.0);
        assert_eq!(reg.smoothness(), 6.0);
        assert_eq!(reg.value(&center), 0.0);
        let bx = ThetaBox::uniform(0.5, 2.0).unwrap();
        let (gq, gr) = reg.sup_gradient_norms(&bx).unwrap();
        // far endpoints: 1.0 → 2.0 (1.0), 1.5 → 0.5 (1.0); R: 1.0 → 2.0
        assert_abs_diff_eq!(gq, 6.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(gr, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reg.sup_value(&bx).unwrap(), 3.0 * 3.0, epsilon = 1e-12);
    }
}
