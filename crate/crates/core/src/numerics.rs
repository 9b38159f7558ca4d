//! Dense linear-algebra kernels shared by every module: norms, symmetric
//! eigen-utilities, spectral radius and the discrete Lyapunov solver.

use nalgebra::linalg::{Schur, SymmetricEigen, LU};
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{GailError, Result};

pub type Mat = DMatrix<f64>;

/// Single tuning surface for every tolerance in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    /// Max absolute asymmetry accepted for matrices that must be symmetric.
    pub symmetry_tol: f64,
    /// Relative residual bound for Lyapunov solves.
    pub lyapunov_rel_tol: f64,
    /// Relative agreement between the two cost formulas.
    pub cost_rel_tol: f64,
    /// `is_stabilizing` requires `rho < 1 - stability_margin`.
    pub stability_margin: f64,
    /// Largest state dimension solved through the Kronecker system; above it
    /// the doubling iteration is used.
    pub kronecker_max_dim: usize,
    /// Value-iteration stopping rule (relative Frobenius change).
    pub dare_step_tol: f64,
    /// Relative residual that triggers Newton refinement of the DARE solution.
    pub dare_residual_tol: f64,
    pub dare_max_iter: usize,
    pub dare_divergence_norm: f64,
    /// Relative singular-value gate for the Riccati Jacobian.
    pub condition4_rel_gate: f64,
    /// Asymmetry that `project_theta` silently symmetrizes away.
    pub projection_symmetry_tol: f64,
    pub eigen_max_iter: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            symmetry_tol: 1e-12,
            lyapunov_rel_tol: 1e-10,
            cost_rel_tol: 1e-8,
            stability_margin: 0.0,
            kronecker_max_dim: 20,
            dare_step_tol: 1e-13,
            dare_residual_tol: 1e-10,
            dare_max_iter: 100_000,
            dare_divergence_norm: 1e12,
            condition4_rel_gate: 1e-8,
            projection_symmetry_tol: 1e-9,
            eigen_max_iter: 10_000,
        }
    }
}

pub fn frob(m: &Mat) -> f64 {
    m.norm()
}

/// (M + Mᵀ)/2
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    // ⟨A, B⟩ = Tr(AᵀB)
    a.dot(b)
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn min_singular_value(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// Eigen-decomposition of a symmetric matrix (symmetrized first).
pub fn sym_eigen(m: &Mat, max_iter: usize) -> Result<SymmetricEigen<f64, Dyn>> {
    SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, max_iter).ok_or_else(|| {
        GailError::Numerical("symmetric eigen-decomposition did not converge".into())
    })
}

pub fn min_eigenvalue_sym(m: &Mat) -> Result<f64> {
    Ok(sym_eigen(m, NumericsConfig::default().eigen_max_iter)?
        .eigenvalues
        .min())
}

pub fn max_eigenvalue_sym(m: &Mat) -> Result<f64> {
    Ok(sym_eigen(m, NumericsConfig::default().eigen_max_iter)?
        .eigenvalues
        .max())
}

/// Largest complex modulus among the eigenvalues of a square matrix.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if !m.is_square() {
        return Err(GailError::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GailError::Numerical("non-finite entry in matrix".into()));
    }
    let schur = Schur::try_new(
        m.clone(),
        f64::EPSILON,
        NumericsConfig::default().eigen_max_iter,
    )
    .ok_or_else(|| GailError::Numerical("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Solver for the discrete Lyapunov equation `X = C + T X Tᵀ`.
///
/// The Kronecker system `(I - T⊗T) vec X = vec C` is factorized once and
/// reused for every right-hand side; above `kronecker_max_dim` the squaring
/// (Smith doubling) iteration is used instead. Both paths finish with
/// residual-driven refinement and must meet `lyapunov_rel_tol`.
pub struct Lyapunov {
    t: Mat,
    lu: Option<LU<f64, Dyn, Dyn>>,
    rel_tol: f64,
}

impl Lyapunov {
    pub fn new(t: &Mat, cfg: &NumericsConfig) -> Result<Self> {
        if !t.is_square() {
            return Err(GailError::Dimension(
                "Lyapunov operator must be square".into(),
            ));
        }
        let n = t.nrows();
        let lu = if n <= cfg.kronecker_max_dim {
            let kron = t.kronecker(t);
            let sys = Mat::identity(n * n, n * n) - kron;
            Some(sys.lu())
        } else {
            None
        };
        Ok(Lyapunov {
            t: t.clone(),
            lu,
            rel_tol: cfg.lyapunov_rel_tol,
        })
    }

    /// `C + T X Tᵀ − X`
    fn residual(&self, rhs: &Mat, x: &Mat) -> Mat {
        rhs + &self.t * x * self.t.transpose() - x
    }

    fn raw_solve(&self, rhs: &Mat) -> Result<Mat> {
        let n = self.t.nrows();
        match &self.lu {
            Some(lu) => {
                let b = DVector::from_column_slice(rhs.as_slice());
                let v = lu.solve(&b).ok_or_else(|| {
                    GailError::Numerical("singular Kronecker system in Lyapunov solve".into())
                })?;
                Ok(Mat::from_column_slice(n, n, v.as_slice()))
            }
            None => {
                let mut x = rhs.clone();
                let mut power = self.t.clone();
                for _ in 0..64 {
                    let inc = &power * &x * power.transpose();
                    x += &inc;
                    if inc.norm() <= f64::EPSILON * x.norm() {
                        return Ok(x);
                    }
                    power = &power * &power;
                    if !power.norm().is_finite() {
                        break;
                    }
                }
                Err(GailError::Numerical(
                    "doubling iteration did not converge".into(),
                ))
            }
        }
    }

    /// Solves `X = rhs + T X Tᵀ`.
    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        let mut x = self.raw_solve(rhs)?;
        for _ in 0..3 {
            let res = self.residual(rhs, &x);
            let scale = x.norm().max(1.0);
            if !res.norm().is_finite() {
                break;
            }
            if res.norm() <= self.rel_tol * scale {
                return Ok(x);
            }
            x += self.raw_solve(&res)?;
        }
        let res = self.residual(rhs, &x).norm();
        if res <= self.rel_tol * x.norm().max(1.0) {
            Ok(x)
        } else {
            Err(GailError::Numerical(format!(
                "Lyapunov residual {res:.3e} exceeds tolerance"
            )))
        }
    }

    /// Solves and symmetrizes; for symmetric right-hand sides.
    pub fn solve_sym(&self, rhs: &Mat) -> Result<Mat> {
        self.solve(rhs).map(|x| symmetrize(&x))
    }
}

/// One-shot `X = rhs + T X Tᵀ`.
pub fn solve_discrete_lyapunov(t: &Mat, rhs: &Mat, cfg: &NumericsConfig) -> Result<Mat> {
    Lyapunov::new(t, cfg)?.solve(rhs)
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn mat_rel_err(a: &Mat, b: &Mat, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

/// Row-major nested vectors; the on-disk matrix layout.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(GailError::Dimension(
            "matrix must have at least one row".into(),
        ));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(GailError::Dimension("ragged or empty matrix rows".into()));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter storing a matrix as row-major nested arrays.
pub mod mat_rows {
    use super::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
