//! Seeded random instances, policies and cost parameters.
//!
//! Every draw comes from a ChaCha8 stream keyed by `(seed, stream)`, so a
//! sample's randomness depends only on its own index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{GailError, Result};
use crate::gail::ThetaBox;
use crate::lqr::{is_stabilizing, CostParam, LqrInstance, Policy};
use crate::numerics::{spectral_radius, symmetrize, Mat};
use crate::riccati::solve_dare;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Gaussian direction normalized to unit Frobenius norm.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    loop {
        let g = gaussian_matrix(rng, rows, cols);
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Symmetric direction with unit Frobenius norm.
pub fn unit_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    loop {
        let g = symmetrize(&gaussian_matrix(rng, n, n));
        let s = g.norm();
        if s > 1e-12 {
            return g / s;
        }
    }
}

/// Haar-like random orthogonal matrix from the QR factor of a Gaussian.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let qr = gaussian_matrix(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric matrix with eigenvalues uniform in `[lo, hi]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Mat {
    let u = random_orthogonal(rng, n);
    let eig = Mat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        if hi > lo {
            rng.sample(Uniform::new_inclusive(lo, hi).expect("lo < hi"))
        } else {
            lo
        }
    }));
    symmetrize(&(&u * eig * u.transpose()))
}

/// Cost parameter drawn inside the box.
pub fn random_theta<R: Rng + ?Sized>(
    rng: &mut R,
    bx: &ThetaBox,
    d: usize,
    k: usize,
) -> Result<CostParam> {
    CostParam::with_tolerance(
        random_spd(rng, d, bx.alpha_q, bx.beta_q),
        random_spd(rng, k, bx.alpha_r, bx.beta_r),
        f64::INFINITY,
    )
}

/// Random instance: `A` Gaussian rescaled to spectral radius `rho_target`,
/// `B` standard Gaussian, `Σ₀ = I + WWᵀ/d` so that `σ_min(Σ₀) ≥ 1`.
pub fn generate_instance(d: usize, k: usize, rho_target: f64, seed: u64) -> Result<LqrInstance> {
    if d == 0 || k == 0 {
        return Err(GailError::Config("d and k must be at least 1".into()));
    }
    if !(rho_target > 0.0 && rho_target < 1.5) {
        return Err(GailError::Config(format!(
            "spectral-radius target must lie in (0, 1.5), got {rho_target}"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let a = loop {
        let g = gaussian_matrix(&mut rng, d, d);
        let rho = spectral_radius(&g)?;
        if rho > 1e-6 {
            break g * (rho_target / rho);
        }
    };
    let b = gaussian_matrix(&mut rng, d, k);
    let w = gaussian_matrix(&mut rng, d, d);
    let sigma0 = symmetrize(&(Mat::identity(d, d) + &w * w.transpose() / d as f64));
    LqrInstance::new(a, b, sigma0)
}

/// A stabilizing policy with closed-loop spectral radius below `max_rho`,
/// drawn as a random perturbation of a Riccati gain. `None` after
/// `attempts` rejections.
pub fn random_stabilizing_policy<R: Rng + ?Sized>(
    rng: &mut R,
    inst: &LqrInstance,
    max_rho: f64,
    attempts: usize,
) -> Result<Option<Policy>> {
    let (d, k) = (inst.state_dim(), inst.input_dim());
    let base = solve_dare(
        inst,
        &CostParam::new(Mat::identity(d, d), Mat::identity(k, k))?,
    )?
    .k_star;
    let scale = 0.5 * (1.0 + base.norm());
    for _ in 0..attempts {
        let radius = scale * rng.random::<f64>();
        let cand = Policy::new(&base + unit_direction(rng, k, d) * radius);
        let t = inst.a() - inst.b() * cand.gain();
        if is_stabilizing(inst, &cand)? && spectral_radius(&t)? < max_rho {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}
