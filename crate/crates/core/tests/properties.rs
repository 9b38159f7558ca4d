use std::sync::Arc;

use proptest::prelude::*;

use gail_lqr::gail::{
    project_theta, GailProblem, MatrixPair, QuadraticPenalty, Regularizer, ThetaBox,
};
use gail_lqr::harness::output::{read_trace_csv, write_trace_csv};
use gail_lqr::lqr::{cost, occupancy, policy_gradient, solve_closed_loop};
use gail_lqr::numerics::{max_eigenvalue_sym, min_eigenvalue_sym, trace_product};
use gail_lqr::random::{
    gaussian_matrix, generate_instance, random_stabilizing_policy, random_theta, stream_rng,
};
use gail_lqr::riccati::solve_dare;
use gail_lqr::{CostParam, LqrInstance, Mat, Policy};

fn setup(seed: u64, d: usize, k: usize) -> (LqrInstance, Policy, CostParam) {
    let inst = generate_instance(d, k, 0.8, seed).unwrap();
    let mut rng = stream_rng(seed, 1);
    let pol = random_stabilizing_policy(&mut rng, &inst, 0.97, 10_000)
        .unwrap()
        .unwrap();
    let theta = random_theta(&mut rng, &ThetaBox::uniform(0.5, 2.0).unwrap(), d, k).unwrap();
    (inst, pol, theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn both_cost_forms_agree(seed in 0u64..10_000, d in 1usize..5, k in 1usize..3) {
        let (inst, pol, theta) = setup(seed, d, k);
        let cl = solve_closed_loop(&inst, &theta, &pol).unwrap();
        let c1 = cl.cost(&theta, &pol);
        let c2 = cl.value_cost(inst.sigma0());
        prop_assert!((c1 - c2).abs() <= 1e-9 * c1.abs().max(1.0));
        prop_assert!(c1 > 0.0);
    }

    #[test]
    fn riccati_gain_is_optimal(seed in 0u64..10_000, d in 1usize..5, k in 1usize..3) {
        let (inst, pol, theta) = setup(seed, d, k);
        let star = solve_dare(&inst, &theta).unwrap().policy();
        let c_star = cost(&inst, &theta, &star).unwrap();
        prop_assert!(c_star <= cost(&inst, &theta, &pol).unwrap() * (1.0 + 1e-12));
        prop_assert!(policy_gradient(&inst, &theta, &star).unwrap().grad.norm() <= 1e-7 * c_star.max(1.0));
    }

    #[test]
    fn occupancy_is_positive_definite(seed in 0u64..10_000, d in 1usize..5, k in 1usize..3) {
        let (inst, pol, _) = setup(seed, d, k);
        let (sigma, ksk) = occupancy(&inst, &pol).unwrap();
        prop_assert!(min_eigenvalue_sym(&sigma).unwrap() >= inst.mu() * (1.0 - 1e-10));
        prop_assert!(min_eigenvalue_sym(&ksk).unwrap() >= -1e-10 * ksk.norm().max(1.0));
    }

    #[test]
    fn projection_lands_in_box_and_is_idempotent(seed in 0u64..10_000, d in 1usize..5, k in 1usize..3, scale in 0.1f64..10.0) {
        let bx = ThetaBox::new(0.5, 2.0, 0.25, 3.0).unwrap();
        let mut rng = stream_rng(seed, 2);
        let q = gaussian_matrix(&mut rng, d, d) * scale;
        let r = gaussian_matrix(&mut rng, k, k) * scale;
        let raw = MatrixPair::new(&q + q.transpose(), &r + r.transpose());
        let p = project_theta(&raw, &bx).unwrap();
        prop_assert!(bx.contains(&p, 1e-10));
        let again = project_theta(&MatrixPair::from_theta(&p), &bx).unwrap();
        prop_assert!(again.distance(&p) <= 1e-10);
        // nearest point: no feasible sample is closer
        let other = random_theta(&mut rng, &bx, d, k).unwrap();
        let dist = |t: &CostParam| (&raw.q - t.q()).norm_squared() + (&raw.r - t.r()).norm_squared();
        prop_assert!(dist(&p) <= dist(&other) + 1e-9);
    }

    #[test]
    fn objective_vanishes_at_expert_up_to_regularizer(seed in 0u64..10_000, d in 1usize..4, k in 1usize..3) {
        let (inst, k_e, center) = setup(seed, d, k);
        let bx = ThetaBox::uniform(0.5, 2.0).unwrap();
        let reg: Arc<dyn Regularizer> = Arc::new(QuadraticPenalty::new(0.3, center).unwrap());
        let problem = GailProblem::new(inst.clone(), k_e.clone(), bx, reg.clone()).unwrap();
        let mut rng = stream_rng(seed, 3);
        let theta = random_theta(&mut rng, &bx, d, k).unwrap();
        let m = problem.objective(&theta, &k_e).unwrap();
        prop_assert!((m + reg.value(&theta)).abs() <= 1e-10 * reg.value(&theta).max(1.0));
        // m is linear in θ apart from ψ: m(K, θ) + ψ(θ) = ⟨Σ_K − Σ_E, Q⟩ + ⟨KΣKᵀ − K_EΣ_EK_Eᵀ, R⟩
        let pol = random_stabilizing_policy(&mut rng, &inst, 0.97, 10_000).unwrap().unwrap();
        let (s, ks) = occupancy(&inst, &pol).unwrap();
        let (se, kse) = problem.expert_occupancy();
        let lin = trace_product(&(s - se), theta.q()) + trace_product(&(ks - kse), theta.r());
        let m = problem.objective(&theta, &pol).unwrap();
        prop_assert!((m + reg.value(&theta) - lin).abs() <= 1e-9 * lin.abs().max(1.0));
    }

    #[test]
    fn expert_saddle_is_stationary(seed in 0u64..10_000, d in 1usize..4, k in 1usize..3) {
        let inst = generate_instance(d, k, 0.8, seed).unwrap();
        let mut rng = stream_rng(seed, 4);
        let bx = ThetaBox::uniform(0.5, 2.0).unwrap();
        let theta_tilde = random_theta(&mut rng, &bx, d, k).unwrap();
        let reg = Arc::new(QuadraticPenalty::new(1.0, theta_tilde.clone()).unwrap());
        let problem = GailProblem::from_theta_tilde(inst, &theta_tilde, bx, reg).unwrap();
        let l = problem.proximal_gradient(problem.expert(), &theta_tilde).unwrap();
        prop_assert!(l.norm <= 1e-8);
    }

    #[test]
    fn spectra_of_sampled_parameters_stay_in_box(seed in 0u64..10_000, d in 1usize..5, k in 1usize..3) {
        let bx = ThetaBox::new(0.5, 2.0, 0.25, 3.0).unwrap();
        let mut rng = stream_rng(seed, 5);
        let t = random_theta(&mut rng, &bx, d, k).unwrap();
        prop_assert!(min_eigenvalue_sym(t.q()).unwrap() >= 0.5 - 1e-12);
        prop_assert!(max_eigenvalue_sym(t.q()).unwrap() <= 2.0 + 1e-12);
        prop_assert!(min_eigenvalue_sym(t.r()).unwrap() >= 0.25 - 1e-12);
        prop_assert!(max_eigenvalue_sym(t.r()).unwrap() <= 3.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trace_csv_round_trips(eta in 0.01f64..0.2, steps in 2usize..40) {
        let inst = LqrInstance::new(Mat::identity(1, 1), Mat::identity(1, 1), Mat::identity(1, 1)).unwrap();
        let tilde = CostParam::scalar(1.0, 1.0).unwrap();
        let bx = ThetaBox::around(&tilde, 0.1).unwrap();
        let reg = Arc::new(QuadraticPenalty::new(10.0, tilde.clone()).unwrap());
        let problem = GailProblem::from_theta_tilde(inst, &tilde, bx, reg).unwrap();
        let cfg = gail_lqr::gail::SolverConfig::new(eta, eta / 10.0, 1e-30, steps).unwrap();
        let out = problem.solve(&Policy::scalar(1.0), &tilde, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&out.trace, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, &buf).unwrap();
        let rows = read_trace_csv(&path).unwrap();
        prop_assert_eq!(rows.len(), out.trace.len());
        for (row, rec) in rows.iter().zip(&out.trace.records) {
            prop_assert_eq!(row[0], Some(rec.iter as f64));
            prop_assert_eq!(row[1], Some(rec.cost));
            prop_assert_eq!(row[3], Some(rec.prox_grad_norm));
            prop_assert_eq!(row[5], Some(rec.k_dist_to_expert));
        }
        // running minimum of ‖L‖² never increases
        let mins = out.trace.min_so_far_sq();
        prop_assert!(mins.windows(2).all(|w| w[1] <= w[0]));
    }
}
