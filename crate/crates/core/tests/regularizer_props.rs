mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use regplda::regularize::{
    project_psd, regularize_diagonal, regularize_interpolate, soft_threshold, sparse_admm,
    RegInput, RegTarget, RegularizerConfig,
};

fn spd_from_seed(seed: u64, d: usize) -> DMatrix<f64> {
    random_spd(&mut rng(seed), d, 0.2)
}

#[test]
fn admm_agrees_with_subgradient_oracle_on_small_problems() {
    for seed in 0..5 {
        let g = spd_from_seed(seed, 3);
        for lambda in [0.0, 1e-2, 0.1] {
            let cfg = RegularizerConfig::sparse(RegTarget::Between, lambda);
            let sol = sparse_admm(
                &RegInput::new(g.clone()).unwrap(),
                &cfg,
                &DMatrix::identity(3, 3),
            )
            .unwrap();
            let g_inv = gauss_jordan_inverse(&g);
            let (_, f_oracle) = sparse_subgradient_oracle(&g, lambda, 20_000);
            let f = sparse_objective_oracle(&sol.b, &g_inv, lambda);
            assert!(
                (f - f_oracle).abs() < 1e-4,
                "seed {seed} λ {lambda}: {f} vs {f_oracle}"
            );
            assert!(oracle_min_eigenvalue(&sol.b) >= -1e-10);
        }
    }
}

#[test]
fn projection_matches_jacobi_oracle() {
    for seed in 0..10 {
        let x = random_symmetric(&mut rng(seed), 5);
        assert!((project_psd(&x).unwrap() - oracle_project_psd(&x)).amax() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_threshold_is_non_expansive(seed in 0u64..100_000, t in 0.0f64..2.0) {
        let mut r = rng(seed);
        let x = randn_matrix(&mut r, 4, 4);
        let y = randn_matrix(&mut r, 4, 4);
        let d = (soft_threshold(&x, t) - soft_threshold(&y, t)).norm();
        prop_assert!(d <= (&x - &y).norm() + 1e-12);
    }

    #[test]
    fn regularizers_preserve_symmetry_and_psd(seed in 0u64..100_000, d in 1usize..6, gamma in 0.0f64..10.0) {
        let g = RegInput::new(spd_from_seed(seed, d)).unwrap();
        let outs = [
            regularize_diagonal(&g),
            regularize_interpolate(&g, gamma, &DMatrix::identity(d, d)).unwrap(),
        ];
        for m in &outs {
            prop_assert!((m - m.transpose()).amax() == 0.0);
            prop_assert!(oracle_min_eigenvalue(m) >= -1e-12);
        }
    }

    #[test]
    fn sparse_solution_is_symmetric_psd(seed in 0u64..100_000, d in 1usize..5, lambda in 0.0f64..0.5) {
        let g = spd_from_seed(seed, d);
        let cfg = RegularizerConfig::sparse(RegTarget::Between, lambda);
        let sol = sparse_admm(&RegInput::new(g).unwrap(), &cfg, &DMatrix::identity(d, d)).unwrap();
        prop_assert!((&sol.b - sol.b.transpose()).amax() < 1e-12);
        prop_assert!(oracle_min_eigenvalue(&sol.b) >= -1e-10);
        prop_assert!(sol.residual < cfg.eps);
    }

    #[test]
    fn sparsity_grows_with_lambda(seed in 0u64..100_000) {
        let g = spd_from_seed(seed, 4) * 2.0;
        let zeros = |lambda: f64| {
            let cfg = RegularizerConfig::sparse(RegTarget::Between, lambda);
            let sol = sparse_admm(&RegInput::new(g.clone()).unwrap(), &cfg, &DMatrix::identity(4, 4)).unwrap();
            sol.a.iter().filter(|v| **v == 0.0).count()
        };
        let counts: Vec<usize> = [0.0, 0.05, 0.2, 1.0].iter().map(|&l| zeros(l)).collect();
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{:?}", counts);
    }

    #[test]
    fn admm_objective_drops_within_three_iterations(seed in 0u64..100_000, lambda in 0.01f64..0.5) {
        let g = spd_from_seed(seed, 3);
        let cfg = RegularizerConfig::sparse(RegTarget::Between, lambda);
        let start = DMatrix::identity(3, 3) * 5.0;
        let sol = sparse_admm(&RegInput::new(g.clone()).unwrap(), &cfg, &start).unwrap();
        let initial = sparse_objective_oracle(&start, &gauss_jordan_inverse(&g), lambda);
        let k = sol.objective_trace.len().min(3);
        prop_assert!(sol.objective_trace[k - 1] < initial);
    }
}
