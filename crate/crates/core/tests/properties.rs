use factor_paradox::datagen::standardize;
use factor_paradox::efa::{match_factors, varimax, varimax_criterion};
use factor_paradox::linalg::max_abs_diff;
use factor_paradox::model::{CovarianceMatrix, PopulationModel};
use factor_paradox::residuals::decompose_residuals;
use factor_paradox::seed;
use factor_paradox::sim::histogram_values;
use factor_paradox::theorems::{check_eq8, construct_exact_population};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(p, q)| {
        prop::collection::vec(-1.0f64..1.0, p * q).prop_map(move |v| DMatrix::from_vec(p, q, v))
    })
}

fn zero_diagonal(p: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    p.prop_flat_map(|p| {
        prop::collection::vec(-0.5f64..0.5, p * p).prop_map(move |v| {
            let a = DMatrix::from_vec(p, p, v);
            let mut s = &a + a.transpose();
            s.fill_diagonal(0.0);
            s
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn varimax_is_an_orthogonal_improvement(l in matrix(3..=12, 2..=4), kaiser in any::<bool>()) {
        prop_assume!(l.ncols() < l.nrows());
        let (rot, t) = varimax(&l, kaiser);
        let q = l.ncols();
        prop_assert!(max_abs_diff(&(t.transpose() * &t), &DMatrix::identity(q, q)) < 1e-10);
        prop_assert!(max_abs_diff(&(&l * &t), &rot) < 1e-10);
        prop_assert!(varimax_criterion(&rot, kaiser) >= varimax_criterion(&l, kaiser) - 1e-12);
        for i in 0..l.nrows() {
            prop_assert!((l.row(i).norm() - rot.row(i).norm()).abs() < 1e-10);
        }
        for col in rot.column_iter() {
            let top = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            prop_assert!(top >= 0.0);
        }
    }

    #[test]
    fn residual_spectrum_of_zero_diagonal_matrix(omega in zero_diagonal(2..=12)) {
        let d = decompose_residuals(&CovarianceMatrix::new(omega.clone()).unwrap()).unwrap();
        let p = omega.nrows();
        prop_assert!(d.eigenvalue_sum().abs() < 1e-10);
        prop_assert!(d.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(d.first_eigenvalue() >= -1e-12);
        prop_assert!(max_abs_diff(&(d.eigenvectors.transpose() * &d.eigenvectors), &DMatrix::identity(p, p)) < 1e-10);
        let recon = &d.eigenvectors * DMatrix::from_diagonal(&d.eigenvalues) * d.eigenvectors.transpose();
        prop_assert!(max_abs_diff(&recon, &omega) < 1e-10);
        prop_assert!(max_abs_diff(&(&d.n_loadings * d.n_loadings.transpose()), &d.positive_part()) < 1e-10);
        prop_assert_eq!(d.n_loadings.ncols(), d.m);
    }

    #[test]
    fn matching_is_a_signed_permutation(est in matrix(6..=10, 2..=4), seed_value in any::<u64>()) {
        let (p, q) = est.shape();
        let mut rng = seed::rng(seed_value);
        let pop = DMatrix::from_fn(p, q, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let m = match_factors(&est, &pop).unwrap();
        let mut seen = m.permutation.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..q).collect::<Vec<_>>());
        prop_assert!(m.congruences.iter().all(|&c| (0.0..=1.0 + 1e-12).contains(&c)));
        prop_assert!(max_abs_diff(&m.apply(&est), &(&est * m.as_matrix())) < 1e-15);
    }

    #[test]
    fn simple_structure_models_are_valid(q in 1usize..=6, loading in 0.05f64..0.95, per in 2usize..=6) {
        let m = PopulationModel::simple_structure(q, loading, per).unwrap();
        let sigma = m.implied_covariance().into_values();
        for i in 0..m.p() {
            prop_assert!((sigma[(i, i)] - 1.0).abs() < 1e-12);
        }
        prop_assert!(sigma.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(-1.0f64..=1.0, 0..300)) {
        let bins = histogram_values(&values, 0.05);
        prop_assert_eq!(bins.len(), 40);
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), values.len());
        for v in &values {
            let hits = bins.iter().filter(|b| *v >= b.low && (*v < b.high || (b.high == 1.0 && *v <= 1.0))).count();
            prop_assert!(hits >= 1);
        }
    }

    #[test]
    fn standardized_columns(x in matrix(5..=40, 1..=5)) {
        if let Ok(z) = standardize(&x) {
            let n = z.nrows() as f64;
            for col in z.column_iter() {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                prop_assert!(mean.abs() < 1e-10);
                prop_assert!((var - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn replication_seeds_are_distinct(base in any::<u64>(), cell in 0usize..18, rep in 0usize..1000) {
        let a = seed::replication_seed(base, cell, rep, 0);
        prop_assert_eq!(a, seed::replication_seed(base, cell, rep, 0));
        prop_assert_ne!(a, seed::replication_seed(base, cell, rep + 1, 0));
        prop_assert_ne!(a, seed::replication_seed(base, cell, rep, 1));
        prop_assert_ne!(a, seed::replication_seed(base, cell + 1, rep, 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_populations_satisfy_the_expansion(
        loading in 0.3f64..0.8,
        n_scale in 0.0f64..0.3,
        split in 0.0f64..1.0,
        seed_value in any::<u64>(),
    ) {
        let model = PopulationModel::simple_structure(2, loading, 4).unwrap();
        let mut rng = seed::rng(seed_value);
        let n_load = DMatrix::from_fn(8, 1, |_, _| rand::Rng::random_range(&mut rng, -n_scale..=n_scale));
        let c_eu = &n_load * (-0.5 * split);
        let c_fu = DMatrix::from_fn(2, 1, |_, _| rand::Rng::random_range(&mut rng, -0.1..0.1));
        match construct_exact_population(&model, &n_load, &c_fu, &c_eu, 60, seed_value) {
            Ok(pop) => {
                prop_assert!(max_abs_diff(&pop.joint_empirical(), &pop.joint_target) < 1e-10);
                let report = check_eq8(&pop, &model, &n_load);
                prop_assert!(report.passes(1e-8));
            }
            Err(factor_paradox::Error::Infeasible { min_eigenvalue }) => prop_assert!(min_eigenvalue < -1e-10),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
