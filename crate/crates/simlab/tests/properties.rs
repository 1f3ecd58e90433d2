use modsel_core::Method;
use modsel_simlab::dgp::{class_probabilities, draw_class_weights, gen_regression_data, theta, ThetaRule};
use modsel_simlab::train::{pretrain_ridge_subset_models, pretrain_sigma_estimators};
use modsel_simlab::{run_experiment_with_threads, DgpSpec, ExperimentConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dgp(idx: usize, c: f64, mu: f64) -> DgpSpec {
    match idx {
        0 => DgpSpec::sparse_gaussian(40),
        1 => DgpSpec::sparse_heavy(40),
        2 => DgpSpec::dense_gaussian(40),
        3 => DgpSpec::tx_sparse(40),
        4 => DgpSpec::classification(8, 4),
        _ => DgpSpec::two_model(c, mu),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn summaries_are_reproducible_and_bounded(seed in any::<u64>(), idx in 0usize..6, c in 0.5f64..5.0, mu in -1.0f64..1.0) {
        let mut cfg = ExperimentConfig::new(dgp(idx, c, mu), 15, 3, 5, seed);
        cfg.n_train = 40;
        let a = run_experiment_with_threads(cfg.clone(), Some(1)).unwrap();
        let b = run_experiment_with_threads(cfg, Some(3)).unwrap();
        prop_assert_eq!(&a, &b);
        for m in &a.methods {
            prop_assert!((0.0..=1.0).contains(&m.coverage.mean));
            prop_assert!(m.width.mean >= 0.0);
        }
    }

    #[test]
    fn se_matches_sample_sd(seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::new(DgpSpec::two_model(1.0, 0.0), 10, 2, 7, seed);
        cfg.methods = vec![Method::Split];
        cfg.keep_records = true;
        let s = run_experiment_with_threads(cfg, Some(1)).unwrap();
        let w: Vec<f64> = s.records.as_ref().unwrap().iter().map(|r| r.width[0]).collect();
        let mean = w.iter().sum::<f64>() / 7.0;
        let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
        let got = s.methods[0].width.se.unwrap();
        prop_assert!((got - sd / 7f64.sqrt()).abs() <= 1e-12 * (1.0 + got));
    }

    #[test]
    fn regression_response_is_linear_plus_noise(seed in any::<u64>(), dense in any::<bool>()) {
        let spec = if dense { DgpSpec::dense_gaussian(30) } else { DgpSpec::sparse_gaussian(30) };
        let rule = if dense { ThetaRule::Dense } else { ThetaRule::Sparse };
        let th = theta(rule, 30);
        let data = gen_regression_data(&spec, 50, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let again = gen_regression_data(&spec, 50, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&data, &again);
        let sd = if dense { 1.0 / 30.0 } else { 1.0 };
        for (x, y) in data.x.iter().zip(&data.y) {
            let mean: f64 = x.iter().zip(&th).map(|(a, b)| a * b).sum();
            prop_assert!(((y - mean) / sd).abs() < 8.0);
        }
    }

    #[test]
    fn softmax_weights_sum_to_one(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let w = draw_class_weights(50, 10, &mut r);
        let mut x = vec![-8.0; 50];
        x[1] = 3.0;
        let p = class_probabilities(&w, &x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn sigma_is_positive(seed in any::<u64>(), k in 1usize..20) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let spec = DgpSpec::tx_sparse(20);
        let train = gen_regression_data(&spec, 20, &mut r).unwrap();
        let models = pretrain_ridge_subset_models(&train, 3, 0.1, 0.1, &mut r).unwrap();
        let sig = pretrain_sigma_estimators(&train, &models, k).unwrap();
        let probe = gen_regression_data(&spec, 5, &mut r).unwrap();
        for x in &probe.x {
            for l in 0..3 {
                prop_assert!(sig.sigma(l, x) > 0.0);
            }
        }
    }
}
