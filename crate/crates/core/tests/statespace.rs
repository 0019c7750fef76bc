mod common;

use crmac_core::linalg;
use crmac_core::statespace::StateSpaceModel;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn square_model(seed: u64, n: usize, m: usize) -> StateSpaceModel {
    let mut rng = common::rng(seed);
    let (a, b, c) = common::random_square(&mut rng, n, m);
    StateSpaceModel::new(a, b, c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transfer_is_real_rational(seed in any::<u64>(), n in 1usize..8, m in 1usize..4, p in 1usize..4) {
        let mut rng = common::rng(seed);
        let model = StateSpaceModel::new(
            common::random_stable(&mut rng, n, 0.1),
            common::randn(&mut rng, n, m),
            common::randn(&mut rng, n, p),
        ).unwrap();
        for _ in 0..10 {
            let s = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-5.0..5.0));
            let z = model.eval_transfer(s).unwrap();
            let zc = model.eval_transfer(s.conj()).unwrap();
            let diff = (zc - z.map(|v| v.conj())).norm();
            prop_assert!(diff <= 1e-10 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn zeros_survive_output_mixing(seed in any::<u64>(), n in 3usize..7) {
        let model = square_model(seed, n, 2);
        let mut rng = common::rng(seed ^ 1);
        let g = common::randn(&mut rng, 2, 2) + linalg::Mat::identity(2, 2) * 2.0;
        let z0 = model.transmission_zeros().unwrap();
        let z1 = model.premix_output(&g).unwrap().transmission_zeros().unwrap();
        prop_assert_eq!(z0.len(), z1.len());
        prop_assert!(linalg::spectral_distance(&z1, &z0) <= 1e-8);
    }

    #[test]
    fn zeros_survive_output_feedback(seed in any::<u64>(), n in 3usize..7) {
        let model = square_model(seed, n, 2);
        let mut rng = common::rng(seed ^ 2);
        let l = common::randn(&mut rng, n, 2);
        let fed = StateSpaceModel::new(model.a() + &l * model.c().transpose(), model.b().clone(), model.c().clone()).unwrap();
        let z0 = model.transmission_zeros().unwrap();
        let z1 = fed.transmission_zeros().unwrap();
        prop_assert_eq!(z0.len(), z1.len());
        prop_assert!(linalg::spectral_distance(&z1, &z0) <= 1e-8);
    }

    #[test]
    fn high_frequency_limit_is_markov_parameter(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = common::rng(seed);
        let model = StateSpaceModel::new(
            common::random_stable(&mut rng, n, 0.1),
            common::randn(&mut rng, n, 2),
            common::randn(&mut rng, n, 2),
        ).unwrap();
        let s = 1e6;
        let z = model.eval_transfer(Complex64::new(s, 0.0)).unwrap().map(|v| v.re * s);
        let cb = model.mixing_matrix();
        prop_assert!((z - &cb).norm() <= 1e-3 * cb.norm());
    }
}
