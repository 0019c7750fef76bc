mod common;

use crmac_core::error::Error;
use crmac_core::linalg::{self, Mat};
use crmac_core::squareup::{square_up, square_up_with, validate_square_up, SquareUpOptions};

#[test]
fn aircraft_b2_validates() {
    let ac = common::aircraft();
    let rep = validate_square_up(&ac.a_m, &ac.b1, &ac.b2, &ac.c).unwrap();
    assert!(rep.min_phase, "{rep:?}");
    assert!(rep.ctb_sigma_ratio > 1e-8);
    assert!(rep.zero_margin.unwrap() < 0.0);
}

#[test]
fn random_tall_systems_square_up() {
    let mut rng = common::rng(31);
    for case_no in 0..20 {
        let a_m = common::random_stable(&mut rng, 6, 0.2);
        let b1 = common::randn(&mut rng, 6, 2);
        let c = common::randn(&mut rng, 6, 3);
        let opts = SquareUpOptions {
            seed: case_no,
            ..Default::default()
        };
        let sq = square_up(&a_m, &b1, &c, &opts).unwrap_or_else(|e| panic!("case {case_no}: {e}"));
        assert!(sq.tries <= 1000);
        // Independent check of the accepted B2.
        let rep = validate_square_up(&a_m, &b1, &sq.b2, &c).unwrap();
        assert!(rep.passes(), "case {case_no}: {rep:?}");
        assert_eq!(sq.m, c.transpose() * linalg::hstack(&b1, &sq.b2));
        assert_eq!(sq.m1, c.transpose() * &b1);
    }
}

#[test]
fn zero_b2_is_rank_deficient() {
    let ac = common::aircraft();
    let err = square_up_with(&ac.a_m, &ac.b1, &Mat::zeros(5, 2), &ac.c, 1e-3).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
}
