mod common;

use crmac_core::linalg::{self, Mat};
use crmac_core::ltr::{asymptotics_report, compute_w, design_ltr};

const NUS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[test]
fn aircraft_asymptotics() {
    let ac = common::aircraft();
    let b = linalg::hstack(&ac.b1, &ac.b2);
    let (q0, r0) = (Mat::identity(5, 5), Mat::identity(4, 4));
    let rep = asymptotics_report(&ac.a_m, &b, &ac.c, &q0, &r0, &NUS).unwrap();
    assert!(rep.norm_nu_p_decreasing());
    for w in rep.rows.windows(2) {
        assert!(w[1].residual_p0c < w[0].residual_p0c);
    }
    // The residual is O(nu) asymptotically: the last decade is close to 10x.
    let decay = rep.decay_per_decade();
    assert!(*decay.last().unwrap() >= 5.0, "{decay:?}");
    // The chosen SVD convention is the one whose residual vanishes.
    let last = rep.rows.last().unwrap();
    assert!(last.residual_p0c * 10.0 < last.residual_alternate);
    assert!(rep.p0_residual < last.residual_p0c);
}

#[test]
fn aircraft_design_at_nu_001() {
    let ac = common::aircraft();
    let b = linalg::hstack(&ac.b1, &ac.b2);
    let d = design_ltr(&ac.a_m, &b, &ac.c, &Mat::identity(5, 5), &Mat::identity(4, 4), 0.01, 2).unwrap();
    assert!(linalg::spectral_abscissa(&d.a_nu).unwrap() < 0.0);
    assert!(d.w_orthogonality() <= 1e-10);
    assert_eq!(d.m1.shape(), (4, 2));
    assert_eq!(d.m1, d.w.columns(0, 2).into_owned());
}

#[test]
fn nu_p_decreases_on_random_square_systems() {
    let mut rng = common::rng(21);
    for case_no in 0..20 {
        let n = 3 + case_no % 4;
        let (a, b, c) = common::random_square(&mut rng, n, 2);
        let rep = asymptotics_report(&a, &b, &c, &Mat::identity(n, n), &Mat::identity(2, 2), &NUS).unwrap();
        assert!(rep.norm_nu_p_decreasing(), "case {case_no}: {:?}", rep.rows);
    }
}

#[test]
fn w_is_orthogonal_on_random_square_systems() {
    let mut rng = common::rng(22);
    for _ in 0..20 {
        let (_, b, c) = common::random_square(&mut rng, 5, 3);
        let r0 = common::random_spd(&mut rng, 3, 0.5);
        let w = compute_w(&b, &c, &r0).unwrap();
        assert!((w.transpose() * &w - Mat::identity(3, 3)).norm() <= 1e-10);
    }
}
