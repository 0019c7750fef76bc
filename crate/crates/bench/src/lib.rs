//! Shared fixtures for the benchmarks.

use crmac_core::adaptsim::{
    solve_matching, AdaptiveGains, ClosedLoop, Controller, LoopState, LyapunovFunction, PlantDynamics, Reference,
    ReferenceModel, CERTIFIED_TOLERANCE,
};
use crmac_core::sprdesign::{certify_design, design_siso_ls, KypOptions, MarginBounds};
use crmac_core::Mat;
use nalgebra::{dmatrix, dvector};

/// Deterministic Hurwitz matrix of order `n`: a scaled pseudo-random block
/// shifted left by its norm bound.
pub fn stable_matrix(n: usize) -> Mat {
    let raw = Mat::from_fn(n, n, |i, j| ((7 * i + 13 * j + 3) as f64 * 0.618).sin());
    let shift = raw.norm() + 0.5;
    raw / (n as f64).sqrt() - Mat::identity(n, n) * (shift / (n as f64).sqrt())
}

/// Deterministic tall matrix with full column rank.
pub fn tall_matrix(n: usize, p: usize) -> Mat {
    Mat::from_fn(n, p, |i, j| {
        ((3 * i + 5 * j + 1) as f64 * 0.377).cos() + if i == j { 1.0 } else { 0.0 }
    })
}

pub struct SisoBench {
    pub cl: ClosedLoop,
    pub lyapunov: LyapunovFunction,
    pub reference: Reference,
    pub initial: LoopState,
}

/// Two-state adaptive loop with a certified closed-loop reference model.
pub fn siso_loop() -> SisoBench {
    let a = dmatrix![0.0, 1.0; -1.0, -1.0];
    let a_m = dmatrix![0.0, 1.0; -3.0, -2.0];
    let b = dmatrix![0.0; 1.0];
    let c = dmatrix![1.0; 1.0];
    let lambda = dmatrix![0.8];
    let bounds = MarginBounds {
        lambda_bar: 1.0,
        theta_bar: 3.0,
    };
    let l_s = design_siso_ls(&a_m, &b, &c, 2.0).expect("observable pair");
    let probe = certify_design(&a_m, &b, &c, &l_s, 0.0, bounds, 1, &KypOptions::default()).expect("certifiable");
    let design = certify_design(
        &a_m,
        &b,
        &c,
        &l_s,
        1.5 * probe.rho_star,
        bounds,
        1,
        &KypOptions::default(),
    )
    .expect("certifiable");
    let matching = solve_matching(&a, &b, &lambda, &a_m).expect("matched");
    let plant = PlantDynamics::new(a, b.clone(), lambda.clone(), c.clone(), dmatrix![0.0; 0.0]).unwrap();
    let rm = ReferenceModel::new(a_m, b, design.l.clone(), c).unwrap();
    let gamma = dvector![1.0, 1.0];
    let gamma_k = dvector![1.0];
    let gains = AdaptiveGains::new(gamma.clone(), gamma_k.clone(), design.mixer.clone()).unwrap();
    let cl = ClosedLoop::new(
        plant,
        rm,
        Controller::Adaptive {
            gains,
            baseline: None,
            feedforward: true,
        },
    )
    .unwrap();
    let lyapunov = LyapunovFunction::new(
        design.p.clone(),
        &matching,
        &lambda,
        &gamma,
        Some(&gamma_k),
        CERTIFIED_TOLERANCE,
    )
    .unwrap();
    let initial = cl.initial_state(dvector![0.5, -0.5], dvector![0.0, 0.0]);
    SisoBench {
        cl,
        lyapunov,
        reference: Reference::Step {
            amplitude: dvector![1.0],
            at: 0.0,
        },
        initial,
    }
}
