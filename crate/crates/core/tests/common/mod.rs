#![allow(dead_code)]

use crmac_core::linalg::{self, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random state matrix with entries of variance `1/n`, so the spectrum fills
/// roughly the unit disc.
pub fn random_dynamics(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    randn(rng, n, n) / (n as f64).sqrt()
}

/// Random matrix shifted so its spectral abscissa is at most `-margin`.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> Mat {
    let a = random_dynamics(rng, n);
    let alpha = linalg::spectral_abscissa(&a).unwrap();
    let extra: f64 = rng.random_range(0.0..1.0);
    a - Mat::identity(n, n) * (alpha + margin + extra)
}

/// Random symmetric positive definite matrix with eigenvalues at least `floor`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = randn(rng, n, n);
    &g * g.transpose() + Mat::identity(n, n) * floor
}

/// Kronecker-product oracle for `A^T P + P A = -Q`.
pub fn lyapunov_oracle(a: &Mat, q: &Mat) -> Mat {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let k = linalg::kron(&eye, &a.transpose()) + linalg::kron(&a.transpose(), &eye);
    let rhs = -Mat::from_column_slice(n * n, 1, q.as_slice());
    let v = k.lu().solve(&rhs).unwrap();
    Mat::from_column_slice(n, n, v.as_slice())
}

/// Longitudinal aircraft model with an integral-of-altitude-error state.
pub struct Aircraft {
    /// Nominal extended dynamics (5x5).
    pub a_nom: Mat,
    /// True extended dynamics with the matched uncertainty.
    pub a_true: Mat,
    pub b1: Mat,
    pub bz: Mat,
    pub b2: Mat,
    /// 5x4: measured velocity, pitch rate, altitude, and the integral state.
    pub c: Mat,
    /// Extended uncertainty `Psi` (5x2) with a zero last row.
    pub psi: Mat,
    /// `K_R^T` (2x5), so the baseline input is `K_R^T x`.
    pub k_r_t: Mat,
    pub a_m: Mat,
}

pub fn aircraft() -> Aircraft {
    use nalgebra::dmatrix;
    let a_p = dmatrix![
        -0.038, 18.94, 0.0, -32.174;
        -0.001, -0.632, 1.0, 0.0;
        0.0, -0.759, -0.518, 0.0;
        0.0, 0.0, 1.0, 0.0
    ];
    let b_p = dmatrix![10.1, 0.0; 0.0, -0.0086; 0.025, -0.011; 0.0, 0.0];
    let c_z = dmatrix![0.0, -250.0, 0.0, 250.0];
    let psi_t = dmatrix![-2.0, 1.5, 2.0, -2.0; 1.5, -2.0, 2.0, 1.0];
    let mut a_nom = Mat::zeros(5, 5);
    a_nom.view_mut((0, 0), (4, 4)).copy_from(&a_p);
    a_nom.view_mut((4, 0), (1, 4)).copy_from(&c_z);
    let mut b1 = Mat::zeros(5, 2);
    b1.view_mut((0, 0), (4, 2)).copy_from(&b_p);
    let mut bz = Mat::zeros(5, 1);
    bz[(4, 0)] = -1.0;
    let b2 = dmatrix![0.0, 0.0; 0.0, 1.0; 3.0, 0.0; 0.0, 3.0; 1.0, 0.0];
    let c = dmatrix![
        1.0, 0.0, 0.0, 0.0;
        0.0, 0.0, -250.0, 0.0;
        0.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 250.0, 0.0;
        0.0, 0.0, 0.0, 1.0
    ];
    let mut psi = Mat::zeros(5, 2);
    psi.view_mut((0, 0), (4, 2)).copy_from(&psi_t.transpose());
    let a_true = &a_nom + &b1 * psi.transpose();
    let q_r = Mat::from_diagonal(&nalgebra::dvector![1.0, 1.0, 0.1, 0.0, 0.1]);
    let r_r = Mat::from_diagonal(&nalgebra::dvector![1.0, 10.0]);
    let k_r_t = crmac_core::matrixeq::lqr_gain(&a_nom, &b1, &q_r, &r_r).unwrap();
    let a_m = &a_nom + &b1 * &k_r_t;
    Aircraft {
        a_nom,
        a_true,
        b1,
        bz,
        b2,
        c,
        psi,
        k_r_t,
        a_m,
    }
}

/// Random SISO system with prescribed stable zeros and poles.
pub struct SisoCase {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub zeros: Vec<num_complex::Complex64>,
    /// `C^T B`.
    pub gain: f64,
}

fn random_stable_roots(rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64) -> Vec<num_complex::Complex64> {
    use num_complex::Complex64;
    let mut roots = Vec::with_capacity(count);
    while roots.len() < count {
        let re = -rng.random_range(lo..hi);
        if count - roots.len() >= 2 && rng.random_bool(0.4) {
            let im = rng.random_range(0.2..2.0);
            roots.push(Complex64::new(re, im));
            roots.push(Complex64::new(re, -im));
        } else {
            roots.push(Complex64::new(re, 0.0));
        }
    }
    roots
}

/// Random orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    randn(rng, n, n).qr().q()
}

/// Real block-diagonal matrix with the given conjugate-closed spectrum.
fn real_block_diagonal(roots: &[num_complex::Complex64]) -> Mat {
    let n = roots.len();
    let mut a = Mat::zeros(n, n);
    let mut i = 0;
    while i < n {
        let r = roots[i];
        if r.im.abs() > 0.0 {
            a[(i, i)] = r.re;
            a[(i + 1, i + 1)] = r.re;
            a[(i, i + 1)] = r.im;
            a[(i + 1, i)] = -r.im;
            i += 2;
        } else {
            a[(i, i)] = r.re;
            i += 1;
        }
    }
    a
}

/// Minimum-phase, observable SISO system of order `n` with relative degree
/// one, built in zero-dynamics form (`eta' = A0 eta + b0 y`,
/// `y' = c0^T eta + d y + g u`, zeros `= spec(A0)`) and rotated by a random
/// orthogonal basis change.
pub fn random_siso(rng: &mut ChaCha8Rng, n: usize) -> SisoCase {
    let zeros = random_stable_roots(rng, n - 1, 0.5, 4.0);
    let gain = rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let k = n - 1;
    let q0 = random_orthogonal(rng, k.max(1));
    let a0 = if k > 0 {
        &q0 * real_block_diagonal(&zeros) * q0.transpose()
    } else {
        Mat::zeros(0, 0)
    };
    let mut a = Mat::zeros(n, n);
    a.view_mut((0, 0), (k, k)).copy_from(&a0);
    a.view_mut((0, k), (k, 1)).copy_from(&randn(rng, k, 1));
    a.view_mut((k, 0), (1, k)).copy_from(&randn(rng, 1, k));
    a[(k, k)] = -rng.random_range(0.0..2.0);
    let mut b = Mat::zeros(n, 1);
    b[(k, 0)] = gain;
    let mut c = Mat::zeros(n, 1);
    c[(k, 0)] = 1.0;
    let t = random_orthogonal(rng, n);
    SisoCase {
        a: &t * a * t.transpose(),
        b: &t * b,
        c: &t * c,
        zeros,
        gain,
    }
}

/// Square, minimum-phase system with invertible `C^T B` and Hurwitz `A`:
/// outputs are the last `m` states of a normal form whose zero dynamics are
/// stable, rotated by a random orthogonal basis and shifted to be stable.
pub fn random_square(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Mat, Mat, Mat) {
    let k = n - m;
    let zeros = random_stable_roots(rng, k, 0.5, 4.0);
    let mut a = randn(rng, n, n);
    if k > 0 {
        let q0 = random_orthogonal(rng, k);
        a.view_mut((0, 0), (k, k))
            .copy_from(&(&q0 * real_block_diagonal(&zeros) * q0.transpose()));
    }
    let mut b = Mat::zeros(n, m);
    let g = randn(rng, m, m) + Mat::identity(m, m) * 2.0;
    b.view_mut((k, 0), (m, m)).copy_from(&g);
    let mut c = Mat::zeros(n, m);
    c.view_mut((k, 0), (m, m)).fill_with_identity();
    let t = random_orthogonal(rng, n);
    let a = &t * a * t.transpose();
    let alpha = linalg::spectral_abscissa(&a).unwrap();
    let a = if alpha > -0.5 {
        a - Mat::identity(n, n) * (alpha + 0.5)
    } else {
        a
    };
    (a, &t * b, &t * c)
}

/// Certified second-order SISO loop with an exactly matched uncertainty
/// (`Lambda = 0.8`, `Theta* = [-2.5, -1.25]`), `rho = 1.5 rho*`.
pub struct SisoLoop {
    pub cl: crmac_core::adaptsim::ClosedLoop,
    pub lyapunov: crmac_core::adaptsim::LyapunovFunction,
    pub matching: crmac_core::adaptsim::MatchingSolution,
    pub reference: crmac_core::adaptsim::Reference,
    pub initial: crmac_core::adaptsim::LoopState,
    pub rho: f64,
    pub rho_star: f64,
}

pub fn certified_siso_loop() -> SisoLoop {
    use crmac_core::adaptsim::*;
    use crmac_core::sprdesign::{certify_design, design_siso_ls, KypOptions, MarginBounds};
    use nalgebra::{dmatrix, dvector};

    let a = dmatrix![0.0, 1.0; -1.0, -1.0];
    let a_m = dmatrix![0.0, 1.0; -3.0, -2.0];
    let b = dmatrix![0.0; 1.0];
    let c = dmatrix![1.0; 1.0];
    let lambda = dmatrix![0.8];
    let bounds = MarginBounds {
        lambda_bar: 1.0,
        theta_bar: 3.0,
    };
    let l_s = design_siso_ls(&a_m, &b, &c, 2.0).unwrap();
    let probe = certify_design(&a_m, &b, &c, &l_s, 0.0, bounds, 1, &KypOptions::default()).unwrap();
    let rho = 1.5 * probe.rho_star;
    let design = certify_design(&a_m, &b, &c, &l_s, rho, bounds, 1, &KypOptions::default()).unwrap();
    let matching = solve_matching(&a, &b, &lambda, &a_m).unwrap();
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
    SisoLoop {
        cl,
        lyapunov,
        matching,
        reference: Reference::Step {
            amplitude: dvector![1.0],
            at: 0.0,
        },
        initial,
        rho,
        rho_star: design.rho_star,
    }
}
