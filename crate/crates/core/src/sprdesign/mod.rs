//! Observer-gain synthesis for the closed-loop reference model: the
//! SPR-izing gain `L_s`, the augmentation `L = L_s - rho B M^T`, the margin
//! `rho*` and its Schur-complement check.

pub mod kyp;
pub mod mimo;
pub mod siso;
pub mod spr;

pub use kyp::{find_certificate, strictness, KypCertificate, KypOptions};
pub use mimo::{design_mimo_ls, MimoOptions, MimoRoute, MimoSynthesis};
pub use siso::{design_siso_ls, transfer_mismatch};
pub use spr::{default_grid, log_grid, verify_spr, verify_spr_with, SprReport};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::statespace::StateSpaceModel;

/// Threshold below which `lambda_min(Q_s)` counts as singular.
pub const QS_FLOOR: f64 = 1e-12;
/// Eigenvalue threshold of the Schur-complement test.
pub const SCHUR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SprDesign {
    pub l_s: Mat,
    /// `L_s - rho B M^T`.
    pub l: Mat,
    /// `C^T B` of the (possibly squared-up) system.
    pub m: Mat,
    /// Mixer used by the adaptive law: `M` itself, or its first `m` columns
    /// for a squared-up plant.
    pub mixer: Mat,
    pub rho: f64,
    pub rho_star: f64,
    pub p: Mat,
    pub q_s: Mat,
    /// `Q_s + 2 rho C M M^T C^T`.
    pub q: Mat,
    pub report: SprReport,
}

impl SprDesign {
    pub fn is_square(&self) -> bool {
        self.mixer.ncols() == self.m.ncols()
    }

    pub fn margin_ok(&self) -> bool {
        self.rho > self.rho_star
    }

    /// `||P B - C M||_F`.
    pub fn kyp_residual(&self, b: &Mat, c: &Mat) -> f64 {
        (&self.p * b - c * &self.m).norm()
    }

    /// `||(A_m + L C^T)^T P + P (A_m + L C^T) + Q||_F`.
    pub fn augmented_residual(&self, a_m: &Mat, c: &Mat) -> f64 {
        let a_l = a_m + &self.l * c.transpose();
        (a_l.transpose() * &self.p + &self.p * &a_l + &self.q).norm()
    }
}

/// Uncertainty bounds `lambda_bar >= ||Lambda||`, `theta_bar >= ||Theta*||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginBounds {
    pub lambda_bar: f64,
    pub theta_bar: f64,
}

pub fn augment_gain(l_s: &Mat, b: &Mat, m: &Mat, rho: f64) -> Result<Mat> {
    if l_s.nrows() != b.nrows() || m.shape() != (l_s.ncols(), b.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "L_s {:?}, B {:?} and M {:?} are inconsistent",
            l_s.shape(),
            b.shape(),
            m.shape()
        )));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be nonnegative, got {rho}")));
    }
    Ok(l_s - b * m.transpose() * rho)
}

/// `Q_s + 2 rho C M M^T C^T`.
pub fn augmented_q(q_s: &Mat, c: &Mat, m: &Mat, rho: f64) -> Mat {
    let cm = c * m;
    q_s + &cm * cm.transpose() * (2.0 * rho)
}

/// Stability margin. Square plants use `lb^2 tb^2 / (2 lmin(Q_s))`; squared-up
/// plants pass `m1` and get `lb^2 tb^2 ||M1||^2 / (2 lmin(Q_s) lmin(M M^T))`.
pub fn rho_star(bounds: MarginBounds, q_s: &Mat, m: &Mat, m1: Option<&Mat>) -> Result<f64> {
    let MarginBounds { lambda_bar, theta_bar } = bounds;
    if !(lambda_bar > 0.0) || !(theta_bar >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bounds must satisfy lambda_bar > 0, theta_bar >= 0 (got {lambda_bar}, {theta_bar})"
        )));
    }
    let qmin = linalg::min_sym_eigenvalue(q_s);
    if !(qmin > QS_FLOOR) {
        return Err(Error::SingularQs { min_eigenvalue: qmin });
    }
    let num = lambda_bar * lambda_bar * theta_bar * theta_bar;
    match m1 {
        None => Ok(num / (2.0 * qmin)),
        Some(m1) => {
            let mmt_min = linalg::min_sym_eigenvalue(&(m * m.transpose()));
            if !(mmt_min > 0.0) {
                return Err(Error::RankDeficient {
                    ratio: linalg::sigma_ratio(m),
                });
            }
            let m1n = linalg::norm2(m1);
            Ok(num * m1n * m1n / (2.0 * qmin * mmt_min))
        }
    }
}

/// Smallest eigenvalue of `2 rho M M^T - Mx Lambda Theta*^T Q_s^{-1} Theta* Lambda Mx^T`,
/// where `Mx` is `M` for square plants and `M1` for squared-up ones.
pub fn schur_margin(rho: f64, m: &Mat, m_cross: &Mat, lambda: &Mat, theta_star: &Mat, q_s: &Mat) -> Result<f64> {
    let p = m.nrows();
    let k = lambda.nrows();
    if m_cross.shape() != (p, k) || theta_star.ncols() != k || theta_star.nrows() != q_s.nrows() {
        return Err(Error::DimensionMismatch("Schur test data are inconsistent".into()));
    }
    let chol = q_s.clone().cholesky().ok_or(Error::SingularQs {
        min_eigenvalue: linalg::min_sym_eigenvalue(q_s),
    })?;
    let cross = m_cross * lambda * theta_star.transpose();
    let term = &cross * chol.solve(&cross.transpose());
    let s = m * m.transpose() * (2.0 * rho) - term;
    Ok(linalg::min_sym_eigenvalue(&linalg::symmetrize(&s)))
}

/// Positive definiteness of the composite rate matrix
/// `[[2 rho M M^T, M Lambda Theta*^T], [Theta* Lambda M^T, Q_s]]`.
pub fn schur_stability_test(rho: f64, m: &Mat, lambda: &Mat, theta_star: &Mat, q_s: &Mat) -> Result<bool> {
    Ok(schur_margin(rho, m, m, lambda, theta_star, q_s)? > SCHUR_TOL)
}

/// Non-square variant: the cross term carries `M1`.
pub fn schur_stability_test_nonsquare(
    rho: f64,
    m: &Mat,
    m1: &Mat,
    lambda: &Mat,
    theta_star: &Mat,
    q_s: &Mat,
) -> Result<bool> {
    Ok(schur_margin(rho, m, m1, lambda, theta_star, q_s)? > SCHUR_TOL)
}

/// Certifies `L_s` (KYP certificate for `(A_m + L_s C^T, B, C M)`), augments
/// it with `rho` and evaluates `rho*`.
///
/// `physical_inputs < p` marks a squared-up plant: the mixer is then the
/// first `physical_inputs` columns of `M` and the non-square margin is used.
#[allow(clippy::too_many_arguments)]
pub fn certify_design(
    a_m: &Mat,
    b: &Mat,
    c: &Mat,
    l_s: &Mat,
    rho: f64,
    bounds: MarginBounds,
    physical_inputs: usize,
    options: &KypOptions,
) -> Result<SprDesign> {
    let model = StateSpaceModel::new(a_m.clone(), b.clone(), c.clone())?;
    if !model.is_square() {
        return Err(Error::NonSquare {
            outputs: model.p(),
            inputs: model.m(),
        });
    }
    if physical_inputs == 0 || physical_inputs > model.m() {
        return Err(Error::InvalidArgument(format!(
            "physical input count {physical_inputs} must lie in 1..={}",
            model.m()
        )));
    }
    let m = model.mixing_matrix();
    let a_l = a_m + l_s * c.transpose();
    let premixed = StateSpaceModel::new(a_l, b.clone(), c * &m)?;
    let report = verify_spr_with(&premixed, &default_grid(), options)?;
    let cert = match (&report.kyp, report.frequency_ok) {
        (Some(cert), true) => cert.clone(),
        _ => return Err(Error::SynthesisFailed(format!(
            "L_s does not certify: frequency test {} (min Hermitian eigenvalue {:e} at {:e} rad/s), certificate: {}",
            if report.frequency_ok { "passed" } else { "failed" },
            report.min_hermitian_eigenvalue,
            report.worst_frequency,
            report.kyp_failure.as_deref().unwrap_or("found")
        ))),
    };
    let mixer = m.columns(0, physical_inputs).into_owned();
    let square = physical_inputs == model.m();
    let rho_star = rho_star(bounds, &cert.q, &m, (!square).then_some(&mixer))?;
    let l = augment_gain(l_s, b, &m, rho)?;
    let q = augmented_q(&cert.q, c, &m, rho);
    Ok(SprDesign {
        l_s: l_s.clone(),
        l,
        mixer,
        rho,
        rho_star,
        p: cert.p,
        q_s: cert.q,
        q,
        m,
        report,
    })
}
