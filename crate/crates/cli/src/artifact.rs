//! Design artifact (`design.json`) and the checks that `verify` re-runs on it.

use crmac_core::linalg;
use crmac_core::ltr::{asymptotics_report, compute_w};
use crmac_core::matrixeq::care_residual;
use crmac_core::sprdesign::{augmented_q, default_grid, rho_star, schur_margin, verify_spr, MarginBounds, SCHUR_TOL};
use crmac_core::squareup::validate_square_up;
use crmac_core::StateSpaceModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::matrix::{opt_rows, rows, Mat};

pub const KYP_TOL: f64 = 1e-7;
pub const LYAPUNOV_TOL: f64 = 1e-7;
pub const RICCATI_TOL: f64 = 1e-8;
pub const GAIN_TOL: f64 = 1e-9;
pub const W_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemData {
    #[serde(with = "rows")]
    pub a_m: Mat,
    /// Design input matrix (`[B1 B2]` for squared-up plants).
    #[serde(with = "rows")]
    pub b: Mat,
    #[serde(with = "rows")]
    pub c: Mat,
    pub physical_inputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainData {
    /// Reference-model feedback `L`.
    #[serde(with = "rows")]
    pub l: Mat,
    /// Output mixer of the update laws.
    #[serde(with = "rows")]
    pub mixer: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprData {
    pub route: String,
    #[serde(with = "rows")]
    pub l_s: Mat,
    #[serde(with = "rows")]
    pub m: Mat,
    pub rho: f64,
    pub rho_star: f64,
    pub lambda_bar: f64,
    pub theta_bar: f64,
    #[serde(with = "rows")]
    pub p: Mat,
    #[serde(with = "rows")]
    pub q_s: Mat,
    #[serde(with = "rows")]
    pub q: Mat,
    /// True `Lambda` and `Theta*`, when the matching condition is solvable.
    #[serde(with = "opt_rows", default)]
    pub lambda: Option<Mat>,
    #[serde(with = "opt_rows", default)]
    pub theta_star: Option<Mat>,
    pub max_phase_deg: f64,
    pub min_hermitian_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsData {
    pub nu: Vec<f64>,
    pub norm_nu_p: Vec<f64>,
    pub residual_p0c: Vec<f64>,
    pub decay_per_decade: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtrData {
    pub nu: f64,
    #[serde(with = "rows")]
    pub q0: Mat,
    #[serde(with = "rows")]
    pub r0: Mat,
    #[serde(with = "rows")]
    pub p_nu: Mat,
    #[serde(with = "rows")]
    pub w: Mat,
    pub riccati_residual: f64,
    pub w_orthogonality: f64,
    pub weight_condition: f64,
    pub ill_conditioned: bool,
    #[serde(default)]
    pub asymptotics: Option<AsymptoticsData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareUpData {
    #[serde(with = "rows")]
    pub b2: Mat,
    /// Candidates drawn by the search (0 for a supplied `B2`).
    pub tries: usize,
    pub seed: Option<u64>,
    /// Transmission zeros as `[re, im]` pairs.
    pub zeros: Vec<[f64; 2]>,
    pub ctb_sigma_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: detail.into(),
        }
    }

    fn flag(name: &str, passed: bool, value: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            value,
            tolerance: 0.0,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, detail: impl Into<String>) -> Self {
        Check::flag(name, false, f64::NAN, detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub schema_version: u32,
    pub scenario: String,
    pub method: String,
    pub certified: bool,
    /// Reasons the design is not certified.
    pub diagnostics: Vec<String>,
    pub warnings: Vec<String>,
    pub system: SystemData,
    pub gain: Option<GainData>,
    pub spr: Option<SprData>,
    pub ltr: Option<LtrData>,
    pub square_up: Option<SquareUpData>,
    pub checks: Vec<Check>,
}

impl DesignArtifact {
    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
        let art: DesignArtifact =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if art.schema_version != crate::scenario::SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                art.schema_version
            )));
        }
        Ok(art)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes") + "\n"
    }
}

fn b1(sys: &SystemData) -> Mat {
    sys.b.columns(0, sys.physical_inputs).into_owned()
}

/// Re-derives every invariant of the stored design from its matrices.
pub fn run_checks(art: &DesignArtifact) -> Vec<Check> {
    let mut checks = Vec::new();
    let sys = &art.system;
    let n = sys.a_m.nrows();
    let shapes_ok = sys.a_m.shape() == (n, n)
        && sys.b.nrows() == n
        && sys.c.nrows() == n
        && sys.physical_inputs >= 1
        && sys.physical_inputs <= sys.b.ncols();
    if !shapes_ok {
        checks.push(Check::failed("dimensions", "system matrices are inconsistent"));
        return checks;
    }
    let Some(gain) = &art.gain else {
        checks.push(Check::failed("gain", "artifact carries no gain"));
        return checks;
    };
    if gain.l.shape() != (n, sys.c.ncols()) || gain.mixer.shape() != (sys.c.ncols(), sys.physical_inputs) {
        checks.push(Check::failed("dimensions", "gain or mixer shape is inconsistent"));
        return checks;
    }
    if let Some(sq) = &art.square_up {
        checks.push(square_up_check(sys, sq));
    }
    if let Some(spr) = &art.spr {
        spr_checks(sys, gain, spr, &mut checks);
    }
    if let Some(ltr) = &art.ltr {
        ltr_checks(sys, gain, ltr, &mut checks);
    }
    let a_l = &sys.a_m + &gain.l * sys.c.transpose();
    match linalg::spectral_abscissa(&a_l) {
        Ok(alpha) => checks.push(Check::flag(
            "observer_stable",
            alpha < 0.0,
            alpha,
            "spectral abscissa of A_m + L C^T",
        )),
        Err(e) => checks.push(Check::failed("observer_stable", e.to_string())),
    }
    checks
}

fn square_up_check(sys: &SystemData, sq: &SquareUpData) -> Check {
    match validate_square_up(&sys.a_m, &b1(sys), &sq.b2, &sys.c) {
        Ok(rep) => Check::flag(
            "square_up",
            rep.passes() && (linalg::hstack(&b1(sys), &sq.b2) - &sys.b).norm() == 0.0,
            rep.zero_margin.unwrap_or(f64::NEG_INFINITY),
            format!(
                "largest zero real part, min phase {}, sigma ratio {:.3e}",
                rep.min_phase, rep.ctb_sigma_ratio
            ),
        ),
        Err(e) => Check::failed("square_up", e.to_string()),
    }
}

fn lyapunov_scale(a: &Mat, p: &Mat, q: &Mat) -> f64 {
    1.0 + 2.0 * a.norm() * p.norm() + q.norm()
}

fn spr_checks(sys: &SystemData, gain: &GainData, spr: &SprData, checks: &mut Vec<Check>) {
    let (b, c) = (&sys.b, &sys.c);
    let k = sys.physical_inputs;
    let ctb = c.transpose() * b;
    checks.push(Check::below(
        "mixing_matrix",
        (&spr.m - &ctb).norm(),
        1e-12 * (1.0 + ctb.norm()),
        "||M - C^T B||_F",
    ));
    let mixer_ref = spr.m.columns(0, k).into_owned();
    checks.push(Check::below(
        "mixer",
        (&gain.mixer - &mixer_ref).norm(),
        0.0,
        "mixer equals the leading columns of M",
    ));
    let cm = c * &spr.m;
    checks.push(Check::below(
        "kyp_constraint",
        (&spr.p * b - &cm).norm(),
        KYP_TOL * (1.0 + cm.norm()),
        "||P B - C M||_F",
    ));
    let pmin = linalg::min_sym_eigenvalue(&spr.p);
    let qmin = linalg::min_sym_eigenvalue(&spr.q_s);
    checks.push(Check::flag(
        "certificate_positive",
        pmin > 0.0 && qmin > 0.0,
        pmin.min(qmin),
        "min eigenvalue of P and Q_s",
    ));

    let a_s = &sys.a_m + &spr.l_s * c.transpose();
    let res_s = (a_s.transpose() * &spr.p + &spr.p * &a_s + &spr.q_s).norm();
    checks.push(Check::below(
        "certificate_lyapunov",
        res_s,
        LYAPUNOV_TOL * lyapunov_scale(&a_s, &spr.p, &spr.q_s),
        "||A_s^T P + P A_s + Q_s||_F with A_s = A_m + L_s C^T",
    ));

    let q = augmented_q(&spr.q_s, c, &spr.m, spr.rho);
    let a_l = &sys.a_m + &gain.l * c.transpose();
    let res_l = (a_l.transpose() * &spr.p + &spr.p * &a_l + &q).norm();
    checks.push(Check::below(
        "kyp_residual",
        res_l,
        LYAPUNOV_TOL * lyapunov_scale(&a_l, &spr.p, &q),
        "||A_L^T P + P A_L + Q_s + 2 rho C M M^T C^T||_F with the stored L",
    ));

    match StateSpaceModel::new(a_s, b.clone(), cm).and_then(|m| verify_spr(&m, &default_grid())) {
        Ok(rep) => {
            checks.push(Check::flag(
                "frequency",
                rep.frequency_ok,
                rep.min_hermitian_eigenvalue,
                format!("min eigenvalue of He Z(jw), worst at {:.3e} rad/s", rep.worst_frequency),
            ));
            checks.push(Check::flag(
                "phase",
                rep.phase_margin_ok,
                rep.max_phase_deg,
                "largest |phase| in degrees never exceeds 90",
            ));
        }
        Err(e) => checks.push(Check::failed("frequency", e.to_string())),
    }

    let bounds = MarginBounds {
        lambda_bar: spr.lambda_bar,
        theta_bar: spr.theta_bar,
    };
    let square = k == spr.m.ncols();
    match rho_star(bounds, &spr.q_s, &spr.m, (!square).then_some(&gain.mixer)) {
        Ok(rs) => checks.push(Check::flag(
            "margin",
            spr.rho > rs,
            rs,
            format!("rho = {:.6e} must exceed rho*", spr.rho),
        )),
        Err(e) => checks.push(Check::failed("margin", e.to_string())),
    }
    if let (Some(lambda), Some(theta_star)) = (&spr.lambda, &spr.theta_star) {
        let cross = if square { &spr.m } else { &gain.mixer };
        match schur_margin(spr.rho, &spr.m, cross, lambda, theta_star, &spr.q_s) {
            Ok(s) => checks.push(Check::flag(
                "schur",
                s > SCHUR_TOL,
                s,
                "min eigenvalue of the Schur complement",
            )),
            Err(e) => checks.push(Check::failed("schur", e.to_string())),
        }
    }
}

fn ltr_checks(sys: &SystemData, gain: &GainData, ltr: &LtrData, checks: &mut Vec<Check>) {
    let (b, c) = (&sys.b, &sys.c);
    let nu = ltr.nu;
    let q_nu = &ltr.q0 + (b * b.transpose()) * (1.0 + 1.0 / nu);
    let r_nu = &ltr.r0 * (nu / (nu + 1.0));
    let Some(r_nu_inv) = r_nu.clone().try_inverse() else {
        checks.push(Check::failed("riccati", "R_nu is singular"));
        return;
    };
    let g = c * &r_nu_inv * c.transpose();
    let res = care_residual(&sys.a_m, &g, &q_nu, &ltr.p_nu).norm();
    let pgp = &ltr.p_nu * &g * &ltr.p_nu;
    let scale = q_nu.norm() + 2.0 * sys.a_m.norm() * ltr.p_nu.norm() + pgp.norm();
    checks.push(Check::below(
        "riccati",
        res / scale,
        RICCATI_TOL,
        "relative residual of P A^T + A P - P C R_nu^-1 C^T P + Q_nu",
    ));
    let pmin = linalg::min_sym_eigenvalue(&ltr.p_nu);
    checks.push(Check::flag("p_nu_positive", pmin > 0.0, pmin, "min eigenvalue of P_nu"));

    let l_ref = -(&ltr.p_nu * c * &r_nu_inv);
    checks.push(Check::below(
        "observer_gain",
        (&gain.l - &l_ref).norm(),
        GAIN_TOL * (1.0 + l_ref.norm()),
        "||L + P_nu C R_nu^-1||_F",
    ));

    let k = ltr.w.ncols();
    let orth = (ltr.w.transpose() * &ltr.w - Mat::identity(k, k)).norm();
    checks.push(Check::below("w_orthogonality", orth, W_TOL, "||W^T W - I||_F"));
    match compute_w(b, c, &ltr.r0) {
        Ok(w) => checks.push(Check::below(
            "w_alignment",
            (&w - &ltr.w).norm(),
            1e-8,
            "W against a fresh SVD",
        )),
        Err(e) => checks.push(Check::failed("w_alignment", e.to_string())),
    }
    match linalg::spd_inv_sqrt(&ltr.r0) {
        Ok(ri) => {
            let mixer = (ri * &ltr.w).columns(0, sys.physical_inputs).into_owned();
            checks.push(Check::below(
                "mixer",
                (&gain.mixer - &mixer).norm(),
                1e-12 * (1.0 + mixer.norm()),
                "mixer equals the leading columns of R0^-1/2 W",
            ));
        }
        Err(e) => checks.push(Check::failed("mixer", e.to_string())),
    }

    if let Some(asym) = &ltr.asymptotics {
        match asymptotics_report(&sys.a_m, b, c, &ltr.q0, &ltr.r0, &asym.nu) {
            Ok(rep) => {
                let drift = rep
                    .rows
                    .iter()
                    .zip(&asym.norm_nu_p)
                    .map(|(r, s)| ((r.norm_nu_p - s) / s).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::flag(
                    "asymptotics",
                    rep.norm_nu_p_decreasing() && drift < 1e-8,
                    rep.min_decay_per_decade(),
                    "||nu P_nu|| strictly decreasing; value is the smallest residual decay per decade",
                ));
            }
            Err(e) => checks.push(Check::failed("asymptotics", e.to_string())),
        }
    }
}
