//! LQG/LTR observer gains `L_nu = -P_nu C R_nu^{-1}` built from the weights
//! `Q_nu = Q0 + (1 + 1/nu) B B^T`, `R_nu = nu/(nu + 1) R0`, together with the
//! orthogonal matrix `W` that aligns `P_0 C` with `B` in the limit `nu -> 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::matrixeq::{care_residual, solve_care};

/// Smallest accepted `nu`.
pub const NU_FLOOR: f64 = 1e-6;
/// `cond(R_nu) / nu` above this is flagged as ill conditioned.
pub const WEIGHT_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LtrDesign {
    pub nu: f64,
    pub q0: Mat,
    pub r0: Mat,
    pub q_nu: Mat,
    pub r_nu: Mat,
    pub p_nu: Mat,
    pub l_nu: Mat,
    pub w: Mat,
    /// First `m` columns of `R0^{-1/2} W` (all of it when `m` equals the
    /// number of outputs).
    pub m1: Mat,
    /// `A_m + L_nu C^T`.
    pub a_nu: Mat,
    pub riccati_residual: f64,
    pub weight_condition: f64,
    pub ill_conditioned: bool,
}

impl LtrDesign {
    /// `R0^{-1/2} W`, the output mixer of the adaptive law.
    pub fn mixer(&self) -> Result<Mat> {
        Ok(linalg::spd_inv_sqrt(&self.r0)? * &self.w)
    }

    /// `||W^T W - I||_F`.
    pub fn w_orthogonality(&self) -> f64 {
        let k = self.w.ncols();
        (self.w.transpose() * &self.w - Mat::identity(k, k)).norm()
    }
}

/// `W = V U^T` from the SVD `B^T C R0^{-1/2} = U S V^T`.
pub fn compute_w(b: &Mat, c: &Mat, r0: &Mat) -> Result<Mat> {
    if b.nrows() != c.nrows() {
        return Err(Error::DimensionMismatch(
            "B and C must have the same number of rows".into(),
        ));
    }
    if b.ncols() != c.ncols() {
        return Err(Error::NonSquare {
            outputs: c.ncols(),
            inputs: b.ncols(),
        });
    }
    let r0_isqrt = linalg::spd_inv_sqrt(r0)?;
    let g = b.transpose() * c * r0_isqrt;
    let ratio = linalg::sigma_ratio(&g);
    if ratio <= 1e-10 {
        return Err(Error::RankDeficient { ratio });
    }
    let svd = g.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(v_t.transpose() * u.transpose())
}

/// Alternative reading of the factor convention, `W = (U V)^T` with the
/// standard right factor `V` (not transposed). Used only for diagnostics.
pub fn compute_w_alternate(b: &Mat, c: &Mat, r0: &Mat) -> Result<Mat> {
    let r0_isqrt = linalg::spd_inv_sqrt(r0)?;
    let g = b.transpose() * c * r0_isqrt;
    let svd = g.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok((u * v_t.transpose()).transpose())
}

/// Riccati-based observer design at a single `nu`.
///
/// `b` is the (squared-up) input matrix with as many columns as `c`;
/// `physical_inputs` selects how many leading columns of `R0^{-1/2} W` form
/// `m1`.
pub fn design_ltr(
    a_m: &Mat,
    b: &Mat,
    c: &Mat,
    q0: &Mat,
    r0: &Mat,
    nu: f64,
    physical_inputs: usize,
) -> Result<LtrDesign> {
    let n = a_m.nrows();
    linalg::check_square(a_m, "A_m")?;
    if b.nrows() != n || c.nrows() != n {
        return Err(Error::DimensionMismatch("B and C must have n rows".into()));
    }
    if !(nu >= NU_FLOOR) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "nu = {nu:e} is below the floor {NU_FLOOR:e}"
        )));
    }
    let p = c.ncols();
    if physical_inputs == 0 || physical_inputs > p {
        return Err(Error::InvalidArgument(format!(
            "physical input count {physical_inputs} must lie in 1..={p}"
        )));
    }
    if q0.shape() != (n, n) || r0.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!("Q0 must be {n}x{n} and R0 {p}x{p}")));
    }
    linalg::check_spd(q0, "Q0")?;
    linalg::check_spd(r0, "R0")?;
    if linalg::numerical_rank(b, 1e-10) < b.ncols() {
        return Err(Error::AssumptionViolated("B must have full column rank".into()));
    }

    let w = compute_w(b, c, r0)?;
    let q_nu = q0 + (b * b.transpose()) * (1.0 + 1.0 / nu);
    let r_nu = r0 * (nu / (nu + 1.0));
    let p_nu = solve_care(a_m, c, &q_nu, &r_nu)?;
    let r_nu_inv = r_nu
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R_nu is singular".into()))?;
    let l_nu = -(&p_nu * c * &r_nu_inv);
    let a_nu = a_m + &l_nu * c.transpose();
    let g = c * &r_nu_inv * c.transpose();
    let riccati_residual = care_residual(a_m, &g, &q_nu, &p_nu).norm();
    let sv = linalg::singular_values(&r_nu);
    let weight_condition = sv.max() / sv.min() / nu;
    let m1 = (linalg::spd_inv_sqrt(r0)? * &w)
        .columns(0, physical_inputs)
        .into_owned();

    Ok(LtrDesign {
        nu,
        q0: q0.clone(),
        r0: r0.clone(),
        q_nu,
        r_nu,
        p_nu,
        l_nu,
        w,
        m1,
        a_nu,
        riccati_residual,
        weight_condition,
        ill_conditioned: weight_condition > WEIGHT_CONDITION_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticsRow {
    pub nu: f64,
    /// `||nu P_nu||_F`.
    pub norm_nu_p: f64,
    /// `||P_nu C - B W^T sqrt(R0)||_F`.
    pub residual_p0c: f64,
    /// Same residual with the alternate factor convention for `W`.
    pub residual_alternate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticsReport {
    pub rows: Vec<AsymptoticsRow>,
    /// Richardson extrapolation `P_0 ~ (nu1 P_nu2 - nu2 P_nu1)/(nu1 - nu2)`
    /// from the two smallest `nu`.
    pub p0_estimate: Mat,
    /// `||P0_est C - B W^T sqrt(R0)||_F`.
    pub p0_residual: f64,
    /// Reciprocal condition number of the `P0` estimate (its inverse is the
    /// Lyapunov weight of the small-`nu` analysis).
    pub p0_rcond: f64,
}

impl AsymptoticsReport {
    pub fn norm_nu_p_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].norm_nu_p < w[0].norm_nu_p)
    }

    /// Ratios `residual(nu_k) / residual(nu_{k+1})`, each normalised to one
    /// decade of `nu`.
    pub fn decay_per_decade(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| {
                let decades = (w[0].nu / w[1].nu).log10();
                (w[0].residual_p0c / w[1].residual_p0c).powf(1.0 / decades)
            })
            .collect()
    }

    pub fn min_decay_per_decade(&self) -> f64 {
        self.decay_per_decade().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("nu,norm_nuP,residual_P0C\n");
        for r in &self.rows {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.nu, r.norm_nu_p, r.residual_p0c));
        }
        out
    }
}

/// Solves the Riccati family along a strictly decreasing `nu` sequence (in
/// parallel) and reports the limit behaviour.
pub fn asymptotics_report(a_m: &Mat, b: &Mat, c: &Mat, q0: &Mat, r0: &Mat, nus: &[f64]) -> Result<AsymptoticsReport> {
    if nus.len() < 3 {
        return Err(Error::InvalidArgument("need at least three nu values".into()));
    }
    if nus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("nu sequence must be strictly decreasing".into()));
    }
    let designs: Vec<LtrDesign> = nus
        .par_iter()
        .map(|&nu| design_ltr(a_m, b, c, q0, r0, nu, b.ncols()))
        .collect::<Result<_>>()?;
    let w = &designs[0].w;
    let w_alt = compute_w_alternate(b, c, r0)?;
    let r0_sqrt = linalg::spd_sqrt(r0)?;
    let target = b * w.transpose() * &r0_sqrt;
    let target_alt = b * w_alt.transpose() * &r0_sqrt;
    let rows = designs
        .iter()
        .map(|d| AsymptoticsRow {
            nu: d.nu,
            norm_nu_p: (&d.p_nu * d.nu).norm(),
            residual_p0c: (&d.p_nu * c - &target).norm(),
            residual_alternate: (&d.p_nu * c - &target_alt).norm(),
        })
        .collect();
    let k = designs.len();
    let (d1, d2) = (&designs[k - 2], &designs[k - 1]);
    let p0_estimate = linalg::symmetrize(&((&d2.p_nu * d1.nu - &d1.p_nu * d2.nu) / (d1.nu - d2.nu)));
    let p0_residual = (&p0_estimate * c - &target).norm();
    let p0_rcond = linalg::sigma_ratio(&p0_estimate);
    Ok(AsymptoticsReport {
        rows,
        p0_estimate,
        p0_residual,
        p0_rcond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_design_matches_quadratic_root() {
        let one = dmatrix![1.0];
        let d = design_ltr(&dmatrix![-1.0], &one, &one, &one, &one, 1.0, 1).unwrap();
        assert!((d.q_nu[(0, 0)] - 3.0).abs() < 1e-15);
        assert!((d.r_nu[(0, 0)] - 0.5).abs() < 1e-15);
        let p = (-1.0 + 7f64.sqrt()) / 2.0;
        assert!((d.p_nu[(0, 0)] - p).abs() < 1e-12);
        assert!((d.l_nu[(0, 0)] + 2.0 * p).abs() < 1e-12);
    }

    #[test]
    fn w_of_identity_and_positive_diagonal() {
        let eye = Mat::identity(2, 2);
        assert!((compute_w(&eye, &eye, &eye).unwrap() - &eye).norm() < 1e-14);
        let d = dmatrix![2.0, 0.0; 0.0, 3.0];
        assert!((compute_w(&d, &eye, &eye).unwrap() - &eye).norm() < 1e-14);
    }

    #[test]
    fn w_of_swap_is_permutation() {
        let eye = Mat::identity(2, 2);
        let swap = dmatrix![0.0, 1.0; 1.0, 0.0];
        let w = compute_w(&swap, &eye, &eye).unwrap();
        assert!((w.transpose() * &w - &eye).norm() < 1e-12);
        assert!((&w - &swap).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_coupling_rejected() {
        let b = dmatrix![1.0, 0.0; 0.0, 0.0];
        let eye = Mat::identity(2, 2);
        assert!(matches!(compute_w(&b, &eye, &eye), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn nu_floor_enforced() {
        let one = dmatrix![1.0];
        assert!(design_ltr(&dmatrix![-1.0], &one, &one, &one, &one, 1e-7, 1).is_err());
    }

    #[test]
    fn scalar_asymptotics() {
        let one = dmatrix![1.0];
        let rep = asymptotics_report(&dmatrix![-1.0], &one, &one, &one, &one, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(rep.norm_nu_p_decreasing());
        assert!((rep.p0_estimate[(0, 0)] - 1.0).abs() < 1e-3);
    }
}
