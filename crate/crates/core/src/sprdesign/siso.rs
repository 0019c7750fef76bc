use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::statespace::{StateSpaceModel, RANK_TOL, TOL_ZERO};

use super::spr::log_grid;

/// Relative accuracy required of the placed spectrum and of the closed
/// transfer against `a/(s + rho)`.
pub const SISO_TOL: f64 = 1e-6;

/// Output-injection gain `L_s` that turns `C^T (sI - A_m)^{-1} B` into
/// `a/(s + rho)`, `a = C^T B`.
///
/// The `n - 1` transmission zeros become eigenvalues of `A_m + L_s C^T` and
/// cancel; the remaining eigenvalue sits at `-rho` with eigenvector `B`.
pub fn design_siso_ls(a_m: &Mat, b: &Mat, c: &Mat, rho: f64) -> Result<Mat> {
    let n = a_m.nrows();
    if b.shape() != (n, 1) || c.shape() != (n, 1) {
        return Err(Error::DimensionMismatch(
            "single-input single-output design needs B and C of size n x 1".into(),
        ));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let model = StateSpaceModel::new(a_m.clone(), b.clone(), c.clone())?;
    let a = model.mixing_matrix()[(0, 0)];
    if a.abs() <= RANK_TOL * b.norm() * c.norm() {
        return Err(Error::DegenerateRelativeDegree);
    }
    if !model.is_observable()? {
        return Err(Error::NotObservable);
    }
    let zeros = model.transmission_zeros()?;
    if let Some(z) = zeros.iter().find(|z| z.re >= -TOL_ZERO) {
        return Err(Error::NotMinimumPhase { zero: *z });
    }
    if zeros.len() != n - 1 {
        return Err(Error::SynthesisFailed(format!(
            "expected {} finite zeros, found {}",
            n - 1,
            zeros.len()
        )));
    }

    let l_s = -(a_m * b + b * rho) / a;

    let a_l = a_m + &l_s * c.transpose();
    let mut target = zeros;
    target.push(Complex64::new(-rho, 0.0));
    let spectral_error = linalg::spectral_distance(&linalg::eigenvalues(&a_l)?, &target);
    if !(spectral_error <= SISO_TOL) {
        return Err(Error::SynthesisFailed(format!(
            "closed spectrum misses zeros and -rho by {spectral_error:e}"
        )));
    }
    let transfer_error = transfer_mismatch(&a_l, b, c, a, rho, 100)?;
    if !(transfer_error <= SISO_TOL) {
        return Err(Error::SynthesisFailed(format!(
            "closed transfer deviates from a/(s + rho) by {transfer_error:e} (relative)"
        )));
    }
    Ok(l_s)
}

/// Largest relative deviation of `C^T (jw - A_L)^{-1} B` from `a/(jw + rho)`
/// over `points` log-spaced frequencies spanning the problem's time scales.
pub fn transfer_mismatch(a_l: &Mat, b: &Mat, c: &Mat, a: f64, rho: f64, points: usize) -> Result<f64> {
    let model = StateSpaceModel::new(a_l.clone(), b.clone(), c.clone())?;
    let scale = linalg::norm2(a_l).max(rho).max(1.0);
    let lo = (rho.min(1.0) * 1e-3).max(1e-6);
    let mut worst: f64 = 0.0;
    for w in log_grid(lo, 1e3 * scale, points) {
        let s = Complex64::new(0.0, w);
        let want = Complex64::new(a, 0.0) / (s + rho);
        let got = model.eval_transfer(s)?[(0, 0)];
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn second_order_example() {
        let a_m = dmatrix![0.0, 1.0; -2.0, -3.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![3.0; 1.0];
        let l = design_siso_ls(&a_m, &b, &c, 5.0).unwrap();
        let mut ev = linalg::eigenvalues(&(&a_m + &l * c.transpose())).unwrap();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert!((ev[0] - Complex64::new(-5.0, 0.0)).norm() < 1e-10);
        assert!((ev[1] - Complex64::new(-3.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn first_order_has_no_zeros() {
        let l = design_siso_ls(&dmatrix![-1.0], &dmatrix![1.0], &dmatrix![2.0], 4.0).unwrap();
        // A + L C^T = -1 + 2 L = -4
        assert!((l[(0, 0)] + 1.5).abs() < 1e-14);
    }

    #[test]
    fn rho_on_top_of_a_zero() {
        let a_m = dmatrix![0.0, 1.0; -2.0, -3.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![3.0; 1.0];
        let l = design_siso_ls(&a_m, &b, &c, 3.0).unwrap();
        let ev = linalg::eigenvalues(&(&a_m + &l * c.transpose())).unwrap();
        for e in ev {
            assert!((e - Complex64::new(-3.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn rejects_nonminimum_phase() {
        // (s - 1)/(s^2 + 3s + 2)
        let a_m = dmatrix![0.0, 1.0; -2.0, -3.0];
        let r = design_siso_ls(&a_m, &dmatrix![0.0; 1.0], &dmatrix![-1.0; 1.0], 1.0);
        assert!(matches!(r, Err(Error::NotMinimumPhase { .. })));
    }

    #[test]
    fn rejects_relative_degree_two() {
        let a_m = dmatrix![0.0, 1.0; -2.0, -3.0];
        let r = design_siso_ls(&a_m, &dmatrix![0.0; 1.0], &dmatrix![1.0; 0.0], 1.0);
        assert!(matches!(r, Err(Error::DegenerateRelativeDegree)));
    }
}
