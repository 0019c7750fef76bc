use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Upper bound on the observability-matrix condition number.
pub const MAX_PLACEMENT_CONDITION: f64 = 1e12;
/// Required relative accuracy of the placed spectrum.
pub const PLACEMENT_TOL: f64 = 1e-6;

const REFINEMENT_STEPS: usize = 3;

/// Output-injection gain `L` (n x 1) with `eig(A + L C^T) = desired`.
///
/// Uses Ackermann's formula on the dual pair followed by a few refinement
/// passes that re-place the poles of the already-corrected system.
pub fn place_poles(a: &Mat, c: &Mat, desired: &[Complex64]) -> Result<Mat> {
    linalg::check_square(a, "A")?;
    let n = a.nrows();
    if c.shape() != (n, 1) {
        return Err(Error::DimensionMismatch(format!(
            "C must be {n}x1 for single-output placement, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    if desired.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} desired eigenvalues given for a {n}-state system",
            desired.len()
        )));
    }
    if !linalg::closed_under_conjugation(desired, 1e-10) {
        return Err(Error::InvalidArgument(
            "desired eigenvalues must be closed under conjugation".into(),
        ));
    }
    let coeffs = linalg::poly_from_roots(desired);

    let (_, condition) = ackermann(a, c, &coeffs)?;
    let error_of = |l: &Mat| -> Result<f64> {
        let achieved = linalg::eigenvalues(&(a + l * c.transpose()))?;
        Ok(linalg::spectral_distance(&achieved, desired))
    };
    let mut l = Mat::zeros(n, 1);
    let mut spectral_error = error_of(&l)?;
    for _ in 0..=REFINEMENT_STEPS {
        if spectral_error <= 1e-3 * PLACEMENT_TOL {
            break;
        }
        let (delta, _) = ackermann(&(a + &l * c.transpose()), c, &coeffs)?;
        let candidate = &l + delta;
        let candidate_error = error_of(&candidate)?;
        if !(candidate_error < spectral_error) {
            break;
        }
        l = candidate;
        spectral_error = candidate_error;
    }
    if !(spectral_error <= PLACEMENT_TOL) {
        return Err(Error::IllConditionedPlacement {
            condition,
            spectral_error,
        });
    }
    Ok(l)
}

/// Observability matrix with rows `C^T A^k`, k = 0..n-1.
pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    let n = a.nrows();
    let p = c.ncols();
    let mut o = Mat::zeros(n * p, n);
    let mut row = c.transpose();
    for k in 0..n {
        o.view_mut((k * p, 0), (p, n)).copy_from(&row);
        row = &row * a;
    }
    o
}

/// `L = -phi(A) q` with `O q = e_n`; returns the gain and `cond(O)`.
fn ackermann(a: &Mat, c: &Mat, coeffs: &[f64]) -> Result<(Mat, f64)> {
    let n = a.nrows();
    let o = observability_matrix(a, c);
    let sv = linalg::singular_values(&o);
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 1e-14 * smax.max(f64::MIN_POSITIVE) || smax == 0.0 {
        return Err(Error::NotObservable);
    }
    let condition = smax / smin;
    if condition > MAX_PLACEMENT_CONDITION {
        return Err(Error::IllConditionedPlacement {
            condition,
            spectral_error: f64::NAN,
        });
    }
    let mut e_n = Mat::zeros(n, 1);
    e_n[(n - 1, 0)] = 1.0;
    let q = o.lu().solve(&e_n).ok_or(Error::NotObservable)?;
    // Horner evaluation of phi(A) q
    let mut v = q.clone() * coeffs[0];
    for &coef in &coeffs[1..] {
        v = a * v + &q * coef;
    }
    Ok((-v, condition))
}
