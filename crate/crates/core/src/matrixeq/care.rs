use crate::error::{Error, Result};
use crate::linalg::{self, schur::ComplexSchur, CMat, Mat};

use super::lyapunov::LyapunovSolver;

const MAX_NEWTON_STEPS: usize = 8;

/// Residual of `P A^T + A P - P G P + Q` with `G = C R^{-1} C^T`.
pub fn care_residual(a: &Mat, g: &Mat, q: &Mat, p: &Mat) -> Mat {
    p * a.transpose() + a * p - p * g * p + q
}

/// Stabilizing solution of the filter-form Riccati equation
/// `P A^T + A P - P C R^{-1} C^T P + Q = 0`.
///
/// `A - P C R^{-1} C^T` is Hurwitz on success. `Q` may be semidefinite as long
/// as the stabilizing solution exists.
pub fn solve_care(a: &Mat, c: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    linalg::check_square(a, "A")?;
    let n = a.nrows();
    if c.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "C has {} rows, expected {n}",
            c.nrows()
        )));
    }
    if q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("Q must be {n}x{n}")));
    }
    let p_out = c.ncols();
    if r.shape() != (p_out, p_out) {
        return Err(Error::DimensionMismatch(format!("R must be {p_out}x{p_out}")));
    }
    linalg::check_finite(a, "A")?;
    linalg::check_finite(c, "C")?;
    linalg::check_psd(q, "Q")?;
    linalg::check_spd(r, "R")?;
    let q = linalg::symmetrize(q);
    let r_inv = linalg::symmetrize(
        &r.clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("R must be positive definite".into()))?
            .inverse(),
    );
    let g = linalg::symmetrize(&(c * r_inv * c.transpose()));

    // Hamiltonian of the dual (control-form) equation in the variable P.
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a));

    let mut schur = ComplexSchur::new(&h)?;
    let axis_tol = 1e-9_f64.max(100.0 * f64::EPSILON * h.norm());
    if let Some(&ev) = schur.eigenvalues().iter().find(|z| z.re.abs() <= axis_tol) {
        return Err(Error::HamiltonianImaginaryAxis { eigenvalue: ev });
    }
    let stable = schur.reorder(|z| z.re < 0.0);
    if stable != n {
        return Err(Error::NotStabilizing { max_real: 0.0 });
    }
    let u1: CMat = schur.z.view((0, 0), (n, n)).into_owned();
    let u2: CMat = schur.z.view((n, 0), (n, n)).into_owned();
    // P = U2 U1^{-1}, computed as the solution of U1^T P^T = U2^T.
    let pt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or(Error::NotStabilizing { max_real: 0.0 })?;
    let mut p = linalg::symmetrize(&pt.transpose().map(|z| z.re));

    let tolerance = 1e-7 * (1.0 + q.norm());
    let mut residual = care_residual(a, &g, &q, &p).norm();
    for _ in 0..MAX_NEWTON_STEPS {
        if residual <= 1e-3 * tolerance {
            break;
        }
        let closed = a - &p * &g;
        let solver = match LyapunovSolver::new(&closed.transpose()) {
            Ok(s) => s,
            Err(_) => break,
        };
        let res = linalg::symmetrize(&care_residual(a, &g, &q, &p));
        let candidate = &p + solver.solve_raw(&res);
        let candidate_residual = care_residual(a, &g, &q, &candidate).norm();
        if !(candidate_residual < residual) {
            break;
        }
        p = candidate;
        residual = candidate_residual;
    }

    let max_real = linalg::spectral_abscissa(&(a - &p * &g))?;
    if !(max_real < -1e-10) {
        return Err(Error::NotStabilizing { max_real });
    }
    if !(residual <= tolerance) {
        return Err(Error::Residual {
            what: "Riccati equation",
            achieved: residual,
            tolerance,
        });
    }
    Ok(p)
}

/// Stabilizing solution of the control-form equation
/// `A^T X + X A - X B R^{-1} B^T X + Q = 0`; `A - B R^{-1} B^T X` is Hurwitz.
pub fn solve_control_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    solve_care(&a.transpose(), b, q, r)
}

/// LQR state-feedback gain `K^T = -R^{-1} B^T X` (so `u = K^T x`).
pub fn lqr_gain(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let x = solve_control_care(a, b, q, r)?;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R must be invertible".into()))?;
    Ok(-(r_inv * b.transpose() * x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_quadratic_root() {
        let p = solve_care(&dmatrix![-1.0], &dmatrix![1.0], &dmatrix![3.0], &dmatrix![1.0]).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn unstable_scalar_takes_positive_root() {
        // 2p - p^2 + 1 = 0 -> p = 1 + sqrt(2)
        let p = solve_care(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((p[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn vanishing_weight_on_stable_plant() {
        let a = dmatrix![-1.0, 0.3; 0.0, -2.0];
        let c = dmatrix![1.0; 0.5];
        let p = solve_care(&a, &c, &(Mat::identity(2, 2) * 1e-9), &dmatrix![1.0]).unwrap();
        assert!(p.norm() < 1e-8);
    }

    #[test]
    fn lqr_double_integrator() {
        // classic result: K = -[1, sqrt(3)] for Q = I, R = 1
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let k = lqr_gain(&a, &b, &Mat::identity(2, 2), &dmatrix![1.0]).unwrap();
        assert!((k[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((k[(0, 1)] + 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn undetectable_mode_rejected() {
        // unstable mode invisible to C and undamped by Q
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let c = dmatrix![0.0; 1.0];
        let q = dmatrix![0.0, 0.0; 0.0, 1.0];
        assert!(solve_care(&a, &c, &q, &dmatrix![1.0]).is_err());
    }
}
