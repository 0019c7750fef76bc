use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingSolution {
    /// `Theta*` (n x m) with `A + B Lambda Theta*^T = A_m`.
    pub theta_star: Mat,
    /// `K*` (m x m) with `Lambda K*^T = I`.
    pub k_star: Mat,
    /// `||A + B Lambda Theta*^T - A_m||_F`.
    pub residual: f64,
}

/// Least-squares solution of the matching conditions.
pub fn solve_matching(a: &Mat, b: &Mat, lambda: &Mat, a_m: &Mat) -> Result<MatchingSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.shape() != (n, n) || a_m.shape() != (n, n) || b.nrows() != n || lambda.shape() != (m, m) {
        return Err(Error::DimensionMismatch(
            "matching needs A, A_m n x n, B n x m and Lambda m x m".into(),
        ));
    }
    let lambda_inv = lambda
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("Lambda must be invertible".into()))?;
    let bl = b * lambda;
    let theta_t = linalg::lstsq(&bl, &(a_m - a), 1e-12);
    let residual = (a + &bl * &theta_t - a_m).norm();
    if residual > 1e-6 * (1.0 + a_m.norm()) {
        return Err(Error::NoMatch { residual });
    }
    Ok(MatchingSolution {
        theta_star: theta_t.transpose(),
        k_star: lambda_inv.transpose(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn companion_row_subtraction() {
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        let a_m = dmatrix![0.0, 1.0; -3.0, -2.0];
        let s = solve_matching(&a, &dmatrix![0.0; 1.0], &dmatrix![1.0], &a_m).unwrap();
        assert!((s.theta_star - dmatrix![-2.0; -1.0]).norm() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn identical_dynamics_need_no_correction() {
        let a = dmatrix![-1.0, 2.0; 0.0, -3.0];
        let s = solve_matching(&a, &dmatrix![1.0; 1.0], &dmatrix![2.0], &a).unwrap();
        assert!(s.theta_star.norm() < 1e-14);
        assert!((s.k_star[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unmatched_rejected() {
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        let a_m = dmatrix![-1.0, 1.0; -3.0, -2.0];
        assert!(matches!(
            solve_matching(&a, &dmatrix![0.0; 1.0], &dmatrix![1.0], &a_m),
            Err(Error::NoMatch { .. })
        ));
    }
}
