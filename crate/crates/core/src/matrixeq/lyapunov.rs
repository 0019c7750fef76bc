use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, schur::ComplexSchur, CMat, Mat};

/// Eigenvalues with real part at or above this count as not Hurwitz.
pub const HURWITZ_TOL: f64 = -1e-10;

/// Solver for `A^T P + P A = -Q` that keeps the Schur form of `A` so repeated
/// right-hand sides cost O(n^3) each without refactorising.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    a: Mat,
    schur: ComplexSchur,
}

impl LyapunovSolver {
    pub fn new(a: &Mat) -> Result<Self> {
        linalg::check_square(a, "A")?;
        linalg::check_finite(a, "A")?;
        let schur = ComplexSchur::new(a)?;
        let max_real = schur
            .eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_real >= HURWITZ_TOL {
            return Err(Error::NotHurwitz { max_real });
        }
        Ok(Self { a: a.clone(), schur })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Solves without the residual check or refinement.
    pub fn solve_raw(&self, q: &Mat) -> Mat {
        let u = &self.schur.z;
        let t = &self.schur.t;
        let n = t.nrows();
        let f = u.adjoint() * linalg::to_complex(q) * u;
        let mut x = CMat::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let mut rhs = -f[(i, j)];
                for k in 0..i {
                    rhs -= t[(k, i)].conj() * x[(k, j)];
                }
                for k in 0..j {
                    rhs -= x[(i, k)] * t[(k, j)];
                }
                let denom: Complex64 = t[(i, i)].conj() + t[(j, j)];
                x[(i, j)] = rhs / denom;
            }
        }
        let p = (u * x * u.adjoint()).map(|z| z.re);
        linalg::symmetrize(&p)
    }

    pub fn residual(&self, p: &Mat, q: &Mat) -> f64 {
        (self.a.transpose() * p + p * &self.a + q).norm()
    }

    /// Solves `A^T P + P A = -Q` with one step of iterative refinement and a
    /// residual check at `1e-8 (1 + ||Q||_F)`.
    pub fn solve(&self, q: &Mat) -> Result<Mat> {
        linalg::check_symmetric(q, "Q")?;
        if q.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Q is {}x{}, expected {n}x{n}",
                q.nrows(),
                q.ncols(),
                n = self.dim()
            )));
        }
        let q = linalg::symmetrize(q);
        let mut p = self.solve_raw(&q);
        let r = self.a.transpose() * &p + &p * &self.a + &q;
        p += self.solve_raw(&linalg::symmetrize(&r));
        let achieved = self.residual(&p, &q);
        let tolerance = 1e-8 * (1.0 + q.norm());
        if !(achieved <= tolerance) {
            return Err(Error::Residual {
                what: "Lyapunov equation",
                achieved,
                tolerance,
            });
        }
        Ok(p)
    }
}

/// Solves `A^T P + P A = -Q` for Hurwitz `A` and symmetric `Q`.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    LyapunovSolver::new(a)?.solve(q)
}
