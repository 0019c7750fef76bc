//! Complex Schur decomposition `A = Z T Z^H` with eigenvalue reordering.
//!
//! The real input is first brought to Hessenberg form, then reduced with a
//! single-shift complex QR iteration (Wilkinson shifts, exceptional shifts
//! every tenth sweep on a stalled block).

use nalgebra::linalg::Hessenberg;
use num_complex::Complex64;

use super::{cgivens, check_square, rot_cols, rot_rows, to_complex, CMat, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ComplexSchur {
    /// Unitary Schur vectors.
    pub z: CMat,
    /// Upper triangular factor.
    pub t: CMat,
}

impl ComplexSchur {
    pub fn new(a: &Mat) -> Result<Self> {
        check_square(a, "A")?;
        let n = a.nrows();
        if n == 0 {
            return Ok(Self {
                z: CMat::zeros(0, 0),
                t: CMat::zeros(0, 0),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix contains non-finite entries".into()));
        }
        let (q, h) = Hessenberg::new(a.clone()).unpack();
        let mut t = to_complex(&h);
        let mut z = to_complex(&q);
        for j in 0..n {
            for i in (j + 2)..n {
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        qr_iterate(&mut t, &mut z)?;
        Ok(Self { z, t })
    }

    pub fn eigenvalues_of(a: &Mat) -> Result<Vec<Complex64>> {
        Ok(Self::new(a)?.eigenvalues())
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.t.diagonal().iter().copied().collect()
    }

    /// Moves every eigenvalue for which `select` holds to the leading block,
    /// keeping the relative order within each group. Returns the size of the
    /// leading block.
    pub fn reorder(&mut self, select: impl Fn(Complex64) -> bool) -> usize {
        let n = self.t.nrows();
        let mut leading = 0;
        for j in 0..n {
            if select(self.t[(j, j)]) {
                for k in (leading..j).rev() {
                    self.swap_adjacent(k);
                }
                leading += 1;
            }
        }
        leading
    }

    /// Exchanges the diagonal entries at `k` and `k + 1` by a unitary
    /// similarity built from the eigenvector of the trailing entry.
    fn swap_adjacent(&mut self, k: usize) {
        let n = self.t.nrows();
        let a = self.t[(k, k)];
        let b = self.t[(k + 1, k + 1)];
        let v0 = self.t[(k, k + 1)];
        let v1 = b - a;
        let norm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        if norm == 0.0 {
            return;
        }
        let q1 = [v0 / norm, v1 / norm];
        let q2 = [-q1[1].conj(), q1[0].conj()];
        for col in k..n {
            let x = self.t[(k, col)];
            let y = self.t[(k + 1, col)];
            self.t[(k, col)] = q1[0].conj() * x + q1[1].conj() * y;
            self.t[(k + 1, col)] = q2[0].conj() * x + q2[1].conj() * y;
        }
        for row in 0..=(k + 1) {
            let x = self.t[(row, k)];
            let y = self.t[(row, k + 1)];
            self.t[(row, k)] = x * q1[0] + y * q1[1];
            self.t[(row, k + 1)] = x * q2[0] + y * q2[1];
        }
        for row in 0..n {
            let x = self.z[(row, k)];
            let y = self.z[(row, k + 1)];
            self.z[(row, k)] = x * q1[0] + y * q1[1];
            self.z[(row, k + 1)] = x * q2[0] + y * q2[1];
        }
        self.t[(k + 1, k)] = Complex64::new(0.0, 0.0);
        self.t[(k, k)] = b;
        self.t[(k + 1, k + 1)] = a;
    }
}

fn l1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

fn wilkinson_shift(t: &CMat, i: usize) -> Complex64 {
    let a = t[(i - 1, i - 1)];
    let b = t[(i - 1, i)];
    let c = t[(i, i - 1)];
    let d = t[(i, i)];
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * c;
    let root = disc.sqrt();
    let e1 = half_tr + root;
    let e2 = half_tr - root;
    if (e1 - d).norm() <= (e2 - d).norm() {
        e1
    } else {
        e2
    }
}

fn qr_iterate(t: &mut CMat, z: &mut CMat) -> Result<()> {
    let n = t.nrows();
    let eps = f64::EPSILON;
    let norm = t.norm();
    let small = f64::MIN_POSITIVE * (n as f64) / eps;
    let zero = Complex64::new(0.0, 0.0);
    let max_total = 60 * n.max(4);
    let mut total = 0;
    let mut stall = 0;
    let mut ilast = n - 1;
    while ilast > 0 {
        let mut l = ilast;
        while l > 0 {
            let sub = l1(t[(l, l - 1)]);
            let diag = l1(t[(l, l)]) + l1(t[(l - 1, l - 1)]);
            let thr = if diag == 0.0 { eps * norm } else { eps * diag };
            if sub <= thr.max(small) {
                t[(l, l - 1)] = zero;
                break;
            }
            l -= 1;
        }
        if l == ilast {
            ilast -= 1;
            stall = 0;
            continue;
        }
        stall += 1;
        total += 1;
        if total > max_total {
            return Err(Error::NoConvergence("complex Schur QR iteration"));
        }
        let shift = if stall % 10 == 0 {
            t[(ilast, ilast)] + Complex64::new(0.75 * t[(ilast, ilast - 1)].re.abs(), 0.0)
        } else {
            wilkinson_shift(t, ilast)
        };

        let (mut c, mut s, _) = cgivens(t[(l, l)] - shift, t[(l + 1, l)]);
        for k in l..ilast {
            if k > l {
                let (c2, s2, r) = cgivens(t[(k, k - 1)], t[(k + 1, k - 1)]);
                t[(k, k - 1)] = r;
                t[(k + 1, k - 1)] = zero;
                c = c2;
                s = s2;
            }
            rot_rows(t, k, k + 1, k..n, c, s);
            let rows = (k + 3).min(ilast + 1);
            rot_cols(t, k, k + 1, 0..rows, c, s.conj());
            rot_cols(z, k, k + 1, 0..n, c, s.conj());
        }
    }
    Ok(())
}
