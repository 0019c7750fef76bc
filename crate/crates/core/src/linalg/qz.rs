//! Generalized eigenvalues of a real pencil `A - s E` by the QZ algorithm.
//!
//! The pencil is reduced to Hessenberg-triangular form with real Givens
//! rotations and then iterated with single-shift complex QZ sweeps. Zero
//! diagonal entries of the triangular factor are chased to the bottom and
//! deflated as infinite eigenvalues, following the structure of LAPACK's
//! `zhgeqz`. Only eigenvalues are computed.

use num_complex::Complex64;

use super::{cgivens, check_square, rot_cols, rot_rows, to_complex, CMat, Mat};
use crate::error::{Error, Result};

/// An eigenvalue of the pencil as a homogeneous pair: `lambda = alpha / beta`,
/// normalised so that `|alpha|^2 + |beta|^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilEigenvalue {
    pub alpha: Complex64,
    pub beta: Complex64,
    /// Both raw components vanished relative to the pencil scale, which
    /// signals a singular pencil.
    pub indeterminate: bool,
}

/// Relative size below which both raw components count as zero.
const INDETERMINATE_TOL: f64 = 1e-10;

impl PencilEigenvalue {
    fn new(alpha: Complex64, beta: Complex64, anorm: f64, enorm: f64) -> Self {
        let indeterminate =
            alpha.norm() <= INDETERMINATE_TOL * anorm.max(1.0) && beta.norm() <= INDETERMINATE_TOL * enorm.max(1.0);
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if norm == 0.0 {
            return Self {
                alpha,
                beta,
                indeterminate,
            };
        }
        Self {
            alpha: alpha / norm,
            beta: beta / norm,
            indeterminate,
        }
    }

    /// `Some(alpha / beta)` unless the pair is infinite at threshold `beta_tol`.
    pub fn finite(&self, beta_tol: f64) -> Option<Complex64> {
        if self.indeterminate || self.beta.norm() < beta_tol {
            None
        } else {
            Some(self.alpha / self.beta)
        }
    }
}

/// Generalized eigenvalues of `(a, e)`.
pub fn generalized_eigenvalues(a: &Mat, e: &Mat) -> Result<Vec<PencilEigenvalue>> {
    check_square(a, "A")?;
    check_square(e, "E")?;
    if a.shape() != e.shape() {
        return Err(Error::DimensionMismatch("pencil matrices must have equal size".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (anorm, enorm) = (a.norm(), e.norm());
    let (h, t) = hessenberg_triangular(a, e);
    let mut h = to_complex(&h);
    let mut t = to_complex(&t);
    qz_iterate(&mut h, &mut t, anorm, enorm)
}

fn rgivens(f: f64, g: f64) -> (f64, f64) {
    if g == 0.0 {
        return (1.0, 0.0);
    }
    let r = f.hypot(g);
    (f / r, g / r)
}

/// Real Hessenberg-triangular reduction (eigenvalues only, no accumulation).
fn hessenberg_triangular(a: &Mat, e: &Mat) -> (Mat, Mat) {
    let n = a.nrows();
    let qr = e.clone().qr();
    let q = qr.q();
    let mut t = qr.r();
    let mut h = q.transpose() * a;
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = 0.0;
        }
    }
    if n < 3 {
        return (h, t);
    }
    for j in 0..(n - 2) {
        for i in ((j + 2)..n).rev() {
            // rows (i-1, i) to annihilate h[i][j]
            let (c, s) = rgivens(h[(i - 1, j)], h[(i, j)]);
            for col in 0..n {
                let x = h[(i - 1, col)];
                let y = h[(i, col)];
                h[(i - 1, col)] = c * x + s * y;
                h[(i, col)] = -s * x + c * y;
                let x = t[(i - 1, col)];
                let y = t[(i, col)];
                t[(i - 1, col)] = c * x + s * y;
                t[(i, col)] = -s * x + c * y;
            }
            h[(i, j)] = 0.0;
            // columns (i-1, i) to annihilate the fill t[i][i-1]
            let r = t[(i, i)].hypot(t[(i, i - 1)]);
            if r != 0.0 {
                let (c, s) = (t[(i, i)] / r, t[(i, i - 1)] / r);
                for row in 0..n {
                    let x = h[(row, i - 1)];
                    let y = h[(row, i)];
                    h[(row, i - 1)] = c * x - s * y;
                    h[(row, i)] = s * x + c * y;
                    let x = t[(row, i - 1)];
                    let y = t[(row, i)];
                    t[(row, i - 1)] = c * x - s * y;
                    t[(row, i)] = s * x + c * y;
                }
            }
            t[(i, i - 1)] = 0.0;
        }
    }
    (h, t)
}

fn abs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

fn pencil_shift(h: &CMat, t: &CMat, i: usize) -> Complex64 {
    // eigenvalue of T22^{-1} H22 closest to H(i,i)/T(i,i)
    let t11 = t[(i - 1, i - 1)];
    let t12 = t[(i - 1, i)];
    let t22 = t[(i, i)];
    let (h11, h12, h21, h22) = (h[(i - 1, i - 1)], h[(i - 1, i)], h[(i, i - 1)], h[(i, i)]);
    // inverse of upper triangular [[t11, t12], [0, t22]]
    let i11 = t11.inv();
    let i22 = t22.inv();
    let i12 = -t12 * i11 * i22;
    let m11 = i11 * h11 + i12 * h21;
    let m12 = i11 * h12 + i12 * h22;
    let m21 = i22 * h21;
    let m22 = i22 * h22;
    let half_tr = (m11 + m22) * 0.5;
    let disc = ((m11 - m22) * 0.5).powi(2) + m12 * m21;
    let root = disc.sqrt();
    let e1 = half_tr + root;
    let e2 = half_tr - root;
    let target = h22 / t22;
    if (e1 - target).norm() <= (e2 - target).norm() {
        e1
    } else {
        e2
    }
}

fn qz_iterate(h: &mut CMat, t: &mut CMat, anorm: f64, bnorm: f64) -> Result<Vec<PencilEigenvalue>> {
    let n = h.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let ulp = f64::EPSILON;
    let safmin = f64::MIN_POSITIVE;
    let atol = safmin.max(ulp * anorm);
    let btol = safmin.max(ulp * bnorm);

    let mut alpha = vec![zero; n];
    let mut beta = vec![zero; n];

    let mut ilast = n - 1;
    let mut iiter = 0usize;
    let mut eshift = zero;
    let maxit = 60 * n.max(4);

    // Control flow mirrors the labelled blocks of the reference algorithm.
    enum Next {
        ZeroBottomT,
        Deflate,
        Sweep(usize),
    }

    let small_sub = |h: &CMat, j: usize| -> bool {
        let sub = abs1(h[(j, j - 1)]);
        let diag = abs1(h[(j, j)]) + abs1(h[(j - 1, j - 1)]);
        let thr = if diag == 0.0 { atol } else { ulp * diag };
        sub <= thr.max(safmin)
    };

    let mut jiter = 0;
    loop {
        if jiter > maxit {
            return Err(Error::NoConvergence("QZ iteration"));
        }
        jiter += 1;

        let next = 'split: {
            if ilast == 0 {
                break 'split Next::Deflate;
            }
            if small_sub(h, ilast) {
                h[(ilast, ilast - 1)] = zero;
                break 'split Next::Deflate;
            }
            if abs1(t[(ilast, ilast)]) <= btol {
                t[(ilast, ilast)] = zero;
                break 'split Next::ZeroBottomT;
            }
            let mut j = ilast - 1;
            loop {
                let ilazro = if j == 0 {
                    true
                } else if small_sub(h, j) {
                    h[(j, j - 1)] = zero;
                    true
                } else {
                    false
                };

                if abs1(t[(j, j)]) < btol {
                    t[(j, j)] = zero;
                    if ilazro {
                        // H(j,j-1) and T(j,j) both vanish: split off an
                        // infinite eigenvalue at the top of the block.
                        for jch in j..ilast {
                            let (c, s, r) = cgivens(h[(jch, jch)], h[(jch + 1, jch)]);
                            h[(jch, jch)] = r;
                            h[(jch + 1, jch)] = zero;
                            rot_rows(h, jch, jch + 1, (jch + 1)..n, c, s);
                            rot_rows(t, jch, jch + 1, (jch + 1)..n, c, s);
                            if abs1(t[(jch + 1, jch + 1)]) >= btol {
                                if jch + 1 >= ilast {
                                    break 'split Next::Deflate;
                                }
                                break 'split Next::Sweep(jch + 1);
                            }
                            t[(jch + 1, jch + 1)] = zero;
                        }
                        break 'split Next::ZeroBottomT;
                    } else {
                        // Chase the zero of T down to T(ilast, ilast).
                        for jch in j..ilast {
                            let (c, s, r) = cgivens(t[(jch, jch + 1)], t[(jch + 1, jch + 1)]);
                            t[(jch, jch + 1)] = r;
                            t[(jch + 1, jch + 1)] = zero;
                            if jch + 2 < n {
                                rot_rows(t, jch, jch + 1, (jch + 2)..n, c, s);
                            }
                            rot_rows(h, jch, jch + 1, (jch - 1)..n, c, s);
                            let (c, s, r) = cgivens(h[(jch + 1, jch)], h[(jch + 1, jch - 1)]);
                            h[(jch + 1, jch)] = r;
                            h[(jch + 1, jch - 1)] = zero;
                            rot_cols(h, jch, jch - 1, 0..(jch + 1), c, s);
                            rot_cols(t, jch, jch - 1, 0..jch, c, s);
                        }
                        break 'split Next::ZeroBottomT;
                    }
                } else if ilazro {
                    break 'split Next::Sweep(j);
                }
                if j == 0 {
                    return Err(Error::NoConvergence("QZ split search"));
                }
                j -= 1;
            }
        };

        match next {
            Next::ZeroBottomT => {
                // T(ilast,ilast) = 0: rotate H(ilast,ilast-1) away and deflate
                // an infinite eigenvalue.
                let (c, s, r) = cgivens(h[(ilast, ilast)], h[(ilast, ilast - 1)]);
                h[(ilast, ilast)] = r;
                h[(ilast, ilast - 1)] = zero;
                rot_cols(h, ilast, ilast - 1, 0..ilast, c, s);
                rot_cols(t, ilast, ilast - 1, 0..ilast, c, s);
                alpha[ilast] = h[(ilast, ilast)];
                beta[ilast] = t[(ilast, ilast)];
                if ilast == 0 {
                    break;
                }
                ilast -= 1;
                iiter = 0;
                eshift = zero;
            }
            Next::Deflate => {
                alpha[ilast] = h[(ilast, ilast)];
                beta[ilast] = t[(ilast, ilast)];
                if ilast == 0 {
                    break;
                }
                ilast -= 1;
                iiter = 0;
                eshift = zero;
            }
            Next::Sweep(ifirst) => {
                iiter += 1;
                let shift = if !iiter.is_multiple_of(10) {
                    pencil_shift(h, t, ilast)
                } else {
                    eshift += h[(ilast, ilast - 1)] / t[(ilast - 1, ilast - 1)];
                    eshift
                };
                let (mut c, mut s, _) = cgivens(
                    h[(ifirst, ifirst)] - shift * t[(ifirst, ifirst)],
                    h[(ifirst + 1, ifirst)],
                );
                for j in ifirst..ilast {
                    if j > ifirst {
                        let (c2, s2, r) = cgivens(h[(j, j - 1)], h[(j + 1, j - 1)]);
                        h[(j, j - 1)] = r;
                        h[(j + 1, j - 1)] = zero;
                        c = c2;
                        s = s2;
                    }
                    rot_rows(h, j, j + 1, j..n, c, s);
                    rot_rows(t, j, j + 1, j..n, c, s);
                    let (c2, s2, r) = cgivens(t[(j + 1, j + 1)], t[(j + 1, j)]);
                    t[(j + 1, j + 1)] = r;
                    t[(j + 1, j)] = zero;
                    rot_cols(h, j + 1, j, 0..((j + 2).min(ilast) + 1), c2, s2);
                    rot_cols(t, j + 1, j, 0..(j + 1), c2, s2);
                }
            }
        }
    }

    Ok(alpha
        .into_iter()
        .zip(beta)
        .map(|(a, b)| PencilEigenvalue::new(a, b, anorm, bnorm))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;
    use nalgebra::{dmatrix, DMatrix};

    fn finite_sorted(ev: &[PencilEigenvalue]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = ev.iter().filter_map(|e| e.finite(1e-10)).collect();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn identity_pencil_matches_standard_eigenvalues() {
        let a = dmatrix![1.0, 2.0, 0.0; -3.0, 0.5, 1.0; 0.2, 0.1, -2.0];
        let e = DMatrix::identity(3, 3);
        let gev = finite_sorted(&generalized_eigenvalues(&a, &e).unwrap());
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        assert_eq!(gev.len(), 3);
        for (x, y) in gev.iter().zip(&ev) {
            assert!((x - y).norm() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn nonsingular_e_matches_inverse_product() {
        let a = dmatrix![1.0, 2.0; 3.0, 4.0];
        let e = dmatrix![2.0, 1.0; 0.5, 3.0];
        let gev = finite_sorted(&generalized_eigenvalues(&a, &e).unwrap());
        let mut ev = eigenvalues(&(e.clone().try_inverse().unwrap() * &a)).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (x, y) in gev.iter().zip(&ev) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_e_yields_infinite_eigenvalues() {
        // Rosenbrock pencil of (s+3)/(s^2+3s+2)
        let a = dmatrix![
            0.0, 1.0, 0.0;
            -2.0, -3.0, 1.0;
            3.0, 1.0, 0.0
        ];
        let e = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 0.0];
        let ev = generalized_eigenvalues(&a, &e).unwrap();
        let finite = finite_sorted(&ev);
        assert_eq!(finite.len(), 1);
        assert!((finite[0] - Complex64::new(-3.0, 0.0)).norm() < 1e-12);
    }
}
