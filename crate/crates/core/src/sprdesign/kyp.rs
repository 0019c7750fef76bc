//! KYP certificate search: find `P = P^T > 0` with `P B = C_mix` and
//! `A^T P + P A = -Q`, `Q >= eps I`.
//!
//! The constraint `P B = C_mix` is an affine subspace of symmetric matrices,
//! parametrised as `P0 + sum z_i N_i` with an orthonormal basis `N_i`; `Q`
//! is then affine in `z` as well (`q0 + N z` in svec coordinates). On that
//! subspace a
//! log-barrier path-following method maximises `lambda_min(Q)` subject to
//! `||z|| <= radius`; the optimum fixes `Q_s` reproducibly and makes it as
//! large as the bound allows.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::matrixeq::lyapunov::HURWITZ_TOL;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KypOptions {
    /// Cap on the total number of Newton steps; the best point so far is
    /// used when it is reached.
    pub max_iterations: usize,
    /// `||P - P0||_F` is bounded by `radius_factor (1 + ||P0||_F)`.
    pub radius_factor: f64,
    /// When no strict certificate exists inside the bound, it is widened by
    /// 1e3 at a time up to this factor.
    pub max_radius_factor: f64,
    /// Relative optimality gap at which the path following stops.
    pub gap_tolerance: f64,
}

impl Default for KypOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            radius_factor: 1e3,
            max_radius_factor: 1e9,
            gap_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KypCertificate {
    pub p: Mat,
    pub q: Mat,
    /// `||P B - C_mix||_F`.
    pub constraint_residual: f64,
    pub min_q_eigenvalue: f64,
    pub min_p_eigenvalue: f64,
}

/// Required strictness `eps = 1e-8 ||A||_2`.
pub fn strictness(a: &Mat) -> f64 {
    1e-8 * linalg::norm2(a)
}

struct AffineQ {
    n: usize,
    q0: Mat,
    null: Mat,
    /// `null` columns as symmetric matrices.
    dirs: Vec<Mat>,
    /// `P` corresponding to `q0` and to each direction.
    p0: Mat,
    p_dirs: Vec<Mat>,
}

impl AffineQ {
    fn q_of(&self, z: &Mat) -> Mat {
        let v = if self.null.ncols() == 0 {
            self.q0.clone()
        } else {
            &self.q0 + &self.null * z
        };
        from_svec(&v, self.n)
    }

    fn p_of(&self, z: &Mat) -> Mat {
        let mut p = self.p0.clone();
        for (k, d) in self.p_dirs.iter().enumerate() {
            p += d * z[(k, 0)];
        }
        p
    }
}

/// Isometric vectorisation of a symmetric matrix (off-diagonals scaled by sqrt 2).
fn to_svec(q: &Mat) -> Mat {
    let n = q.nrows();
    let mut v = Mat::zeros(n * (n + 1) / 2, 1);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            v[(k, 0)] = if i == j {
                q[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (q[(i, j)] + q[(j, i)])
            };
            k += 1;
        }
    }
    v
}

fn from_svec(v: &Mat, n: usize) -> Mat {
    let mut q = Mat::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                q[(i, i)] = v[(k, 0)];
            } else {
                let x = v[(k, 0)] / std::f64::consts::SQRT_2;
                q[(i, j)] = x;
                q[(j, i)] = x;
            }
            k += 1;
        }
    }
    q
}

fn affine_q(a: &Mat, b: &Mat, c_mix: &Mat) -> Result<AffineQ> {
    let n = a.nrows();
    let m = b.ncols();
    let d = n * (n + 1) / 2;
    let mut op = Mat::zeros(n * m, d);
    let mut basis = Mat::zeros(d, 1);
    for k in 0..d {
        basis.fill(0.0);
        basis[(k, 0)] = 1.0;
        let pb = from_svec(&basis, n) * b;
        op.column_mut(k).copy_from_slice(pb.as_slice());
    }
    let rhs = Mat::from_column_slice(n * m, 1, c_mix.as_slice());
    let p0 = linalg::lstsq(&op, &rhs, 1e-12);
    let mismatch = (&op * &p0 - &rhs).norm();
    if mismatch > 1e-8 * (1.0 + rhs.norm()) {
        return Err(Error::CertificateSearchDiverged(format!(
            "P B = C M has no symmetric solution (least-squares mismatch {mismatch:e}); \
             C_mix^T B must be symmetric"
        )));
    }
    let p_null = linalg::null_space(&op, 1e-12);
    let p0 = from_svec(&p0, n);
    let p_dirs: Vec<Mat> = p_null
        .column_iter()
        .map(|col| from_svec(&Mat::from_column_slice(col.nrows(), 1, col.as_slice()), n))
        .collect();
    let q_of_p = |p: &Mat| linalg::symmetrize(&-(a.transpose() * p + p * a));
    let dirs: Vec<Mat> = p_dirs.iter().map(q_of_p).collect();
    let mut null = Mat::zeros(d, dirs.len());
    for (k, q) in dirs.iter().enumerate() {
        null.column_mut(k).copy_from(&to_svec(q));
    }
    Ok(AffineQ {
        n,
        q0: to_svec(&q_of_p(&p0)),
        null,
        dirs,
        p0,
        p_dirs,
    })
}

/// State of the barrier problem in `y = (z, t)`.
struct Barrier<'a> {
    aff: &'a AffineQ,
    radius2: f64,
}

impl Barrier<'_> {
    /// `t + mu (log det(Q(z) - t I) + log(R^2 - ||z||^2))`, or `None` outside
    /// the domain.
    fn value(&self, z: &Mat, t: f64, mu: f64) -> Option<f64> {
        let slack = self.radius2 - z.norm_squared();
        if !(slack > 0.0) {
            return None;
        }
        let s = self.aff.q_of(z) - Mat::identity(self.aff.n, self.aff.n) * t;
        let chol = s.cholesky()?;
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(t + mu * (logdet + slack.ln()))
    }

    fn newton_direction(&self, z: &Mat, t: f64, mu: f64) -> Option<(Mat, f64)> {
        let n = self.aff.n;
        let k = self.aff.dirs.len();
        let s = self.aff.q_of(z) - Mat::identity(n, n) * t;
        let s_inv = s.cholesky()?.inverse();
        let mut g_mats: Vec<Mat> = self.aff.dirs.iter().map(|e| &s_inv * e).collect();
        g_mats.push(-&s_inv);
        let slack = self.radius2 - z.norm_squared();
        let mut grad = Mat::zeros(k + 1, 1);
        let mut hess = Mat::zeros(k + 1, k + 1);
        for i in 0..=k {
            grad[(i, 0)] = mu * g_mats[i].trace();
            for j in 0..=i {
                let h = -mu * g_mats[i].component_mul(&g_mats[j].transpose()).sum();
                hess[(i, j)] = h;
                hess[(j, i)] = h;
            }
        }
        for i in 0..k {
            grad[(i, 0)] -= mu * 2.0 * z[(i, 0)] / slack;
            hess[(i, i)] -= mu * 2.0 / slack;
            for j in 0..k {
                hess[(i, j)] -= mu * 4.0 * z[(i, 0)] * z[(j, 0)] / (slack * slack);
            }
        }
        grad[(k, 0)] += 1.0;
        let step = (-&hess).cholesky()?.solve(&grad);
        let decrement = (grad.transpose() * &step)[(0, 0)];
        Some((step, decrement))
    }
}

const NEWTON_STEPS_PER_STAGE: usize = 50;

/// Maximises `lambda_min(Q(z))` over `||z|| < radius`; returns the best `z`
/// found within the iteration budget.
fn maximise_min_eigenvalue(aff: &AffineQ, radius_factor: f64, options: &KypOptions) -> Result<Mat> {
    let k = aff.dirs.len();
    let mut z = Mat::zeros(k, 1);
    if k == 0 {
        return Ok(z);
    }
    let scale = 1.0 + aff.q0.norm();
    let barrier = Barrier {
        aff,
        radius2: (radius_factor * (1.0 + aff.p0.norm())).powi(2),
    };
    let mut t = linalg::min_sym_eigenvalue(&aff.q_of(&z)) - 0.1 * scale;
    let mut mu = 0.1 * scale;
    let dim = (aff.n + 1) as f64;
    let mut iterations = 0;
    // The duality gap of the barrier problem is at most mu * dim.
    while mu * dim > options.gap_tolerance * scale && !(t > 0.0 && mu * dim <= 1e-6 * t) {
        for _ in 0..NEWTON_STEPS_PER_STAGE {
            if iterations >= options.max_iterations {
                return Ok(z);
            }
            iterations += 1;
            let Some((step, decrement)) = barrier.newton_direction(&z, t, mu) else {
                return Ok(z);
            };
            if decrement <= 1e-9 * mu {
                break;
            }
            let f0 = barrier.value(&z, t, mu).unwrap_or(f64::NEG_INFINITY);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let zn = &z + step.rows(0, k) * alpha;
                let tn = t + alpha * step[(k, 0)];
                if let Some(f) = barrier.value(&zn, tn, mu) {
                    if f >= f0 + 0.25 * alpha * decrement {
                        z = zn;
                        t = tn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        mu *= 0.2;
    }
    Ok(z)
}

/// Searches for a KYP certificate of `(A, B, C_mix)`; `A` must be Hurwitz.
pub fn find_certificate(a: &Mat, b: &Mat, c_mix: &Mat, options: &KypOptions) -> Result<KypCertificate> {
    let n = a.nrows();
    let max_real = linalg::spectral_abscissa(a)?;
    if max_real >= HURWITZ_TOL {
        return Err(Error::NotHurwitz { max_real });
    }
    if b.nrows() != n || c_mix.shape() != b.shape() {
        return Err(Error::DimensionMismatch(
            "KYP data must satisfy B, C_mix both n x m".into(),
        ));
    }
    let aff = affine_q(a, b, c_mix)?;
    let eps = strictness(a);
    let mut radius_factor = options.radius_factor;
    let (z, best) = loop {
        let z = maximise_min_eigenvalue(&aff, radius_factor, options)?;
        let q = aff.q_of(&z);
        let best = linalg::min_sym_eigenvalue(&q);
        if best >= eps || radius_factor * 1e3 > options.max_radius_factor * (1.0 + 1e-12) {
            break (z, best);
        }
        radius_factor *= 1e3;
    };
    if !(best >= eps) {
        return Err(Error::CertificateSearchDiverged(format!(
            "largest attainable lambda_min(Q) is {best:e}, below the strictness {eps:e}"
        )));
    }
    let p = linalg::symmetrize(&aff.p_of(&z));
    let constraint_residual = (&p * b - c_mix).norm();
    let q_check = -(a.transpose() * &p + &p * a);
    Ok(KypCertificate {
        min_q_eigenvalue: linalg::min_sym_eigenvalue(&q_check),
        min_p_eigenvalue: linalg::min_sym_eigenvalue(&p),
        constraint_residual,
        p,
        q: linalg::symmetrize(&q_check),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn first_order_lag() {
        let cert = find_certificate(&dmatrix![-1.0], &dmatrix![1.0], &dmatrix![1.0], &KypOptions::default()).unwrap();
        assert!((cert.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((cert.q[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn positive_real_but_not_strict() {
        // (s + 3)/((s + 1)(s + 2)): Re Z(jw) ~ 6/w^4, so Q loses rank
        let a = dmatrix![0.0, 1.0; -2.0, -3.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![3.0; 1.0];
        assert!(find_certificate(&a, &b, &c, &KypOptions::default()).is_err());
    }

    #[test]
    fn svec_round_trip() {
        let q = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 5.0; 3.0, 5.0, 6.0];
        assert_eq!(from_svec(&to_svec(&q), 3), q);
        assert!((to_svec(&q).norm() - q.norm()).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_markov_parameter_rejected() {
        // C_mix^T B = [[1, 1], [0, 1]] is not symmetric
        let a = -Mat::identity(2, 2);
        let b = Mat::identity(2, 2);
        let c = dmatrix![1.0, 0.0; 1.0, 1.0];
        assert!(matches!(
            find_certificate(&a, &b, &c, &KypOptions::default()),
            Err(Error::CertificateSearchDiverged(_))
        ));
    }

    #[test]
    fn non_spr_has_no_certificate() {
        // (s - 1)/(s + 1)^2
        let a = dmatrix![0.0, 1.0; -1.0, -2.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![-1.0; 1.0];
        assert!(find_certificate(&a, &b, &c, &KypOptions::default()).is_err());
    }

    #[test]
    fn second_order_spr_certificate() {
        // (s + 1)/((s + 2)(s + 3))
        let a = dmatrix![0.0, 1.0; -6.0, -5.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![1.0; 1.0];
        let cert = find_certificate(&a, &b, &c, &KypOptions::default()).unwrap();
        assert!(cert.constraint_residual < 1e-10);
        assert!(cert.min_q_eigenvalue > strictness(&a));
        assert!(cert.min_p_eigenvalue > 0.0);
    }
}
