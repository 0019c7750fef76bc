//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything works on dynamically sized `nalgebra` matrices. Eigenvalue
//! problems for non-symmetric matrices go through the complex Schur form in
//! [`schur`]; generalized eigenvalues of matrix pencils through [`qz`].

pub mod qz;
pub mod schur;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Complex Givens rotation `(c, s, r)` with real `c` such that
/// `[c s; -conj(s) c] * [f; g] = [r; 0]`.
pub(crate) fn cgivens(f: Complex64, g: Complex64) -> (f64, Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    if g == zero {
        return (1.0, zero, f);
    }
    if f == zero {
        let ga = g.norm();
        return (0.0, g.conj() / ga, Complex64::new(ga, 0.0));
    }
    let fa = f.norm();
    let ga = g.norm();
    let norm = fa.hypot(ga);
    let phase = f / fa;
    let c = fa / norm;
    let s = phase * g.conj() / norm;
    (c, s, phase * norm)
}

/// Applies the rotation to rows `i` and `j` over the column range `cols`.
pub(crate) fn rot_rows(m: &mut CMat, i: usize, j: usize, cols: std::ops::Range<usize>, c: f64, s: Complex64) {
    for col in cols {
        let x = m[(i, col)];
        let y = m[(j, col)];
        m[(i, col)] = x * c + s * y;
        m[(j, col)] = y * c - s.conj() * x;
    }
}

/// Applies the rotation to columns `i` (the `x` operand) and `j` over `rows`.
pub(crate) fn rot_cols(m: &mut CMat, i: usize, j: usize, rows: std::ops::Range<usize>, c: f64, s: Complex64) {
    for row in rows {
        let x = m[(row, i)];
        let y = m[(row, j)];
        m[(row, i)] = x * c + s * y;
        m[(row, j)] = y * c - s.conj() * x;
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn singular_values(m: &Mat) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().singular_values()
}

/// Ratio `sigma_min / sigma_max`; zero for an all-zero matrix.
pub fn sigma_ratio(m: &Mat) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0.0;
    }
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Numerical rank at threshold `sigma > rel_tol * sigma_max`.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0;
    }
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    let v = &eig.eigenvectors;
    symmetrize(&(v * d * v.transpose()))
}

/// Symmetric square root of a symmetric positive definite matrix.
pub fn spd_sqrt(m: &Mat) -> Result<Mat> {
    check_spd(m, "matrix")?;
    Ok(sym_map(m, f64::sqrt))
}

/// Symmetric inverse square root of a symmetric positive definite matrix.
pub fn spd_inv_sqrt(m: &Mat) -> Result<Mat> {
    check_spd(m, "matrix")?;
    Ok(sym_map(m, |v| 1.0 / v.sqrt()))
}

pub fn check_square(m: &Mat, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_symmetric(m: &Mat, name: &str) -> Result<()> {
    check_square(m, name)?;
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be symmetric (asymmetry {asym:e})"
        )));
    }
    Ok(())
}

pub fn check_spd(m: &Mat, name: &str) -> Result<()> {
    check_symmetric(m, name)?;
    let min = min_sym_eigenvalue(m);
    if !(min > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

pub fn check_psd(m: &Mat, name: &str) -> Result<()> {
    check_symmetric(m, name)?;
    let min = min_sym_eigenvalue(m);
    if min < -1e-12 * (1.0 + m.norm()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

pub fn check_finite(m: &Mat, name: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    schur::ComplexSchur::eigenvalues_of(a)
}

pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest distance between paired entries of two multisets of complex numbers
/// of equal size, under the pairing that minimises the total distance.
///
/// Each distance is scaled by `max(1, |target|)`.
pub fn spectral_distance(computed: &[Complex64], target: &[Complex64]) -> f64 {
    assert_eq!(computed.len(), target.len(), "spectra must have equal size");
    let n = target.len();
    if n == 0 {
        return 0.0;
    }
    let cost: Vec<Vec<f64>> = computed
        .iter()
        .map(|a| target.iter().map(|b| (a - b).norm() / b.norm().max(1.0)).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .fold(0.0, f64::max)
}

/// Hungarian algorithm for a square cost matrix; returns the column assigned to
/// each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Least-squares solution of `A X = B` through the SVD (minimum norm when
/// `A` is rank deficient).
pub fn lstsq(a: &Mat, b: &Mat, rel_tol: f64) -> Mat {
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = rel_tol * max;
    svd.solve(b, eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}

/// Orthonormal basis of the null space of `m` (columns).
pub fn null_space(m: &Mat, rel_tol: f64) -> Mat {
    let n = m.ncols();
    // Pad to at least square so the SVD returns a full right basis.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let null: Vec<usize> = order
        .into_iter()
        .filter(|&i| !(svd.singular_values[i] > rel_tol * max) || max == 0.0)
        .collect();
    let mut basis = DMatrix::zeros(n, null.len());
    for (k, &i) in null.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * a[(i, j)]));
        }
    }
    out
}

/// Horizontal concatenation `[a b]`.
pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// Vertical concatenation `[a; b]`.
pub fn vstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// Real polynomial coefficients (highest degree first) of `prod (s - r_i)`.
/// The roots should be closed under conjugation; imaginary residue is dropped.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Checks that a set of complex numbers is closed under conjugation.
pub fn closed_under_conjugation(values: &[Complex64], tol: f64) -> bool {
    let mut used = vec![false; values.len()];
    for (i, v) in values.iter().enumerate() {
        if used[i] {
            continue;
        }
        let scale = tol * v.norm().max(1.0);
        if v.im.abs() <= scale {
            used[i] = true;
            continue;
        }
        let partner = values
            .iter()
            .enumerate()
            .find(|(j, w)| !used[*j] && *j != i && (*w - v.conj()).norm() <= scale);
        match partner {
            Some((j, _)) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}
