//! Linear time-invariant models `x' = A x + B u`, `y = C^T x`.
//!
//! The output matrix is stored as `C` (n x p) and applied transposed, so
//! `mixing_matrix` is literally `C^T B`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, qz, CMat, Mat};

/// Zeros with real part above `-TOL_ZERO` count as non-minimum-phase.
pub const TOL_ZERO: f64 = 1e-9;
/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Normalised `|beta|` below which a pencil eigenvalue is infinite.
pub const INFINITE_BETA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Mat,
    b: Mat,
    c: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralReport {
    pub observable: bool,
    pub controllable: bool,
    pub minimum_phase: bool,
    pub markov_rank: usize,
}

impl StateSpaceModel {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        linalg::check_square(&a, "A")?;
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 || c.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "state, input and output dimensions must all be at least 1".into(),
            ));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if c.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "C has {} rows, expected {n}",
                c.nrows()
            )));
        }
        linalg::check_finite(&a, "A")?;
        linalg::check_finite(&b, "B")?;
        linalg::check_finite(&c, "C")?;
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.m() == self.p()
    }

    /// Same `B`, `C` with a different state matrix.
    pub fn with_a(&self, a: Mat) -> Result<Self> {
        Self::new(a, self.b.clone(), self.c.clone())
    }

    /// Premixes the output: the returned model has output map `(C M)^T`, so
    /// its transfer matrix is `M^T Z(s)`.
    pub fn premix_output(&self, mixer: &Mat) -> Result<Self> {
        if mixer.nrows() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "output mixer has {} rows, expected {}",
                mixer.nrows(),
                self.p()
            )));
        }
        Self::new(self.a.clone(), self.b.clone(), &self.c * mixer)
    }

    /// `C^T (sI - A)^{-1} B`, via an LU solve of the resolvent.
    pub fn eval_transfer(&self, s: Complex64) -> Result<CMat> {
        let n = self.n();
        let mut resolvent = -linalg::to_complex(&self.a);
        for i in 0..n {
            resolvent[(i, i)] += s;
        }
        let lu = resolvent.clone().lu();
        let u = lu.u();
        let diag: Vec<f64> = u.diagonal().iter().map(|z| z.norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = resolvent.norm().max(f64::MIN_POSITIVE);
        if min <= 1e-14 * scale.max(max) {
            return Err(Error::SingularResolvent { s });
        }
        let x = lu
            .solve(&linalg::to_complex(&self.b))
            .ok_or(Error::SingularResolvent { s })?;
        Ok(linalg::to_complex(&self.c).transpose() * x)
    }

    /// `C^T B`.
    pub fn mixing_matrix(&self) -> Mat {
        self.c.transpose() * &self.b
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        linalg::eigenvalues(&self.a)
    }

    /// PBH test on `[A - lambda I; C^T]` at every eigenvalue of `A`.
    pub fn is_observable(&self) -> Result<bool> {
        let ct = self.c.transpose();
        self.pbh(&ct, true)
    }

    /// PBH test on `[A - lambda I, B]` at every eigenvalue of `A`.
    pub fn is_controllable(&self) -> Result<bool> {
        let b = self.b.clone();
        self.pbh(&b, false)
    }

    fn pbh(&self, extra: &Mat, stack_rows: bool) -> Result<bool> {
        let n = self.n();
        let scale = self.a.norm().max(extra.norm()).max(1.0);
        for lambda in self.poles()? {
            let mut shifted = linalg::to_complex(&self.a);
            for i in 0..n {
                shifted[(i, i)] -= lambda;
            }
            let ext = linalg::to_complex(extra);
            let stacked = if stack_rows {
                let mut m = CMat::zeros(n + ext.nrows(), n);
                m.view_mut((0, 0), (n, n)).copy_from(&shifted);
                m.view_mut((n, 0), ext.shape()).copy_from(&ext);
                m
            } else {
                let mut m = CMat::zeros(n, n + ext.ncols());
                m.view_mut((0, 0), (n, n)).copy_from(&shifted);
                m.view_mut((0, n), ext.shape()).copy_from(&ext);
                m
            };
            let sv = stacked.singular_values();
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if smin <= 1e-9 * scale {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Numerical rank of `C^T B` at threshold `RANK_TOL`.
    pub fn markov_rank(&self) -> usize {
        linalg::numerical_rank(&self.mixing_matrix(), RANK_TOL)
    }

    /// Finite transmission zeros of a square minimal model.
    pub fn transmission_zeros(&self) -> Result<Vec<Complex64>> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                outputs: self.p(),
                inputs: self.m(),
            });
        }
        if !self.is_controllable()? {
            return Err(Error::NotMinimal("uncontrollable mode".into()));
        }
        if !self.is_observable()? {
            return Err(Error::NotMinimal("unobservable mode".into()));
        }
        self.invariant_zeros()
    }

    /// Finite generalized eigenvalues of the Rosenbrock pencil, without the
    /// minimality check.
    pub fn invariant_zeros(&self) -> Result<Vec<Complex64>> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                outputs: self.p(),
                inputs: self.m(),
            });
        }
        let n = self.n();
        let m = self.m();
        let mut pencil = Mat::zeros(n + m, n + m);
        pencil.view_mut((0, 0), (n, n)).copy_from(&self.a);
        pencil.view_mut((0, n), (n, m)).copy_from(&self.b);
        pencil.view_mut((n, 0), (m, n)).copy_from(&self.c.transpose());
        let mut e = Mat::zeros(n + m, n + m);
        for i in 0..n {
            e[(i, i)] = 1.0;
        }
        let eig = qz::generalized_eigenvalues(&pencil, &e)?;
        if eig.iter().any(|ev| ev.indeterminate) {
            return Err(Error::SingularPencil);
        }
        Ok(eig.iter().filter_map(|ev| ev.finite(INFINITE_BETA_TOL)).collect())
    }

    pub fn is_minimum_phase(&self) -> Result<bool> {
        Ok(self.invariant_zeros()?.iter().all(|z| z.re < -TOL_ZERO))
    }

    pub fn structural_checks(&self) -> Result<StructuralReport> {
        Ok(StructuralReport {
            observable: self.is_observable()?,
            controllable: self.is_controllable()?,
            minimum_phase: self.is_minimum_phase()?,
            markov_rank: self.markov_rank(),
        })
    }
}

/// Nominal model together with the matched uncertainty `Psi` and the input
/// effectiveness `Lambda`. The true state matrix is `A + B Lambda Psi^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainPlant {
    pub nominal: StateSpaceModel,
    pub psi: Mat,
    pub lambda: DVector<f64>,
    pub theta_bar: f64,
    pub lambda_bar: f64,
}

impl UncertainPlant {
    pub fn new(
        nominal: StateSpaceModel,
        psi: Mat,
        lambda: DVector<f64>,
        theta_bar: f64,
        lambda_bar: f64,
    ) -> Result<Self> {
        let (n, m) = (nominal.n(), nominal.m());
        if psi.shape() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "Psi is {}x{}, expected {n}x{m}",
                psi.nrows(),
                psi.ncols()
            )));
        }
        if lambda.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "Lambda has {} diagonal entries, expected {m}",
                lambda.len()
            )));
        }
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::AssumptionViolated(
                "Lambda must be diagonal with positive entries".into(),
            ));
        }
        if !(theta_bar >= 0.0) || !(lambda_bar > 0.0) {
            return Err(Error::InvalidArgument(
                "bounds must satisfy theta_bar >= 0 and lambda_bar > 0".into(),
            ));
        }
        let lambda_norm = lambda.iter().cloned().fold(0.0, f64::max);
        if lambda_norm > lambda_bar * (1.0 + 1e-12) {
            return Err(Error::AssumptionViolated(format!(
                "||Lambda|| = {lambda_norm} exceeds the bound {lambda_bar}"
            )));
        }
        Ok(Self {
            nominal,
            psi,
            lambda,
            theta_bar,
            lambda_bar,
        })
    }

    /// Certain plant: `Psi = 0`, `Lambda = I`.
    pub fn exact(nominal: StateSpaceModel) -> Self {
        let (n, m) = (nominal.n(), nominal.m());
        Self {
            nominal,
            psi: Mat::zeros(n, m),
            lambda: DVector::from_element(m, 1.0),
            theta_bar: 0.0,
            lambda_bar: 1.0,
        }
    }

    pub fn lambda_matrix(&self) -> Mat {
        DMatrix::from_diagonal(&self.lambda)
    }

    /// `A + B Lambda Psi^T`.
    pub fn true_a(&self) -> Mat {
        self.nominal.a() + self.nominal.b() * self.lambda_matrix() * self.psi.transpose()
    }

    pub fn true_model(&self) -> StateSpaceModel {
        StateSpaceModel {
            a: self.true_a(),
            b: self.nominal.b.clone(),
            c: self.nominal.c.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn second_order() -> StateSpaceModel {
        StateSpaceModel::new(dmatrix![0.0, 1.0; -2.0, -3.0], dmatrix![0.0; 1.0], dmatrix![3.0; 1.0]).unwrap()
    }

    #[test]
    fn first_order_dc_gain() {
        let m = StateSpaceModel::new(dmatrix![-1.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let z = m.eval_transfer(Complex64::new(0.0, 0.0)).unwrap();
        assert!((z[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(m.transmission_zeros().unwrap().is_empty());
    }

    #[test]
    fn second_order_transfer_and_zero() {
        let m = second_order();
        let s = Complex64::new(0.0, 1.0);
        let expected = (s + 3.0) / ((s + 1.0) * (s + 2.0));
        let z = m.eval_transfer(s).unwrap();
        assert!((z[(0, 0)] - expected).norm() < 1e-14);
        let zeros = m.transmission_zeros().unwrap();
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0] - Complex64::new(-3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn resolvent_singular_at_pole() {
        let m = second_order();
        assert!(matches!(
            m.eval_transfer(Complex64::new(-1.0, 0.0)),
            Err(Error::SingularResolvent { .. })
        ));
    }

    #[test]
    fn scalar_mixing_matrix() {
        let m = StateSpaceModel::new(dmatrix![-1.0], dmatrix![2.0], dmatrix![3.0]).unwrap();
        assert_eq!(m.mixing_matrix()[(0, 0)], 6.0);
    }

    #[test]
    fn double_integrator_is_minimal() {
        let m = StateSpaceModel::new(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], dmatrix![1.0; 0.0]).unwrap();
        assert!(m.is_controllable().unwrap());
        assert!(m.is_observable().unwrap());
    }

    #[test]
    fn unreachable_mode_detected() {
        let m = StateSpaceModel::new(dmatrix![-1.0, 0.0; 0.0, -2.0], dmatrix![1.0; 0.0], dmatrix![1.0; 0.0]).unwrap();
        assert!(!m.is_controllable().unwrap());
        assert!(matches!(m.transmission_zeros(), Err(Error::NotMinimal(_))));
    }

    #[test]
    fn non_square_zeros_rejected() {
        let m = StateSpaceModel::new(dmatrix![-1.0, 0.0; 0.0, -2.0], dmatrix![1.0; 1.0], Mat::identity(2, 2)).unwrap();
        assert!(matches!(
            m.transmission_zeros(),
            Err(Error::NonSquare { outputs: 2, inputs: 1 })
        ));
    }

    #[test]
    fn singular_pencil_detected() {
        // two identical input channels: Z(s) has rank one for every s
        let m = StateSpaceModel::new(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0, 1.0; 1.0, 1.0],
            dmatrix![1.0, 0.0; 0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(m.invariant_zeros(), Err(Error::SingularPencil)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(StateSpaceModel::new(Mat::identity(2, 2), Mat::zeros(3, 1), Mat::zeros(2, 1)).is_err());
        assert!(StateSpaceModel::new(Mat::zeros(2, 3), Mat::zeros(2, 1), Mat::zeros(2, 1)).is_err());
    }

    #[test]
    fn uncertain_plant_true_dynamics() {
        let nominal = second_order();
        let plant = UncertainPlant::new(nominal, dmatrix![1.0; 2.0], DVector::from_element(1, 0.5), 3.0, 1.0).unwrap();
        let a = plant.true_a();
        assert_eq!(a[(1, 0)], -2.0 + 0.5);
        assert_eq!(a[(1, 1)], -3.0 + 1.0);
        assert!(UncertainPlant::new(
            second_order(),
            dmatrix![1.0; 2.0],
            DVector::from_element(1, -0.5),
            3.0,
            1.0
        )
        .is_err());
    }
}
