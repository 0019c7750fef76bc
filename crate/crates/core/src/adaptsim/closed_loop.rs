use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::matrixeq::lyapunov::HURWITZ_TOL;
use crate::statespace::UncertainPlant;

use super::rk4::Integrator;
use super::signal::Reference;

/// True plant `x' = A x + B Lambda u + B_ref r`, `y = C^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantDynamics {
    pub a: Mat,
    pub b: Mat,
    pub lambda: Mat,
    pub c: Mat,
    /// Direct reference injection (the integral-error state of a tracking
    /// loop); zero columns when absent.
    pub b_ref: Mat,
}

impl PlantDynamics {
    pub fn new(a: Mat, b: Mat, lambda: Mat, c: Mat, b_ref: Mat) -> Result<Self> {
        let n = a.nrows();
        linalg::check_square(&a, "A")?;
        if b.nrows() != n || c.nrows() != n || b_ref.nrows() != n {
            return Err(Error::DimensionMismatch("B, C and B_ref must have n rows".into()));
        }
        if lambda.shape() != (b.ncols(), b.ncols()) {
            return Err(Error::DimensionMismatch("Lambda must be m x m".into()));
        }
        Ok(Self { a, b, lambda, c, b_ref })
    }

    /// True dynamics of an uncertain plant, no direct reference injection.
    pub fn from_uncertain(plant: &UncertainPlant, reference_dim: usize) -> Result<Self> {
        let n = plant.nominal.n();
        Self::new(
            plant.true_a(),
            plant.nominal.b().clone(),
            plant.lambda_matrix(),
            plant.nominal.c().clone(),
            Mat::zeros(n, reference_dim),
        )
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
}

/// `x_m' = A_m x_m + B_r r - L (y - y_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub a_m: Mat,
    pub b_r: Mat,
    pub l: Mat,
    pub c: Mat,
}

impl ReferenceModel {
    pub fn new(a_m: Mat, b_r: Mat, l: Mat, c: Mat) -> Result<Self> {
        let n = a_m.nrows();
        linalg::check_square(&a_m, "A_m")?;
        if b_r.nrows() != n || l.nrows() != n || c.nrows() != n || l.ncols() != c.ncols() {
            return Err(Error::DimensionMismatch(
                "reference model needs B_r, L, C with n rows and L, C with p columns".into(),
            ));
        }
        let max_real = linalg::spectral_abscissa(&a_m)?;
        if max_real >= HURWITZ_TOL {
            return Err(Error::NotHurwitz { max_real });
        }
        Ok(Self { a_m, b_r, l, c })
    }
}

/// Diagonal adaptation gains and the output mixer of the update laws
/// `Theta' = -Gamma_theta x_m e_y^T mixer`, `K' = -Gamma_k r e_y^T mixer`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveGains {
    pub gamma_theta: DVector<f64>,
    pub gamma_k: DVector<f64>,
    pub mixer: Mat,
}

impl AdaptiveGains {
    pub fn new(gamma_theta: DVector<f64>, gamma_k: DVector<f64>, mixer: Mat) -> Result<Self> {
        if gamma_theta
            .iter()
            .chain(gamma_k.iter())
            .any(|g| !(*g >= 0.0) || !g.is_finite())
        {
            return Err(Error::InvalidArgument(
                "adaptation gains must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            gamma_theta,
            gamma_k,
            mixer,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    /// `u = K_b^T x_m + Theta^T x_m (+ K^T r)`.
    Adaptive {
        gains: AdaptiveGains,
        /// Fixed baseline gain `K_b^T` (m x n) acting on `x_m`.
        baseline: Option<Mat>,
        /// Include the adaptive feedforward `K^T r`.
        feedforward: bool,
    },
    /// Full-state feedback `u = K^T x`; no adaptation.
    StateFeedback { k_t: Mat },
}

impl Controller {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Controller::Adaptive { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub plant: PlantDynamics,
    pub reference_model: ReferenceModel,
    pub controller: Controller,
}

/// Joint state of plant, reference model and adaptive parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub x: DVector<f64>,
    pub x_m: DVector<f64>,
    /// `n x m`.
    pub theta: Mat,
    /// `q x m` (`q` = reference dimension).
    pub k: Mat,
}

impl LoopState {
    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(self.x_m.iter())
            .chain(self.theta.iter())
            .chain(self.k.iter())
            .all(|v| v.is_finite())
    }
}

impl ClosedLoop {
    pub fn new(plant: PlantDynamics, reference_model: ReferenceModel, controller: Controller) -> Result<Self> {
        let (n, m, p) = (plant.n(), plant.m(), plant.p());
        if reference_model.a_m.nrows() != n || reference_model.c.ncols() != p {
            return Err(Error::DimensionMismatch(
                "reference model dimensions differ from the plant".into(),
            ));
        }
        if reference_model.c != plant.c {
            return Err(Error::InvalidArgument(
                "plant and reference model must share the output map".into(),
            ));
        }
        let q = reference_model.b_r.ncols();
        if plant.b_ref.ncols() != q {
            return Err(Error::DimensionMismatch(
                "plant and reference model must take the same reference dimension".into(),
            ));
        }
        match &controller {
            Controller::Adaptive {
                gains,
                baseline,
                feedforward,
            } => {
                if gains.gamma_theta.len() != n || gains.mixer.shape() != (p, m) {
                    return Err(Error::DimensionMismatch(format!(
                        "Gamma_theta needs {n} entries and the mixer must be {p}x{m}"
                    )));
                }
                if *feedforward && gains.gamma_k.len() != q {
                    return Err(Error::DimensionMismatch(format!("Gamma_k needs {q} entries")));
                }
                if let Some(kb) = baseline {
                    if kb.shape() != (m, n) {
                        return Err(Error::DimensionMismatch(format!("baseline gain must be {m}x{n}")));
                    }
                }
            }
            Controller::StateFeedback { k_t } => {
                if k_t.shape() != (m, n) {
                    return Err(Error::DimensionMismatch(format!("state-feedback gain must be {m}x{n}")));
                }
            }
        }
        Ok(Self {
            plant,
            reference_model,
            controller,
        })
    }

    pub fn reference_dim(&self) -> usize {
        self.reference_model.b_r.ncols()
    }

    /// Default initial parameters: `Theta = 0`, `K = I` (or its `q x m` analogue).
    pub fn initial_state(&self, x0: DVector<f64>, xm0: DVector<f64>) -> LoopState {
        let (n, m, q) = (self.plant.n(), self.plant.m(), self.reference_dim());
        LoopState {
            x: x0,
            x_m: xm0,
            theta: Mat::zeros(n, m),
            k: Mat::identity(q, m),
        }
    }

    pub fn output_error(&self, s: &LoopState) -> DVector<f64> {
        self.plant.c.tr_mul(&(&s.x - &s.x_m))
    }

    pub fn control(&self, s: &LoopState, r: &DVector<f64>) -> DVector<f64> {
        match &self.controller {
            Controller::Adaptive {
                baseline, feedforward, ..
            } => {
                let mut u = s.theta.tr_mul(&s.x_m);
                if let Some(kb) = baseline {
                    u += kb * &s.x_m;
                }
                if *feedforward {
                    u += s.k.tr_mul(r);
                }
                u
            }
            Controller::StateFeedback { k_t } => k_t * &s.x,
        }
    }

    /// Spectral radius of the linear part of the `(x, x_m)` dynamics with the
    /// adaptive parameters frozen at `theta`.
    pub fn linear_spectral_radius(&self, theta: &Mat) -> Result<f64> {
        let pl = &self.plant;
        let rm = &self.reference_model;
        let n = pl.n();
        let lc = &rm.l * pl.c.transpose();
        let mut j = Mat::zeros(2 * n, 2 * n);
        match &self.controller {
            Controller::Adaptive { baseline, .. } => {
                let mut gain = theta.transpose();
                if let Some(kb) = baseline {
                    gain += kb;
                }
                j.view_mut((0, 0), (n, n)).copy_from(&pl.a);
                j.view_mut((0, n), (n, n)).copy_from(&(&pl.b * &pl.lambda * gain));
            }
            Controller::StateFeedback { k_t } => {
                j.view_mut((0, 0), (n, n))
                    .copy_from(&(&pl.a + &pl.b * &pl.lambda * k_t));
            }
        }
        j.view_mut((n, 0), (n, n)).copy_from(&-&lc);
        j.view_mut((n, n), (n, n)).copy_from(&(&rm.a_m + &lc));
        if !j.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t: 0.0 });
        }
        Ok(j.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Time derivative of the joint state.
    pub fn derivative(&self, s: &LoopState, r: &DVector<f64>) -> LoopState {
        let e_y = self.output_error(s);
        let u = self.control(s, r);
        let pl = &self.plant;
        let rm = &self.reference_model;
        let dx = &pl.a * &s.x + &pl.b * (&pl.lambda * &u) + &pl.b_ref * r;
        let dxm = &rm.a_m * &s.x_m + &rm.b_r * r - &rm.l * &e_y;
        let (dtheta, dk) = match &self.controller {
            Controller::Adaptive { gains, feedforward, .. } => {
                let w = gains.mixer.tr_mul(&e_y);
                let mut dtheta = -(&s.x_m * w.transpose());
                for (i, mut row) in dtheta.row_iter_mut().enumerate() {
                    row *= gains.gamma_theta[i];
                }
                let mut dk = Mat::zeros(s.k.nrows(), s.k.ncols());
                if *feedforward {
                    dk = -(r * w.transpose());
                    for (i, mut row) in dk.row_iter_mut().enumerate() {
                        row *= gains.gamma_k[i];
                    }
                }
                (dtheta, dk)
            }
            Controller::StateFeedback { .. } => (
                Mat::zeros(s.theta.nrows(), s.theta.ncols()),
                Mat::zeros(s.k.nrows(), s.k.ncols()),
            ),
        };
        LoopState {
            x: dx,
            x_m: dxm,
            theta: dtheta,
            k: dk,
        }
    }
}

/// One classical Runge-Kutta step of the coupled system from `t` to `t + dt`;
/// `r(t)` is evaluated at the stage times.
pub fn step_closed_loop(
    cl: &ClosedLoop,
    reference: &Reference,
    t: f64,
    state: &LoopState,
    dt: f64,
) -> Result<LoopState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut rk = Integrator::new(cl);
    let mut v = rk.pack(state);
    rk.step(reference, t, &mut v, dt);
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { t: t + dt });
    }
    Ok(rk.unpack(&v))
}
