use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::ltr::design_ltr;
use crate::statespace::{StateSpaceModel, RANK_TOL, TOL_ZERO};

use super::kyp::KypOptions;
use super::siso::design_siso_ls;
use super::spr::{verify_spr_with, SprReport};

#[derive(Debug, Clone, PartialEq)]
pub struct MimoOptions {
    /// `rho` used when the problem reduces to a single input.
    pub siso_rho: f64,
    /// First `nu` tried on the Riccati route.
    pub nu_synth: f64,
    /// How many times `nu` is halved before giving up on that route.
    pub halvings: usize,
    /// `rho` of the invariant-subspace fallback `(A_m + L_s C^T) B = -rho B`.
    pub fallback_rho: Option<f64>,
    pub grid: Vec<f64>,
    pub kyp: KypOptions,
}

impl Default for MimoOptions {
    fn default() -> Self {
        Self {
            siso_rho: 1.0,
            nu_synth: 1e-3,
            halvings: 6,
            fallback_rho: Some(1.0),
            grid: super::spr::default_grid(),
            kyp: KypOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MimoRoute {
    SingleInput,
    AlreadySpr,
    Riccati { nu: f64 },
    InvariantSubspace { rho: f64 },
}

#[derive(Debug, Clone)]
pub struct MimoSynthesis {
    pub l_s: Mat,
    pub route: MimoRoute,
    pub report: SprReport,
}

fn premixed(a_l: &Mat, b: &Mat, c: &Mat, m: &Mat) -> Result<StateSpaceModel> {
    StateSpaceModel::new(a_l.clone(), b.clone(), c * m)
}

fn certify(a_m: &Mat, b: &Mat, c: &Mat, m: &Mat, l_s: &Mat, options: &MimoOptions) -> Result<Option<SprReport>> {
    let a_l = a_m + l_s * c.transpose();
    if linalg::spectral_abscissa(&a_l)? >= crate::matrixeq::lyapunov::HURWITZ_TOL {
        return Ok(None);
    }
    let report = verify_spr_with(&premixed(&a_l, b, c, m)?, &options.grid, &options.kyp)?;
    Ok(report.is_spr().then_some(report))
}

/// Gain `L_s` making `M^T C^T (sI - A_m - L_s C^T)^{-1} B` SPR with
/// `M = C^T B`.
///
/// Single-input problems use the SISO construction. Otherwise `L_s = 0` is
/// kept when it already certifies, then the Riccati gain at decreasing `nu`
/// is tried, and finally the gain that makes `range(B)` an invariant subspace
/// at `-rho`, which yields `C^T B / (s + rho)` exactly.
pub fn design_mimo_ls(a_m: &Mat, b: &Mat, c: &Mat, options: &MimoOptions) -> Result<MimoSynthesis> {
    let model = StateSpaceModel::new(a_m.clone(), b.clone(), c.clone())?;
    if !model.is_square() {
        return Err(Error::NonSquare {
            outputs: model.p(),
            inputs: model.m(),
        });
    }
    let m = model.mixing_matrix();
    if linalg::sigma_ratio(&m) <= RANK_TOL {
        return Err(Error::DegenerateRelativeDegree);
    }
    if model.m() == 1 {
        let l_s = design_siso_ls(a_m, b, c, options.siso_rho)?;
        let report = certify(a_m, b, c, &m, &l_s, options)?
            .ok_or_else(|| Error::SynthesisFailed("SISO gain did not pass the SPR certificate".into()))?;
        return Ok(MimoSynthesis {
            l_s,
            route: MimoRoute::SingleInput,
            report,
        });
    }
    if !model.is_observable()? {
        return Err(Error::NotObservable);
    }
    if let Some(z) = model.transmission_zeros()?.into_iter().find(|z| z.re >= -TOL_ZERO) {
        return Err(Error::NotMinimumPhase { zero: z });
    }

    let n = model.n();
    let zero_gain = Mat::zeros(n, model.p());
    if linalg::spectral_abscissa(a_m)? < crate::matrixeq::lyapunov::HURWITZ_TOL {
        if let Some(report) = certify(a_m, b, c, &m, &zero_gain, options)? {
            return Ok(MimoSynthesis {
                l_s: zero_gain,
                route: MimoRoute::AlreadySpr,
                report,
            });
        }
    }

    let mut failures = Vec::new();
    let q0 = Mat::identity(n, n);
    let r0 = Mat::identity(model.p(), model.p());
    let mut nu = options.nu_synth;
    for _ in 0..=options.halvings {
        match design_ltr(a_m, b, c, &q0, &r0, nu, model.m()) {
            Ok(d) => match certify(a_m, b, c, &m, &d.l_nu, options)? {
                Some(report) => {
                    return Ok(MimoSynthesis {
                        l_s: d.l_nu,
                        route: MimoRoute::Riccati { nu },
                        report,
                    })
                }
                None => failures.push(format!("nu = {nu:e}: SPR certificate not found")),
            },
            Err(e) => failures.push(format!("nu = {nu:e}: {e}")),
        }
        nu *= 0.5;
    }

    if let Some(rho) = options.fallback_rho {
        let m_inv = m.clone().try_inverse().ok_or(Error::DegenerateRelativeDegree)?;
        let l_s = -(a_m * b + b * rho) * m_inv;
        match certify(a_m, b, c, &m, &l_s, options)? {
            Some(report) => {
                return Ok(MimoSynthesis {
                    l_s,
                    route: MimoRoute::InvariantSubspace { rho },
                    report,
                })
            }
            None => failures.push(format!(
                "invariant-subspace gain at rho = {rho}: SPR certificate not found"
            )),
        }
    }
    Err(Error::SynthesisFailed(failures.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn diagonal_lag_needs_no_gain() {
        let eye = Mat::identity(2, 2);
        let s = design_mimo_ls(&-&eye, &eye, &eye, &MimoOptions::default()).unwrap();
        assert_eq!(s.route, MimoRoute::AlreadySpr);
        assert_eq!(s.l_s, Mat::zeros(2, 2));
    }

    #[test]
    fn single_input_delegates() {
        let a_m = dmatrix![0.0, 1.0; -2.0, -3.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![3.0; 1.0];
        let s = design_mimo_ls(&a_m, &b, &c, &MimoOptions::default()).unwrap();
        assert_eq!(s.route, MimoRoute::SingleInput);
        assert_eq!(s.l_s, design_siso_ls(&a_m, &b, &c, 1.0).unwrap());
    }

    #[test]
    fn unstable_coupled_plant_certifies() {
        let a_m = dmatrix![1.0, 2.0, 0.0; 0.0, -1.0, 1.0; 1.0, 0.0, -2.0];
        let b = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        let c = dmatrix![1.0, 0.5; 0.0, 1.0; 0.0, 0.0];
        let s = design_mimo_ls(&a_m, &b, &c, &MimoOptions::default()).unwrap();
        assert!(s.report.is_spr());
    }
}
