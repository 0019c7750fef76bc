//! Frequency-domain SPR checks plus the KYP certificate.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use super::kyp::{self, KypCertificate, KypOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::statespace::StateSpaceModel;

pub const GRID_POINTS: usize = 240;
pub const GRID_MIN: f64 = 1e-4;
pub const GRID_MAX: f64 = 1e6;

/// `count` log-spaced frequencies over `[lo, hi]` rad/s.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

/// Default grid: 240 log-spaced points over `[1e-4, 1e6]` rad/s.
pub fn default_grid() -> Vec<f64> {
    log_grid(GRID_MIN, GRID_MAX, GRID_POINTS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprReport {
    /// Hermitian part of `Z(jw)` positive definite at every tested frequency.
    pub frequency_ok: bool,
    /// Eigenvalue phases of `Z(jw)` stay inside (-90, 90) degrees.
    pub phase_margin_ok: bool,
    /// Smallest eigenvalue of `He Z(jw)` seen, and where.
    pub min_hermitian_eigenvalue: f64,
    pub worst_frequency: f64,
    /// Largest `|phase|` in degrees over the tested frequencies.
    pub max_phase_deg: f64,
    /// Frequency of the largest `sigma_max(Z(jw))`, found by local refinement.
    pub peak_frequency: f64,
    /// `C^T B` symmetric positive definite (necessary for SPR with `D = 0`).
    pub markov_symmetric_pd: bool,
    pub kyp: Option<KypCertificate>,
    pub kyp_failure: Option<String>,
}

impl SprReport {
    /// Frequency test passed and a certificate was found.
    pub fn is_spr(&self) -> bool {
        self.frequency_ok && self.kyp.is_some()
    }
}

struct FreqSample {
    min_he: f64,
    sigma_max: f64,
    max_phase: f64,
}

fn sample(model: &StateSpaceModel, w: f64) -> Result<FreqSample> {
    let z = model.eval_transfer(Complex64::new(0.0, w))?;
    let he: CMat = (&z + z.adjoint()) * Complex64::new(0.5, 0.0);
    let min_he = SymmetricEigen::new(he)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let sigma_max = z.clone().singular_values().max();
    let max_phase = if z.nrows() == 1 {
        z[(0, 0)].arg().abs()
    } else {
        z.clone()
            .eigenvalues()
            .map(|ev| ev.iter().map(|e| e.arg().abs()).fold(0.0, f64::max))
            .unwrap_or_else(|| complex_eig_phase(&z))
    };
    Ok(FreqSample {
        min_he,
        sigma_max,
        max_phase: max_phase.to_degrees(),
    })
}

fn complex_eig_phase(z: &CMat) -> f64 {
    // Fallback through the real embedding [[Re, -Im], [Im, Re]], whose
    // spectrum is the union of spec(Z) and its conjugate.
    let n = z.nrows();
    let mut emb = linalg::Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = z[(i, j)];
            emb[(i, j)] = v.re;
            emb[(i, j + n)] = -v.im;
            emb[(i + n, j)] = v.im;
            emb[(i + n, j + n)] = v.re;
        }
    }
    linalg::eigenvalues(&emb)
        .map(|ev| ev.iter().map(|e| e.arg().abs()).fold(0.0, f64::max))
        .unwrap_or(f64::NAN)
}

/// Golden-section maximisation of `f` over `log10 w` in `[lo, hi]`.
fn refine_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.log10(), hi.log10());
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(10f64.powf(c)), f(10f64.powf(d)));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(10f64.powf(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(10f64.powf(d));
        }
    }
    10f64.powf(0.5 * (a + b))
}

/// Checks strict positive realness of the (already output-premixed) model.
///
/// The frequency sweep covers `grid`, `w = 0`, the refined peak-response
/// frequency and the refined point of weakest relative positivity.
pub fn verify_spr(model: &StateSpaceModel, grid: &[f64]) -> Result<SprReport> {
    verify_spr_with(model, grid, &KypOptions::default())
}

pub fn verify_spr_with(model: &StateSpaceModel, grid: &[f64], options: &KypOptions) -> Result<SprReport> {
    if !model.is_square() {
        return Err(Error::NonSquare {
            outputs: model.p(),
            inputs: model.m(),
        });
    }
    let max_real = linalg::spectral_abscissa(model.a())?;
    if max_real >= crate::matrixeq::lyapunov::HURWITZ_TOL {
        return Err(Error::NotHurwitz { max_real });
    }

    let mut freqs: Vec<f64> = grid.iter().copied().filter(|w| *w > 0.0).collect();
    freqs.sort_by(|a, b| a.total_cmp(b));
    let mut samples = Vec::with_capacity(freqs.len() + 3);
    for &w in &freqs {
        samples.push((w, sample(model, w)?));
    }

    let mut extra = vec![(0.0, sample(model, 0.0)?)];
    if freqs.len() >= 3 {
        let bracket = |k: usize| (freqs[k.saturating_sub(1)], freqs[(k + 1).min(freqs.len() - 1)]);
        let peak_idx = (0..samples.len())
            .max_by(|&i, &j| samples[i].1.sigma_max.total_cmp(&samples[j].1.sigma_max))
            .unwrap_or(0);
        let (lo, hi) = bracket(peak_idx);
        let w_peak = refine_max(lo, hi, |w| sample(model, w).map(|s| s.sigma_max).unwrap_or(f64::NAN));
        extra.push((w_peak, sample(model, w_peak)?));

        let rel = |s: &FreqSample| -s.min_he / s.sigma_max.max(f64::MIN_POSITIVE);
        let worst_idx = (0..samples.len())
            .max_by(|&i, &j| rel(&samples[i].1).total_cmp(&rel(&samples[j].1)))
            .unwrap_or(0);
        let (lo, hi) = bracket(worst_idx);
        let w_worst = refine_max(lo, hi, |w| sample(model, w).map(|s| rel(&s)).unwrap_or(f64::NAN));
        extra.push((w_worst, sample(model, w_worst)?));
    }
    let peak_frequency = extra
        .get(1)
        .map(|(w, _)| *w)
        .unwrap_or_else(|| freqs.first().copied().unwrap_or(0.0));
    samples.extend(extra);

    let (worst_frequency, min_hermitian_eigenvalue) = samples
        .iter()
        .map(|(w, s)| (*w, s.min_he))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0.0, f64::NAN));
    let max_phase_deg = samples.iter().map(|(_, s)| s.max_phase).fold(0.0, f64::max);
    let frequency_ok = samples.iter().all(|(_, s)| s.min_he > 0.0);
    let phase_margin_ok = samples.iter().all(|(_, s)| s.max_phase < 90.0);

    let markov = model.mixing_matrix();
    let asym = (&markov - markov.transpose()).norm();
    let markov_symmetric_pd = asym <= 1e-10 * (1.0 + markov.norm()) && linalg::min_sym_eigenvalue(&markov) > 0.0;

    let (kyp, kyp_failure) = match kyp::find_certificate(model.a(), model.b(), model.c(), options) {
        Ok(cert) => {
            let eps = kyp::strictness(model.a());
            let tol = 1e-7 * (1.0 + model.c().norm());
            if cert.constraint_residual <= tol && cert.min_q_eigenvalue >= eps && cert.min_p_eigenvalue > 0.0 {
                (Some(cert), None)
            } else {
                (
                    None,
                    Some(format!(
                        "certificate failed its own check (residual {:e}, min eig Q {:e}, min eig P {:e})",
                        cert.constraint_residual, cert.min_q_eigenvalue, cert.min_p_eigenvalue
                    )),
                )
            }
        }
        Err(Error::CertificateSearchDiverged(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };

    Ok(SprReport {
        frequency_ok,
        phase_margin_ok,
        min_hermitian_eigenvalue,
        worst_frequency,
        max_phase_deg,
        peak_frequency,
        markov_symmetric_pd,
        kyp,
        kyp_failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn model(a: linalg::Mat, b: linalg::Mat, c: linalg::Mat) -> StateSpaceModel {
        StateSpaceModel::new(a, b, c).unwrap()
    }

    #[test]
    fn first_order_lag_is_spr() {
        let r = verify_spr(&model(dmatrix![-1.0], dmatrix![1.0], dmatrix![1.0]), &default_grid()).unwrap();
        assert!(r.frequency_ok && r.phase_margin_ok && r.markov_symmetric_pd);
        let cert = r.kyp.unwrap();
        assert!((cert.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((cert.q[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_gain_fails_until_premixed() {
        // a/(s + rho) with a = -2, rho = 3
        let m = model(dmatrix![-3.0], dmatrix![1.0], dmatrix![-2.0]);
        let r = verify_spr(&m, &default_grid()).unwrap();
        assert!(!r.frequency_ok);
        assert!(r.kyp.is_none());
        let mixed = m.premix_output(&dmatrix![-2.0]).unwrap();
        let r = verify_spr(&mixed, &default_grid()).unwrap();
        assert!(r.is_spr());
    }

    #[test]
    fn nonminimum_phase_lag_fails() {
        // (s - 1)/(s + 1)^2
        let m = model(dmatrix![0.0, 1.0; -1.0, -2.0], dmatrix![0.0; 1.0], dmatrix![-1.0; 1.0]);
        let r = verify_spr(&m, &default_grid()).unwrap();
        assert!(!r.frequency_ok);
        assert!(!r.phase_margin_ok);
        assert!(r.kyp.is_none());
        assert!(r.kyp_failure.is_some());
    }

    #[test]
    fn unstable_model_rejected() {
        let m = model(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]);
        assert!(matches!(verify_spr(&m, &default_grid()), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn diagonal_lag_is_spr() {
        let m = model(
            -linalg::Mat::identity(2, 2),
            linalg::Mat::identity(2, 2),
            linalg::Mat::identity(2, 2),
        );
        assert!(verify_spr(&m, &default_grid()).unwrap().is_spr());
    }
}
