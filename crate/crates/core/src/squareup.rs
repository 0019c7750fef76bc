//! Fictitious input columns `B2` that make a tall plant (`p > m`) square,
//! minimum phase and with full-rank `C^T B`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::statespace::{StateSpaceModel, RANK_TOL, TOL_ZERO};

/// `sigma_min(C^T B)` must exceed this fraction of `sigma_max(C^T B)`.
pub const CTB_RATIO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareUpOptions {
    pub seed: u64,
    pub max_tries: usize,
    /// Accepted zeros satisfy `Re z < -margin`.
    pub margin: f64,
}

impl Default for SquareUpOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_tries: 1000,
            margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquaredUpSystem {
    pub b1: Mat,
    pub b2: Mat,
    /// `[B1 B2]`.
    pub b: Mat,
    pub zeros: Vec<Complex64>,
    /// `C^T B`, square.
    pub m: Mat,
    pub m1: Mat,
    pub m2: Mat,
    /// Candidates drawn before acceptance (0 when `B2` was supplied).
    pub tries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareUpReport {
    pub min_phase: bool,
    /// Largest real part among the transmission zeros (`None` when there are
    /// no finite zeros or they could not be computed).
    pub zero_margin: Option<f64>,
    pub ctb_sigma_min: f64,
    pub ctb_sigma_ratio: f64,
    /// Why zeros are unavailable, if they are.
    pub zeros_error: Option<String>,
}

impl SquareUpReport {
    pub fn rank_ok(&self) -> bool {
        self.ctb_sigma_ratio > CTB_RATIO_TOL
    }

    pub fn passes(&self) -> bool {
        self.min_phase && self.rank_ok()
    }
}

fn check_assumptions(a_m: &Mat, b1: &Mat, c: &Mat) -> Result<()> {
    let n = a_m.nrows();
    linalg::check_square(a_m, "A_m")?;
    if b1.nrows() != n || c.nrows() != n {
        return Err(Error::DimensionMismatch("B1 and C must have n rows".into()));
    }
    let (m, p) = (b1.ncols(), c.ncols());
    if p <= m {
        return Err(Error::InvalidArgument(format!(
            "squaring up needs more outputs than inputs (p = {p}, m = {m})"
        )));
    }
    if linalg::numerical_rank(c, RANK_TOL) < p {
        return Err(Error::AssumptionViolated("C must have full column rank".into()));
    }
    if linalg::numerical_rank(&(c.transpose() * b1), RANK_TOL) < m {
        return Err(Error::AssumptionViolated("C^T B1 must have full column rank".into()));
    }
    Ok(())
}

fn evaluate(a_m: &Mat, b: &Mat, c: &Mat) -> Result<(SquareUpReport, Vec<Complex64>)> {
    let ctb = c.transpose() * b;
    let sv = linalg::singular_values(&ctb);
    let ctb_sigma_min = sv.min();
    let ctb_sigma_ratio = if sv.max() > 0.0 { ctb_sigma_min / sv.max() } else { 0.0 };
    let model = StateSpaceModel::new(a_m.clone(), b.clone(), c.clone())?;
    let (zeros, zeros_error) = match model.transmission_zeros() {
        Ok(z) => (Some(z), None),
        Err(e @ (Error::NotMinimal(_) | Error::SingularPencil)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let zero_margin = zeros
        .as_ref()
        .and_then(|z| z.iter().map(|z| z.re).max_by(f64::total_cmp));
    let min_phase = zeros.is_some() && zero_margin.is_none_or(|r| r < -TOL_ZERO);
    Ok((
        SquareUpReport {
            min_phase,
            zero_margin,
            ctb_sigma_min,
            ctb_sigma_ratio,
            zeros_error,
        },
        zeros.unwrap_or_default(),
    ))
}

/// Checks a given `B2` against the squared-up requirements.
pub fn validate_square_up(a_m: &Mat, b1: &Mat, b2: &Mat, c: &Mat) -> Result<SquareUpReport> {
    if b2.nrows() != b1.nrows() || b1.ncols() + b2.ncols() != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "[B1 B2] must be {}x{}",
            b1.nrows(),
            c.ncols()
        )));
    }
    Ok(evaluate(a_m, &linalg::hstack(b1, b2), c)?.0)
}

fn assemble(b1: &Mat, b2: &Mat, c: &Mat, zeros: Vec<Complex64>, tries: usize) -> SquaredUpSystem {
    let b = linalg::hstack(b1, b2);
    let m = c.transpose() * &b;
    let k = b1.ncols();
    SquaredUpSystem {
        b1: b1.clone(),
        b2: b2.clone(),
        m1: m.columns(0, k).into_owned(),
        m2: m.columns(k, m.ncols() - k).into_owned(),
        m,
        b,
        zeros,
        tries,
    }
}

/// Uses a supplied `B2` after validation; the rejection names the offending zero.
pub fn square_up_with(a_m: &Mat, b1: &Mat, b2: &Mat, c: &Mat, margin: f64) -> Result<SquaredUpSystem> {
    check_assumptions(a_m, b1, c)?;
    if b2.nrows() != b1.nrows() || b1.ncols() + b2.ncols() != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "B2 must be {}x{}",
            b1.nrows(),
            c.ncols() - b1.ncols()
        )));
    }
    let b = linalg::hstack(b1, b2);
    let (report, zeros) = evaluate(a_m, &b, c)?;
    if !report.rank_ok() {
        return Err(Error::RankDeficient {
            ratio: report.ctb_sigma_ratio,
        });
    }
    if let Some(z) = zeros.iter().find(|z| z.re >= -margin) {
        return Err(Error::NotMinimumPhase { zero: *z });
    }
    if let Some(msg) = report.zeros_error {
        return Err(Error::AssumptionViolated(format!("squared-up system: {msg}")));
    }
    Ok(assemble(b1, b2, c, zeros, 0))
}

/// Randomised search for `B2`; deterministic for a given seed.
pub fn square_up(a_m: &Mat, b1: &Mat, c: &Mat, options: &SquareUpOptions) -> Result<SquaredUpSystem> {
    check_assumptions(a_m, b1, c)?;
    let (n, k) = (b1.nrows(), c.ncols() - b1.ncols());
    let mut mags: Vec<f64> = b1.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    let scale = if median > 0.0 { median } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best_margin = f64::INFINITY;
    for tries in 1..=options.max_tries {
        let b2 = Mat::from_fn(n, k, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            scale * v
        });
        let b = linalg::hstack(b1, &b2);
        let (report, zeros) = evaluate(a_m, &b, c)?;
        if report.zeros_error.is_some() || !report.rank_ok() {
            continue;
        }
        let worst = report.zero_margin.unwrap_or(f64::NEG_INFINITY);
        best_margin = best_margin.min(worst);
        if worst < -options.margin {
            return Ok(assemble(b1, &b2, c, zeros, tries));
        }
    }
    Err(Error::SearchExhausted {
        tries: options.max_tries,
        best_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn identity_squaring() {
        let a_m = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let b1 = dmatrix![1.0; 0.0];
        let c = Mat::identity(2, 2);
        let sq = square_up_with(&a_m, &b1, &dmatrix![0.0; 1.0], &c, 1e-3).unwrap();
        assert!(sq.zeros.is_empty());
        assert_eq!(sq.b, c);
        let rep = validate_square_up(&a_m, &b1, &dmatrix![0.0; 1.0], &c).unwrap();
        assert!(rep.passes());
        assert_eq!(rep.zero_margin, None);
    }

    #[test]
    fn zero_columns_fail_rank() {
        let a_m = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let rep = validate_square_up(&a_m, &dmatrix![1.0; 0.0], &dmatrix![0.0; 0.0], &Mat::identity(2, 2)).unwrap();
        assert!(!rep.rank_ok());
        assert!(!rep.passes());
    }

    #[test]
    fn square_plant_rejected() {
        let eye = Mat::identity(2, 2);
        assert!(matches!(
            square_up(&-&eye, &eye, &eye, &SquareUpOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn search_is_reproducible() {
        let a_m = dmatrix![-1.0, 1.0, 0.0; 0.0, -2.0, 1.0; 1.0, 0.0, -3.0];
        let b1 = dmatrix![1.0; 0.0; 0.0];
        let c = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        let opts = SquareUpOptions {
            seed: 7,
            ..Default::default()
        };
        let a = square_up(&a_m, &b1, &c, &opts).unwrap();
        let b = square_up(&a_m, &b1, &c, &opts).unwrap();
        assert_eq!(a.b2, b.b2);
        assert!(validate_square_up(&a_m, &b1, &a.b2, &c).unwrap().passes());
    }
}
