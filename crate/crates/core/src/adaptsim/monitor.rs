use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

use super::closed_loop::LoopState;
use super::matching::MatchingSolution;
use super::trace::SimTrace;

/// Relative tolerance on `V` increases when `P` comes from a certificate.
pub const CERTIFIED_TOLERANCE: f64 = 1e-6;
/// Looser tolerance when `P` is an extrapolated estimate.
pub const ESTIMATED_TOLERANCE: f64 = 1e-4;

/// `V = e^T P e + tr(Lambda Theta~^T Gamma_theta^+ Theta~) + tr(Lambda K~^T Gamma_k^+ K~)`.
///
/// Zero adaptation gains are inverted as zero: those parameter rows never
/// move and drop out of `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovFunction {
    pub p: Mat,
    pub theta_star: Mat,
    /// `None` when the controller has no adaptive feedforward.
    pub k_star: Option<Mat>,
    pub lambda_diag: DVector<f64>,
    gamma_theta_pinv: DVector<f64>,
    gamma_k_pinv: DVector<f64>,
    /// `tol_V = relative_tolerance V(0) + 1e-12`.
    pub relative_tolerance: f64,
}

fn pinv_diag(g: &DVector<f64>) -> DVector<f64> {
    g.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 })
}

impl LyapunovFunction {
    pub fn new(
        p: Mat,
        matching: &MatchingSolution,
        lambda: &Mat,
        gamma_theta: &DVector<f64>,
        gamma_k: Option<&DVector<f64>>,
        relative_tolerance: f64,
    ) -> Result<Self> {
        linalg::check_spd(&p, "P")?;
        let n = p.nrows();
        if matching.theta_star.nrows() != n || gamma_theta.len() != n {
            return Err(Error::DimensionMismatch(
                "P, Theta* and Gamma_theta must agree on n".into(),
            ));
        }
        let k_star = gamma_k.map(|_| matching.k_star.clone());
        Ok(Self {
            p,
            theta_star: matching.theta_star.clone(),
            k_star,
            lambda_diag: lambda.diagonal(),
            gamma_theta_pinv: pinv_diag(gamma_theta),
            gamma_k_pinv: gamma_k.map(pinv_diag).unwrap_or_else(|| DVector::zeros(0)),
            relative_tolerance,
        })
    }

    fn weighted(err: &Mat, ginv: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let mut v = 0.0;
        for j in 0..err.ncols() {
            let mut col = 0.0;
            for i in 0..err.nrows() {
                col += ginv[i] * err[(i, j)] * err[(i, j)];
            }
            v += lambda[j] * col;
        }
        v
    }

    pub fn value(&self, s: &LoopState) -> f64 {
        let e = &s.x - &s.x_m;
        let mut v = e.dot(&(&self.p * &e));
        v += Self::weighted(
            &(&s.theta - &self.theta_star),
            &self.gamma_theta_pinv,
            &self.lambda_diag,
        );
        if let Some(k_star) = &self.k_star {
            v += Self::weighted(&(&s.k - k_star), &self.gamma_k_pinv, &self.lambda_diag);
        }
        v
    }

    pub fn tolerance(&self, v0: f64) -> f64 {
        self.relative_tolerance * v0 + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub v: Vec<f64>,
    pub nonincreasing: bool,
    /// Largest increase `V(t_{k+1}) - V(t_k)`, 0 if `V` never increases.
    pub max_violation: f64,
    /// Intervals with `V(t_{k+1}) - V(t_k) > tol_V dt`.
    pub violations: usize,
}

/// Increase of `V` over one interval, with differences at the rounding level
/// of the two values reported as 0.
pub fn increase(v0: f64, v1: f64) -> f64 {
    let d = v1 - v0;
    if d <= 64.0 * f64::EPSILON * v0.abs().max(v1.abs()) {
        0.0
    } else {
        d
    }
}

/// Streaming accumulator used during simulation.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    tol: f64,
    last: f64,
    pub max_violation: f64,
    pub violations: usize,
}

impl Accumulator {
    pub fn new(lyap: &LyapunovFunction, v0: f64) -> Self {
        Self {
            tol: lyap.tolerance(v0),
            last: v0,
            max_violation: 0.0,
            violations: 0,
        }
    }

    pub fn push(&mut self, v: f64, dt: f64) {
        let inc = increase(self.last, v);
        if inc > self.tol * dt {
            self.violations += 1;
        }
        self.max_violation = self.max_violation.max(inc);
        self.last = v;
    }
}

/// Evaluates `V` along a recorded trace (intervals are the recorded rows).
pub fn lyapunov_monitor(trace: &SimTrace, lyap: &LyapunovFunction) -> Result<MonitorReport> {
    if trace.theta.is_empty() || trace.theta.len() != trace.t.len() {
        return Err(Error::MonitorNotApplicable("trace has no adaptive parameters".into()));
    }
    let v: Vec<f64> = (0..trace.t.len())
        .map(|i| {
            lyap.value(&LoopState {
                x: trace.x[i].clone(),
                x_m: trace.x_m[i].clone(),
                theta: trace.theta[i].clone(),
                k: trace.k[i].clone(),
            })
        })
        .collect();
    let tol = lyap.tolerance(v[0]);
    let mut violations = 0;
    let mut max_violation: f64 = 0.0;
    for i in 1..v.len() {
        let inc = increase(v[i - 1], v[i]);
        if inc > tol * (trace.t[i] - trace.t[i - 1]) {
            violations += 1;
        }
        max_violation = max_violation.max(inc);
    }
    Ok(MonitorReport {
        nonincreasing: violations == 0,
        v,
        max_violation,
        violations,
    })
}
