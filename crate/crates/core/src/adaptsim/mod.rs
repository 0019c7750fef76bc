//! Closed-loop simulation of plant, closed-loop reference model and adaptive
//! laws, with a Lyapunov monitor.

pub mod closed_loop;
pub mod matching;
pub mod monitor;
mod rk4;
pub mod signal;
pub mod trace;

pub use closed_loop::{
    step_closed_loop, AdaptiveGains, ClosedLoop, Controller, LoopState, PlantDynamics, ReferenceModel,
};
pub use matching::{solve_matching, MatchingSolution};
pub use monitor::{lyapunov_monitor, LyapunovFunction, MonitorReport, CERTIFIED_TOLERANCE, ESTIMATED_TOLERANCE};
pub use signal::Reference;
pub use trace::SimTrace;

use crate::error::{Error, Result};
use monitor::Accumulator;

/// `||x||` beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Record every `record_every`-th integration step (and the last one).
    pub record_every: usize,
    pub divergence_bound: f64,
    /// Integration steps per `dt` interval; `None` picks the smallest count
    /// with `h * rho(J) <= RK4_STABLE_STEP`, `J` being the linear part of the
    /// loop at the initial parameters.
    pub substeps: Option<usize>,
}

/// Largest `h |lambda|` accepted by the automatic substep choice (the
/// classical RK4 stability interval on the negative real axis ends near 2.79).
pub const RK4_STABLE_STEP: f64 = 2.0;

/// Substeps per `dt` interval so that RK4 stays inside its stability region.
pub fn auto_substeps(cl: &ClosedLoop, theta: &crate::linalg::Mat, dt: f64) -> Result<usize> {
    let radius = cl.linear_spectral_radius(theta)?;
    Ok(((radius * dt / RK4_STABLE_STEP).ceil() as usize).max(1))
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 10.0,
            record_every: 1,
            divergence_bound: DIVERGENCE_BOUND,
            substeps: None,
        }
    }
}

fn record(trace: &mut SimTrace, cl: &ClosedLoop, reference: &Reference, t: f64, s: &LoopState, v: Option<f64>) {
    let r = reference.value(t);
    trace.t.push(t);
    trace.x.push(s.x.clone());
    trace.x_m.push(s.x_m.clone());
    trace.u.push(cl.control(s, &r));
    trace.e_y.push(cl.output_error(s));
    if cl.controller.is_adaptive() {
        trace.theta.push(s.theta.clone());
        trace.k.push(s.k.clone());
    }
    if let (Some(vs), Some(v)) = (trace.v.as_mut(), v) {
        vs.push(v);
    }
}

/// Fixed-step simulation from `initial` over `[0, t_final]`.
///
/// A state that turns non-finite or leaves the ball `||x|| <= divergence_bound`
/// truncates the run and sets `diverged`; this is an outcome, not an error.
pub fn simulate(
    cl: &ClosedLoop,
    reference: &Reference,
    initial: LoopState,
    options: &SimOptions,
    lyapunov: Option<&LyapunovFunction>,
) -> Result<SimTrace> {
    let SimOptions {
        dt,
        t_final,
        record_every,
        divergence_bound,
        substeps,
    } = *options;
    if !(dt > 0.0) || !dt.is_finite() || !(t_final >= 0.0) || !t_final.is_finite() || record_every == 0 {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0, t_final >= 0, record_every >= 1 (got {dt}, {t_final}, {record_every})"
        )));
    }
    if reference.dim() != cl.reference_dim() {
        return Err(Error::DimensionMismatch(format!(
            "reference signal has {} components, the loop expects {}",
            reference.dim(),
            cl.reference_dim()
        )));
    }
    let n = cl.plant.n();
    let m = cl.plant.m();
    if initial.x.len() != n
        || initial.x_m.len() != n
        || initial.theta.shape() != (n, m)
        || initial.k.shape() != (cl.reference_dim(), m)
    {
        return Err(Error::DimensionMismatch("initial state does not fit the loop".into()));
    }
    if lyapunov.is_some() && !cl.controller.is_adaptive() {
        return Err(Error::MonitorNotApplicable(
            "controller has no adaptive parameters".into(),
        ));
    }
    let substeps = match substeps {
        Some(0) => return Err(Error::InvalidArgument("substeps must be at least 1".into())),
        Some(s) => s,
        None => auto_substeps(cl, &initial.theta, dt)?,
    };
    let h = dt / substeps as f64;

    let steps = (t_final / dt).round() as usize;
    let mut trace = SimTrace {
        dt,
        substeps,
        v: lyapunov.map(|_| Vec::new()),
        peak_state_norm: initial.x.norm(),
        ..Default::default()
    };
    let mut acc = lyapunov.map(|l| Accumulator::new(l, l.value(&initial)));
    let v0 = lyapunov.map(|l| l.value(&initial));
    record(&mut trace, cl, reference, 0.0, &initial, v0);

    let mut rk = rk4::Integrator::new(cl);
    let mut packed = rk.pack(&initial);
    for k in 0..steps {
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;
        for j in 0..substeps {
            rk.step(reference, t + j as f64 * h, &mut packed, h);
        }
        if !packed.iter().all(|v| v.is_finite()) {
            trace.diverged = true;
            trace.diverged_at = Some(t_next);
            break;
        }
        let norm = rk.state_norm(&packed);
        trace.peak_state_norm = trace.peak_state_norm.max(norm);
        let escaped = norm > divergence_bound;
        let needs_state = lyapunov.is_some() || escaped || (k + 1) % record_every == 0 || k + 1 == steps;
        if !needs_state {
            continue;
        }
        let next = rk.unpack(&packed);
        let v = lyapunov.map(|l| l.value(&next));
        if let (Some(acc), Some(v)) = (acc.as_mut(), v) {
            acc.push(v, dt);
        }
        if escaped || (k + 1) % record_every == 0 || k + 1 == steps {
            record(&mut trace, cl, reference, t_next, &next, v);
        }
        if escaped {
            trace.diverged = true;
            trace.diverged_at = Some(t_next);
            break;
        }
    }
    if let Some(acc) = acc {
        trace.vdot_violations = acc.violations;
        trace.max_violation = acc.max_violation;
    }
    Ok(trace)
}
