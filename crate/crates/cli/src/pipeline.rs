//! Scenario pipeline: design, simulation and artifact output.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crmac_core::adaptsim::{
    simulate, solve_matching, AdaptiveGains, ClosedLoop, Controller, LyapunovFunction, PlantDynamics, ReferenceModel,
    SimOptions, SimTrace, CERTIFIED_TOLERANCE, ESTIMATED_TOLERANCE,
};
use crmac_core::ltr::{asymptotics_report, design_ltr};
use crmac_core::sprdesign::{
    augment_gain, augmented_q, certify_design, design_mimo_ls, design_siso_ls, KypOptions, MarginBounds, MimoOptions,
    MimoRoute,
};
use crmac_core::squareup::{square_up, square_up_with, SquareUpOptions, SquaredUpSystem};
use crmac_core::{linalg, Error as CoreError};
use serde::Serialize;

use crate::artifact::*;
use crate::error::{CliError, CliResult};
use crate::matrix::Mat;
use crate::scenario::{ControllerKind, DesignMethod, RhoChoice, Scenario, SquareUpChoice, SCHEMA_VERSION};

/// Zero-margin of an accepted random squaring-up.
const SQUARE_UP_MARGIN: f64 = 1e-3;

fn is_input_error(e: &CoreError) -> bool {
    matches!(e, CoreError::DimensionMismatch(_) | CoreError::InvalidArgument(_))
}

/// Failure inside synthesis: bad input aborts, anything else is recorded as
/// an uncertified design.
enum Stage<T> {
    Done(T),
    Failed(String),
}

fn stage<T>(what: &str, r: crmac_core::Result<T>) -> CliResult<Stage<T>> {
    match r {
        Ok(v) => Ok(Stage::Done(v)),
        Err(e) if is_input_error(&e) => Err(CliError::Input(format!("{what}: {e}"))),
        Err(e) => Ok(Stage::Failed(format!("{what}: {e}"))),
    }
}

struct Draft {
    system: SystemData,
    gain: Option<GainData>,
    spr: Option<SprData>,
    ltr: Option<LtrData>,
    square_up: Option<SquareUpData>,
    diagnostics: Vec<String>,
    warnings: Vec<String>,
}

impl Draft {
    fn new(sc: &Scenario, b: Mat) -> Self {
        Draft {
            system: SystemData {
                a_m: sc.a_m.clone(),
                b,
                c: sc.plant.c.clone(),
                physical_inputs: sc.plant.m(),
            },
            gain: None,
            spr: None,
            ltr: None,
            square_up: None,
            diagnostics: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// `A + B Lambda Psi^T + B Lambda K_b^T`: the dynamics the adaptive law has
/// to match, with the baseline folded in when the controller uses it.
fn matched_dynamics(sc: &Scenario) -> Mat {
    let mut a = sc.plant.true_a();
    let use_baseline = sc.adaptive.as_ref().is_none_or(|a| a.use_baseline);
    if let (Some(k), true) = (&sc.baseline, use_baseline) {
        a += &sc.plant.b * sc.plant.lambda_matrix() * k;
    }
    a
}

fn squared_up(sc: &Scenario, choice: &SquareUpChoice, draft: &mut Draft) -> CliResult<Option<SquaredUpSystem>> {
    let (a_m, b1, c) = (&sc.a_m, &sc.plant.b, &sc.plant.c);
    let (result, seed) = match choice {
        SquareUpChoice::Given(b2) => (square_up_with(a_m, b1, b2, c, 0.0), None),
        SquareUpChoice::Search { seed } => (
            square_up(
                a_m,
                b1,
                c,
                &SquareUpOptions {
                    seed: *seed,
                    margin: SQUARE_UP_MARGIN,
                    ..Default::default()
                },
            ),
            Some(*seed),
        ),
    };
    match stage("square-up", result)? {
        Stage::Done(sq) => {
            draft.system.b = sq.b.clone();
            draft.square_up = Some(SquareUpData {
                b2: sq.b2.clone(),
                tries: sq.tries,
                seed,
                zeros: sq.zeros.iter().map(|z| [z.re, z.im]).collect(),
                ctb_sigma_ratio: linalg::sigma_ratio(&sq.m),
            });
            Ok(Some(sq))
        }
        Stage::Failed(msg) => {
            draft.diagnostics.push(msg);
            Ok(None)
        }
    }
}

fn spr_stage(
    sc: &Scenario,
    draft: &mut Draft,
    l_s: Mat,
    route: String,
    rho: RhoChoice,
    allow_submarginal: bool,
) -> CliResult<()> {
    let (a_m, b, c) = (&draft.system.a_m, &draft.system.b, &draft.system.c);
    let bounds = MarginBounds {
        lambda_bar: sc.plant.lambda_bar.expect("validated"),
        theta_bar: sc.plant.theta_bar.expect("validated"),
    };
    let k = draft.system.physical_inputs;
    let d0 = match stage(
        "SPR certificate",
        certify_design(a_m, b, c, &l_s, 0.0, bounds, k, &KypOptions::default()),
    )? {
        Stage::Done(d) => d,
        Stage::Failed(msg) => {
            draft.diagnostics.push(msg);
            return Ok(());
        }
    };
    let rho = match rho {
        RhoChoice::Absolute(r) => r,
        RhoChoice::Factor(f) => f * d0.rho_star,
    };
    let l = augment_gain(&d0.l_s, b, &d0.m, rho).map_err(|e| CliError::Input(format!("rho: {e}")))?;
    let q = augmented_q(&d0.q_s, c, &d0.m, rho);
    if !(rho > d0.rho_star) {
        let msg = format!("rho = {rho:.6e} does not exceed rho* = {:.6e}", d0.rho_star);
        if allow_submarginal {
            draft.warnings.push(format!("{msg} (allowed by --allow-submarginal)"));
        } else {
            draft.diagnostics.push(msg);
        }
    }

    let lambda = sc.plant.lambda_matrix();
    let matching = solve_matching(&matched_dynamics(sc), &sc.plant.b, &lambda, a_m);
    let theta_star = match &matching {
        Ok(mt) => {
            let norm = linalg::norm2(&mt.theta_star);
            if norm > bounds.theta_bar {
                draft.warnings.push(format!(
                    "||Theta*|| = {norm:.6e} exceeds the declared theta_bar = {:.6e}",
                    bounds.theta_bar
                ));
            }
            Some(mt.theta_star.clone())
        }
        Err(e) => {
            draft
                .warnings
                .push(format!("matching condition: {e}; Schur test skipped"));
            None
        }
    };
    draft.gain = Some(GainData {
        l,
        mixer: d0.mixer.clone(),
    });
    draft.spr = Some(SprData {
        route,
        l_s: d0.l_s,
        m: d0.m,
        rho,
        rho_star: d0.rho_star,
        lambda_bar: bounds.lambda_bar,
        theta_bar: bounds.theta_bar,
        p: d0.p,
        q_s: d0.q_s,
        q,
        lambda: theta_star.as_ref().map(|_| lambda),
        theta_star,
        max_phase_deg: d0.report.max_phase_deg,
        min_hermitian_eigenvalue: d0.report.min_hermitian_eigenvalue,
    });
    Ok(())
}

fn route_name(route: &MimoRoute) -> String {
    match route {
        MimoRoute::SingleInput => "single-input".into(),
        MimoRoute::AlreadySpr => "already-spr".into(),
        MimoRoute::Riccati { nu } => format!("riccati (nu = {nu:e})"),
        MimoRoute::InvariantSubspace { rho } => format!("invariant-subspace (rho = {rho})"),
    }
}

fn mimo_stage(
    sc: &Scenario,
    draft: &mut Draft,
    rho: RhoChoice,
    fallback_rho: Option<f64>,
    allow: bool,
) -> CliResult<()> {
    let options = MimoOptions {
        fallback_rho: fallback_rho.or(MimoOptions::default().fallback_rho),
        ..Default::default()
    };
    let (a_m, b, c) = (&draft.system.a_m, &draft.system.b, &draft.system.c);
    match stage("MIMO synthesis", design_mimo_ls(a_m, b, c, &options))? {
        Stage::Done(s) => spr_stage(sc, draft, s.l_s, route_name(&s.route), rho, allow),
        Stage::Failed(msg) => {
            draft.diagnostics.push(msg);
            Ok(())
        }
    }
}

fn ltr_stage(draft: &mut Draft, nu: f64, q0: &Mat, r0: &Mat, nus: &[f64]) -> CliResult<()> {
    let (a_m, b, c) = (&draft.system.a_m, &draft.system.b, &draft.system.c);
    let k = draft.system.physical_inputs;
    let d = match stage("Riccati design", design_ltr(a_m, b, c, q0, r0, nu, k))? {
        Stage::Done(d) => d,
        Stage::Failed(msg) => {
            draft.diagnostics.push(msg);
            return Ok(());
        }
    };
    if d.ill_conditioned {
        draft.warnings.push(format!(
            "Riccati weights are ill conditioned (cond(R_nu)/nu = {:.3e})",
            d.weight_condition
        ));
    }
    let asymptotics = if nus.is_empty() {
        None
    } else {
        match stage("asymptotics", asymptotics_report(a_m, b, c, q0, r0, nus))? {
            Stage::Done(rep) => Some(AsymptoticsData {
                nu: rep.rows.iter().map(|r| r.nu).collect(),
                norm_nu_p: rep.rows.iter().map(|r| r.norm_nu_p).collect(),
                residual_p0c: rep.rows.iter().map(|r| r.residual_p0c).collect(),
                decay_per_decade: rep.decay_per_decade(),
            }),
            Stage::Failed(msg) => {
                draft.diagnostics.push(msg);
                None
            }
        }
    };
    draft.gain = Some(GainData {
        l: d.l_nu.clone(),
        mixer: d.m1.clone(),
    });
    let w_orthogonality = d.w_orthogonality();
    draft.ltr = Some(LtrData {
        nu: d.nu,
        q0: d.q0,
        r0: d.r0,
        p_nu: d.p_nu,
        w: d.w,
        riccati_residual: d.riccati_residual,
        w_orthogonality,
        weight_condition: d.weight_condition,
        ill_conditioned: d.ill_conditioned,
        asymptotics,
    });
    Ok(())
}

/// Runs the configured synthesis and certifies the result. Certification
/// problems leave `certified = false` with diagnostics; only invalid input
/// is an error.
pub fn run_design(sc: &Scenario, allow_submarginal: bool) -> CliResult<DesignArtifact> {
    let mut draft = Draft::new(sc, sc.plant.b.clone());
    match &sc.design {
        DesignMethod::SisoSpr { pole, rho } => {
            let (a_m, b, c) = (&sc.a_m, &sc.plant.b, &sc.plant.c);
            match stage("SISO synthesis", design_siso_ls(a_m, b, c, *pole))? {
                Stage::Done(l_s) => spr_stage(
                    sc,
                    &mut draft,
                    l_s,
                    format!("siso (pole -{pole})"),
                    *rho,
                    allow_submarginal,
                )?,
                Stage::Failed(msg) => draft.diagnostics.push(msg),
            }
        }
        DesignMethod::MimoSpr { rho, fallback_rho } => {
            mimo_stage(sc, &mut draft, *rho, *fallback_rho, allow_submarginal)?;
        }
        DesignMethod::NonSquare {
            square_up,
            rho,
            fallback_rho,
        } => {
            if squared_up(sc, square_up, &mut draft)?.is_some() {
                mimo_stage(sc, &mut draft, *rho, *fallback_rho, allow_submarginal)?;
            }
        }
        DesignMethod::LqgLtr {
            nu,
            q0,
            r0,
            square_up,
            asymptotics_nu,
        } => {
            let ready = match square_up {
                Some(choice) => squared_up(sc, choice, &mut draft)?.is_some(),
                None => true,
            };
            if ready {
                ltr_stage(&mut draft, *nu, q0, r0, asymptotics_nu)?;
            }
        }
    }

    let mut art = DesignArtifact {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        method: sc.design.name().to_string(),
        certified: false,
        diagnostics: draft.diagnostics,
        warnings: draft.warnings,
        system: draft.system,
        gain: draft.gain,
        spr: draft.spr,
        ltr: draft.ltr,
        square_up: draft.square_up,
        checks: Vec::new(),
    };
    if art.gain.is_some() {
        art.checks = run_checks(&art);
        for c in art.checks.iter().filter(|c| !c.passed) {
            if c.name == "margin" && allow_submarginal {
                continue;
            }
            art.diagnostics
                .push(format!("check {} failed: {} (value {:e})", c.name, c.detail, c.value));
        }
    }
    art.certified = art.gain.is_some() && art.diagnostics.is_empty();
    Ok(art)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub controller: String,
    pub trace: String,
    pub peak_ey_norm: f64,
    pub final_window_ey_norm: f64,
    pub final_window: f64,
    /// `None` when no Lyapunov monitor ran.
    pub vdot_violations: Option<usize>,
    pub max_violation: Option<f64>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
    pub peak_state_norm: f64,
    pub substeps: usize,
    pub rows: usize,
    /// Seconds; the only field that varies between identical runs.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    pub scenario: String,
    pub dt: f64,
    pub t_final: f64,
    pub runs: Vec<RunMetrics>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub kind: ControllerKind,
    pub trace: SimTrace,
    pub metrics: RunMetrics,
}

pub fn trace_file_name(kind: ControllerKind) -> String {
    format!("trace_{}.csv", kind.name())
}

fn lyapunov_for(sc: &Scenario, art: &DesignArtifact) -> CliResult<LyapunovFunction> {
    let adaptive = sc.adaptive.as_ref().expect("validated");
    let lambda = sc.plant.lambda_matrix();
    let matching = solve_matching(&matched_dynamics(sc), &sc.plant.b, &lambda, &sc.a_m)
        .map_err(|e| CliError::MonitorInfeasible(format!("{}: {e}", sc.name)))?;
    let (p, tol) = if let Some(spr) = &art.spr {
        (spr.p.clone(), CERTIFIED_TOLERANCE)
    } else if let Some(ltr) = &art.ltr {
        let p = ltr
            .p_nu
            .clone()
            .try_inverse()
            .ok_or_else(|| CliError::MonitorInfeasible("P_nu is singular".into()))?;
        (linalg::symmetrize(&p), ESTIMATED_TOLERANCE)
    } else {
        return Err(CliError::MonitorInfeasible("design has no Lyapunov weight".into()));
    };
    LyapunovFunction::new(
        p,
        &matching,
        &lambda,
        &adaptive.gamma_theta,
        adaptive.feedforward.then_some(&adaptive.gamma_k),
        tol,
    )
    .map_err(|e| CliError::MonitorInfeasible(e.to_string()))
}

/// Builds the closed loop for one controller from the scenario and design.
pub fn closed_loop(sc: &Scenario, art: &DesignArtifact, kind: ControllerKind) -> CliResult<ClosedLoop> {
    let gain = art
        .gain
        .as_ref()
        .ok_or_else(|| CliError::Certification(format!("{}: design produced no gain", sc.name)))?;
    let core = |e: CoreError| CliError::Input(format!("{}: {e}", sc.name));
    let plant = PlantDynamics::new(
        sc.plant.true_a(),
        sc.plant.b.clone(),
        sc.plant.lambda_matrix(),
        sc.plant.c.clone(),
        sc.plant.b_ref.clone(),
    )
    .map_err(core)?;
    let rm = ReferenceModel::new(sc.a_m.clone(), sc.b_r.clone(), gain.l.clone(), sc.plant.c.clone()).map_err(core)?;
    let controller = match kind {
        ControllerKind::Adaptive => {
            let a = sc.adaptive.as_ref().expect("validated");
            Controller::Adaptive {
                gains: AdaptiveGains::new(a.gamma_theta.clone(), a.gamma_k.clone(), gain.mixer.clone())
                    .map_err(core)?,
                baseline: if a.use_baseline { sc.baseline.clone() } else { None },
                feedforward: a.feedforward,
            }
        }
        ControllerKind::LqrBaseline => Controller::StateFeedback {
            k_t: sc.baseline.clone().expect("validated"),
        },
    };
    ClosedLoop::new(plant, rm, controller).map_err(core)
}

/// Simulates every selected controller. Traces are deterministic; only
/// `wall_time` differs between runs.
pub fn run_simulation(sc: &Scenario, art: &DesignArtifact) -> CliResult<Vec<Run>> {
    let sim = &sc.simulation;
    let options = SimOptions {
        dt: sim.dt,
        t_final: sim.t_final,
        record_every: sim.record_every,
        divergence_bound: sim.divergence_bound,
        substeps: sim.substeps,
    };
    let mut runs = Vec::new();
    for kind in sc.controllers.kinds() {
        let cl = closed_loop(sc, art, kind)?;
        let monitor = sc.adaptive.as_ref().is_some_and(|a| a.monitor) && kind == ControllerKind::Adaptive;
        let lyap = if monitor { Some(lyapunov_for(sc, art)?) } else { None };
        let initial = cl.initial_state(sim.x0.clone(), sim.xm0.clone());
        let start = Instant::now();
        let trace = simulate(&cl, &sim.reference, initial, &options, lyap.as_ref())
            .map_err(|e| CliError::Input(format!("{} ({}): {e}", sc.name, kind.name())))?;
        let wall_time = start.elapsed().as_secs_f64();
        let metrics = RunMetrics {
            controller: kind.name().into(),
            trace: trace_file_name(kind),
            peak_ey_norm: trace.peak_ey_norm(),
            final_window_ey_norm: trace.final_window_ey_norm(sim.final_window),
            final_window: sim.final_window,
            vdot_violations: monitor.then_some(trace.vdot_violations),
            max_violation: monitor.then_some(trace.max_violation),
            diverged: trace.diverged,
            diverged_at: trace.diverged_at,
            peak_state_norm: trace.peak_state_norm,
            substeps: trace.substeps,
            rows: trace.len(),
            wall_time,
        };
        runs.push(Run { kind, trace, metrics });
    }
    Ok(runs)
}

pub fn scenario_dir(out_dir: &Path, sc: &Scenario) -> PathBuf {
    out_dir.join(&sc.name)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

pub fn write_design(dir: &Path, art: &DesignArtifact) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
    let path = dir.join("design.json");
    write_file(&path, &art.to_json())?;
    Ok(path)
}

pub fn write_runs(dir: &Path, sc: &Scenario, runs: &[Run]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
    for run in runs {
        let path = dir.join(trace_file_name(run.kind));
        let file = fs::File::create(&path).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        run.trace
            .write_csv(BufWriter::new(file))
            .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
    }
    let metrics = MetricsFile {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        dt: sc.simulation.dt,
        t_final: sc.simulation.t_final,
        runs: runs.iter().map(|r| r.metrics.clone()).collect(),
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
    write_file(&dir.join("metrics.json"), &json)
}
