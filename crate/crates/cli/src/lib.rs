//! Scenario files, design artifacts and the `design` / `simulate` / `verify`
//! pipelines behind the `crmac` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod error;
pub mod matrix;
pub mod pipeline;
pub mod scenario;

use std::path::Path;

use serde_json::{json, Value};

pub use artifact::{run_checks, Check, DesignArtifact};
pub use error::{CliError, CliResult};
pub use pipeline::{run_design, run_simulation, Run, RunMetrics};
pub use scenario::{ControllerKind, ControllerSelection, Overrides, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Design,
    Simulate,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub overrides: Overrides,
    pub allow_submarginal: bool,
}

/// Result of one scenario or artifact: exit code plus a report in both
/// output formats.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub text: String,
    pub json: Value,
}

impl Outcome {
    fn from_error(label: &str, e: &CliError) -> Self {
        Outcome {
            exit_code: e.exit_code(),
            text: format!("error: {e}\n"),
            json: json!({ "source": label, "error": e.to_string(), "exit_code": e.exit_code() }),
        }
    }
}

fn design_text(art: &DesignArtifact, out: &mut String) {
    use std::fmt::Write;
    let _ = writeln!(
        out,
        "scenario {}: {} design {}",
        art.scenario,
        art.method,
        if art.certified { "certified" } else { "NOT certified" }
    );
    if let Some(sq) = &art.square_up {
        let worst = sq.zeros.iter().map(|z| z[0]).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "  squared-up: {} zeros, largest real part {worst:.6e}, sigma ratio {:.3e}",
            sq.zeros.len(),
            sq.ctb_sigma_ratio
        );
    }
    if let Some(spr) = &art.spr {
        let _ = writeln!(out, "  route: {}", spr.route);
        let _ = writeln!(out, "  rho = {:.6e}, rho* = {:.6e}", spr.rho, spr.rho_star);
        let _ = writeln!(
            out,
            "  max phase {:.3} deg, min He Z(jw) {:.3e}",
            spr.max_phase_deg, spr.min_hermitian_eigenvalue
        );
    }
    if let Some(ltr) = &art.ltr {
        let _ = writeln!(out, "  nu = {}", ltr.nu);
        let _ = writeln!(out, "  W orthogonality residual {:.3e}", ltr.w_orthogonality);
        let _ = writeln!(
            out,
            "  Riccati residual {:.3e}, weight condition {:.3e}",
            ltr.riccati_residual, ltr.weight_condition
        );
        if let Some(a) = &ltr.asymptotics {
            for ((nu, np), r) in a.nu.iter().zip(&a.norm_nu_p).zip(&a.residual_p0c) {
                let _ = writeln!(
                    out,
                    "    nu {nu:.0e}: ||nu P_nu|| {np:.6e}, ||P_nu C - B W^T R0^1/2|| {r:.6e}"
                );
            }
        }
    }
    for c in &art.checks {
        let _ = writeln!(
            out,
            "  [{}] {} = {:.3e} ({})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.detail
        );
    }
    for w in &art.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    for d in &art.diagnostics {
        let _ = writeln!(out, "  diagnostic: {d}");
    }
}

fn design_json(art: &DesignArtifact) -> Value {
    json!({
        "scenario": art.scenario,
        "method": art.method,
        "certified": art.certified,
        "rho": art.spr.as_ref().map(|s| s.rho),
        "rho_star": art.spr.as_ref().map(|s| s.rho_star),
        "nu": art.ltr.as_ref().map(|l| l.nu),
        "w_orthogonality": art.ltr.as_ref().map(|l| l.w_orthogonality),
        "checks": art.checks,
        "warnings": art.warnings,
        "diagnostics": art.diagnostics,
    })
}

fn runs_text(runs: &[Run], out: &mut String) {
    use std::fmt::Write;
    for r in runs {
        let m = &r.metrics;
        let _ = write!(
            out,
            "  {}: peak ||e_y|| {:.6e}, final-window ||e_y|| {:.6e}, peak ||x|| {:.6e}, diverged {}",
            m.controller, m.peak_ey_norm, m.final_window_ey_norm, m.peak_state_norm, m.diverged
        );
        if let Some(t) = m.diverged_at {
            let _ = write!(out, " at t = {t:.3}");
        }
        if let Some(v) = m.vdot_violations {
            let _ = write!(out, ", Vdot violations {v}");
        }
        let _ = writeln!(out, ", {:.2} s", m.wall_time);
    }
}

/// Runs `design` or `simulate` for one scenario file, writing artifacts under
/// `out_dir/<scenario name>/`.
pub fn execute(action: Action, config: &Path, out_dir: &Path, options: &RunOptions) -> Outcome {
    let label = config.display().to_string();
    let result = (|| -> CliResult<Outcome> {
        let mut sc = Scenario::load(config)?;
        sc.apply(&options.overrides)?;
        let art = run_design(&sc, options.allow_submarginal)?;
        let dir = pipeline::scenario_dir(out_dir, &sc);
        pipeline::write_design(&dir, &art)?;
        let mut text = String::new();
        design_text(&art, &mut text);
        let mut js = design_json(&art);
        if !art.certified {
            return Ok(Outcome {
                exit_code: 2,
                text,
                json: js,
            });
        }
        if action == Action::Simulate {
            let runs = run_simulation(&sc, &art)?;
            pipeline::write_runs(&dir, &sc, &runs)?;
            runs_text(&runs, &mut text);
            js["runs"] =
                serde_json::to_value(runs.iter().map(|r| &r.metrics).collect::<Vec<_>>()).expect("metrics serialize");
        }
        js["out_dir"] = Value::String(dir.display().to_string());
        Ok(Outcome {
            exit_code: 0,
            text,
            json: js,
        })
    })();
    result.unwrap_or_else(|e| Outcome::from_error(&label, &e))
}

/// Re-runs every check on a stored design artifact.
pub fn verify(path: &Path) -> Outcome {
    match DesignArtifact::load(path) {
        Ok(art) => {
            let checks = run_checks(&art);
            let ok = art.gain.is_some() && checks.iter().all(|c| c.passed);
            let mut text = format!(
                "verify {}: {}\n",
                path.display(),
                if ok { "all checks pass" } else { "FAILED" }
            );
            for c in &checks {
                text.push_str(&format!(
                    "  [{}] {} = {:.3e} (tolerance {:.1e}; {})\n",
                    if c.passed { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance,
                    c.detail
                ));
            }
            Outcome {
                exit_code: if ok { 0 } else { 2 },
                text,
                json: json!({ "artifact": path.display().to_string(), "passed": ok, "checks": checks }),
            }
        }
        Err(e) => Outcome::from_error(&path.display().to_string(), &e),
    }
}
