//! Scenario configuration: JSON text with `"schema_version": 1`.
//!
//! Parsing goes through raw serde types; `Scenario::parse` then checks every
//! dimension before anything is solved and reports problems by key path.

use std::path::Path;

use crmac_core::adaptsim::{Reference, DIVERGENCE_BOUND};
use crmac_core::matrixeq::lqr_gain;
use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::matrix::{Mat, MatrixSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerSelection {
    Adaptive,
    LqrBaseline,
    Both,
}

impl ControllerSelection {
    pub fn kinds(self) -> Vec<ControllerKind> {
        match self {
            ControllerSelection::Adaptive => vec![ControllerKind::Adaptive],
            ControllerSelection::LqrBaseline => vec![ControllerKind::LqrBaseline],
            ControllerSelection::Both => vec![ControllerKind::Adaptive, ControllerKind::LqrBaseline],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Adaptive,
    LqrBaseline,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Adaptive => "adaptive",
            ControllerKind::LqrBaseline => "lqr-baseline",
        }
    }
}

// ---- raw file format -------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    name: Option<String>,
    #[allow(dead_code)]
    description: Option<String>,
    plant: RawPlant,
    baseline: Option<RawBaseline>,
    reference_model: Option<RawReferenceModel>,
    design: RawDesign,
    controllers: Option<ControllerSelection>,
    adaptive: Option<RawAdaptive>,
    simulation: RawSimulation,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    a: MatrixSpec,
    b: MatrixSpec,
    c_t: MatrixSpec,
    b_ref: Option<MatrixSpec>,
    psi_t: Option<MatrixSpec>,
    lambda: Option<Vec<f64>>,
    lambda_bar: Option<f64>,
    theta_bar: Option<f64>,
    integral_action: Option<RawIntegral>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegral {
    c_z: MatrixSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
enum RawBaseline {
    Lqr {
        q: MatrixSpec,
        r: MatrixSpec,
    },
    #[serde(rename = "k_t")]
    Gain(MatrixSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReferenceModel {
    a_m: Option<MatrixSpec>,
    b_r: Option<MatrixSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
enum RawDesign {
    SisoSpr {
        pole: f64,
        rho: Option<f64>,
        rho_factor: Option<f64>,
    },
    MimoSpr {
        rho: Option<f64>,
        rho_factor: Option<f64>,
        fallback_rho: Option<f64>,
    },
    LqgLtr {
        nu: f64,
        q0: Option<MatrixSpec>,
        r0: Option<MatrixSpec>,
        b2: Option<MatrixSpec>,
        seed: Option<u64>,
        asymptotics_nu: Option<Vec<f64>>,
    },
    NonSquare {
        b2: Option<MatrixSpec>,
        seed: Option<u64>,
        rho: Option<f64>,
        rho_factor: Option<f64>,
        fallback_rho: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdaptive {
    gamma_theta: Vec<f64>,
    gamma_k: Option<Vec<f64>>,
    #[serde(default)]
    feedforward: bool,
    #[serde(default = "yes")]
    use_baseline: bool,
    #[serde(default)]
    monitor: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    t_final: f64,
    dt: f64,
    substeps: Option<usize>,
    divergence_bound: Option<f64>,
    reference: RawReference,
    x0: Option<Vec<f64>>,
    xm0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawReference {
    Constant {
        value: Vec<f64>,
    },
    Step {
        amplitude: Vec<f64>,
        #[serde(default)]
        at: f64,
    },
    FilteredStep {
        amplitude: Vec<f64>,
        time_constant: f64,
    },
    Sine {
        amplitude: Vec<f64>,
        frequency: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    record_every: Option<usize>,
    final_window: Option<f64>,
}

// ---- validated scenario ----------------------------------------------------

/// Plant after optional integral augmentation. `c` is `n x p` with output
/// map `C^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub a_nom: Mat,
    pub b: Mat,
    pub c: Mat,
    pub b_ref: Mat,
    /// `n x m`; the true dynamics are `A + B Lambda Psi^T`.
    pub psi: Mat,
    pub lambda: DVector<f64>,
    pub lambda_bar: Option<f64>,
    pub theta_bar: Option<f64>,
    /// Number of appended integral states.
    pub integral_states: usize,
}

impl PlantSpec {
    pub fn n(&self) -> usize {
        self.a_nom.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.ncols()
    }

    pub fn lambda_matrix(&self) -> Mat {
        Mat::from_diagonal(&self.lambda)
    }

    pub fn true_a(&self) -> Mat {
        &self.a_nom + &self.b * self.lambda_matrix() * self.psi.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoChoice {
    Absolute(f64),
    /// Multiple of the computed `rho*`.
    Factor(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SquareUpChoice {
    Given(Mat),
    Search { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignMethod {
    SisoSpr {
        pole: f64,
        rho: RhoChoice,
    },
    MimoSpr {
        rho: RhoChoice,
        fallback_rho: Option<f64>,
    },
    LqgLtr {
        nu: f64,
        q0: Mat,
        r0: Mat,
        square_up: Option<SquareUpChoice>,
        asymptotics_nu: Vec<f64>,
    },
    NonSquare {
        square_up: SquareUpChoice,
        rho: RhoChoice,
        fallback_rho: Option<f64>,
    },
}

impl DesignMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DesignMethod::SisoSpr { .. } => "siso-spr",
            DesignMethod::MimoSpr { .. } => "mimo-spr",
            DesignMethod::LqgLtr { .. } => "lqg-ltr",
            DesignMethod::NonSquare { .. } => "non-square",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSpec {
    pub gamma_theta: DVector<f64>,
    pub gamma_k: DVector<f64>,
    pub feedforward: bool,
    pub use_baseline: bool,
    pub monitor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub t_final: f64,
    pub dt: f64,
    pub substeps: Option<usize>,
    pub divergence_bound: f64,
    pub reference: Reference,
    pub x0: DVector<f64>,
    pub xm0: DVector<f64>,
    pub record_every: usize,
    pub final_window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantSpec,
    /// Baseline `K_b^T` (`m x n`), if any.
    pub baseline: Option<Mat>,
    pub a_m: Mat,
    pub b_r: Mat,
    pub design: DesignMethod,
    pub controllers: ControllerSelection,
    pub adaptive: Option<AdaptiveSpec>,
    pub simulation: SimulationSpec,
}

/// Command-line overrides applied on top of a parsed scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub controllers: Option<ControllerSelection>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub rho: Option<f64>,
    pub nu: Option<f64>,
    pub seed: Option<u64>,
}

struct Ctx<'a> {
    path: &'a str,
    text: &'a str,
}

impl Ctx<'_> {
    /// Line of the first occurrence of the last key component, for messages.
    fn line_of(&self, key: &str) -> Option<usize> {
        let leaf = key.rsplit('.').next()?;
        let needle = format!("\"{leaf}\"");
        let offset = self.text.find(&needle)?;
        Some(self.text[..offset].matches('\n').count() + 1)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.to_string(),
            key: key.to_string(),
            line: self.line_of(key),
            message: message.into(),
        }
    }

    fn mat(&self, key: &str, spec: &MatrixSpec) -> CliResult<Mat> {
        spec.to_mat().map_err(|e| self.err(key, e))
    }

    fn shaped(&self, key: &str, spec: &MatrixSpec, rows: usize, cols: usize) -> CliResult<Mat> {
        let m = self.mat(key, spec)?;
        if m.shape() != (rows, cols) {
            return Err(self.err(key, format!("expected {rows}x{cols}, got {}x{}", m.nrows(), m.ncols())));
        }
        Ok(m)
    }

    fn vector(&self, key: &str, v: &[f64], len: usize) -> CliResult<DVector<f64>> {
        if v.len() != len {
            return Err(self.err(key, format!("expected {len} entries, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err(key, "entries must be finite"));
        }
        Ok(DVector::from_column_slice(v))
    }

    fn positive(&self, key: &str, v: f64) -> CliResult<f64> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(self.err(key, format!("must be positive and finite, got {v}")));
        }
        Ok(v)
    }
}

fn rho_choice(ctx: &Ctx, rho: Option<f64>, factor: Option<f64>) -> CliResult<RhoChoice> {
    match (rho, factor) {
        (Some(_), Some(_)) => Err(ctx.err("design.rho", "give either rho or rho_factor, not both")),
        (Some(r), None) if r >= 0.0 && r.is_finite() => Ok(RhoChoice::Absolute(r)),
        (Some(r), None) => Err(ctx.err("design.rho", format!("must be nonnegative, got {r}"))),
        (None, Some(f)) => Ok(RhoChoice::Factor(ctx.positive("design.rho_factor", f)?)),
        (None, None) => Err(ctx.err("design.rho", "one of rho or rho_factor is required")),
    }
}

fn square_up_choice(
    ctx: &Ctx,
    b2: Option<&MatrixSpec>,
    seed: Option<u64>,
    n: usize,
    k: usize,
) -> CliResult<SquareUpChoice> {
    match (b2, seed) {
        (Some(_), Some(_)) => Err(ctx.err("design.b2", "give either b2 or seed, not both")),
        (Some(spec), None) => Ok(SquareUpChoice::Given(ctx.shaped("design.b2", spec, n, k)?)),
        (None, seed) => Ok(SquareUpChoice::Search {
            seed: seed.unwrap_or(0),
        }),
    }
}

fn reference(ctx: &Ctx, raw: &RawReference, q: usize) -> CliResult<Reference> {
    let key = "simulation.reference";
    Ok(match raw {
        RawReference::Constant { value } => Reference::Constant(ctx.vector(&format!("{key}.value"), value, q)?),
        RawReference::Step { amplitude, at } => Reference::Step {
            amplitude: ctx.vector(&format!("{key}.amplitude"), amplitude, q)?,
            at: *at,
        },
        RawReference::FilteredStep {
            amplitude,
            time_constant,
        } => Reference::FilteredStep {
            amplitude: ctx.vector(&format!("{key}.amplitude"), amplitude, q)?,
            time_constant: ctx.positive(&format!("{key}.time_constant"), *time_constant)?,
        },
        RawReference::Sine { amplitude, frequency } => Reference::Sine {
            amplitude: ctx.vector(&format!("{key}.amplitude"), amplitude, q)?,
            frequency: *frequency,
        },
    })
}

fn raw_reference_dim(raw: &RawReference) -> usize {
    match raw {
        RawReference::Constant { value } => value.len(),
        RawReference::Step { amplitude, .. }
        | RawReference::FilteredStep { amplitude, .. }
        | RawReference::Sine { amplitude, .. } => amplitude.len(),
    }
}

fn block_diag_c(c_y_t: &Mat, q: usize) -> Mat {
    // Augmented output map [[C_y, 0], [0, I_q]], stored transposed.
    let (p, n) = c_y_t.shape();
    let mut c_t = Mat::zeros(p + q, n + q);
    c_t.view_mut((0, 0), (p, n)).copy_from(c_y_t);
    c_t.view_mut((p, n), (q, q)).fill_with_identity();
    c_t.transpose()
}

impl Scenario {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::parse(&text, &path.display().to_string(), stem)
    }

    /// Parses and validates scenario text; `path` only labels messages and
    /// `default_name` is used when the file has no `name`.
    pub fn parse(text: &str, path: &str, default_name: &str) -> CliResult<Self> {
        let ctx = Ctx { path, text };
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config {
                path: path.to_string(),
                key,
                line: Some(inner.line()),
                message: inner.to_string(),
            }
        })?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ctx.err(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", raw.schema_version),
            ));
        }

        // Plant, before augmentation.
        let rp = &raw.plant;
        let a0 = ctx.mat("plant.a", &rp.a)?;
        if !a0.is_square() {
            return Err(ctx.err("plant.a", format!("must be square, got {}x{}", a0.nrows(), a0.ncols())));
        }
        let n0 = a0.nrows();
        let b_spec = ctx.mat("plant.b", &rp.b)?;
        if b_spec.nrows() != n0 {
            return Err(ctx.err("plant.b", format!("expected {n0} rows, got {}", b_spec.nrows())));
        }
        let m = b_spec.ncols();
        let c_t0 = ctx.mat("plant.c_t", &rp.c_t)?;
        if c_t0.ncols() != n0 {
            return Err(ctx.err("plant.c_t", format!("expected {n0} columns, got {}", c_t0.ncols())));
        }
        let psi0 = match &rp.psi_t {
            Some(s) => ctx.shaped("plant.psi_t", s, m, n0)?.transpose(),
            None => Mat::zeros(n0, m),
        };
        let lambda = match &rp.lambda {
            Some(v) => {
                let l = ctx.vector("plant.lambda", v, m)?;
                if l.iter().any(|&x| !(x > 0.0)) {
                    return Err(ctx.err("plant.lambda", "entries must be positive"));
                }
                l
            }
            None => DVector::from_element(m, 1.0),
        };
        let lambda_bar = rp.lambda_bar.map(|v| ctx.positive("plant.lambda_bar", v)).transpose()?;
        if let Some(lb) = lambda_bar {
            if lambda.max() > lb * (1.0 + 1e-12) {
                return Err(ctx.err(
                    "plant.lambda_bar",
                    format!("smaller than max(lambda) = {}", lambda.max()),
                ));
            }
        }
        let theta_bar = match rp.theta_bar {
            Some(v) if v >= 0.0 && v.is_finite() => Some(v),
            Some(v) => return Err(ctx.err("plant.theta_bar", format!("must be nonnegative, got {v}"))),
            None => None,
        };

        // Reference dimension: from b_ref, reference_model.b_r, the integral
        // map or the reference signal, in that order.
        let q = if let Some(s) = &rp.b_ref {
            ctx.mat("plant.b_ref", s)?.ncols()
        } else if let Some(integ) = &rp.integral_action {
            ctx.mat("plant.integral_action.c_z", &integ.c_z)?.nrows()
        } else if let Some(s) = raw.reference_model.as_ref().and_then(|r| r.b_r.as_ref()) {
            ctx.mat("reference_model.b_r", s)?.ncols()
        } else {
            raw_reference_dim(&raw.simulation.reference)
        };
        if q == 0 {
            return Err(ctx.err("simulation.reference", "reference must have at least one channel"));
        }
        let b_ref0 = match &rp.b_ref {
            Some(s) => ctx.shaped("plant.b_ref", s, n0, q)?,
            None => Mat::zeros(n0, q),
        };

        let plant = match &rp.integral_action {
            None => PlantSpec {
                a_nom: a0,
                b: b_spec,
                c: c_t0.transpose(),
                b_ref: b_ref0,
                psi: psi0,
                lambda,
                lambda_bar,
                theta_bar,
                integral_states: 0,
            },
            Some(integ) => {
                let c_z = ctx.shaped("plant.integral_action.c_z", &integ.c_z, q, n0)?;
                let n = n0 + q;
                let mut a = Mat::zeros(n, n);
                a.view_mut((0, 0), (n0, n0)).copy_from(&a0);
                a.view_mut((n0, 0), (q, n0)).copy_from(&c_z);
                let mut b = Mat::zeros(n, m);
                b.view_mut((0, 0), (n0, m)).copy_from(&b_spec);
                let mut b_ref = Mat::zeros(n, q);
                b_ref.view_mut((0, 0), (n0, q)).copy_from(&b_ref0);
                b_ref.view_mut((n0, 0), (q, q)).copy_from(&-Mat::identity(q, q));
                let mut psi = Mat::zeros(n, m);
                psi.view_mut((0, 0), (n0, m)).copy_from(&psi0);
                PlantSpec {
                    a_nom: a,
                    b,
                    c: block_diag_c(&c_t0, q),
                    b_ref,
                    psi,
                    lambda,
                    lambda_bar,
                    theta_bar,
                    integral_states: q,
                }
            }
        };
        let (n, p) = (plant.n(), plant.p());

        // Shapes first, solves after.
        let baseline_raw = match &raw.baseline {
            Some(RawBaseline::Lqr { q: qs, r: rs }) => {
                let qm = ctx.shaped("baseline.lqr.q", qs, n, n)?;
                let rm = ctx.shaped("baseline.lqr.r", rs, m, m)?;
                Some((Some((qm, rm)), None))
            }
            Some(RawBaseline::Gain(s)) => Some((None, Some(ctx.shaped("baseline.k_t", s, m, n)?))),
            None => None,
        };
        let rm = raw.reference_model.as_ref();
        let a_m_given = rm
            .and_then(|r| r.a_m.as_ref())
            .map(|s| ctx.shaped("reference_model.a_m", s, n, n))
            .transpose()?;
        let b_r = match rm.and_then(|r| r.b_r.as_ref()) {
            Some(s) => ctx.shaped("reference_model.b_r", s, n, q)?,
            None => plant.b_ref.clone(),
        };
        if b_r.iter().all(|&v| v == 0.0) {
            return Err(ctx.err(
                "reference_model.b_r",
                "reference input map is zero; give plant.b_ref or reference_model.b_r",
            ));
        }

        let design = match &raw.design {
            RawDesign::SisoSpr { pole, rho, rho_factor } => {
                if m != 1 || p != 1 {
                    return Err(ctx.err(
                        "design.method",
                        format!("siso-spr needs one input and one output, plant has m = {m}, p = {p}"),
                    ));
                }
                DesignMethod::SisoSpr {
                    pole: ctx.positive("design.pole", *pole)?,
                    rho: rho_choice(&ctx, *rho, *rho_factor)?,
                }
            }
            RawDesign::MimoSpr {
                rho,
                rho_factor,
                fallback_rho,
            } => {
                if m != p {
                    return Err(ctx.err(
                        "design.method",
                        format!("mimo-spr needs a square plant, got m = {m}, p = {p}"),
                    ));
                }
                DesignMethod::MimoSpr {
                    rho: rho_choice(&ctx, *rho, *rho_factor)?,
                    fallback_rho: fallback_rho
                        .map(|v| ctx.positive("design.fallback_rho", v))
                        .transpose()?,
                }
            }
            RawDesign::LqgLtr {
                nu,
                q0,
                r0,
                b2,
                seed,
                asymptotics_nu,
            } => {
                let nu = ctx.positive("design.nu", *nu)?;
                let q0 = match q0 {
                    Some(s) => ctx.shaped("design.q0", s, n, n)?,
                    None => Mat::identity(n, n),
                };
                let r0 = match r0 {
                    Some(s) => ctx.shaped("design.r0", s, p, p)?,
                    None => Mat::identity(p, p),
                };
                let square_up = if p > m {
                    Some(square_up_choice(&ctx, b2.as_ref(), *seed, n, p - m)?)
                } else if p == m {
                    if b2.is_some() {
                        return Err(ctx.err("design.b2", "plant is already square"));
                    }
                    None
                } else {
                    return Err(ctx.err("plant.c_t", format!("fewer outputs ({p}) than inputs ({m})")));
                };
                let asymptotics_nu = asymptotics_nu.clone().unwrap_or_default();
                if !asymptotics_nu.is_empty()
                    && (asymptotics_nu.len() < 3 || asymptotics_nu.windows(2).any(|w| !(w[1] < w[0])))
                {
                    return Err(ctx.err(
                        "design.asymptotics_nu",
                        "needs at least three strictly decreasing values",
                    ));
                }
                DesignMethod::LqgLtr {
                    nu,
                    q0,
                    r0,
                    square_up,
                    asymptotics_nu,
                }
            }
            RawDesign::NonSquare {
                b2,
                seed,
                rho,
                rho_factor,
                fallback_rho,
            } => {
                if p <= m {
                    return Err(ctx.err(
                        "design.method",
                        format!("non-square needs more outputs than inputs, got m = {m}, p = {p}"),
                    ));
                }
                DesignMethod::NonSquare {
                    square_up: square_up_choice(&ctx, b2.as_ref(), *seed, n, p - m)?,
                    rho: rho_choice(&ctx, *rho, *rho_factor)?,
                    fallback_rho: fallback_rho
                        .map(|v| ctx.positive("design.fallback_rho", v))
                        .transpose()?,
                }
            }
        };
        if !matches!(design, DesignMethod::LqgLtr { .. }) && (plant.lambda_bar.is_none() || plant.theta_bar.is_none()) {
            return Err(ctx.err(
                "plant.theta_bar",
                "SPR designs need plant.lambda_bar and plant.theta_bar",
            ));
        }

        let controllers = raw.controllers.unwrap_or(ControllerSelection::Adaptive);
        let adaptive = match &raw.adaptive {
            Some(a) => Some(AdaptiveSpec {
                gamma_theta: ctx.vector("adaptive.gamma_theta", &a.gamma_theta, n)?,
                gamma_k: match &a.gamma_k {
                    Some(g) => ctx.vector("adaptive.gamma_k", g, q)?,
                    None if a.feedforward => return Err(ctx.err("adaptive.gamma_k", "required when feedforward is on")),
                    None => DVector::zeros(q),
                },
                feedforward: a.feedforward,
                use_baseline: a.use_baseline,
                monitor: a.monitor,
            }),
            None => None,
        };
        if let Some(a) = &adaptive {
            if a.gamma_theta.iter().chain(a.gamma_k.iter()).any(|&g| g < 0.0) {
                return Err(ctx.err("adaptive.gamma_theta", "adaptation gains must be nonnegative"));
            }
        }

        let rs = &raw.simulation;
        let ro = raw.output.as_ref();
        let simulation = SimulationSpec {
            t_final: match rs.t_final {
                t if t >= 0.0 && t.is_finite() => t,
                t => return Err(ctx.err("simulation.t_final", format!("must be nonnegative, got {t}"))),
            },
            dt: ctx.positive("simulation.dt", rs.dt)?,
            substeps: match rs.substeps {
                Some(0) => return Err(ctx.err("simulation.substeps", "must be at least 1")),
                s => s,
            },
            divergence_bound: rs
                .divergence_bound
                .map(|v| ctx.positive("simulation.divergence_bound", v))
                .transpose()?
                .unwrap_or(DIVERGENCE_BOUND),
            reference: reference(&ctx, &rs.reference, q)?,
            x0: match &rs.x0 {
                Some(v) => ctx.vector("simulation.x0", v, n)?,
                None => DVector::zeros(n),
            },
            xm0: match &rs.xm0 {
                Some(v) => ctx.vector("simulation.xm0", v, n)?,
                None => DVector::zeros(n),
            },
            record_every: match ro.and_then(|o| o.record_every) {
                Some(0) => return Err(ctx.err("output.record_every", "must be at least 1")),
                Some(k) => k,
                None => 1,
            },
            final_window: match ro.and_then(|o| o.final_window) {
                Some(f) if f > 0.0 && f <= 1.0 => f,
                Some(f) => return Err(ctx.err("output.final_window", format!("must lie in (0, 1], got {f}"))),
                None => 0.1,
            },
        };

        // Solves.
        let baseline = match baseline_raw {
            Some((Some((qm, rm)), _)) => {
                Some(lqr_gain(&plant.a_nom, &plant.b, &qm, &rm).map_err(|e| ctx.err("baseline.lqr", e.to_string()))?)
            }
            Some((None, k)) => k,
            None => None,
        };
        let a_m = match a_m_given {
            Some(a) => a,
            None => match &baseline {
                Some(k) => &plant.a_nom + &plant.b * k,
                None => plant.a_nom.clone(),
            },
        };

        let scenario = Scenario {
            name: raw.name.unwrap_or_else(|| default_name.to_string()),
            plant,
            baseline,
            a_m,
            b_r,
            design,
            controllers,
            adaptive,
            simulation,
        };
        scenario.check_controllers().map_err(|m| ctx.err("controllers", m))?;
        Ok(scenario)
    }

    fn check_controllers(&self) -> Result<(), String> {
        for kind in self.controllers.kinds() {
            match kind {
                ControllerKind::Adaptive if self.adaptive.is_none() => {
                    return Err("adaptive controller selected but the scenario has no adaptive section".into())
                }
                ControllerKind::LqrBaseline if self.baseline.is_none() => {
                    return Err("lqr-baseline selected but the scenario has no baseline".into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        let bad = |flag: &str, msg: String| CliError::Input(format!("{flag}: {msg}"));
        if let Some(c) = o.controllers {
            self.controllers = c;
            self.check_controllers().map_err(|m| bad("--controllers", m))?;
        }
        if let Some(dt) = o.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(bad("--dt", format!("must be positive, got {dt}")));
            }
            self.simulation.dt = dt;
        }
        if let Some(t) = o.t_final {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(bad("--t-final", format!("must be nonnegative, got {t}")));
            }
            self.simulation.t_final = t;
        }
        if let Some(r) = o.rho {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(bad("--rho", format!("must be nonnegative, got {r}")));
            }
            match &mut self.design {
                DesignMethod::SisoSpr { rho, .. }
                | DesignMethod::MimoSpr { rho, .. }
                | DesignMethod::NonSquare { rho, .. } => *rho = RhoChoice::Absolute(r),
                DesignMethod::LqgLtr { .. } => return Err(bad("--rho", "not used by lqg-ltr designs".into())),
            }
        }
        if let Some(v) = o.nu {
            match &mut self.design {
                DesignMethod::LqgLtr { nu, .. } if v > 0.0 && v.is_finite() => *nu = v,
                DesignMethod::LqgLtr { .. } => return Err(bad("--nu", format!("must be positive, got {v}"))),
                _ => return Err(bad("--nu", "only lqg-ltr designs use nu".into())),
            }
        }
        if let Some(s) = o.seed {
            match &mut self.design {
                DesignMethod::LqgLtr {
                    square_up: Some(SquareUpChoice::Search { seed }),
                    ..
                }
                | DesignMethod::NonSquare {
                    square_up: SquareUpChoice::Search { seed },
                    ..
                } => *seed = s,
                _ => return Err(bad("--seed", "the design has no randomized square-up search".into())),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "schema_version": 1,
  "plant": {
    "a": [[0, 1], [-1, -1]],
    "b": [[0], [1]],
    "c_t": [[1, 1]],
    "lambda_bar": 1, "theta_bar": 3
  },
  "reference_model": {"a_m": [[0, 1], [-3, -2]], "b_r": [[0], [1]]},
  "design": {"method": "siso-spr", "pole": 2, "rho_factor": 1.5},
  "adaptive": {"gamma_theta": [1, 1]},
  "simulation": {"t_final": 1, "dt": 0.01, "reference": {"kind": "step", "amplitude": [1]}}
}"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = Scenario::parse(MINIMAL, "mem", "demo").unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!(s.plant.c.shape(), (2, 1));
        assert_eq!(s.b_r.shape(), (2, 1));
        assert_eq!(s.plant.b_ref, Mat::zeros(2, 1));
        assert_eq!(s.simulation.final_window, 0.1);
    }

    #[test]
    fn shape_errors_name_the_key_and_line() {
        let text = MINIMAL.replace(r#""b": [[0], [1]]"#, r#""b": [[0], [1], [2]]"#);
        match Scenario::parse(&text, "mem", "demo").unwrap_err() {
            CliError::Config { key, line, .. } => {
                assert_eq!(key, "plant.b");
                assert_eq!(line, Some(5));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"lambda_bar\"", "\"lamda_bar\"");
        let err = Scenario::parse(&text, "mem", "demo").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("plant"), "{err}");
    }

    #[test]
    fn overrides_are_checked() {
        let mut s = Scenario::parse(MINIMAL, "mem", "demo").unwrap();
        assert!(s
            .apply(&Overrides {
                nu: Some(0.1),
                ..Default::default()
            })
            .is_err());
        assert!(s
            .apply(&Overrides {
                controllers: Some(ControllerSelection::Both),
                ..Default::default()
            })
            .is_err());
        s.apply(&Overrides {
            rho: Some(4.0),
            t_final: Some(0.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(s.simulation.t_final, 0.0);
        assert!(matches!(s.design, DesignMethod::SisoSpr { rho: RhoChoice::Absolute(r), .. } if r == 4.0));
    }
}
