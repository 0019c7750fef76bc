use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sI - A is singular to working precision at s = {s}")]
    SingularResolvent { s: Complex64 },

    #[error("system is not square ({outputs} outputs, {inputs} inputs)")]
    NonSquare { outputs: usize, inputs: usize },

    #[error("realization is not minimal: {0}")]
    NotMinimal(String),

    #[error("system pencil is singular (transfer matrix is rank deficient for all s)")]
    SingularPencil,

    #[error("matrix is not Hurwitz (max real part of spectrum = {max_real:e})")]
    NotHurwitz { max_real: f64 },

    #[error("{what}: residual {achieved:e} exceeds tolerance {tolerance:e}")]
    Residual {
        what: &'static str,
        achieved: f64,
        tolerance: f64,
    },

    #[error("Riccati solution is not stabilizing (max real part of closed loop = {max_real:e})")]
    NotStabilizing { max_real: f64 },

    #[error("Hamiltonian has an eigenvalue on the imaginary axis ({eigenvalue})")]
    HamiltonianImaginaryAxis { eigenvalue: Complex64 },

    #[error("pair (A, C^T) is not observable")]
    NotObservable,

    #[error("pair (A, B) is not controllable")]
    NotControllable,

    #[error("pole placement is ill conditioned (condition {condition:e}, spectral error {spectral_error:e})")]
    IllConditionedPlacement { condition: f64, spectral_error: f64 },

    #[error("system is not minimum phase (transmission zero at {zero})")]
    NotMinimumPhase { zero: Complex64 },

    #[error("first Markov parameter C^T B is (numerically) rank deficient")]
    DegenerateRelativeDegree,

    #[error("SPR gain synthesis failed: {0}")]
    SynthesisFailed(String),

    #[error("lambda_min(Q_s) = {min_eigenvalue:e} is not safely positive")]
    SingularQs { min_eigenvalue: f64 },

    #[error("KYP certificate search did not converge: {0}")]
    CertificateSearchDiverged(String),

    #[error("matrix is rank deficient (sigma_min / sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("squaring-up search exhausted after {tries} candidates (best zero margin {best_margin:e})")]
    SearchExhausted { tries: usize, best_margin: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("matching condition has no solution (residual {residual:e})")]
    NoMatch { residual: f64 },

    #[error("state became non-finite or exceeded the divergence bound at t = {t}")]
    NonFinite { t: f64 },

    #[error("Lyapunov monitor not applicable: {0}")]
    MonitorNotApplicable(String),

    #[error("iteration failed to converge: {0}")]
    NoConvergence(&'static str),
}
