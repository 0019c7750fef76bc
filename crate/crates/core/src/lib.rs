//! Design and simulation of output-feedback model reference adaptive control
//! with closed-loop reference models.
//!
//! The crate covers the linear-algebra layer (Lyapunov and Riccati solvers,
//! pole placement), structural analysis of state-space models, synthesis of
//! the reference-model gain `L` and mixer `M` (SISO, square MIMO, LQG/LTR and
//! squared-up non-square plants), SPR certification through KYP certificates,
//! and fixed-step simulation of the adaptive loop with a Lyapunov monitor.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptsim;
pub mod error;
pub mod linalg;
pub mod ltr;
pub mod matrixeq;
pub mod sprdesign;
pub mod squareup;
pub mod statespace;

pub use adaptsim::{
    simulate, ClosedLoop, Controller, LoopState, LyapunovFunction, MatchingSolution, Reference, SimOptions, SimTrace,
};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use ltr::{asymptotics_report, design_ltr, AsymptoticsReport, LtrDesign};
pub use sprdesign::{certify_design, verify_spr, KypCertificate, MarginBounds, SprDesign, SprReport};
pub use squareup::{square_up, SquareUpReport, SquaredUpSystem};
pub use statespace::{StateSpaceModel, UncertainPlant};
