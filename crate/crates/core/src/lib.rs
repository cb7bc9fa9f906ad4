//! Unit vector control synthesis for polytopic uncertain systems with
//! saturating actuators.
//!
//! The plant is `σ̇ = B sat(u)` with `B` in the convex hull of known vertex
//! matrices and the control law `u = K σ / ‖σ‖`. Gains are obtained from a
//! block LMI program solved by the bundled interior-point method
//! ([`sdp`]), then certified ([`analysis`]) and exercised in closed loop
//! over the polytope ([`simulation`]).

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod models;
pub mod par;
pub mod program;
pub mod sdp;
pub mod simulation;
pub mod synthesis;
pub mod system;

pub use error::{Result, UvcError};
pub use lmi::{
    assemble_program, decision_layout, recover_design, ControllerDesign, DecisionLayout,
    SynthesisParameters,
};
pub use program::{LmiBlock, LmiProgram};
pub use sdp::{residuals, solve_sdp, ResidualReport, SdpSolution, SolveStatus, SolverSettings};
pub use system::{PolytopicSystem, SaturationLimits, SimplexWeights};
