//! Heavy-traffic analysis toolkit for parallel server systems (PSS).
//!
//! The pipeline runs in four stages, each in its own module:
//!
//! * [`model`]: instance data, validation and the JSON instance format.
//! * [`lp`]: the static allocation LP solved exactly over rationals, mode
//!   (extreme point) enumeration, dual uniqueness and activity classification.
//! * [`hjb`]: the one-dimensional workload control problem, solved by policy
//!   iteration on a finite-difference grid, plus the lower bound constant `V0`.
//! * [`wcp`] and [`qcp`]: Monte Carlo simulation of the reflected workload
//!   diffusion and of the prelimit queueing system, including the pathwise
//!   inequality checks that underlie the lower bound.

pub mod hjb;
pub mod instances;
pub mod lp;
pub mod model;
pub mod qcp;
pub mod rational;
pub mod stats;
pub mod wcp;

pub use hjb::{
    compute_v0, dominant_mode, extract_policy, single_mode_value, solve_hjb, FeedbackPolicy,
    HjbConfig, HjbError, HjbSolution, PolicyInterval, SingleModeValue,
};
pub use lp::{
    analyze, ActivityClass, AssumptionReport, Decomposability, DualOutcome, DualSolution,
    LpAnalysis, LpError, Mode, ModeCoefficients,
};
pub use model::{ActivityId, InstanceDoc, MatrixPair, ModelError, PssInstance};
pub use rational::Rational;
pub use stats::McEstimate;
