//! Exact asymptotic counting statistics for Markovian ticking clockworks.
//!
//! A clockwork is a finite-dimensional Lindblad system whose quantum jumps are
//! counted by a weighted integrated current `N(t)`. This crate computes the
//! long-time average current `F`, noise `D` and signal-to-noise ratio
//! `S = F²/D` of such currents, builds joint clockwork + memory generators for
//! incoherent feedback policies, evaluates kinetic and clock uncertainty
//! bounds for classical chains, and cross-checks everything with stochastic
//! trajectory simulation.
//!
//! Module map:
//!
//! * [`linalg`]: dense complex Kronecker products, column-stacking
//!   vectorization, SVD pseudo-inverse and null spaces.
//! * [`model`]: Lindblad specifications, the qubit clockwork, classical chains,
//!   control families and independent composition.
//! * [`feedback`]: feedback policies and the joint generator they induce.
//! * [`fcs`]: steady states, group inverses, `F`, `D`, `S` and the bounds built
//!   on them.
//! * [`trajectory`]: Gillespie and quantum-jump Monte Carlo estimators.
//! * [`sweep`]: parameter grids, simplex refinement and the constant-vs-feedback
//!   comparison.
//! * [`io`]: JSON model/policy/current schemas and CSV formatting.

pub mod error;
pub mod fcs;
pub mod feedback;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sweep;
pub mod trajectory;

pub use error::{Error, Result};
pub use fcs::{
    current_and_noise, group_inverse, steady_state, vectorized_generator, Degeneracy, FcsResult,
    FcsSolver, IntegratedCurrent,
};
pub use feedback::{build_joint, FeedbackPolicy, JointSystem};
pub use linalg::{ComplexMatrix, C64};
pub use model::{ClassicalClockworkSpec, ControlledFamily, JumpLabel, LindbladSpec};
