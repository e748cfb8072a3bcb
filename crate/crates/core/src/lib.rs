//! Mass-spring-damper model of a deformable linear object (cable, wire).
//!
//! The cable is split into lumped masses joined by axial springs, with a
//! bending spring on every interior node. A fixed-step semi-implicit Euler
//! integrator advances it under scripted end motion, [`stability`] flags
//! runs that diverge or ring, and [`scenario`] drives domain-randomized
//! sweeps over material and discretization parameters.

// `!(x <= limit)` is used on purpose so NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cable;
pub mod error;
pub mod forces;
pub mod integrator;
pub mod io;
pub mod parallel;
pub mod scenario;
mod serde_float;
pub mod stability;

pub use cable::{
    discretize, BendingElement, CableSpec, CableState, Discretization, StretchSegment,
};
pub use error::{Error, Result};
pub use forces::ForceBreakdown;
pub use integrator::{BoundaryScript, Motion, Trajectory};
pub use scenario::{ExperimentRecord, RandomizationRanges, Scenario, ScenarioKind};
pub use stability::{Classification, StabilityReport};

pub type Vec3 = nalgebra::Vector3<f64>;
