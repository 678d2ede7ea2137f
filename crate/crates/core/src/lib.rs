//! Second-order flocking of agents on the unit sphere.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod integrator;
pub mod kernels;
pub mod landscape;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use dynamics::{AgentState, Ensemble, Model};
pub use error::{FlockError, Result};
pub use geometry::{Mat3, Vec3};
pub use kernels::{PsiKernel, SigmaKernel};
pub use runner::{run, sweep, TrajectoryLog};
pub use scenario::{scenario, InitialData, RunConfig};
