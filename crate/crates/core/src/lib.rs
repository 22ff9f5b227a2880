//! Gradient descent for symmetric low-rank matrix sensing from small random
//! initialization, with diagnostics for its spectral, saddle-avoidance and
//! local-refinement phases.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod monitors;
pub mod rng;
pub mod sensing;
pub mod solver;
pub mod spectral;

pub use diagnostics::{detect_phases, principal_angle, signal_noise_decompose, PhaseReport, SignalNoiseSplit};
pub use error::{Error, Result};
pub use model::{GroundTruth, ProblemInstance, TruthKind};
pub use monitors::{MonitorConfig, MonitorObserver, MonitorReport};
pub use sensing::{Ensemble, RipEstimate, SensingOperator};
pub use solver::{run_gd, InitKind, RunOutcome, SolverConfig, StopReason, TrajectoryRecord, TrajectoryRow};

/// Schema tag written into every run summary.
pub const SCHEMA: &str = "lowrank-phases/v1";
