//! Quasi-classical vibrational wave-packet dynamics for D2+.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod ionization;
pub mod pes;
pub mod scenario;
pub mod spectrum;
pub mod spline;
pub mod units;

pub use analysis::{MatchOutcome, MatchResult, MatchWindow, PhaseReport, PopulationMatrix, WeightSharing};
pub use ensemble::{EnsembleElement, FieldMode, Integrator, PropagationConfig, Status, Trajectory};
pub use error::{QcmError, Result};
pub use ionization::{InitialPopulation, LaserPulse, NeutralGroundState, PhaseMode};
pub use pes::{DressingMode, PotentialSurface};
pub use scenario::{ControlOutcome, ControlSetup, Model};
pub use spectrum::{InitialCondition, VibSpectrum};
