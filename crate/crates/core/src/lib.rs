//! Discrete-event simulation of polarization-encoded photonic links:
//! two-photon quantum state tracking in Jones calculus, a deterministic
//! picosecond event kernel, entangled-pair sources and analyzer optics,
//! fiber propagation (dispersion, birefringence, Raman noise from a
//! co-propagating classical channel), and the analysis layer on top.

pub mod analysis;
pub mod components;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fiber;
pub mod kernel;
pub mod quantum;

pub use error::Error;
pub use kernel::{RngStreams, Timeline, Timestamp};
pub use quantum::{BellKind, JonesMatrix, JonesVector, Slot, TwoPhotonState};
