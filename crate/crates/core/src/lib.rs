//! Simulator for multiparty-controlled probabilistic teleportation of
//! `m`-qudit states over pure, non-maximally entangled channels.
//!
//! * [`state`]: dense qudit state vectors, operator application, projective
//!   measurement and fidelity.
//! * [`primitives`]: generalized Bell states, qudit Pauli family, `X_d` basis,
//!   the Fourier matrix, channel states and the extraction/correction
//!   unitaries.
//! * [`teleport`]: protocol runs (dense and structured engines) and the
//!   exhaustive branch oracle.
//! * [`decoy`]: decoy-qudit checks against intercept-resend attacks.
//! * [`harness`]: experiment configs, campaigns and report output.

pub mod decoy;
pub mod error;
pub mod harness;
pub mod primitives;
pub mod rng;
pub mod state;
pub mod teleport;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use primitives::ChannelSpec;
pub use state::{OperatorMatrix, StateVector};
pub use teleport::{BranchReport, InputState, RunMode, Transcript};
