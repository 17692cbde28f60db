//! Continuous fuzzy measurement of quantum systems.
//!
//! Three equivalent descriptions of a monitored system with Hamiltonian H,
//! measured observable A and measurement strength κ (ħ = 1):
//!
//! * [`lindblad`]: the nonselective master equation
//!   ρ̇ = −i[H,ρ] − (κ/2)[A,[A,ρ]];
//! * [`chm`]: selective evolution along a given readout record under the
//!   complex Hamiltonian H − iκ(A − a(t))²;
//! * [`sse`]: readout records sampled with their correct statistics by a
//!   stochastic Schrödinger equation.
//!
//! [`chain`] covers the discrete-time picture (fuzzy POVM chains and weak
//! ancilla coupling) and [`experiments`] the Zeno and monitoring scenarios.

pub mod chain;
pub mod chm;
pub mod error;
pub mod experiments;
pub mod export;
pub mod hilbert;
pub mod lindblad;
pub mod quadrature;
pub mod readout;
pub mod sse;
pub mod verify;

pub use error::{Error, Result};
