// SPDX-License-Identifier: Apache-2.0

//! Desk-scale simulation of a three-qubit NMR experiment built around the
//! permutation-symmetric state
//!
//! ```text
//! |S> = (|001> + |010> - |100>) / sqrt(6) + |111> / sqrt(2)
//! ```
//!
//! The crate covers gate-level and pulse-level preparation, entanglement
//! certification (negativity, concurrence), seven-setting state tomography
//! with constrained least-squares reconstruction, and evaluation of the tight
//! tripartite Bell functional `T26`.
//!
//! Qubits are numbered 1, 2, 3 with qubit 1 the most significant bit of the
//! computational basis index, so basis states run `|000>` to `|111>`.

pub mod bell;
pub mod circuits;
pub mod entanglement;
mod error;
pub mod linalg;
pub mod nmr;
pub mod noise;
pub mod par;
pub mod pipeline;
pub mod qstate;
pub mod tolerances;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64;
