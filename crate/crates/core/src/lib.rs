//! Bloch-equation simulation of dynamical decoupling on inhomogeneously
//! broadened spin ensembles.
//!
//! * [`bloch`]: single-spin rotations and relaxation.
//! * [`sequence`]: pulse programs, their text language and standard templates.
//! * [`ensemble`]: ensemble runs with static broadening and bath noise.
//! * [`tomography`]: Pauli-transfer-matrix process tomography.
//! * [`hamiltonian`]: spin-5/2 levels, field gradients and critical fields.
//! * [`analysis`]: decay fits, rate profiles and cycle-time sweeps.

pub mod analysis;
pub mod bloch;
pub mod ensemble;
pub mod error;
pub mod hamiltonian;
pub mod sequence;
pub mod tomography;

pub use error::{Error, Result};
