//! Simulation of two-component coherent-state superpositions ("cat states")
//! of a high-Q cavity mode: dispersive preparation by probe atoms, exact
//! zero-temperature damping by a bath of oscillators, the master-equation
//! closed form, and the two-atom correlation signal.
//!
//! Module map:
//! - [`coherent`]: coherent-state algebra, reduced densities, spectra.
//! - [`protocol`]: detection operators, state preparation, conditional
//!   probabilities and closed-form eigenvalues.
//! - [`bath`]: discretized bath and the exact linear flow of amplitudes.
//! - [`master`]: closed-form solution of the zero-temperature master equation.
//! - [`fock`]: slow truncated-Fock reference implementation used for validation.

pub mod bath;
pub mod coherent;
pub mod error;
pub mod fit;
pub mod fock;
pub mod master;
pub mod protocol;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
