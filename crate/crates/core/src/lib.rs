//! Pulse-level simulator of a trapped-ion bosonic learning machine.
//!
//! Data states live in the motional modes of a single ion. Overlaps between
//! them are measured with a constant-depth SWAP test built from two
//! spin-controlled beam splitters, and the overlaps drive K-means and k-NN
//! over quantum states.

pub mod characterization;
pub mod error;
pub mod fock;
pub mod pulse;
pub mod qml;
pub mod runner;
pub mod synthesis;
pub mod wigner;

pub use error::{Error, Result};
pub use fock::{MotionalState, StateSpec, Truncation};
pub use num_complex::Complex64 as C64;
