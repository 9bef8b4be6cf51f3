//! Spectrum, exceptional points and dynamics of the mixed one- and
//! two-photon quantum Rabi model
//! `H = ε/2 σz − Δ/2 σx + a†a + σz [g1 (a† + a) + g2 (a†² + a²)]`.

pub mod diag;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod exceptional;
pub mod fock;
pub mod gfunction;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod precise;
pub mod recurrence;

pub use error::{RabiError, Result};
pub use model::{build_frame, BogoliubovFrame, Family, ModelParams};
