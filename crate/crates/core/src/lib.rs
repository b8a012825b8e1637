//! Fluctuation theory for Markov additive processes with phase-dependent
//! killing.
//!
//! The crate covers the spectrally negative class analytically (fundamental
//! matrices, Wiener-Hopf factors, last-exit and conditioned-process laws) and
//! any bounded-variation model by exact event-driven simulation. The
//! [`verify`] module pairs the two.

pub mod error;
pub mod fluctuation;
pub mod linalg;
pub mod model;
pub mod poly;
pub mod simulate;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use model::{canonical, JumpLaw, LevyComponent, MapModel, PhaseClass};
