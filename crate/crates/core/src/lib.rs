//! Dual-engine simulator for foundational quantum experiments.
//!
//! Two engines run the same experiment definitions:
//!
//! * [`qmengine`]: the standard Hilbert-space formalism (state vectors,
//!   unitaries, projective measurement).
//! * [`essengine`]: a local elementary-state model in which every particle
//!   carries lazily populated, predetermined outcomes per measurement
//!   context, with kern/dark-field routing for interferometers.
//!
//! [`experiments`] composes both engines into the double-slit, delayed-choice
//! Mach-Zehnder, EPR/CHSH and teleportation experiments, including the
//! ρ = N₋(45°)/N₋(90°) statistic on which the two engines disagree.

pub mod algebra;
pub mod cli;
pub mod contextprob;
pub mod error;
pub mod essengine;
pub mod experiments;
pub mod linalg;
pub mod qmengine;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
