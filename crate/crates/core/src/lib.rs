//! Simulation and estimation toolkit for programmable multiport photonic
//! networks built around a random mode mixer.
//!
//! The crate models the full experimental chain at desk scale: a complex
//! medium sampled from the Haar measure ([`medium`]), phase-plane circuits
//! programmed on it ([`circuit`], [`wfm`]), intensity-only characterization of
//! the medium ([`tmchar`]), heralded two-photon transport through the realized
//! circuit ([`quantum`]), and statistical estimation of the distributed states
//! ([`estimation`]). [`artifact`] persists intermediate products.

pub mod artifact;
pub mod circuit;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod medium;
pub mod modes;
pub mod quantum;
pub mod testkit;
pub mod tmchar;
pub mod wfm;

pub use error::{Error, Result};
