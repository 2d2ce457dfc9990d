//! Simulation and calibration toolkit for radiative cooling of a
//! superconducting microwave resonator.
//!
//! - [`physics`]: closed-form occupancies and noise spectra.
//! - [`estimation`]: reflection fits, noise-thermometry calibration and
//!   occupancy deduction from measured output spectra.
//! - [`langevin`]: time-domain stochastic oracle for the closed forms.
//! - [`instrument`]: synthetic detection chain (gain, added noise,
//!   finite averaging, circulator leakage, off-resonance reference).
//! - [`experiment`]: a full synthetic measurement followed by the estimation pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod experiment;
pub mod instrument;
pub mod langevin;
pub mod physics;
pub mod spectrum;

pub use error::{Error, Result};
pub use physics::{LinkParams, ResonatorParams, ThermalBath};
pub use spectrum::{ComplexSpectrum, FrequencyAxis, Grid, Spectrum};
