//! Inverse pipeline: resonator fit, noise-thermometry calibration, Δn
//! extraction and mode-occupancy deduction.

pub mod fano;
pub mod lm;
pub mod lorentzian;
pub mod occupancy;
pub mod reflection;
pub mod thermometry;
pub mod uncertainty;

pub use fano::{fano_diagnostic, FanoDiagnostic};
pub use lorentzian::{fit_lorentzian, LorentzianPeak};
pub use occupancy::{
    captured_fraction, deduce_mode_occupancy, extract_delta_n, transition_source_temperature,
    DeltaNEstimate, ExtractionOptions, InputsDigest, OccupancyEstimate,
};
pub use reflection::{fit_reflection, FitReport, ResonatorEstimate};
pub use thermometry::{
    fit_noise_thermometry, link_transmission, CalibrationResult, LinkEstimate, ReferencePlane,
    ThermometryPoint,
};
pub use uncertainty::{Measured, COVERAGE_FACTOR};
