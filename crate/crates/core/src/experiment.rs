//! End-to-end synthetic experiment: generate every measurement a real run
//! would take, then recover the mode occupancy with the estimation pipeline.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::estimation::{
    deduce_mode_occupancy, extract_delta_n, fit_noise_thermometry, fit_reflection, link_transmission,
    transition_source_temperature, CalibrationResult, DeltaNEstimate, ExtractionOptions, FitReport,
    LinkEstimate, Measured, OccupancyEstimate, ReferencePlane, ResonatorEstimate,
};
use crate::instrument::{
    apply_circulator_leakage, derive_seed, measure_spectrum, off_resonance_spectrum, probe_reflection,
    thermometry_sweep, AmplifierChain, MeasurementConfig,
};
use crate::physics::{bose_einstein_occupancy, external_bath_occupancy, mode_occupancy, LinkParams, ResonatorParams};
use crate::spectrum::{Grid, Spectrum};

/// Coherent-probe reflection measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    /// Half-width of the probe window, in linewidths.
    pub half_width_linewidths: f64,
    pub points: usize,
    /// Standard deviation of the noise on each quadrature of S11.
    pub noise: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            half_width_linewidths: 10.0,
            points: 201,
            noise: 0.01,
        }
    }
}

/// Noise-thermometry sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermometryConfig {
    /// Load temperatures (K).
    pub temperatures: Vec<f64>,
    pub measurement: MeasurementConfig,
}

impl Default for ThermometryConfig {
    fn default() -> Self {
        ThermometryConfig {
            temperatures: vec![0.2, 0.4, 0.7, 1.0, 1.4],
            // 0.5 % per point
            measurement: MeasurementConfig {
                averages: 40_000,
                ..MeasurementConfig::default()
            },
        }
    }
}

/// Full configuration of a radiative-cooling measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalScenario {
    pub resonator: ResonatorParams,
    /// Physical temperature of the resonator's environment (K).
    pub environment_temperature: f64,
    /// Thermometer uncertainty on the environment temperature (K).
    pub environment_temperature_sigma: f64,
    /// Temperature of the thermal source feeding the external line (K).
    pub source_temperature: f64,
    pub link: LinkParams,
    /// Detection chain referred to the resonator output.
    pub amplifier: AmplifierChain,
    /// Settings of the on- and off-resonance noise spectra.
    pub measurement: MeasurementConfig,
    /// Half-width of the noise-spectrum window, in linewidths.
    pub window_linewidths: f64,
    pub window_points: usize,
    pub probe: ProbeConfig,
    pub thermometry: ThermometryConfig,
}

impl ThermalScenario {
    /// Base configuration: 10.53 GHz, κi = 113 kHz, κe = 298 kHz, environment
    /// at 1.02 K, source at 70 mK behind a 91 % link adding 0.02 quanta.
    pub fn nominal() -> Self {
        ThermalScenario {
            resonator: ResonatorParams::new(10.53e9, 113e3, 298e3).expect("valid"),
            environment_temperature: 1.02,
            environment_temperature_sigma: 0.0,
            source_temperature: 0.07,
            link: LinkParams::from_floor(0.91, 0.02).expect("valid"),
            amplifier: AmplifierChain::new(1e6, 9.0).expect("valid"),
            measurement: MeasurementConfig {
                resolution_bandwidth: 1e3,
                integration_time: None,
                averages: 80_000,
                ..MeasurementConfig::default()
            },
            window_linewidths: 15.0,
            window_points: 601,
            probe: ProbeConfig::default(),
            thermometry: ThermometryConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.environment_temperature > 0.0) {
            return domain("environment temperature must be positive");
        }
        if !(self.source_temperature > 0.0) {
            return domain("source temperature must be positive");
        }
        if !(self.environment_temperature_sigma >= 0.0) {
            return domain("environment temperature uncertainty must be non-negative");
        }
        if !(self.window_linewidths > 0.0) || self.window_points < 3 {
            return domain("noise-spectrum window needs a positive width and at least 3 points");
        }
        if !(self.probe.half_width_linewidths > 0.0) || !(self.probe.noise >= 0.0) {
            return domain("probe window must be positive and its noise non-negative");
        }
        self.measurement.validate()?;
        self.thermometry.measurement.validate()
    }

    pub fn frequency(&self) -> f64 {
        self.resonator.f0()
    }

    pub fn n_en(&self) -> Result<f64> {
        bose_einstein_occupancy(self.frequency(), self.environment_temperature)
    }

    pub fn n_source(&self) -> Result<f64> {
        bose_einstein_occupancy(self.frequency(), self.source_temperature)
    }

    /// Occupancy of the external line at the resonator.
    pub fn n_in(&self) -> Result<f64> {
        Ok(external_bath_occupancy(&self.link, self.n_source()?))
    }

    /// True steady-state mode occupancy.
    pub fn mode_occupancy(&self) -> Result<f64> {
        Ok(mode_occupancy(&self.resonator, self.n_en()?, self.n_in()?))
    }

    /// Noise-spectrum window centered on the resonance.
    pub fn window(&self) -> Result<Grid> {
        Grid::symmetric(
            self.resonator.f0(),
            self.window_linewidths * self.resonator.kappa(),
            self.window_points,
        )
    }

    pub fn probe_grid(&self) -> Result<Grid> {
        Grid::symmetric(
            self.resonator.f0(),
            self.probe.half_width_linewidths * self.resonator.kappa(),
            self.probe.points,
        )
    }

    /// Same scenario with the source at `t`.
    pub fn with_source_temperature(&self, t: f64) -> Self {
        ThermalScenario {
            source_temperature: t,
            ..self.clone()
        }
    }

    /// Environment occupancy as the experimenter knows it.
    pub fn n_en_measured(&self) -> Result<Measured> {
        let f = self.frequency();
        let t = self.environment_temperature;
        let n = bose_einstein_occupancy(f, t)?;
        let s = self.environment_temperature_sigma;
        if s == 0.0 {
            return Ok(Measured::exact(n));
        }
        let h = 1e-6 * t;
        let slope = (bose_einstein_occupancy(f, t + h)? - bose_einstein_occupancy(f, t - h)?) / (2.0 * h);
        Ok(Measured::new(n, slope * s))
    }
}

// Sub-seed channels of one experiment.
const PROBE: u64 = 0;
const THERMOMETRY: u64 = 1;
const ON: u64 = 2;
const OFF: u64 = 3;
const SOURCE_THERMOMETRY: u64 = 4;

/// Everything one synthetic run measured and inferred.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub truth_n_mode: f64,
    pub truth_delta_n: f64,
    pub fit_report: FitReport,
    pub resonator: ResonatorEstimate,
    pub calibration: CalibrationResult,
    /// Raw detected spectra.
    pub on_raw: Spectrum,
    pub off_raw: Spectrum,
    /// The same spectra in quanta after calibration.
    pub on_quanta: Spectrum,
    pub off_quanta: Spectrum,
    pub delta_n: DeltaNEstimate,
    pub estimate: OccupancyEstimate,
}

/// Convert a raw spectrum to quanta at the calibration's reference plane.
pub fn to_quanta(raw: &Spectrum, cal: &CalibrationResult) -> Result<Spectrum> {
    let values = raw.values().iter().map(|&v| cal.to_quanta(v)).collect();
    let s = Spectrum::new(raw.grid().clone(), values)?;
    match raw.sigma() {
        Some(sig) => s.with_sigma(sig.iter().map(|x| x / cal.gain).collect()),
        None => Ok(s),
    }
}

/// Fit the coherent-probe measurement into a resonator estimate.
pub fn characterize_resonator(scn: &ThermalScenario, seed: u64) -> Result<(ResonatorEstimate, FitReport)> {
    let probe = probe_reflection(&scn.resonator, &scn.probe_grid()?, scn.probe.noise, seed)?;
    let (params, report) = fit_reflection(&probe)?;
    if !report.converged {
        return Err(Error::Numerical(format!(
            "reflection fit did not converge after {} iterations",
            report.iterations
        )));
    }
    let est = ResonatorEstimate {
        params,
        covariance: report.covariance.clone(),
    };
    Ok((est, report))
}

/// Calibrate the chain at the resonator output by noise thermometry.
pub fn calibrate_resonator_plane(scn: &ThermalScenario, seed: u64) -> Result<CalibrationResult> {
    let sweep = thermometry_sweep(
        &scn.amplifier,
        &scn.thermometry.temperatures,
        scn.frequency(),
        &scn.thermometry.measurement,
        seed,
    )?;
    fit_noise_thermometry(&sweep, scn.frequency(), ReferencePlane::ResonatorOutput)
}

/// Calibrate the chain as seen from the thermal source, through the link.
pub fn calibrate_source_plane(scn: &ThermalScenario, seed: u64) -> Result<CalibrationResult> {
    let chain = scn.amplifier.behind_link(&scn.link)?;
    let sweep = thermometry_sweep(
        &chain,
        &scn.thermometry.temperatures,
        scn.frequency(),
        &scn.thermometry.measurement,
        seed,
    )?;
    fit_noise_thermometry(&sweep, scn.frequency(), ReferencePlane::SourceOutput)
}

/// Both thermometry calibrations and the link estimate that follows.
#[derive(Debug, Clone)]
pub struct LinkCalibration {
    pub source: CalibrationResult,
    pub resonator: CalibrationResult,
    pub link: LinkEstimate,
}

pub fn calibrate_link(scn: &ThermalScenario, seed: u64) -> Result<LinkCalibration> {
    scn.validate()?;
    let resonator = calibrate_resonator_plane(scn, derive_seed(seed, THERMOMETRY))?;
    let source = calibrate_source_plane(scn, derive_seed(seed, SOURCE_THERMOMETRY))?;
    let link = link_transmission(&source, &resonator)?;
    Ok(LinkCalibration { source, resonator, link })
}

/// Measure the on- and off-resonance spectra and run the four-step pipeline:
/// reflection fit, gain calibration, Δn extraction, occupancy deduction.
pub fn run_synthetic_experiment(scn: &ThermalScenario, seed: u64) -> Result<ExperimentOutcome> {
    scn.validate()?;
    let (n_en, n_in) = (scn.n_en()?, scn.n_in()?);
    let (resonator, fit_report) = characterize_resonator(scn, derive_seed(seed, PROBE))?;
    let calibration = calibrate_resonator_plane(scn, derive_seed(seed, THERMOMETRY))?;

    let grid = scn.window()?;
    let ideal_on = apply_circulator_leakage(&scn.resonator, n_en, n_in, &scn.measurement, &grid)?;
    let on_raw = measure_spectrum(&ideal_on, &scn.amplifier, &scn.measurement, derive_seed(seed, ON))?;
    let off_raw = off_resonance_spectrum(
        &scn.resonator,
        n_en,
        n_in,
        &scn.amplifier,
        &scn.measurement,
        &grid,
        derive_seed(seed, OFF),
    )?;
    let on_quanta = to_quanta(&on_raw, &calibration)?;
    let off_quanta = to_quanta(&off_raw, &calibration)?;

    let opts = ExtractionOptions {
        off_detuning: Some(scn.measurement.off_detuning(&scn.resonator)?),
        gain_rel_sigma: calibration.relative_gain_sigma(),
    };
    let delta_n = extract_delta_n(&on_quanta, &off_quanta, &resonator.params, opts)?;
    let estimate = deduce_mode_occupancy(scn.n_en_measured()?, &delta_n, &resonator);
    Ok(ExperimentOutcome {
        truth_n_mode: mode_occupancy(&scn.resonator, n_en, n_in),
        truth_delta_n: n_en - n_in,
        fit_report,
        resonator,
        calibration,
        on_raw,
        off_raw,
        on_quanta,
        off_quanta,
        delta_n,
        estimate,
    })
}

/// One source temperature of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub source_temperature: f64,
    /// Closed-form mode occupancy at this source temperature.
    pub theory: f64,
    pub estimate: OccupancyEstimate,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Source temperature at which cooling turns into heating.
    pub transition_temperature: f64,
}

/// Closed-form mode occupancy versus source temperature.
pub fn theory_curve(scn: &ThermalScenario, temperatures: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n_en = scn.n_en()?;
    temperatures
        .iter()
        .map(|&t| {
            let n_in = external_bath_occupancy(&scn.link, bose_einstein_occupancy(scn.frequency(), t)?);
            Ok((t, mode_occupancy(&scn.resonator, n_en, n_in)))
        })
        .collect()
}

/// Run the synthetic experiment at every source temperature. Points run
/// concurrently; point `k` uses sub-seed `k` of `seed`, so the result does not
/// depend on scheduling.
pub fn run_source_sweep(scn: &ThermalScenario, temperatures: &[f64], seed: u64) -> Result<SweepResult> {
    if temperatures.is_empty() {
        return domain("source-temperature sweep is empty");
    }
    let theory = theory_curve(scn, temperatures)?;
    let rows = temperatures
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let out = run_synthetic_experiment(&scn.with_source_temperature(t), derive_seed(seed, k as u64))?;
            Ok(SweepRow {
                source_temperature: t,
                theory: theory[k].1,
                estimate: out.estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let transition_temperature = transition_source_temperature(scn.n_en()?, &scn.link, scn.frequency())?;
    Ok(SweepResult {
        rows,
        transition_temperature,
    })
}
