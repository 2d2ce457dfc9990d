//! Occupancy difference from the resonant output feature, and the mode
//! occupancy that follows from it.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::reflection::ResonatorEstimate;
use super::uncertainty::{propagate, Measured, COVERAGE_FACTOR};
use crate::error::{domain, precondition, Result};
use crate::physics::{occupancy_to_temperature, LinkParams, ResonatorParams};
use crate::spectrum::{Grid, Spectrum};

/// Minimum span of the extraction window, in linewidths.
pub const MIN_EXTRACTION_LINEWIDTHS: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExtractionOptions {
    /// Detuning (Hz) of the resonance while the reference spectrum was taken.
    /// When set, the reference's own Lorentzian tail inside the window is
    /// included in the window correction.
    pub off_detuning: Option<f64>,
    /// Relative one-sigma uncertainty of the gain used to put both spectra in
    /// quanta; it scales the whole difference spectrum.
    pub gain_rel_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Provenance {
    Direct,
    Integral {
        integral: f64,
        sigma_integral: f64,
        gain_rel_sigma: f64,
        window: (f64, f64),
        off_detuning: Option<f64>,
    },
}

/// Estimated occupancy difference `Δn = n_en - n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaNEstimate {
    pub delta_n: f64,
    /// Uncertainty from spectral noise and gain calibration, with the
    /// coupling rates held fixed.
    pub sigma: f64,
    /// Fraction of the Lorentzian area the window captures.
    pub captured_fraction: f64,
    provenance: Provenance,
}

impl DeltaNEstimate {
    /// A Δn known from elsewhere, independent of the coupling rates.
    pub fn direct(delta_n: f64, sigma: f64) -> Self {
        DeltaNEstimate {
            delta_n,
            sigma,
            captured_fraction: 1.0,
            provenance: Provenance::Direct,
        }
    }

    /// Trapezoidal integral of the difference spectrum (quanta × Hz).
    pub fn integral(&self) -> Option<f64> {
        match self.provenance {
            Provenance::Integral { integral, .. } => Some(integral),
            Provenance::Direct => None,
        }
    }
}

/// Fraction of a unit-area Lorentzian centered at `fc` with FWHM `kappa`
/// that falls inside `[lo, hi]`.
pub fn captured_fraction(lo: f64, hi: f64, fc: f64, kappa: f64) -> f64 {
    (((2.0 * (hi - fc) / kappa).atan()) - ((2.0 * (lo - fc) / kappa).atan())) / PI
}

fn window_correction(res: &ResonatorParams, window: (f64, f64), off_detuning: Option<f64>) -> f64 {
    let (lo, hi) = window;
    let on = captured_fraction(lo, hi, res.f0(), res.kappa());
    let off = off_detuning.map_or(0.0, |d| captured_fraction(lo, hi, res.f0() + d, res.kappa()));
    on - off
}

fn prefactor(kappa_i: f64, kappa_e: f64) -> f64 {
    (kappa_i + kappa_e) / (2.0 * PI * kappa_e * kappa_i)
}

/// Δn from the area of `s_out - s_out_off`.
///
/// `Δn = κ/(2π κe κi) ∫ ΔS df / c`, with the trapezoidal rule on the native
/// grid and `c` the analytic fraction of the Lorentzian captured by the finite
/// window (for a window of half-width W centered on the resonance,
/// `c = (2/π) atan(2W/κ)`).
pub fn extract_delta_n(
    s_out: &Spectrum,
    s_out_off: &Spectrum,
    res: &ResonatorParams,
    opts: ExtractionOptions,
) -> Result<DeltaNEstimate> {
    if !s_out.grid().matches(s_out_off.grid()) {
        return precondition("on- and off-resonance spectra are on different grids");
    }
    if !(res.kappa_i() > 0.0 && res.kappa_e() > 0.0) {
        return domain("extraction needs both coupling rates to be positive");
    }
    let grid: &Grid = s_out.grid();
    let window = grid.absolute_span();
    if window.1 - window.0 < MIN_EXTRACTION_LINEWIDTHS * res.kappa() {
        return precondition(format!(
            "extraction window spans {:.2} linewidths, at least {MIN_EXTRACTION_LINEWIDTHS} required",
            (window.1 - window.0) / res.kappa()
        ));
    }

    let w = grid.trapezoid_weights();
    let integral: f64 = w
        .iter()
        .zip(s_out.values().iter().zip(s_out_off.values()))
        .map(|(w, (a, b))| w * (a - b))
        .sum();
    let var_integral: f64 = match (s_out.sigma(), s_out_off.sigma()) {
        (None, None) => 0.0,
        (a, b) => (0..w.len())
            .map(|k| {
                let sa = a.map_or(0.0, |s| s[k]);
                let sb = b.map_or(0.0, |s| s[k]);
                w[k] * w[k] * (sa * sa + sb * sb)
            })
            .sum(),
    };

    let c = window_correction(res, window, opts.off_detuning);
    if !(c > 0.0) {
        return precondition("extraction window does not capture the resonance");
    }
    let k = prefactor(res.kappa_i(), res.kappa_e()) / c;
    let delta_n = k * integral;
    let sigma = ((k * k) * var_integral + (delta_n * opts.gain_rel_sigma).powi(2)).sqrt();
    Ok(DeltaNEstimate {
        delta_n,
        sigma,
        captured_fraction: c,
        provenance: Provenance::Integral {
            integral,
            sigma_integral: var_integral.sqrt(),
            gain_rel_sigma: opts.gain_rel_sigma,
            window,
            off_detuning: opts.off_detuning,
        },
    })
}

/// Record of the inputs an occupancy estimate was deduced from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputsDigest {
    pub kappa_i: f64,
    pub kappa_e: f64,
    pub n_en: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyEstimate {
    pub delta_n: f64,
    pub n_mode: f64,
    pub sigma_delta_n: f64,
    pub sigma_n_mode: f64,
    /// Expanded interval on `n_mode`, lower side truncated at zero.
    pub n_mode_interval: (f64, f64),
    /// Set when the central value is negative; only meaningful if the
    /// interval still reaches zero.
    pub negative: bool,
    pub inputs_digest: InputsDigest,
}

impl OccupancyEstimate {
    pub fn n_mode_measured(&self) -> Measured {
        Measured::new(self.n_mode, self.sigma_n_mode)
    }

    /// Whether `truth` lies inside the reported expanded interval.
    pub fn covers(&self, truth: f64) -> bool {
        (truth - self.n_mode).abs() <= COVERAGE_FACTOR * self.sigma_n_mode
    }
}

type Scalar = Box<dyn Fn(&[f64]) -> f64>;

/// `n_mode = n_en - (κe/κ) Δn`, with first-order propagation of the
/// uncertainties of `n_en`, `Δn` and the fitted resonator parameters.
///
/// When `delta_n` came from [`extract_delta_n`], its dependence on the coupling
/// rates is propagated jointly, so correlated errors cancel where they should.
pub fn deduce_mode_occupancy(
    n_en: Measured,
    delta_n: &DeltaNEstimate,
    res: &ResonatorEstimate,
) -> OccupancyEstimate {
    let p = res.params;
    let (n_mode_fn, dn_fn, x, cov): (Scalar, Scalar, Vec<f64>, DMatrix<f64>) =
        match delta_n.provenance {
            Provenance::Direct => {
                // x = [n_en, Δn, f0, κi, κe]
                let mut cov = DMatrix::zeros(5, 5);
                cov[(0, 0)] = n_en.sigma.powi(2);
                cov[(1, 1)] = delta_n.sigma.powi(2);
                cov.view_mut((2, 2), (3, 3)).copy_from(&res.covariance);
                let n_mode = |x: &[f64]| x[0] - x[4] / (x[3] + x[4]) * x[1];
                let dn = |x: &[f64]| x[1];
                (
                    Box::new(n_mode),
                    Box::new(dn),
                    vec![n_en.value, delta_n.delta_n, p.f0(), p.kappa_i(), p.kappa_e()],
                    cov,
                )
            }
            Provenance::Integral {
                integral,
                sigma_integral,
                gain_rel_sigma,
                window,
                off_detuning,
            } => {
                // x = [n_en, integral, gain scale, f0, κi, κe]
                let mut cov = DMatrix::zeros(6, 6);
                cov[(0, 0)] = n_en.sigma.powi(2);
                cov[(1, 1)] = sigma_integral.powi(2);
                cov[(2, 2)] = gain_rel_sigma.powi(2);
                cov.view_mut((3, 3), (3, 3)).copy_from(&res.covariance);
                let dn = move |x: &[f64]| {
                    let (ki, ke) = (x[4].max(f64::MIN_POSITIVE), x[5].max(f64::MIN_POSITIVE));
                    let kappa = ki + ke;
                    let (lo, hi) = window;
                    let mut c = captured_fraction(lo, hi, x[3], kappa);
                    if let Some(d) = off_detuning {
                        c -= captured_fraction(lo, hi, x[3] + d, kappa);
                    }
                    prefactor(ki, ke) * x[1] * x[2] / c
                };
                let n_mode = move |x: &[f64]| x[0] - x[5] / (x[4] + x[5]) * dn(x);
                (
                    Box::new(n_mode),
                    Box::new(dn),
                    vec![n_en.value, integral, 1.0, p.f0(), p.kappa_i(), p.kappa_e()],
                    cov,
                )
            }
        };

    let n_mode = n_en.value - p.kappa_e() / p.kappa() * delta_n.delta_n;
    let sigma_n_mode = propagate(&n_mode_fn, &x, &cov).sqrt();
    let sigma_delta_n = propagate(&dn_fn, &x, &cov).sqrt();
    let n_mode_interval = Measured::new(n_mode, sigma_n_mode).interval(Some(0.0));
    OccupancyEstimate {
        delta_n: delta_n.delta_n,
        n_mode,
        sigma_delta_n,
        sigma_n_mode,
        n_mode_interval,
        negative: n_mode < 0.0,
        inputs_digest: InputsDigest {
            kappa_i: p.kappa_i(),
            kappa_e: p.kappa_e(),
            n_en: n_en.value,
        },
    }
}

/// Source temperature at which the external bath reaches the environment
/// occupancy, i.e. where radiative cooling turns into heating.
pub fn transition_source_temperature(n_en: f64, link: &LinkParams, f: f64) -> Result<f64> {
    if !(link.lambda() > 0.0) {
        return domain("an opaque link never brings the source into equilibrium with the mode");
    }
    let floor = link.floor();
    if !(n_en > floor) {
        return domain(format!(
            "environment occupancy {n_en} is not above the link noise floor {floor}"
        ));
    }
    occupancy_to_temperature(f, (n_en - floor) / link.lambda())
}
