//! Closed-form thermal-noise physics of a single-port resonator coupled to a
//! hot environment (rate `kappa_i`) and an external radiative bath (rate `kappa_e`).
//!
//! Rates are stored as ordinary frequencies in Hz (κ/2π). Because every
//! spectral formula below is a ratio of rates or a Lorentzian in detuning,
//! the factors of 2π cancel and grids can stay in Hz as well.

use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::spectrum::{ComplexSpectrum, Grid, Spectrum};

/// Planck constant, J·s (exact in SI).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K (exact in SI).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Occupancies below this are reported as exactly zero.
pub const OCCUPANCY_FLOOR: f64 = 1e-300;

/// Mean photon number of a thermal bath at `temperature` (K) and frequency `f` (Hz).
///
/// Returns exactly `0.0` once `hf/k_BT` is so large that the occupancy falls
/// below [`OCCUPANCY_FLOOR`].
pub fn bose_einstein_occupancy(f: f64, temperature: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return domain(format!("frequency must be positive and finite, got {f}"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return domain(format!("temperature must be positive and finite, got {temperature}"));
    }
    let x = PLANCK * f / (BOLTZMANN * temperature);
    let n = 1.0 / x.exp_m1();
    Ok(if n < OCCUPANCY_FLOOR { 0.0 } else { n })
}

/// Inverse of [`bose_einstein_occupancy`]: the temperature (K) at which a mode at
/// `f` holds `occupancy` thermal quanta.
pub fn occupancy_to_temperature(f: f64, occupancy: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return domain(format!("frequency must be positive and finite, got {f}"));
    }
    if !(occupancy > 0.0 && occupancy.is_finite()) {
        return domain(format!("occupancy must be positive and finite, got {occupancy}"));
    }
    Ok(PLANCK * f / (BOLTZMANN * (1.0 / occupancy).ln_1p()))
}

/// A thermal bath described either by its physical temperature or directly by
/// its occupancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThermalBath {
    Temperature(f64),
    Occupancy(f64),
}

impl ThermalBath {
    /// Occupancy at frequency `f`. A bath at exactly 0 K holds no quanta.
    pub fn occupancy(&self, f: f64) -> Result<f64> {
        match *self {
            ThermalBath::Temperature(t) if t == 0.0 => Ok(0.0),
            ThermalBath::Temperature(t) => bose_einstein_occupancy(f, t),
            ThermalBath::Occupancy(n) if n >= 0.0 && n.is_finite() => Ok(n),
            ThermalBath::Occupancy(n) => domain(format!("occupancy must be non-negative, got {n}")),
        }
    }

    /// Temperature at frequency `f`. An empty bath sits at 0 K.
    pub fn temperature(&self, f: f64) -> Result<f64> {
        match *self {
            ThermalBath::Temperature(t) if t >= 0.0 && t.is_finite() => Ok(t),
            ThermalBath::Temperature(t) => domain(format!("temperature must be non-negative, got {t}")),
            ThermalBath::Occupancy(n) if n == 0.0 => Ok(0.0),
            ThermalBath::Occupancy(n) => occupancy_to_temperature(f, n),
        }
    }
}

/// Resonance frequency and coupling rates of a single-port resonator, all in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorParams {
    f0: f64,
    kappa_i: f64,
    kappa_e: f64,
}

impl ResonatorParams {
    pub fn new(f0: f64, kappa_i: f64, kappa_e: f64) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return domain(format!("resonance frequency must be positive, got {f0}"));
        }
        if !(kappa_i >= 0.0 && kappa_i.is_finite()) {
            return domain(format!("intrinsic rate must be non-negative, got {kappa_i}"));
        }
        if !(kappa_e >= 0.0 && kappa_e.is_finite()) {
            return domain(format!("external rate must be non-negative, got {kappa_e}"));
        }
        if !(kappa_i + kappa_e > 0.0) {
            return domain("total decay rate must be positive");
        }
        Ok(ResonatorParams { f0, kappa_i, kappa_e })
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn kappa_i(&self) -> f64 {
        self.kappa_i
    }

    pub fn kappa_e(&self) -> f64 {
        self.kappa_e
    }

    /// Total decay rate (Hz); also the full width at half maximum of every
    /// Lorentzian below.
    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_e
    }

    /// Same resonator with its frequency moved by `offset` Hz.
    pub fn detuned(&self, offset: f64) -> Result<Self> {
        ResonatorParams::new(self.f0 + offset, self.kappa_i, self.kappa_e)
    }

    fn lorentzian_denominator(&self, f: f64) -> f64 {
        let half = 0.5 * self.kappa();
        let d = f - self.f0;
        half * half + d * d
    }

    /// Power transmission from the environment into the external line at `f`.
    pub fn transmission(&self, f: f64) -> f64 {
        self.kappa_i * self.kappa_e / self.lorentzian_denominator(f)
    }

    /// Power reflection of the single-sided resonator, `1 - transmission`.
    pub fn reflection(&self, f: f64) -> f64 {
        1.0 - self.transmission(f)
    }

    /// Complex amplitude reflection coefficient.
    pub fn s11(&self, f: f64) -> Complex64 {
        Complex64::new(1.0, 0.0)
            - self.kappa_e / Complex64::new(0.5 * self.kappa(), f - self.f0)
    }

    /// Complex amplitude transmission from the environment port into the line;
    /// `|s11|^2 + |t|^2 = 1`.
    pub fn environment_transfer(&self, f: f64) -> Complex64 {
        -(self.kappa_i * self.kappa_e).sqrt() / Complex64::new(0.5 * self.kappa(), f - self.f0)
    }

    /// Largest value the transmission reaches, `4 κi κe / κ²`.
    pub fn peak_transmission(&self) -> f64 {
        4.0 * self.kappa_i * self.kappa_e / (self.kappa() * self.kappa())
    }
}

/// Source-to-resonator link modeled as a beam splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    lambda: f64,
    n_eff_link: f64,
}

impl LinkParams {
    pub fn new(lambda: f64, n_eff_link: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return domain(format!("link transmission must lie in [0, 1], got {lambda}"));
        }
        if !(n_eff_link >= 0.0 && n_eff_link.is_finite()) {
            return domain(format!("link occupancy must be non-negative, got {n_eff_link}"));
        }
        Ok(LinkParams { lambda, n_eff_link })
    }

    /// Build from the transmission and the added-noise floor `(1 - λ) n_eff_link`.
    pub fn from_floor(lambda: f64, floor: f64) -> Result<Self> {
        if !(floor >= 0.0 && floor.is_finite()) {
            return domain(format!("link noise floor must be non-negative, got {floor}"));
        }
        if floor > 0.0 && lambda >= 1.0 {
            return domain("a lossless link cannot add noise");
        }
        let n_eff = if floor == 0.0 { 0.0 } else { floor / (1.0 - lambda) };
        LinkParams::new(lambda, n_eff)
    }

    /// Perfect link.
    pub fn lossless() -> Self {
        LinkParams {
            lambda: 1.0,
            n_eff_link: 0.0,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_eff_link(&self) -> f64 {
        self.n_eff_link
    }

    /// Added noise of the link, `(1 - λ) n_eff_link`.
    pub fn floor(&self) -> f64 {
        (1.0 - self.lambda) * self.n_eff_link
    }
}

/// Steady-state mode occupancy from thermalization to both baths.
pub fn mode_occupancy(res: &ResonatorParams, n_en: f64, n_in: f64) -> f64 {
    (res.kappa_i * n_en + res.kappa_e * n_in) / res.kappa()
}

/// Occupancy seen by the resonator at the end of the link when the source holds `n_s`.
pub fn external_bath_occupancy(link: &LinkParams, n_s: f64) -> f64 {
    link.lambda * n_s + link.floor()
}

pub fn transmission_spectrum(res: &ResonatorParams, grid: &Grid) -> Spectrum {
    spectrum_on(grid, |f| res.transmission(f))
}

pub fn reflection_spectrum(res: &ResonatorParams, grid: &Grid) -> Spectrum {
    spectrum_on(grid, |f| res.reflection(f))
}

/// Symmetrized output noise PSD in quanta: `R n_in + T n_en + 1/2`.
pub fn output_noise_psd(res: &ResonatorParams, n_en: f64, n_in: f64, grid: &Grid) -> Spectrum {
    spectrum_on(grid, |f| {
        let t = res.transmission(f);
        (1.0 - t) * n_in + t * n_en + 0.5
    })
}

/// The same output PSD written as a flat input level plus the resonant feature,
/// `(n_in + 1/2) + T Δn`.
pub fn output_noise_psd_from_difference(
    res: &ResonatorParams,
    n_en: f64,
    n_in: f64,
    grid: &Grid,
) -> Spectrum {
    let delta_n = n_en - n_in;
    spectrum_on(grid, |f| n_in + 0.5 + res.transmission(f) * delta_n)
}

/// Intracavity mode PSD per Hz, normalized so its integral over frequency is
/// the mode occupancy.
///
/// Value: `(κi n_en + κe n_in) / (2π ((κ/2)² + Δ²))`.
pub fn intracavity_psd(res: &ResonatorParams, n_en: f64, n_in: f64, grid: &Grid) -> Spectrum {
    let drive = res.kappa_i * n_en + res.kappa_e * n_in;
    spectrum_on(grid, |f| {
        drive / (2.0 * std::f64::consts::PI * res.lorentzian_denominator(f))
    })
}

/// Intracavity PSD including the vacuum half-quantum of each bath, as a
/// symmetrized time-domain simulation sees it.
pub fn symmetrized_intracavity_psd(
    res: &ResonatorParams,
    n_en: f64,
    n_in: f64,
    grid: &Grid,
) -> Spectrum {
    intracavity_psd(res, n_en + 0.5, n_in + 0.5, grid)
}

pub fn reflection_s11(res: &ResonatorParams, grid: &Grid) -> ComplexSpectrum {
    let values = grid.absolute_frequencies().map(|f| res.s11(f)).collect();
    ComplexSpectrum::new(grid.clone(), values).expect("model values are finite")
}

fn spectrum_on(grid: &Grid, f: impl Fn(f64) -> f64) -> Spectrum {
    Spectrum::from_fn(grid, f).expect("model values are finite")
}
