//! Synthetic detection chain: amplifier gain and added noise, finite
//! averaging, circulator leakage and the off-resonance reference.
//!
//! Raw detected values are `G (S + n_add)` in arbitrary detector units, with
//! Gaussian radiometer noise of relative size `1/sqrt(B τ N)`.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, precondition, Result};
use crate::estimation::ThermometryPoint;
use crate::physics::{bose_einstein_occupancy, LinkParams, ResonatorParams};
use crate::spectrum::{ComplexSpectrum, Grid, Spectrum};

/// Default detuning of the off-resonance reference, in linewidths.
pub const OFF_DETUNING_LINEWIDTHS: f64 = 30.0;

/// Amplification chain reduced to a power gain and an input-referred added noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplifierChain {
    gain: f64,
    n_add: f64,
}

impl AmplifierChain {
    pub fn new(gain: f64, n_add: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return domain(format!("amplifier gain must be positive, got {gain}"));
        }
        if !(n_add >= 0.0 && n_add.is_finite()) {
            return domain(format!("added noise must be non-negative, got {n_add}"));
        }
        Ok(AmplifierChain { gain, n_add })
    }

    /// Unit gain, no added noise.
    pub fn identity() -> Self {
        AmplifierChain { gain: 1.0, n_add: 0.0 }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn n_add(&self) -> f64 {
        self.n_add
    }

    /// Mean detected value for `quanta` at the input.
    pub fn detect(&self, quanta: f64) -> f64 {
        self.gain * (quanta + self.n_add)
    }

    /// The same chain seen from the far end of a lossy link in front of it.
    ///
    /// The link passes `λ` of the source and adds its own noise floor plus the
    /// vacuum `(1-λ)/2`, so `G_s = λ G` and
    /// `n_add,s = (floor + (1-λ)/2 + n_add) / λ`.
    pub fn behind_link(&self, link: &LinkParams) -> Result<Self> {
        let l = link.lambda();
        if !(l > 0.0) {
            return domain("an opaque link has no source-plane gain");
        }
        AmplifierChain::new(self.gain * l, (link.floor() + 0.5 * (1.0 - l) + self.n_add) / l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    /// Resolution bandwidth B (Hz).
    pub resolution_bandwidth: f64,
    /// Dwell per point and average (s); `None` means `1/B`, one independent
    /// sample per average. `Some(f64::INFINITY)` gives the noiseless limit.
    pub integration_time: Option<f64>,
    pub averages: u64,
    /// Amplitude ε of the leakage path around the resonator, `0 <= ε < 1`.
    pub leakage_amplitude: f64,
    /// Phase φ of the leakage path (rad).
    pub leakage_phase: f64,
    /// Detuning (Hz) of the resonance for the off-resonance reference;
    /// `None` means 30 linewidths.
    pub detune_off: Option<f64>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            resolution_bandwidth: 1e3,
            integration_time: None,
            averages: 1,
            leakage_amplitude: 0.0,
            leakage_phase: 0.0,
            detune_off: None,
        }
    }
}

impl MeasurementConfig {
    /// Noiseless, leakage-free measurement.
    pub fn ideal() -> Self {
        MeasurementConfig {
            integration_time: Some(f64::INFINITY),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_bandwidth > 0.0 && self.resolution_bandwidth.is_finite()) {
            return domain("resolution bandwidth must be positive");
        }
        if let Some(t) = self.integration_time {
            if !(t > 0.0) {
                return domain("integration time must be positive");
            }
        }
        if self.averages < 1 {
            return domain("averages must be at least 1");
        }
        if !(0.0..1.0).contains(&self.leakage_amplitude) {
            return domain(format!(
                "leakage amplitude must lie in [0, 1), got {}",
                self.leakage_amplitude
            ));
        }
        if !self.leakage_phase.is_finite() {
            return domain("leakage phase must be finite");
        }
        if let Some(d) = self.detune_off {
            if !d.is_finite() {
                return domain("off-resonance detuning must be finite");
            }
        }
        Ok(())
    }

    /// Number of independent samples behind each point, `B τ N`.
    pub fn effective_averages(&self) -> f64 {
        let tau = self.integration_time.unwrap_or(1.0 / self.resolution_bandwidth);
        self.resolution_bandwidth * tau * self.averages as f64
    }

    /// Relative standard deviation of one detected point.
    pub fn relative_noise(&self) -> f64 {
        1.0 / self.effective_averages().sqrt()
    }

    fn leakage(&self) -> Complex64 {
        Complex64::from_polar(self.leakage_amplitude, self.leakage_phase)
    }

    /// Detuning used for the off-resonance reference of `res`.
    pub fn off_detuning(&self, res: &ResonatorParams) -> Result<f64> {
        let min = OFF_DETUNING_LINEWIDTHS * res.kappa();
        match self.detune_off {
            None => Ok(min),
            Some(d) if d.abs() >= min * (1.0 - 1e-12) => Ok(d),
            Some(d) => precondition(format!(
                "off-resonance detuning {:.3} linewidths is below the required {OFF_DETUNING_LINEWIDTHS}",
                d.abs() / res.kappa()
            )),
        }
    }
}

/// Independent seed for sub-measurement `channel` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, channel: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel);
    rng.next_u64()
}

/// Detect `ideal` (quanta) through `amp`: mean `G (S + n_add)`, standard
/// deviation `mean / sqrt(B τ N)`. The sigma attached to each point is the
/// same radiometer estimate evaluated at the measured value, as an
/// experimenter would compute it.
pub fn measure_spectrum(ideal: &Spectrum, amp: &AmplifierChain, cfg: &MeasurementConfig, seed: u64) -> Result<Spectrum> {
    cfg.validate()?;
    let rel = cfg.relative_noise();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = ideal
        .values()
        .iter()
        .map(|&s| {
            let mean = amp.detect(s);
            if rel == 0.0 {
                mean
            } else {
                let z: f64 = rng.sample(StandardNormal);
                mean * (1.0 + rel * z)
            }
        })
        .collect();
    let sigma = values.iter().map(|v| v.abs() * rel).collect();
    Spectrum::new(ideal.grid().clone(), values)?.with_sigma(sigma)
}

/// Output PSD (quanta) when a fraction ε e^{iφ} of the incoming line noise
/// bypasses the resonator and interferes with the reflected field:
/// `|S11 + ε e^{iφ}|² (n_in + 1/2) + T (n_en + 1/2)`.
pub fn apply_circulator_leakage(
    res: &ResonatorParams,
    n_en: f64,
    n_in: f64,
    cfg: &MeasurementConfig,
    grid: &Grid,
) -> Result<Spectrum> {
    cfg.validate()?;
    let leak = cfg.leakage();
    Spectrum::from_fn(grid, |f| {
        (res.s11(f) + leak).norm_sqr() * (n_in + 0.5) + res.transmission(f) * (n_en + 0.5)
    })
}

/// Ideal off-resonance reference (quanta): the same output with the
/// resonance moved by the configured detuning.
pub fn off_resonance_ideal(
    res: &ResonatorParams,
    n_en: f64,
    n_in: f64,
    cfg: &MeasurementConfig,
    grid: &Grid,
) -> Result<Spectrum> {
    let detuned = res.detuned(cfg.off_detuning(res)?)?;
    apply_circulator_leakage(&detuned, n_en, n_in, cfg, grid)
}

/// Detected off-resonance reference: flat near `G (n_in + 1/2 + n_add)`
/// plus averaging noise.
pub fn off_resonance_spectrum(
    res: &ResonatorParams,
    n_en: f64,
    n_in: f64,
    amp: &AmplifierChain,
    cfg: &MeasurementConfig,
    grid: &Grid,
    seed: u64,
) -> Result<Spectrum> {
    let ideal = off_resonance_ideal(res, n_en, n_in, cfg, grid)?;
    measure_spectrum(&ideal, amp, cfg, seed)
}

/// Noise-thermometry sweep: a thermal load at each temperature presents
/// `n(T) + 1/2` to `amp`, detected with the radiometer noise of `cfg`.
pub fn thermometry_sweep(
    amp: &AmplifierChain,
    temperatures: &[f64],
    f: f64,
    cfg: &MeasurementConfig,
    seed: u64,
) -> Result<Vec<ThermometryPoint>> {
    cfg.validate()?;
    let rel = cfg.relative_noise();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    temperatures
        .iter()
        .map(|&t| {
            let mean = amp.detect(bose_einstein_occupancy(f, t)? + 0.5);
            let z: f64 = if rel == 0.0 { 0.0 } else { rng.sample(StandardNormal) };
            let power = mean * (1.0 + rel * z);
            Ok(ThermometryPoint {
                temperature: t,
                power,
                sigma: (rel > 0.0).then(|| power.abs() * rel),
            })
        })
        .collect()
}

/// Coherent-probe reflection with independent Gaussian noise of standard
/// deviation `sigma` on the real and imaginary parts of each point.
pub fn probe_reflection(res: &ResonatorParams, grid: &Grid, sigma: f64, seed: u64) -> Result<ComplexSpectrum> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return domain("probe noise must be non-negative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = grid
        .absolute_frequencies()
        .map(|f| {
            let (re, im): (f64, f64) = if sigma > 0.0 {
                (rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                (0.0, 0.0)
            };
            res.s11(f) + sigma * Complex64::new(re, im)
        })
        .collect();
    let s = ComplexSpectrum::new(grid.clone(), values)?;
    if sigma > 0.0 {
        s.with_sigma(vec![sigma; grid.len()])
    } else {
        Ok(s)
    }
}

/// Left-minus-right difference of the feature height (above `baseline`)
/// at plus and minus the mean half-width at half maximum from the extremum,
/// normalized by the extremum height; zero for a symmetric feature.
pub fn half_maximum_asymmetry(spectrum: &Spectrum, baseline: f64) -> f64 {
    let v = spectrum.values();
    let x = spectrum.grid().points();
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1 - baseline).abs().total_cmp(&(b.1 - baseline).abs()))
        .expect("non-empty spectrum");
    let height = v[imax] - baseline;
    let below_half = |k: &usize| (v[*k] - baseline) / height <= 0.5;
    let left = (0..imax).rev().find(below_half).unwrap_or(0);
    let right = (imax + 1..v.len()).find(below_half).unwrap_or(v.len() - 1);
    let d = 0.5 * ((x[imax] - x[left]) + (x[right] - x[imax]));
    let at = |target: f64| {
        let k = x.partition_point(|p| *p < target).clamp(1, x.len() - 1);
        let t = (target - x[k - 1]) / (x[k] - x[k - 1]);
        v[k - 1] + t * (v[k] - v[k - 1]) - baseline
    };
    (at(x[imax] - d) - at(x[imax] + d)) / height
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::estimation::{captured_fraction, extract_delta_n, ExtractionOptions};
    use crate::physics::output_noise_psd;

    const F0: f64 = 10.53e9;

    fn nominal() -> ResonatorParams {
        ResonatorParams::new(F0, 113e3, 298e3).unwrap()
    }

    fn window(res: &ResonatorParams) -> Grid {
        Grid::symmetric(res.f0(), 15.0 * res.kappa(), 601).unwrap()
    }

    #[test]
    fn noiseless_limit_is_gain_times_signal_plus_noise() {
        let res = nominal();
        let ideal = output_noise_psd(&res, 1.56, 0.021, &window(&res));
        let amp = AmplifierChain::new(3.7e5, 9.0).unwrap();
        let m = measure_spectrum(&ideal, &amp, &MeasurementConfig::ideal(), 1).unwrap();
        for (a, s) in m.values().iter().zip(ideal.values()) {
            assert_eq!(*a, 3.7e5 * (s + 9.0));
        }
        assert!(m.sigma().unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn identity_channel() {
        let res = nominal();
        let ideal = output_noise_psd(&res, 1.56, 0.021, &window(&res));
        let m = measure_spectrum(&ideal, &AmplifierChain::identity(), &MeasurementConfig::ideal(), 9).unwrap();
        assert_eq!(m.values(), ideal.values());
    }

    #[test]
    fn same_seed_same_spectrum() {
        let res = nominal();
        let ideal = output_noise_psd(&res, 1.56, 0.021, &window(&res));
        let cfg = MeasurementConfig { averages: 100, ..Default::default() };
        let amp = AmplifierChain::new(2.0, 1.0).unwrap();
        let a = measure_spectrum(&ideal, &amp, &cfg, 4).unwrap();
        let b = measure_spectrum(&ideal, &amp, &cfg, 4).unwrap();
        let c = measure_spectrum(&ideal, &amp, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn quadrupling_averages_halves_the_spread() {
        let grid = Grid::symmetric(1e9, 1e6, 5).unwrap();
        let ideal = Spectrum::new(grid, vec![0.5, 1.0, 2.0, 1.0, 0.5]).unwrap();
        let amp = AmplifierChain::new(10.0, 3.0).unwrap();
        let spread = |n: u64| {
            let cfg = MeasurementConfig { averages: n, ..Default::default() };
            let runs: Vec<Vec<f64>> = (0..1000)
                .map(|s| measure_spectrum(&ideal, &amp, &cfg, s).unwrap().values().to_vec())
                .collect();
            (0..5)
                .map(|k| {
                    let mean = runs.iter().map(|r| r[k]).sum::<f64>() / 1000.0;
                    (runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / 999.0).sqrt()
                })
                .collect::<Vec<f64>>()
        };
        let (a, b) = (spread(50), spread(200));
        for k in 0..5 {
            assert!((a[k] / b[k] / 2.0 - 1.0).abs() < 0.10, "point {k}: {}", a[k] / b[k]);
        }
    }

    #[test]
    fn radiometer_scaling_uses_bandwidth_and_dwell() {
        let cfg = MeasurementConfig {
            resolution_bandwidth: 1e4,
            integration_time: Some(1e-2),
            averages: 4,
            ..Default::default()
        };
        assert!((cfg.effective_averages() - 400.0).abs() < 1e-9);
        assert!((cfg.relative_noise() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn no_leakage_reproduces_output_psd() {
        let res = nominal();
        let grid = window(&res);
        let a = apply_circulator_leakage(&res, 1.56, 0.021, &MeasurementConfig::default(), &grid).unwrap();
        let b = output_noise_psd(&res, 1.56, 0.021, &grid);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn leakage_asymmetry_flips_with_phase() {
        let res = nominal();
        let grid = Grid::symmetric(res.f0(), 5.0 * res.kappa(), 2001).unwrap();
        let skew = |phi: f64| {
            let cfg = MeasurementConfig {
                leakage_amplitude: 0.05,
                leakage_phase: phi,
                ..Default::default()
            };
            let s = apply_circulator_leakage(&res, 1.56, 0.021, &cfg, &grid).unwrap();
            let base = (1.0 + cfg.leakage()).norm_sqr() * 0.521;
            half_maximum_asymmetry(&s, base)
        };
        let (p, m) = (skew(PI / 2.0), skew(-PI / 2.0));
        assert!(p.abs() > 1e-3, "asymmetry {p}");
        assert!((p + m).abs() < 1e-6 * p.abs().max(1.0), "{p} vs {m}");
        assert!(skew(0.0).abs() < 1e-9);
    }

    #[test]
    fn leakage_bias_is_first_order_in_epsilon() {
        let res = nominal();
        let grid = window(&res);
        let (n_en, n_in) = (1.56, 0.021);
        let truth = n_en - n_in;
        let bias = |eps: f64, phi: f64| {
            let cfg = MeasurementConfig {
                leakage_amplitude: eps,
                leakage_phase: phi,
                ..Default::default()
            };
            let on = apply_circulator_leakage(&res, n_en, n_in, &cfg, &grid).unwrap();
            let off = off_resonance_ideal(&res, n_en, n_in, &cfg, &grid).unwrap();
            let opts = ExtractionOptions {
                off_detuning: Some(cfg.off_detuning(&res).unwrap()),
                ..Default::default()
            };
            extract_delta_n(&on, &off, &res, opts).unwrap().delta_n - truth
        };
        // only quadrature error remains without leakage
        let b0 = bias(0.0, 0.3);
        assert!(b0.abs() < 1e-6);
        // infinite-window slope: -(κ/κi)(n_in + 1/2) cos φ
        let slope = -(res.kappa() / res.kappa_i()) * (n_in + 0.5);
        for &eps in &[0.01, 0.02, 0.05] {
            let b = bias(eps, 0.0) - b0;
            assert!((b / (slope * eps) - 1.0).abs() < 0.05, "eps {eps}: {b}");
        }
        // at quadrature the dispersive tail of the detuned reference survives
        // the finite window; it is still linear in ε
        let q1 = (bias(0.01, PI / 2.0) - b0) / 0.01;
        for &eps in &[0.02, 0.05, 0.1] {
            let q = (bias(eps, PI / 2.0) - b0) / eps;
            assert!((q / q1 - 1.0).abs() < 0.01, "eps {eps}: {q} vs {q1}");
        }
    }

    #[test]
    fn off_reference_baseline() {
        let res = nominal();
        let grid = window(&res);
        let off = off_resonance_ideal(&res, 1.56, 0.021, &MeasurementConfig::default(), &grid).unwrap();
        // far edge of the window is dominated by the baseline
        assert!((off.values()[0] - 0.521).abs() < 1e-3);
        let center = off.values()[300] - 0.521;
        let dn = 1.56 - 0.021;
        assert!(center > 0.0 && center < res.peak_transmission() * dn / 900.0);
        // the contamination is the resonance tail, which the correction accounts for
        let expected = captured_fraction(grid.absolute_span().0, grid.absolute_span().1, res.f0() + 30.0 * res.kappa(), res.kappa());
        assert!(expected > 0.0 && expected < 0.02);
    }

    #[test]
    fn detected_off_reference_is_flat_at_gain_times_baseline() {
        let res = nominal();
        let grid = window(&res);
        let amp = AmplifierChain::new(100.0, 2.0).unwrap();
        let s = off_resonance_spectrum(&res, 1.56, 0.021, &amp, &MeasurementConfig::ideal(), &grid, 0).unwrap();
        assert!((s.values()[0] / 100.0 - (0.521 + 2.0)).abs() < 1e-3);
    }

    #[test]
    fn off_reference_refuses_small_detuning() {
        let res = nominal();
        let cfg = MeasurementConfig {
            detune_off: Some(10.0 * res.kappa()),
            ..Default::default()
        };
        assert!(matches!(
            off_resonance_ideal(&res, 1.0, 0.0, &cfg, &window(&res)),
            Err(crate::Error::Precondition(_))
        ));
    }

    #[test]
    fn leakage_amplitude_must_be_below_one() {
        let cfg = MeasurementConfig {
            leakage_amplitude: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn chain_behind_link_matches_direct_detection() {
        let amp = AmplifierChain::new(5e5, 9.0).unwrap();
        let link = LinkParams::from_floor(0.91, 0.02).unwrap();
        let src = amp.behind_link(&link).unwrap();
        for &n_s in &[0.0, 0.4, 2.3] {
            let at_resonator = link.lambda() * (n_s + 0.5) + (1.0 - link.lambda()) * (link.n_eff_link() + 0.5);
            assert!((src.detect(n_s + 0.5) / amp.detect(at_resonator) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_sweep_is_exact() {
        let amp = AmplifierChain::new(1e6, 20.0).unwrap();
        let pts = thermometry_sweep(&amp, &[0.2, 0.7, 1.4], F0, &MeasurementConfig::ideal(), 0).unwrap();
        for p in pts {
            let n = bose_einstein_occupancy(F0, p.temperature).unwrap();
            assert_eq!(p.power, 1e6 * (n + 0.5 + 20.0));
            assert!(p.sigma.is_none());
        }
    }

    #[test]
    fn probe_noise_has_requested_spread() {
        let res = nominal();
        let grid = Grid::symmetric(res.f0(), 10.0 * res.kappa(), 2001).unwrap();
        let p = probe_reflection(&res, &grid, 0.01, 3).unwrap();
        let var: f64 = p
            .values()
            .iter()
            .zip(grid.absolute_frequencies())
            .map(|(z, f)| (z - res.s11(f)).norm_sqr())
            .sum::<f64>()
            / 2001.0;
        assert!((var / 2e-4 - 1.0).abs() < 0.1);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let s: Vec<u64> = (0..8).map(|c| derive_seed(42, c)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 8);
        assert_eq!(derive_seed(42, 3), s[3]);
    }
}
