//! Time-domain stochastic oracle.
//!
//! The mode amplitude obeys, in the frame rotating at the resonance,
//!
//! ```text
//! da = -(κ/2) a dt + √κi dW_en + √κe dW_in
//! ```
//!
//! with independent complex Wiener increments `E|dW|² = (n + 1/2) dt` for each
//! bath (symmetrized convention). Rates here are angular, `κ = 2π × kappa_hz`.
//! The reported occupancy is the mean `|a|²` minus the half-quantum offset.
//! Trajectories start empty and discard the first [`BURN_IN_DECAY_TIMES`]`/κ`.

pub mod welch;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{precondition, Result};
use crate::physics::ResonatorParams;
use crate::spectrum::{FrequencyAxis, Grid, Spectrum};

pub use welch::{estimate_psd, WelchAccumulator};

/// Burn-in discarded at the start of every trajectory, in units of 1/κ.
pub const BURN_IN_DECAY_TIMES: f64 = 10.0;
/// Largest allowed `κ dt`.
pub const MAX_KAPPA_DT: f64 = 0.1;
/// Shortest allowed duration, in units of 1/κ.
pub const MIN_DURATION_DECAY_TIMES: f64 = 100.0;
/// Batch length for the batch-means standard error, in units of 1/κ.
const BATCH_DECAY_TIMES: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Exact Ornstein–Uhlenbeck transition law: decay `e^{-κ dt/2}` and
    /// matched noise variance, so stationary statistics are exact for any dt.
    Exact,
    /// First-order Euler–Maruyama; kept to check convergence to `Exact`.
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Frame rotating at the resonance frequency.
    Rotating,
    /// Laboratory frame; needs dt to resolve the carrier.
    Lab,
}

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub res: ResonatorParams,
    pub n_en: f64,
    pub n_in: f64,
    /// Time step (s).
    pub dt: f64,
    /// Total simulated time (s), burn-in included.
    pub duration: f64,
    pub seed: u64,
    pub frame: Frame,
    pub integrator: Integrator,
    /// Welch segment length for the PSD; chosen automatically when `None`.
    pub segment_length: Option<usize>,
    /// Also synthesize the output field `a_out = a_in - √κe a`.
    pub record_output: bool,
}

impl TrajectoryConfig {
    /// Rotating-frame, exact-update configuration with `dt` and `duration`
    /// given in units of 1/κ.
    pub fn new(res: ResonatorParams, n_en: f64, n_in: f64, kappa_dt: f64, decay_times: f64, seed: u64) -> Self {
        let kappa = angular_kappa(&res);
        TrajectoryConfig {
            res,
            n_en,
            n_in,
            dt: kappa_dt / kappa,
            duration: decay_times / kappa,
            seed,
            frame: Frame::Rotating,
            integrator: Integrator::Exact,
            segment_length: None,
            record_output: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kappa = angular_kappa(&self.res);
        if !(self.n_en >= 0.0 && self.n_in >= 0.0) {
            return precondition("bath occupancies must be non-negative");
        }
        if !(self.dt > 0.0 && self.dt * kappa < MAX_KAPPA_DT) {
            return precondition(format!(
                "time step gives κ·dt = {:.4}, must be below {MAX_KAPPA_DT}",
                self.dt * kappa
            ));
        }
        if self.frame == Frame::Lab {
            let nyquist = 0.5 / self.dt;
            if nyquist <= self.res.f0() + 10.0 * self.res.kappa() {
                return precondition("lab-frame simulation needs dt to resolve the carrier frequency");
            }
        }
        if !(self.duration * kappa >= MIN_DURATION_DECAY_TIMES) {
            return precondition(format!(
                "duration covers {:.1} decay times, at least {MIN_DURATION_DECAY_TIMES} required",
                self.duration * kappa
            ));
        }
        Ok(())
    }

    fn kept_steps(&self) -> (usize, usize) {
        let kappa = angular_kappa(&self.res);
        let total = (self.duration / self.dt).round() as usize;
        let burn = ((BURN_IN_DECAY_TIMES / kappa) / self.dt).ceil() as usize;
        (burn, total.saturating_sub(burn))
    }

    fn auto_segment_length(&self) -> usize {
        let kappa = angular_kappa(&self.res);
        // resolve the linewidth with ~64 bins per κ while keeping ≥ 8 segments
        let (_, kept) = self.kept_steps();
        let wanted = (64.0 * 2.0 * std::f64::consts::PI / (kappa * self.dt)).ceil() as usize;
        let mut l = wanted.next_power_of_two().max(64);
        while l > 64 && kept < (welch::MIN_SEGMENTS + 1) * l / 2 {
            l /= 2;
        }
        l
    }
}

pub fn angular_kappa(res: &ResonatorParams) -> f64 {
    2.0 * std::f64::consts::PI * res.kappa()
}

#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    /// Mode amplitude after burn-in, in √quanta.
    pub samples: Vec<Complex64>,
    /// Output-field samples (√quanta per √s) when requested.
    pub output_samples: Option<Vec<Complex64>>,
    pub dt: f64,
    /// Mean `|a|²` minus 1/2.
    pub occupancy_estimate: f64,
    /// Batch-means standard error of `occupancy_estimate`.
    pub standard_error: f64,
    /// Welch PSD of the mode amplitude, per Hz; integrates to `⟨|a|²⟩`.
    pub psd: Spectrum,
    /// Welch PSD of the output field in quanta, when recorded.
    pub output_psd: Option<Spectrum>,
}

fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

struct RawTrajectory {
    samples: Vec<Complex64>,
    output: Option<Vec<Complex64>>,
}

fn integrate(cfg: &TrajectoryConfig, stream: u64) -> RawTrajectory {
    let kappa = angular_kappa(&cfg.res);
    let ki = 2.0 * std::f64::consts::PI * cfg.res.kappa_i();
    let ke = 2.0 * std::f64::consts::PI * cfg.res.kappa_e();
    let dt = cfg.dt;
    let (decay, gain) = match cfg.integrator {
        Integrator::Exact => {
            let r = (-0.5 * kappa * dt).exp();
            (r, ((1.0 - r * r) / (kappa * dt)).sqrt())
        }
        Integrator::EulerMaruyama => (1.0 - 0.5 * kappa * dt, 1.0),
    };
    let var_en = (cfg.n_en + 0.5) * dt;
    let var_in = (cfg.n_in + 0.5) * dt;
    let sqrt_ki = ki.sqrt();
    let sqrt_ke = ke.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let (burn, kept) = cfg.kept_steps();
    let mut samples = Vec::with_capacity(kept);
    let mut output = cfg.record_output.then(|| Vec::with_capacity(kept));
    let carrier = 2.0 * std::f64::consts::PI * cfg.res.f0() * dt;

    let mut a = Complex64::new(0.0, 0.0);
    for step in 0..burn + kept {
        let w_en = complex_normal(&mut rng, var_en);
        let w_in = complex_normal(&mut rng, var_in);
        let next = decay * a + gain * (sqrt_ki * w_en + sqrt_ke * w_in);
        if step >= burn {
            let rot = match cfg.frame {
                Frame::Rotating => Complex64::new(1.0, 0.0),
                Frame::Lab => Complex64::from_polar(1.0, -carrier * step as f64),
            };
            samples.push(a * rot);
            if let Some(out) = output.as_mut() {
                // input field averaged over the step, cavity at the step midpoint
                let a_in = w_in / dt;
                out.push((a_in - sqrt_ke * 0.5 * (a + next)) * rot);
            }
        }
        a = next;
    }
    RawTrajectory { samples, output }
}

fn batch_means_standard_error(power: &[f64], batch: usize) -> f64 {
    let batch = batch.max(1);
    let means: Vec<f64> = power
        .chunks_exact(batch)
        .map(|c| c.iter().sum::<f64>() / batch as f64)
        .collect();
    let m = means.len();
    if m < 2 {
        return f64::NAN;
    }
    let mean = means.iter().sum::<f64>() / m as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (var / m as f64).sqrt()
}

fn psd_center(cfg: &TrajectoryConfig) -> f64 {
    match cfg.frame {
        Frame::Rotating => cfg.res.f0(),
        Frame::Lab => 0.0,
    }
}

fn summarize(cfg: &TrajectoryConfig, raw: RawTrajectory) -> Result<TrajectoryResult> {
    let kappa = angular_kappa(&cfg.res);
    let power: Vec<f64> = raw.samples.iter().map(|z| z.norm_sqr()).collect();
    let mean = power.iter().sum::<f64>() / power.len() as f64;
    let batch = ((BATCH_DECAY_TIMES / kappa) / cfg.dt).round() as usize;
    let seg = cfg.segment_length.unwrap_or_else(|| cfg.auto_segment_length());
    let psd = psd_on_axis(&raw.samples, cfg.dt, seg, cfg)?;
    let output_psd = match &raw.output {
        Some(out) => Some(psd_on_axis(out, cfg.dt, seg, cfg)?),
        None => None,
    };
    Ok(TrajectoryResult {
        occupancy_estimate: mean - 0.5,
        standard_error: batch_means_standard_error(&power, batch),
        samples: raw.samples,
        output_samples: raw.output,
        dt: cfg.dt,
        psd,
        output_psd,
    })
}

fn psd_on_axis(samples: &[Complex64], dt: f64, seg: usize, cfg: &TrajectoryConfig) -> Result<Spectrum> {
    let mut acc = WelchAccumulator::new(seg, dt)?;
    acc.push(samples);
    relabel(acc.finish(psd_center(cfg))?, cfg)
}

fn relabel(psd: Spectrum, cfg: &TrajectoryConfig) -> Result<Spectrum> {
    match cfg.frame {
        Frame::Rotating => Ok(psd),
        Frame::Lab => {
            // e^{-iω0 t} moves the line to -f0; report on an absolute axis
            // of positive frequency.
            let mut pairs: Vec<(f64, f64)> = psd
                .grid()
                .points()
                .iter()
                .zip(psd.values())
                .map(|(f, v)| (-f, *v))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (f, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Spectrum::new(Grid::new(FrequencyAxis::Absolute, f)?, v)
        }
    }
}

/// Simulate one trajectory. Deterministic for a fixed seed.
pub fn simulate_trajectory(cfg: &TrajectoryConfig) -> Result<TrajectoryResult> {
    cfg.validate()?;
    summarize(cfg, integrate(cfg, 0))
}

/// Pooled statistics of independent trajectories sharing one configuration.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub trajectories: usize,
    /// Per-trajectory occupancy estimates, in stream order.
    pub occupancies: Vec<f64>,
    pub occupancy_estimate: f64,
    /// Standard error from the spread of the per-trajectory estimates.
    pub standard_error: f64,
    /// Welch PSD pooled over all trajectories.
    pub psd: Spectrum,
    pub output_psd: Option<Spectrum>,
}

/// Run `trajectories` independent trajectories on separate random streams of
/// `cfg.seed` in parallel, and reduce them in stream order.
pub fn simulate_ensemble(cfg: &TrajectoryConfig, trajectories: usize) -> Result<EnsembleResult> {
    cfg.validate()?;
    if trajectories < 2 {
        return precondition("an ensemble needs at least two trajectories");
    }
    let seg = cfg.segment_length.unwrap_or_else(|| cfg.auto_segment_length());
    let partial: Vec<(f64, WelchAccumulator, Option<WelchAccumulator>)> = (0..trajectories as u64)
        .into_par_iter()
        .map(|stream| -> Result<_> {
            let raw = integrate(cfg, stream);
            let occ = raw.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / raw.samples.len() as f64 - 0.5;
            let mut acc = WelchAccumulator::new(seg, cfg.dt)?;
            acc.push(&raw.samples);
            let out = match &raw.output {
                Some(o) => {
                    let mut a = WelchAccumulator::new(seg, cfg.dt)?;
                    a.push(o);
                    Some(a)
                }
                None => None,
            };
            Ok((occ, acc, out))
        })
        .collect::<Result<Vec<_>>>()?;

    let occupancies: Vec<f64> = partial.iter().map(|p| p.0).collect();
    let m = occupancies.len() as f64;
    let mean = occupancies.iter().sum::<f64>() / m;
    let var = occupancies.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);

    let mut iter = partial.into_iter();
    let (_, mut acc, mut out) = iter.next().expect("at least two trajectories");
    for (_, a, o) in iter {
        acc.merge(&a);
        if let (Some(total), Some(o)) = (out.as_mut(), o.as_ref()) {
            total.merge(o);
        }
    }
    let psd = relabel(acc.finish(psd_center(cfg))?, cfg)?;
    let output_psd = match out {
        Some(o) => Some(relabel(o.finish(psd_center(cfg))?, cfg)?),
        None => None,
    };
    Ok(EnsembleResult {
        trajectories,
        occupancies,
        occupancy_estimate: mean,
        standard_error: (var / m).sqrt(),
        psd,
        output_psd,
    })
}
