//! Noise-thermometry calibration of the detection chain and the source link.
//!
//! A thermal reference at temperature `T` presents `n(T) + 1/2` quanta at a
//! reference plane; the detector reports `G (n(T) + 1/2 + n_add)`. Regressing
//! detected power against `n(T)` yields the gain (slope) and added noise
//! (intercept) referred to that plane.

use std::fmt;

use crate::error::{precondition, Error, Result};
use crate::physics::{bose_einstein_occupancy, LinkParams};

use super::uncertainty::{Measured, COVERAGE_FACTOR};

/// Where a calibration refers the gain and added noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferencePlane {
    /// Output of the resonator (gain G₀), referenced to the resonator's environment.
    ResonatorOutput,
    /// Output of the thermal source (gain G_s).
    SourceOutput,
}

impl ReferencePlane {
    pub fn label(&self) -> &'static str {
        match self {
            ReferencePlane::ResonatorOutput => "resonator-output",
            ReferencePlane::SourceOutput => "source-output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "resonator-output" => Some(ReferencePlane::ResonatorOutput),
            "source-output" => Some(ReferencePlane::SourceOutput),
            _ => None,
        }
    }
}

impl fmt::Display for ReferencePlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One step of a thermometry sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermometryPoint {
    /// Reference temperature (K).
    pub temperature: f64,
    /// Detected noise power density (raw detector units).
    pub power: f64,
    /// One-standard-deviation uncertainty of `power`, if known.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub gain: f64,
    /// Added noise in quanta referred to `reference_plane`.
    pub n_add: f64,
    pub sigma_gain: f64,
    pub sigma_n_add: f64,
    /// Covariance between `gain` and `n_add`.
    pub covariance_gain_n_add: f64,
    pub reference_plane: ReferencePlane,
}

impl CalibrationResult {
    pub fn relative_gain_sigma(&self) -> f64 {
        self.sigma_gain / self.gain
    }

    /// Convert raw detected power to quanta at the reference plane.
    pub fn to_quanta(&self, raw: f64) -> f64 {
        raw / self.gain - self.n_add
    }
}

/// Fit gain and added noise from a temperature sweep at frequency `f` (Hz).
///
/// Requires at least three distinct temperatures whose occupancies span a
/// factor of two. When every point carries a sigma, the regression is
/// inverse-variance weighted and the uncertainties are absolute; otherwise
/// they are scaled by the residual variance. A slightly negative added-noise
/// estimate is floored at zero.
pub fn fit_noise_thermometry(
    sweep: &[ThermometryPoint],
    f: f64,
    reference_plane: ReferencePlane,
) -> Result<CalibrationResult> {
    if sweep.len() < 3 {
        return precondition(format!(
            "noise thermometry needs at least 3 points, got {}",
            sweep.len()
        ));
    }
    let mut temps: Vec<f64> = sweep.iter().map(|p| p.temperature).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    if temps.len() < 3 {
        return precondition("noise thermometry needs at least 3 distinct temperatures");
    }
    let x = sweep
        .iter()
        .map(|p| bose_einstein_occupancy(f, p.temperature))
        .collect::<Result<Vec<f64>>>()?;
    let (xmin, xmax) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(xmax >= 2.0 * xmin && xmax > 0.0) {
        return precondition(format!(
            "sweep occupancies span {xmin:.4}..{xmax:.4}, a factor of at least 2 is required"
        ));
    }

    let weighted = sweep.iter().all(|p| p.sigma.is_some_and(|s| s > 0.0));
    let w: Vec<f64> = if weighted {
        sweep.iter().map(|p| p.sigma.unwrap().powi(-2)).collect()
    } else {
        vec![1.0; sweep.len()]
    };
    let y: Vec<f64> = sweep.iter().map(|p| p.power).collect();

    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(&x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(&y).map(|(w, y)| w * y).sum();
    let xbar = sx / sw;
    let ybar = sy / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    if !(sxx > 0.0) {
        return precondition("sweep temperatures are degenerate");
    }

    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    if !(slope > 0.0) {
        return Err(Error::Inconsistent(format!(
            "detected power does not increase with temperature (slope {slope:e})"
        )));
    }

    let scale = if weighted {
        1.0
    } else {
        let rss: f64 = w
            .iter()
            .zip(x.iter().zip(&y))
            .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
            .sum();
        rss / (sweep.len() as f64 - 2.0)
    };
    let var_slope = scale / sxx;
    let var_intercept = scale * (1.0 / sw + xbar * xbar / sxx);
    let cov_is = -scale * xbar / sxx;

    let gain = slope;
    let n_add_raw = intercept / slope - 0.5;
    // n_add = a/b - 1/2: ∂/∂a = 1/b, ∂/∂b = -a/b²
    let da = 1.0 / slope;
    let db = -intercept / (slope * slope);
    let var_n_add = da * da * var_intercept + db * db * var_slope + 2.0 * da * db * cov_is;
    let cov_g_n = da * cov_is + db * var_slope;

    Ok(CalibrationResult {
        gain,
        n_add: n_add_raw.max(0.0),
        sigma_gain: var_slope.max(0.0).sqrt(),
        sigma_n_add: var_n_add.max(0.0).sqrt(),
        covariance_gain_n_add: cov_g_n,
        reference_plane,
    })
}

/// Link transmission and added noise inferred from the two calibrations.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEstimate {
    /// `G_s / G₀` as estimated; may slightly exceed 1 within its uncertainty.
    pub lambda: Measured,
    /// Added noise of the link `(1 - λ) n_eff_link`, in quanta at the
    /// resonator input, floored at zero.
    pub floor: Measured,
    /// Expanded interval on the floor; the lower side is truncated at zero.
    pub floor_interval: (f64, f64),
    /// Physical link parameters built from the estimate (λ clipped to 1).
    pub link: LinkParams,
}

/// Compare the source-plane and resonator-plane calibrations.
///
/// `λ = G_s / G₀`. Referring the source-plane added noise to the resonator
/// input gives `λ n_add,s = n_add,0 + (1-λ) n_eff_link + (1-λ)/2`, where the
/// last term is the vacuum admitted by the lossy link.
pub fn link_transmission(
    g_source: &CalibrationResult,
    g_resonator: &CalibrationResult,
) -> Result<LinkEstimate> {
    if g_source.reference_plane != ReferencePlane::SourceOutput {
        return Err(Error::Inconsistent(format!(
            "first calibration must refer to the source output, got {}",
            g_source.reference_plane
        )));
    }
    if g_resonator.reference_plane != ReferencePlane::ResonatorOutput {
        return Err(Error::Inconsistent(format!(
            "second calibration must refer to the resonator output, got {}",
            g_resonator.reference_plane
        )));
    }
    let (gs, g0) = (g_source.gain, g_resonator.gain);
    let lambda = gs / g0;
    let sigma_lambda = lambda * (g_source.relative_gain_sigma().powi(2) + g_resonator.relative_gain_sigma().powi(2)).sqrt();
    if lambda - 1.0 > COVERAGE_FACTOR * sigma_lambda {
        return Err(Error::Inconsistent(format!(
            "source-plane gain exceeds resonator-plane gain: lambda = {lambda:.4} ± {sigma_lambda:.4}"
        )));
    }

    let (ns, n0) = (g_source.n_add, g_resonator.n_add);
    let floor_raw = lambda * ns - n0 - 0.5 * (1.0 - lambda);
    // Gradient with respect to (G_s, n_s, G₀, n₀).
    let d_gs = (ns + 0.5) / g0;
    let d_ns = lambda;
    let d_g0 = -lambda * (ns + 0.5) / g0;
    let d_n0 = -1.0;
    let var_floor = d_gs * d_gs * g_source.sigma_gain.powi(2)
        + d_ns * d_ns * g_source.sigma_n_add.powi(2)
        + 2.0 * d_gs * d_ns * g_source.covariance_gain_n_add
        + d_g0 * d_g0 * g_resonator.sigma_gain.powi(2)
        + d_n0 * d_n0 * g_resonator.sigma_n_add.powi(2)
        + 2.0 * d_g0 * d_n0 * g_resonator.covariance_gain_n_add;
    let floor = Measured::new(floor_raw.max(0.0), var_floor.max(0.0).sqrt());
    let floor_interval = floor.interval(Some(0.0));

    let lambda_phys = lambda.min(1.0);
    let link = if lambda_phys >= 1.0 {
        LinkParams::lossless()
    } else {
        LinkParams::from_floor(lambda_phys, floor.value)?
    };
    Ok(LinkEstimate {
        lambda: Measured::new(lambda, sigma_lambda),
        floor,
        floor_interval,
        link,
    })
}
