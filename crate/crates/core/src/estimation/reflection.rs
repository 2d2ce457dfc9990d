//! Resonator characterization from a weak coherent-tone reflection measurement.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{precondition, Result};
use crate::physics::ResonatorParams;
use crate::spectrum::ComplexSpectrum;

/// Minimum number of probe points accepted by [`fit_reflection`].
pub const MIN_PROBE_POINTS: usize = 30;
/// Minimum probe span, in estimated linewidths.
pub const MIN_PROBE_LINEWIDTHS: f64 = 5.0;

/// Outcome of a nonlinear least-squares fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// Fitted values, in the order documented by the producing function.
    pub parameters: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Root-mean-square of the (weighted) residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Resonator parameters together with their joint uncertainty.
///
/// Covariance order is `[f0, kappa_i, kappa_e]`, in Hz².
#[derive(Debug, Clone)]
pub struct ResonatorEstimate {
    pub params: ResonatorParams,
    pub covariance: DMatrix<f64>,
}

impl ResonatorEstimate {
    /// Parameters treated as known exactly.
    pub fn exact(params: ResonatorParams) -> Self {
        ResonatorEstimate {
            params,
            covariance: DMatrix::zeros(3, 3),
        }
    }

    pub fn sigma_kappa_i(&self) -> f64 {
        self.covariance[(1, 1)].max(0.0).sqrt()
    }

    pub fn sigma_kappa_e(&self) -> f64 {
        self.covariance[(2, 2)].max(0.0).sqrt()
    }
}

impl From<ResonatorParams> for ResonatorEstimate {
    fn from(params: ResonatorParams) -> Self {
        ResonatorEstimate::exact(params)
    }
}

struct InitialGuess {
    f0: f64,
    kappa_i: f64,
    kappa_e: f64,
}

/// Starting point: resonance at the minimum of |S11|, total width from the
/// half-maximum crossings of `1 - |S11|²`, and the coupling split from the
/// real part of S11 at resonance, `(κi - κe)/κ`.
fn initial_guess(probe: &ComplexSpectrum) -> Result<InitialGuess> {
    let freqs: Vec<f64> = probe.grid().absolute_frequencies().collect();
    let depth: Vec<f64> = probe.values().iter().map(|z| 1.0 - z.norm_sqr()).collect();
    let (imin, peak) = depth
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    if !(peak > 0.0) {
        return precondition("probe shows no resonance dip");
    }
    let half = 0.5 * peak;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imin;
        for i in range {
            if depth[i] < half {
                let (x0, y0, x1, y1) = (freqs[prev], depth[prev], freqs[i], depth[i]);
                return Some(x0 + (half - y0) * (x1 - x0) / (y1 - y0));
            }
            prev = i;
        }
        None
    };
    let right = crossing(&mut ((imin + 1)..freqs.len()));
    let left = crossing(&mut (0..imin).rev());
    let f0 = freqs[imin];
    let kappa = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f0 - l),
        (None, Some(r)) => 2.0 * (r - f0),
        (None, None) => return precondition("probe does not resolve the resonance half-width"),
    };
    if !(kappa > 0.0) {
        return precondition("could not estimate the resonance linewidth");
    }
    let (fmin, fmax) = probe.grid().absolute_span();
    if fmax - fmin < MIN_PROBE_LINEWIDTHS * kappa {
        return precondition(format!(
            "probe spans {:.2} linewidths, at least {MIN_PROBE_LINEWIDTHS} required",
            (fmax - fmin) / kappa
        ));
    }
    let split = 0.5 * (1.0 - probe.values()[imin].re);
    let kappa_e = kappa * split.clamp(0.02, 0.98);
    Ok(InitialGuess {
        f0,
        kappa_i: kappa - kappa_e,
        kappa_e,
    })
}

/// Fit the single-port reflection model `S11 = 1 - κe / (κ/2 + i(f - f0))`
/// to a complex probe spectrum.
///
/// Per-point sigmas (standard deviation of each quadrature) weight the
/// residuals when present. Report parameters are `[f0, kappa_i, kappa_e]` in Hz;
/// the covariance is scaled by the residual variance unless sigmas were given.
/// A fit that does not converge, or lands on unphysical rates, comes back with
/// `converged == false` rather than as an error.
pub fn fit_reflection(probe: &ComplexSpectrum) -> Result<(ResonatorParams, FitReport)> {
    if probe.len() < MIN_PROBE_POINTS {
        return precondition(format!(
            "probe has {} points, at least {MIN_PROBE_POINTS} required",
            probe.len()
        ));
    }
    let guess = initial_guess(probe)?;

    // Work in units of the guessed linewidth, relative to the guessed center.
    let scale = guess.kappa_i + guess.kappa_e;
    let x: Vec<f64> = probe
        .grid()
        .absolute_frequencies()
        .map(|f| (f - guess.f0) / scale)
        .collect();
    let data = probe.values();
    let inv_sigma: Vec<f64> = match probe.sigma() {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; probe.len()],
    };
    let m = probe.len();

    let model = |p: &DVector<f64>, xk: f64| -> (Complex64, Complex64) {
        let d = Complex64::new(0.5 * (p[1] + p[2]), xk - p[0]);
        (Complex64::new(1.0, 0.0) - p[2] / d, d)
    };
    let residuals = |p: &DVector<f64>| {
        let mut r = DVector::zeros(2 * m);
        for k in 0..m {
            let (s, _) = model(p, x[k]);
            let e = (s - data[k]) * inv_sigma[k];
            r[2 * k] = e.re;
            r[2 * k + 1] = e.im;
        }
        r
    };
    let jacobian = |p: &DVector<f64>| {
        let mut j = DMatrix::zeros(2 * m, 3);
        for k in 0..m {
            let (_, d) = model(p, x[k]);
            let d2 = d * d;
            let ke = p[2];
            let partials = [
                Complex64::new(0.0, -1.0) * ke / d2,
                0.5 * ke / d2,
                -1.0 / d + 0.5 * ke / d2,
            ];
            for (c, dz) in partials.iter().enumerate() {
                let dz = dz * inv_sigma[k];
                j[(2 * k, c)] = dz.re;
                j[(2 * k + 1, c)] = dz.im;
            }
        }
        j
    };

    let p0 = DVector::from_vec(vec![0.0, guess.kappa_i / scale, guess.kappa_e / scale]);
    let out = levenberg_marquardt(residuals, jacobian, p0, LmOptions::default());

    let dof = (out.residual_count as f64 - 3.0).max(1.0);
    let variance_scale = if probe.sigma().is_some() {
        1.0
    } else {
        out.cost / dof
    };
    let units = DMatrix::from_diagonal(&DVector::from_element(3, scale));
    let covariance = &units * (out.unscaled_covariance.clone() * variance_scale) * &units;

    let f0 = guess.f0 + out.params[0] * scale;
    let kappa_i = out.params[1] * scale;
    let kappa_e = out.params[2] * scale;
    let physical = kappa_i >= 0.0 && kappa_e >= 0.0 && kappa_i + kappa_e > 0.0;
    let params = if physical {
        ResonatorParams::new(f0, kappa_i, kappa_e)?
    } else {
        ResonatorParams::new(f0, kappa_i.max(0.0), kappa_e.max(0.0).max(f64::MIN_POSITIVE))?
    };

    let report = FitReport {
        parameters: vec![f0, kappa_i, kappa_e],
        covariance,
        residual_norm: (out.cost / out.residual_count as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged && physical,
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::reflection_s11;
    use crate::spectrum::Grid;

    fn nominal() -> ResonatorParams {
        ResonatorParams::new(10.53e9, 113e3, 298e3).unwrap()
    }

    #[test]
    fn noiseless_round_trip_is_exact() {
        let res = nominal();
        let grid = Grid::symmetric(res.f0() + 20e3, 10.0 * res.kappa(), 201).unwrap();
        let probe = reflection_s11(&res, &grid);
        let (fit, report) = fit_reflection(&probe).unwrap();
        assert!(report.converged);
        assert!(report.residual_norm < 1e-10, "{}", report.residual_norm);
        assert!((fit.f0() / res.f0() - 1.0).abs() < 1e-6);
        assert!((fit.kappa_i() / res.kappa_i() - 1.0).abs() < 1e-6);
        assert!((fit.kappa_e() / res.kappa_e() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn undercoupled_round_trip() {
        let res = ResonatorParams::new(5e9, 400e3, 90e3).unwrap();
        let grid = Grid::symmetric(res.f0(), 8.0 * res.kappa(), 121).unwrap();
        let (fit, report) = fit_reflection(&reflection_s11(&res, &grid)).unwrap();
        assert!(report.converged);
        assert!((fit.kappa_i() / res.kappa_i() - 1.0).abs() < 1e-6);
        assert!((fit.kappa_e() / res.kappa_e() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_too_few_points() {
        let res = nominal();
        let grid = Grid::symmetric(res.f0(), 10.0 * res.kappa(), 29).unwrap();
        assert!(matches!(
            fit_reflection(&reflection_s11(&res, &grid)),
            Err(crate::Error::Precondition(_))
        ));
    }

    #[test]
    fn rejects_narrow_window() {
        let res = nominal();
        let grid = Grid::symmetric(res.f0(), 2.0 * res.kappa(), 101).unwrap();
        assert!(matches!(
            fit_reflection(&reflection_s11(&res, &grid)),
            Err(crate::Error::Precondition(_))
        ));
    }
}
