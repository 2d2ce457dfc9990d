//! Least-squares Lorentzian peak fit, used to summarize estimated spectra.

use nalgebra::{DMatrix, DVector};

use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{precondition, Error, Result};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianPeak {
    /// Center, on the spectrum's own axis (Hz).
    pub center: f64,
    /// Height above the fitted background.
    pub height: f64,
    /// Full width at half maximum (Hz).
    pub fwhm: f64,
    pub background: f64,
}

/// Fit `B + H / (1 + (2(x - c)/w)²)` to the points of `spectrum` whose axis
/// value lies in `[lo, hi]`. Set `fit_background` to false to pin `B = 0`.
pub fn fit_lorentzian(spectrum: &Spectrum, lo: f64, hi: f64, fit_background: bool) -> Result<LorentzianPeak> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = spectrum
        .grid()
        .points()
        .iter()
        .zip(spectrum.values())
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, y)| (*x, *y))
        .unzip();
    let m = xs.len();
    if m < 6 {
        return precondition("too few points inside the Lorentzian fit window");
    }
    let (imax, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let base0 = if fit_background { ymin } else { 0.0 };
    let half = base0 + 0.5 * (ymax - base0);
    let above = ys.iter().filter(|&&y| y >= half).count().max(1);
    let spacing = (xs[m - 1] - xs[0]) / (m - 1) as f64;
    let scale = (above as f64 * spacing).max(spacing);
    let x0 = xs[imax];

    let u: Vec<f64> = xs.iter().map(|x| (x - x0) / scale).collect();
    let yscale = (ymax - base0).abs().max(f64::MIN_POSITIVE);
    let v: Vec<f64> = ys.iter().map(|y| y / yscale).collect();
    let np = if fit_background { 4 } else { 3 };

    // p = [center, height, width, background]
    let residuals = |p: &DVector<f64>| {
        DVector::from_iterator(
            m,
            (0..m).map(|k| {
                let z = 2.0 * (u[k] - p[0]) / p[2];
                let b = if np == 4 { p[3] } else { 0.0 };
                b + p[1] / (1.0 + z * z) - v[k]
            }),
        )
    };
    let jacobian = |p: &DVector<f64>| {
        DMatrix::from_fn(m, np, |k, j| {
            let z = 2.0 * (u[k] - p[0]) / p[2];
            let l = 1.0 / (1.0 + z * z);
            match j {
                0 => p[1] * l * l * 2.0 * z * 2.0 / p[2],
                1 => l,
                2 => p[1] * l * l * 2.0 * z * z / p[2],
                _ => 1.0,
            }
        })
    };
    let mut p0 = vec![0.0, 1.0, 1.0];
    if fit_background {
        p0.push(base0 / yscale);
    }
    let out = levenberg_marquardt(residuals, jacobian, DVector::from_vec(p0), LmOptions::default());
    if !out.converged || !(out.params[2].abs() > 0.0) {
        return Err(Error::Numerical("Lorentzian fit did not converge".into()));
    }
    Ok(LorentzianPeak {
        center: x0 + out.params[0] * scale,
        height: out.params[1] * yscale,
        fwhm: out.params[2].abs() * scale,
        background: if fit_background { out.params[3] * yscale } else { 0.0 },
    })
}
