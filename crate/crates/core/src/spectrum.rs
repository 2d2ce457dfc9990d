//! Frequency grids and spectra.
//!
//! Every frequency is an ordinary frequency in Hz. A grid either holds absolute
//! frequencies or detunings from a stated center; the axis is carried as
//! metadata so files and downstream consumers never have to guess.

use num_complex::Complex64;

use crate::error::{precondition, Result};

/// How the numbers in a [`Grid`] relate to absolute frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyAxis {
    /// Points are absolute frequencies (Hz).
    Absolute,
    /// Points are detunings (Hz) from `center` (Hz).
    Detuning { center: f64 },
}

impl FrequencyAxis {
    pub fn to_absolute(&self, point: f64) -> f64 {
        match *self {
            FrequencyAxis::Absolute => point,
            FrequencyAxis::Detuning { center } => center + point,
        }
    }
}

/// A strictly increasing, finite set of frequency points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axis: FrequencyAxis,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(axis: FrequencyAxis, points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return precondition("grid must contain at least one point");
        }
        if let FrequencyAxis::Detuning { center } = axis {
            if !center.is_finite() {
                return precondition("grid center must be finite");
            }
        }
        if points.iter().any(|p| !p.is_finite()) {
            return precondition("grid points must be finite");
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return precondition("grid points must be strictly increasing");
        }
        Ok(Grid { axis, points })
    }

    /// `n` evenly spaced points from `start` to `stop` inclusive.
    pub fn linspace(axis: FrequencyAxis, start: f64, stop: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return precondition("linspace needs at least two points");
        }
        let step = (stop - start) / (n - 1) as f64;
        let points = (0..n)
            .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
            .collect();
        Grid::new(axis, points)
    }

    /// Symmetric detuning grid of `n` points spanning `±half_width` Hz around `center`.
    pub fn symmetric(center: f64, half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) {
            return precondition("grid half-width must be positive");
        }
        Grid::linspace(FrequencyAxis::Detuning { center }, -half_width, half_width, n)
    }

    pub fn axis(&self) -> FrequencyAxis {
        self.axis
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn absolute(&self, i: usize) -> f64 {
        self.axis.to_absolute(self.points[i])
    }

    pub fn absolute_frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(move |&p| self.axis.to_absolute(p))
    }

    /// Lowest and highest absolute frequency covered.
    pub fn absolute_span(&self) -> (f64, f64) {
        (self.absolute(0), self.absolute(self.len() - 1))
    }

    /// Trapezoidal quadrature weights over the grid points (Hz).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.points.len();
        let mut w = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let h = self.points[i + 1] - self.points[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        w
    }

    /// Same absolute frequencies (to a relative tolerance of 1e-12), regardless
    /// of which axis convention each grid uses.
    pub fn matches(&self, other: &Grid) -> bool {
        self.len() == other.len()
            && self
                .absolute_frequencies()
                .zip(other.absolute_frequencies())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0))
    }
}

/// Real-valued power spectral density on a grid, in quanta unless labelled otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    values: Vec<f64>,
    sigma: Option<Vec<f64>>,
}

impl Spectrum {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return precondition(format!(
                "spectrum has {} values for {} grid points",
                values.len(),
                grid.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return precondition("spectrum values must be finite");
        }
        Ok(Spectrum {
            grid,
            values,
            sigma: None,
        })
    }

    /// Attach per-point one-standard-deviation uncertainties.
    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.values.len() {
            return precondition("sigma must have the same length as the values");
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return precondition("sigma entries must be finite and non-negative");
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.absolute_frequencies().map(f).collect();
        Spectrum::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trapezoidal integral over frequency (value × Hz).
    pub fn integrate(&self) -> f64 {
        self.grid
            .trapezoid_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Index and value of the largest entry.
    pub fn max(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
    }

    /// Index and value of the smallest entry.
    pub fn min(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }
}

/// Complex response (e.g. S11) on a grid, with optional per-point noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    grid: Grid,
    values: Vec<Complex64>,
    sigma: Option<Vec<f64>>,
}

impl ComplexSpectrum {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return precondition("complex spectrum length does not match its grid");
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return precondition("complex spectrum values must be finite");
        }
        Ok(ComplexSpectrum {
            grid,
            values,
            sigma: None,
        })
    }

    /// Per-point standard deviation of each quadrature.
    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.values.len() {
            return precondition("sigma must have the same length as the values");
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return precondition("complex sigma entries must be finite and positive");
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise |z|².
    pub fn power(&self) -> Spectrum {
        let values = self.values.iter().map(|z| z.norm_sqr()).collect();
        Spectrum {
            grid: self.grid.clone(),
            values,
            sigma: None,
        }
    }
}
