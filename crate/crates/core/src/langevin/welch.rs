//! Welch-averaged periodogram of a complex time series.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{precondition, Result};
use crate::spectrum::{FrequencyAxis, Grid, Spectrum};

/// Minimum number of segments [`estimate_psd`] will average.
pub const MIN_SEGMENTS: usize = 8;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Accumulates windowed periodograms segment by segment, so several time
/// series (e.g. an ensemble of trajectories) can feed one estimate.
pub struct WelchAccumulator {
    segment_length: usize,
    dt: f64,
    window: Vec<f64>,
    window_power: f64,
    sum: Vec<f64>,
    segments: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl WelchAccumulator {
    pub fn new(segment_length: usize, dt: f64) -> Result<Self> {
        if segment_length < 4 {
            return precondition("Welch segments need at least 4 samples");
        }
        if !(dt > 0.0) {
            return precondition("sample interval must be positive");
        }
        let window = hann(segment_length);
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_length);
        Ok(WelchAccumulator {
            segment_length,
            dt,
            window,
            window_power,
            sum: vec![0.0; segment_length],
            segments: 0,
            fft,
        })
    }

    /// Add every half-overlapping segment of `samples`.
    pub fn push(&mut self, samples: &[Complex64]) {
        let l = self.segment_length;
        let hop = l / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        let mut start = 0;
        while start + l <= samples.len() {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = samples[start + k] * self.window[k];
            }
            self.fft.process(&mut buf);
            for (acc, z) in self.sum.iter_mut().zip(&buf) {
                *acc += z.norm_sqr();
            }
            self.segments += 1;
            start += hop;
        }
    }

    /// Fold in another accumulator with the same segment length and step.
    pub fn merge(&mut self, other: &WelchAccumulator) {
        debug_assert_eq!(self.segment_length, other.segment_length);
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.segments += other.segments;
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Two-sided PSD per Hz on a detuning axis around `center`, normalized so
    /// that its integral over frequency equals the mean squared magnitude.
    pub fn finish(&self, center: f64) -> Result<Spectrum> {
        if self.segments < MIN_SEGMENTS {
            return precondition(format!(
                "Welch estimate needs at least {MIN_SEGMENTS} segments, got {}",
                self.segments
            ));
        }
        let l = self.segment_length;
        let norm = self.dt / (self.window_power * self.segments as f64);
        let df = 1.0 / (l as f64 * self.dt);
        // fftshift: bins l/2.. are negative frequencies
        let half = l / 2;
        let order: Vec<usize> = (half..l).chain(0..half).collect();
        let freqs: Vec<f64> = order
            .iter()
            .map(|&k| if k >= half { (k as f64 - l as f64) * df } else { k as f64 * df })
            .collect();
        let values = order.iter().map(|&k| self.sum[k] * norm).collect();
        Spectrum::new(Grid::new(FrequencyAxis::Detuning { center }, freqs)?, values)
    }
}

/// Welch PSD of `samples` taken every `dt` seconds, with Hann-windowed,
/// half-overlapping segments of `segment_length` samples.
pub fn estimate_psd(samples: &[Complex64], dt: f64, segment_length: usize) -> Result<Spectrum> {
    let mut acc = WelchAccumulator::new(segment_length, dt)?;
    acc.push(samples);
    acc.finish(0.0)
}
