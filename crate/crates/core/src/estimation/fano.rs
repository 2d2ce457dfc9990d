//! Lineshape diagnostic for leakage-distorted output spectra.
//!
//! The extraction integral is model-free and does not need this. It only
//! reports how asymmetric a measured feature is by projecting the difference
//! spectrum onto an absorptive and a dispersive Lorentzian with the resonance
//! parameters held fixed: `ΔS(x) ≈ (a + b x) / (1 + x²)`, `x = 2(f - f0)/κ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{precondition, Result};
use crate::physics::ResonatorParams;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoDiagnostic {
    /// Height of the symmetric (absorptive) component at resonance.
    pub symmetric_amplitude: f64,
    /// Amplitude of the antisymmetric (dispersive) component.
    pub dispersive_amplitude: f64,
    /// `dispersive / symmetric`; zero for a pure Lorentzian.
    pub asymmetry: f64,
    /// Equivalent Fano parameter q solving `2q/(q² - 1) = asymmetry`,
    /// choosing the branch with |q| > 1 (None for a symmetric feature).
    pub fano_q: Option<f64>,
    pub residual_rms: f64,
}

pub fn fano_diagnostic(
    s_out: &Spectrum,
    s_out_off: &Spectrum,
    res: &ResonatorParams,
) -> Result<FanoDiagnostic> {
    if !s_out.grid().matches(s_out_off.grid()) {
        return precondition("on- and off-resonance spectra are on different grids");
    }
    let n = s_out.len();
    if n < 3 {
        return precondition("need at least three points for a lineshape diagnostic");
    }
    let xs: Vec<f64> = s_out
        .grid()
        .absolute_frequencies()
        .map(|f| 2.0 * (f - res.f0()) / res.kappa())
        .collect();
    let design = DMatrix::from_fn(n, 2, |i, j| {
        let l = 1.0 / (1.0 + xs[i] * xs[i]);
        if j == 0 { l } else { xs[i] * l }
    });
    let y = DVector::from_iterator(n, s_out.values().iter().zip(s_out_off.values()).map(|(a, b)| a - b));
    let normal = design.transpose() * &design;
    let rhs = design.transpose() * &y;
    let coef = normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| crate::Error::Numerical("lineshape projection is singular".into()))?;
    let residual = &y - &design * &coef;
    let (a, b) = (coef[0], coef[1]);
    let asymmetry = if a != 0.0 { b / a } else { f64::INFINITY };
    let fano_q = if b == 0.0 || !asymmetry.is_finite() {
        None
    } else {
        // 2q/(q²-1) = r  ⇒  r q² - 2q - r = 0
        let r = asymmetry;
        let q = (1.0 + (1.0 + r * r).sqrt()) / r;
        Some(q)
    };
    Ok(FanoDiagnostic {
        symmetric_amplitude: a,
        dispersive_amplitude: b,
        asymmetry,
        fano_q,
        residual_rms: (residual.norm_squared() / n as f64).sqrt(),
    })
}
