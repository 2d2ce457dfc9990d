//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when every parameter step is below this, relative to the parameter scale.
    pub step_tolerance: f64,
    /// Stop when the relative decrease of the cost is below this.
    pub cost_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            step_tolerance: 1e-13,
            cost_tolerance: 1e-15,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    /// `(JᵀJ)⁻¹` at the solution, not yet scaled by any residual variance.
    pub unscaled_covariance: DMatrix<f64>,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    pub residual_count: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `|r(p)|²` starting from `p0`.
///
/// `residuals` and `jacobian` must agree in row count; the Jacobian is `∂r/∂p`.
pub fn levenberg_marquardt<R, J>(
    residuals: R,
    jacobian: J,
    p0: DVector<f64>,
    opts: LmOptions,
) -> LmOutcome
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let n = p0.len();
    let mut p = p0;
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &step;
            let r_trial = residuals(&trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial <= cost {
                let decrease = (cost - cost_trial) / cost.max(1e-300);
                let small_step = step
                    .iter()
                    .zip(trial.iter())
                    .all(|(s, x)| s.abs() <= opts.step_tolerance * (x.abs() + opts.step_tolerance));
                p = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || decrease < opts.cost_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: we sit at a (numerical) minimum.
            converged = cost.is_finite();
            break;
        }
        if converged {
            break;
        }
    }

    let jac = jacobian(&p);
    let jtj = jac.transpose() * &jac;
    let unscaled_covariance = jtj
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    if unscaled_covariance.iter().any(|v| !v.is_finite()) {
        converged = false;
    }

    LmOutcome {
        params: p,
        unscaled_covariance,
        cost,
        residual_count: r.len(),
        iterations,
        converged,
    }
}
