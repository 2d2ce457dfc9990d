//! Seeded Monte Carlo checks of the estimators against synthetic data.

use radcool_core::estimation::{fit_noise_thermometry, fit_reflection, ReferencePlane};
use radcool_core::experiment::{calibrate_link, run_synthetic_experiment, ThermalScenario};
use radcool_core::instrument::{probe_reflection, thermometry_sweep, AmplifierChain, MeasurementConfig};
use radcool_core::{Grid, LinkParams, ResonatorParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

#[test]
fn reflection_fit_spread_matches_its_covariance() {
    let res = ResonatorParams::new(10.53e9, 113e3, 298e3).unwrap();
    let grid = Grid::symmetric(res.f0(), 10.0 * res.kappa(), 201).unwrap();
    let runs: Vec<(f64, f64)> = (0..400u64)
        .into_par_iter()
        .map(|k| {
            let probe = probe_reflection(&res, &grid, 0.01, k).unwrap();
            let (fit, report) = fit_reflection(&probe).unwrap();
            assert!(report.converged);
            (fit.kappa_i() - 113e3, report.covariance[(1, 1)].sqrt())
        })
        .collect();
    let rms = (runs.iter().map(|r| r.0 * r.0).sum::<f64>() / runs.len() as f64).sqrt();
    let reported = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
    assert!((reported / rms - 1.0).abs() < 0.1, "reported {reported} vs empirical {rms}");
    // σ = 0.01 on each quadrature gives ~1 kHz per standard deviation, so the
    // 95th percentile of the error sits near 2 kHz
    let p95 = quantile(runs.iter().map(|r| r.0.abs()).collect(), 0.95);
    assert!(p95 < 2.3e3, "95th percentile {p95}");
    assert!((rms - 1.05e3).abs() < 150.0);
}

#[test]
fn thermometry_gain_within_two_percent() {
    let f = 10.53e9;
    let amp = AmplifierChain::new(1e6, 1.0).unwrap();
    let cfg = MeasurementConfig {
        averages: 40_000,
        ..Default::default()
    };
    let temps = [0.2, 0.4, 0.7, 1.0, 1.4];
    let hits = (0..400u64)
        .into_par_iter()
        .filter(|&k| {
            let sweep = thermometry_sweep(&amp, &temps, f, &cfg, k).unwrap();
            let cal = fit_noise_thermometry(&sweep, f, ReferencePlane::ResonatorOutput).unwrap();
            (cal.gain / 1e6 - 1.0).abs() < 0.02
        })
        .count();
    assert!(hits as f64 >= 0.95 * 400.0, "{hits}/400");
}

#[test]
fn link_calibration_uncertainty_brackets_four_percent() {
    let scn = ThermalScenario::nominal();
    let cals: Vec<_> = (0..400u64)
        .into_par_iter()
        .map(|k| calibrate_link(&scn, k).unwrap())
        .collect();
    let sigma = cals.iter().map(|c| c.link.lambda.sigma).sum::<f64>() / cals.len() as f64;
    assert!((0.03..=0.05).contains(&sigma), "sigma_lambda {sigma}");
    let covered = cals.iter().filter(|c| c.link.lambda.contains(0.91)).count();
    assert!(covered as f64 >= 0.93 * cals.len() as f64, "{covered}");
}

#[test]
fn identical_sweeps_give_a_lossless_link() {
    let mut scn = ThermalScenario::nominal();
    scn.link = LinkParams::lossless();
    let c = calibrate_link(&scn, 5).unwrap();
    // independent noise on the two sweeps; λ scatters around 1 within its error
    assert!((c.link.lambda.value - 1.0).abs() < 3.0 * c.link.lambda.sigma);
    assert!(c.link.floor_interval.0 == 0.0);
}

#[test]
fn occupancy_is_invariant_under_common_gain_rescale() {
    let a = ThermalScenario::nominal();
    let mut b = a.clone();
    b.amplifier = AmplifierChain::new(a.amplifier.gain() * 3.7e4, a.amplifier.n_add()).unwrap();
    for seed in 0..5 {
        let ea = run_synthetic_experiment(&a, seed).unwrap().estimate;
        let eb = run_synthetic_experiment(&b, seed).unwrap().estimate;
        assert!((ea.n_mode - eb.n_mode).abs() < 1e-9);
        assert!((ea.sigma_n_mode - eb.sigma_n_mode).abs() < 1e-9);
    }
}

#[test]
fn random_scenarios_round_trip_within_three_sigma() {
    let trials = 500u64;
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
            let mut scn = ThermalScenario::nominal();
            let ki = rng.random_range(50e3..300e3);
            let ke = rng.random_range(100e3..2e6);
            scn.resonator = ResonatorParams::new(rng.random_range(5e9..12e9), ki, ke).unwrap();
            scn.environment_temperature = rng.random_range(0.3..2.0);
            scn.source_temperature = rng.random_range(0.02..2.0);
            scn.link = LinkParams::from_floor(rng.random_range(0.8..0.99), rng.random_range(0.0..0.05)).unwrap();
            let out = run_synthetic_experiment(&scn, k).unwrap();
            (out.estimate.n_mode - out.truth_n_mode).abs() <= 3.0 * out.estimate.sigma_n_mode
        })
        .count();
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}
