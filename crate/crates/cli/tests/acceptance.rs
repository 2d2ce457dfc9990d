//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use radcool_cli::csvio::Table;
use radcool_core::estimation::{
    deduce_mode_occupancy, extract_delta_n, fit_lorentzian, transition_source_temperature, ExtractionOptions,
    Measured, ResonatorEstimate,
};
use radcool_core::experiment::{run_synthetic_experiment, ThermalScenario};
use radcool_core::instrument::{apply_circulator_leakage, off_resonance_ideal, MeasurementConfig};
use radcool_core::langevin::{simulate_ensemble, TrajectoryConfig};
use radcool_core::physics::{bose_einstein_occupancy, mode_occupancy, output_noise_psd, symmetrized_intracavity_psd};
use radcool_core::{Grid, ResonatorParams, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 11] = [
        ("occupancy headline", headline),
        ("environment occupancy", environment_occupancy),
        ("transition temperature", transition_temperature),
        ("overcoupled projection", overcoupled),
        ("liquid-helium projection", liquid_helium),
        ("peak / flat / dip regimes", regimes),
        ("oracle agreement", oracle_agreement),
        ("pipeline round trip", round_trip),
        ("quadrature identity", quadrature_identity),
        ("leakage bias bound", leakage_bias),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn headline() -> Check {
    let n = ThermalScenario::nominal().mode_occupancy().map_err(e)?;
    Ok(((n - 0.44).abs() <= 0.01, format!("n_mode = {n:.4}, want 0.44 ± 0.01")))
}

fn environment_occupancy() -> Check {
    let n = bose_einstein_occupancy(10.53e9, 1.02).map_err(e)?;
    Ok(((n - 1.56).abs() <= 0.005, format!("n_en = {n:.4}, want 1.56 ± 0.005")))
}

fn transition_temperature() -> Check {
    let scn = ThermalScenario::nominal();
    let t = transition_source_temperature(scn.n_en().map_err(e)?, &scn.link, scn.frequency()).map_err(e)?;
    Ok(((1.08..=1.09).contains(&t), format!("T_s = {t:.4} K, want 1.08 to 1.09 K")))
}

fn overcoupled() -> Check {
    let mut scn = ThermalScenario::nominal();
    scn.resonator = ResonatorParams::new(scn.frequency(), 113e3, 5e6).map_err(e)?;
    scn.environment_temperature = 1.0;
    let n_en = scn.n_en().map_err(e)?;
    let n = scn.mode_occupancy().map_err(e)?;
    Ok((
        (n - 0.05).abs() <= 0.01,
        format!("n_mode = {n:.4} from n_en = {n_en:.3}, want 0.05 ± 0.01"),
    ))
}

fn liquid_helium() -> Check {
    let f = 10e9;
    let res = ResonatorParams::new(f, 100e3, 10e6).map_err(e)?;
    let n_en = bose_einstein_occupancy(f, 4.2).map_err(e)?;
    let n_in = bose_einstein_occupancy(f, 0.01).map_err(e)?;
    let n = mode_occupancy(&res, n_en, n_in);
    Ok((
        (0.08..=0.10).contains(&n),
        format!("n_mode = {n:.4} from n_en = {n_en:.3}, want 0.08 to 0.10"),
    ))
}

fn radcool(out: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_radcool"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .map_err(e)?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("radcool {args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn regimes() -> Check {
    let dir = tempfile::tempdir().map_err(e)?;
    let scn = dir.path().join("regimes.scn");
    fs::write(
        &scn,
        "resonator.f0 = 10.53 GHz\nresonator.kappa_i = 113 kHz\nresonator.kappa_e = 298 kHz\n\
         environment.temperature = 1.02 K\nsimulate.n_in = 0.02, n_en, 3 quanta\n",
    )
    .map_err(e)?;
    let out = dir.path().join("out");
    radcool(&out, &["simulate", "--scenario", scn.to_str().unwrap()])?;
    let mut seen = Vec::new();
    let mut flat_dev = f64::NAN;
    for k in 0..3 {
        let t = Table::read(&out.join(format!("panel_{k}.csv"))).map_err(e)?;
        let s_out = t.column("s_out").ok_or("no s_out column")?;
        let s_in = t.column("s_in").ok_or("no s_in column")?;
        if k == 1 {
            flat_dev = s_out.iter().zip(&s_in).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        }
        seen.push(t.get_meta("regime").unwrap_or("?").to_string());
    }
    let ok = seen == ["peak", "flat", "dip"] && flat_dev < 1e-12;
    Ok((ok, format!("regimes {seen:?}, flat deviation {flat_dev:.1e} (< 1e-12)")))
}

fn oracle_agreement() -> Check {
    let scenarios = 10u64;
    let results: Vec<Result<(f64, f64, f64), String>> = (0..scenarios)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + k);
            let res = ResonatorParams::new(
                rng.random_range(4e9..12e9),
                rng.random_range(50e3..400e3),
                rng.random_range(50e3..2e6),
            )
            .map_err(e)?;
            let n_en = rng.random_range(0.2..3.0);
            let n_in = rng.random_range(0.0..3.0);
            let cfg = TrajectoryConfig::new(res, n_en, n_in, 0.05, 2000.0, k);
            let ens = simulate_ensemble(&cfg, 16).map_err(e)?;
            let closed = mode_occupancy(&res, n_en, n_in);
            let kappa = res.kappa();
            let fit = fit_lorentzian(&ens.psd, -3.0 * kappa, 3.0 * kappa, false).map_err(e)?;
            let at = Grid::symmetric(res.f0(), kappa, 3).map_err(e)?;
            let peak = symmetrized_intracavity_psd(&res, n_en, n_in, &at).values()[1];
            Ok((
                (ens.occupancy_estimate / closed - 1.0).abs(),
                (fit.height / peak - 1.0).abs(),
                (fit.fwhm / kappa - 1.0).abs(),
            ))
        })
        .collect();
    let results: Vec<(f64, f64, f64)> = results.into_iter().collect::<Result<_, _>>()?;
    let worst = |f: fn(&(f64, f64, f64)) -> f64| results.iter().map(f).fold(0.0, f64::max);
    let (occ, peak, fwhm) = (worst(|r| r.0), worst(|r| r.1), worst(|r| r.2));
    Ok((
        occ <= 0.05 && peak <= 0.10 && fwhm <= 0.10,
        format!(
            "{scenarios} scenarios, worst occupancy {:.2}% (5%), peak {:.2}% (10%), FWHM {:.2}% (10%)",
            100.0 * occ,
            100.0 * peak,
            100.0 * fwhm
        ),
    ))
}

fn round_trip() -> Check {
    let scn = ThermalScenario::nominal();
    let trials = 500u64;
    let runs: Vec<Result<(bool, f64), String>> = (0..trials)
        .into_par_iter()
        .map(|seed| {
            let out = run_synthetic_experiment(&scn, seed).map_err(e)?;
            Ok((out.estimate.covers(out.truth_n_mode), out.estimate.sigma_n_mode))
        })
        .collect();
    let runs: Vec<(bool, f64)> = runs.into_iter().collect::<Result<_, _>>()?;
    let covered = runs.iter().filter(|r| r.0).count();
    let sigma = runs.iter().map(|r| r.1).sum::<f64>() / trials as f64;
    let rate = covered as f64 / trials as f64;
    Ok((
        rate >= 0.95 && (0.04..=0.06).contains(&sigma),
        format!(
            "{covered}/{trials} within the expanded interval ({:.1}%, want >= 95%), mean sigma {sigma:.4} (0.04 to 0.06)",
            100.0 * rate
        ),
    ))
}

fn quadrature_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let res = ResonatorParams::new(
            rng.random_range(4e9..12e9),
            rng.random_range(20e3..500e3),
            rng.random_range(20e3..5e6),
        )
        .map_err(e)?;
        let n_en: f64 = rng.random_range(0.05..5.0);
        let mut n_in = rng.random_range(0.0..5.0);
        if (n_en - n_in).abs() < 0.05 {
            n_in = n_en + 0.5;
        }
        let grid = Grid::symmetric(res.f0(), 15.0 * res.kappa(), 601).map_err(e)?;
        let on = output_noise_psd(&res, n_en, n_in, &grid);
        let off = Spectrum::from_fn(&grid, |_| n_in + 0.5).map_err(e)?;
        let dn = extract_delta_n(&on, &off, &res, ExtractionOptions::default()).map_err(e)?;
        worst = worst.max((dn.delta_n / (n_en - n_in) - 1.0).abs());
    }
    Ok((worst <= 0.01, format!("100 draws, worst relative error {:.3}% (1%)", 100.0 * worst)))
}

fn leakage_bias() -> Check {
    let scn = ThermalScenario::nominal();
    let res = scn.resonator;
    let (n_en, n_in) = (scn.n_en().map_err(e)?, scn.n_in().map_err(e)?);
    let truth = mode_occupancy(&res, n_en, n_in);
    let grid = scn.window().map_err(e)?;
    let bias = |eps: f64, phase: f64| -> Result<f64, String> {
        let cfg = MeasurementConfig {
            leakage_amplitude: eps,
            leakage_phase: phase,
            ..MeasurementConfig::ideal()
        };
        let on = apply_circulator_leakage(&res, n_en, n_in, &cfg, &grid).map_err(e)?;
        let off = off_resonance_ideal(&res, n_en, n_in, &cfg, &grid).map_err(e)?;
        let opts = ExtractionOptions {
            off_detuning: Some(cfg.off_detuning(&res).map_err(e)?),
            gain_rel_sigma: 0.0,
        };
        let dn = extract_delta_n(&on, &off, &res, opts).map_err(e)?;
        let est = deduce_mode_occupancy(Measured::exact(n_en), &dn, &ResonatorEstimate::exact(res));
        Ok(est.n_mode - truth)
    };
    let eps = [0.0, 0.02, 0.05, 0.1];
    let mut ok = true;
    let mut detail = Vec::new();
    for (label, phase) in [("in phase", 0.0), ("quadrature", std::f64::consts::FRAC_PI_2)] {
        let b: Vec<f64> = eps.iter().map(|&x| bias(x, phase)).collect::<Result<_, _>>()?;
        // vanishes at zero leakage and grows linearly (smooth) in ε
        let slopes: Vec<f64> = (1..eps.len()).map(|k| (b[k] - b[0]) / eps[k]).collect();
        let spread = slopes.iter().map(|s| (s / slopes[0] - 1.0).abs()).fold(0.0, f64::max);
        ok &= b[0].abs() < 1e-6 && spread < 0.05;
        detail.push(format!(
            "{label}: bias {} (slope {:+.3}/unit ε)",
            b.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(", "),
            slopes[0]
        ));
    }
    Ok((ok, format!("ε = 0, 0.02, 0.05, 0.1; {}", detail.join("; "))))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(e)?;
    let scn = dir.path().join("d.scn");
    fs::write(
        &scn,
        "resonator.f0 = 10.53 GHz\nresonator.kappa_i = 113 kHz\nresonator.kappa_e = 298 kHz\n\
         environment.temperature = 1.02 K\nsource.temperature = 70 mK\n\
         source.sweep = 70 mK, 0.5 K, 1 K, 1.5 K\nlink.lambda = 0.91\nlink.floor = 0.02 quanta\n\
         oracle.trajectories = 4\noracle.decay_times = 400\n",
    )
    .map_err(e)?;
    let s = scn.to_str().unwrap();
    let commands: [&[&str]; 4] = [
        &["--seed", "21", "simulate", "--scenario", s],
        &["--seed", "21", "calibrate", "--scenario", s],
        &["--seed", "21", "sweep", "--scenario", s],
        &["--seed", "21", "oracle", "--scenario", s],
    ];
    let mut files = 0;
    for (k, args) in commands.iter().enumerate() {
        let a = dir.path().join(format!("a{k}"));
        let b = dir.path().join(format!("b{k}"));
        radcool(&a, args)?;
        radcool(&b, args)?;
        for entry in fs::read_dir(&a).map_err(e)? {
            let entry = entry.map_err(e)?;
            let name = entry.file_name();
            if fs::read(entry.path()).map_err(e)? != fs::read(b.join(&name)).map_err(e)? {
                return Ok((false, format!("{} differs between reruns of {}", name.to_string_lossy(), args[2])));
            }
            files += 1;
        }
    }
    Ok((true, format!("{files} files byte-identical across reruns of simulate, calibrate, sweep, oracle")))
}
