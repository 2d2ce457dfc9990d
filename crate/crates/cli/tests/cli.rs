use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radcool_cli::commands::CliError;
use radcool_cli::csvio::Table;
use radcool_cli::record::RunRecord;

const BASE: &str = "\
resonator.f0 = 10.53 GHz
resonator.kappa_i = 113 kHz
resonator.kappa_e = 298 kHz
environment.temperature = 1.02 K
source.temperature = 70 mK
link.lambda = 0.91
link.floor = 0.02 quanta
";

fn radcool(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radcool"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove("RADCOOL_OUT")
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_classifies_each_panel() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(
        dir.path(),
        "r.scn",
        "resonator.f0 = 10.53 GHz\nresonator.kappa_i = 113 kHz\nresonator.kappa_e = 298 kHz\nenvironment.temperature = 1.02 K\nsimulate.n_in = 0.2, n_en, 3 quanta\n",
    );
    let out = dir.path().join("out");
    let o = radcool(&out, &["simulate", "--scenario", scn.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let regimes: Vec<String> = (0..3)
        .map(|k| {
            let t = Table::read(&out.join(format!("panel_{k}.csv"))).unwrap();
            t.get_meta("regime").unwrap().to_string()
        })
        .collect();
    assert_eq!(regimes, ["peak", "flat", "dip"]);
    let rec: RunRecord = serde_json::from_str(&fs::read_to_string(out.join("run_record.json")).unwrap()).unwrap();
    assert!(rec.results["panels"][1]["max_deviation_from_baseline"].as_f64().unwrap() < 1e-12);
    assert_eq!(rec.outputs.len(), 9);
    assert_eq!(rec.timestamp, "1970-01-01T00:00:00Z");
}

#[test]
fn simulated_spectra_feed_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", BASE);
    let sim = dir.path().join("sim");
    assert!(radcool(&sim, &["simulate", "--scenario", scn.to_str().unwrap()]).status.success());
    let ex = dir.path().join("ex");
    let o = radcool(
        &ex,
        &[
            "extract",
            "--on",
            sim.join("on_0.csv").to_str().unwrap(),
            "--off",
            sim.join("off_0.csv").to_str().unwrap(),
            "--scenario",
            scn.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let occ: serde_json::Value = serde_json::from_str(&fs::read_to_string(ex.join("occupancy.json")).unwrap()).unwrap();
    assert!((occ["n_mode"].as_f64().unwrap() - 0.4437).abs() < 1e-3);
    assert_eq!(occ["regime"], "cooling");
}

#[test]
fn calibrate_from_generated_sweep_files_matches_scenario_mode() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", BASE);
    let a = dir.path().join("a");
    assert!(radcool(&a, &["--seed", "4", "calibrate", "--scenario", scn.to_str().unwrap()]).status.success());
    let b = dir.path().join("b");
    let o = radcool(
        &b,
        &[
            "calibrate",
            "--sweep",
            a.join("thermometry_source.csv").to_str().unwrap(),
            "--sweep",
            a.join("thermometry_resonator.csv").to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let ja: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("calibration.json")).unwrap()).unwrap();
    let jb: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(ja["link"], jb["link"]);
}

#[test]
fn two_sweeps_on_one_plane_are_inconsistent() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", BASE);
    let a = dir.path().join("a");
    assert!(radcool(&a, &["calibrate", "--scenario", scn.to_str().unwrap()]).status.success());
    let sweep = a.join("thermometry_resonator.csv");
    let o = radcool(
        &dir.path().join("b"),
        &["calibrate", "--sweep", sweep.to_str().unwrap(), "--sweep", sweep.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("both reference planes"));
}

#[test]
fn bad_scenario_reports_file_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "bad.scn", &BASE.replace("298 kHz", "298 parsecs"));
    let o = radcool(&dir.path().join("o"), &["simulate", "--scenario", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("bad.scn:3: `resonator.kappa_e`"), "{e}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(radcool(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(radcool(dir.path(), &["calibrate"]).status.code(), Some(1));
    assert_eq!(radcool(dir.path(), &["--help"]).status.code(), Some(0));
    let missing = radcool(dir.path(), &["simulate", "--scenario", "/no/such/file.scn"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn mismatched_spectra_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", BASE);
    let narrow = scenario(dir.path(), "n.scn", &format!("{BASE}grid.points = 301\n"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(radcool(&a, &["simulate", "--scenario", scn.to_str().unwrap()]).status.success());
    assert!(radcool(&b, &["simulate", "--scenario", narrow.to_str().unwrap()]).status.success());
    let o = radcool(
        &dir.path().join("x"),
        &[
            "extract",
            "--on",
            a.join("on_0.csv").to_str().unwrap(),
            "--off",
            b.join("off_0.csv").to_str().unwrap(),
            "--scenario",
            scn.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sweep_requires_a_temperature_list() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", BASE);
    let o = radcool(&dir.path().join("o"), &["sweep", "--scenario", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("source.sweep"));
}

#[test]
fn replay_detects_tampered_record() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", &format!("{BASE}source.sweep = 0.1 K, 1 K, 2 K\n"));
    let run = dir.path().join("run");
    assert!(radcool(&run, &["--seed", "11", "sweep", "--scenario", scn.to_str().unwrap()]).status.success());
    let record = run.join("run_record.json");
    let ok = radcool(&dir.path().join("replay"), &["replay", record.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));

    let mut rec: RunRecord = serde_json::from_str(&fs::read_to_string(&record).unwrap()).unwrap();
    rec.seed = 12;
    fs::write(&record, rec.to_json()).unwrap();
    let bad = radcool(&dir.path().join("replay2"), &["replay", record.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(stderr(&bad).contains("sweep.csv"));
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path(), "b.scn", &format!("{BASE}source.sweep = 0.1 K, 1 K\nrun.seed = 5\n"));
    let read = |name: &str, args: &[&str]| {
        let out = dir.path().join(name);
        let mut all = args.to_vec();
        all.extend(["sweep", "--scenario", scn.to_str().unwrap()]);
        assert!(radcool(&out, &all).status.success());
        fs::read_to_string(out.join("sweep.csv")).unwrap()
    };
    assert_eq!(read("a", &[]), read("b", &["--seed", "5"]));
    assert_ne!(read("a", &[]), read("c", &["--seed", "6"]));
}

#[test]
fn exit_codes_follow_error_kind() {
    use radcool_core::Error;
    assert_eq!(CliError::Core(Error::Numerical("x".into())).exit_code(), 2);
    assert_eq!(CliError::Core(Error::Inconsistent("x".into())).exit_code(), 3);
    assert_eq!(CliError::Core(Error::Precondition("x".into())).exit_code(), 3);
    assert_eq!(CliError::Core(Error::Domain("x".into())).exit_code(), 1);
    assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
}
