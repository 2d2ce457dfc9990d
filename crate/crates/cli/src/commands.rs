//! The command implementations. Each command computes its output files in
//! memory; [`run`] writes them together with the run record.

use std::fs;
use std::path::{Path, PathBuf};

use radcool_core::estimation::{
    deduce_mode_occupancy, extract_delta_n, fit_lorentzian, fit_noise_thermometry, link_transmission,
    CalibrationResult, ExtractionOptions, LinkEstimate, OccupancyEstimate, ReferencePlane, ResonatorEstimate,
    ThermometryPoint,
};
use radcool_core::experiment::{calibrate_resonator_plane, calibrate_source_plane, run_source_sweep, theory_curve};
use radcool_core::instrument::{
    apply_circulator_leakage, derive_seed, off_resonance_ideal, thermometry_sweep, AmplifierChain,
};
use radcool_core::langevin::{simulate_ensemble, TrajectoryConfig};
use radcool_core::physics::{intracavity_psd, mode_occupancy, output_noise_psd, symmetrized_intracavity_psd};
use radcool_core::{FrequencyAxis, Grid, Spectrum};
use serde_json::{json, Value};

use crate::config::{parse_scenario, ConfigError, PanelOccupancy, Scenario};
use crate::csvio::{Column, Table, TableError};
use crate::record::{reproducible_timestamp, sha256_hex, InputEcho, OutputRef, RunRecord, RECORD_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Table(#[from] TableError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Core(#[from] radcool_core::Error),
}

impl CliError {
    /// 0 success, 1 configuration, 2 numerical non-convergence, 3 data inconsistency.
    pub fn exit_code(&self) -> i32 {
        use radcool_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Table(_) | CliError::Io { .. } | CliError::Usage(_) => 1,
            CliError::Core(E::Domain(_)) => 1,
            CliError::Core(E::Numerical(_)) => 2,
            CliError::Core(E::Inconsistent(_)) | CliError::Core(E::Precondition(_)) | CliError::Data(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Simulate { scenario: PathBuf },
    Calibrate { scenario: Option<PathBuf>, sweeps: Vec<PathBuf> },
    Extract { on: PathBuf, off: PathBuf, scenario: PathBuf },
    Sweep { scenario: PathBuf },
    Oracle { scenario: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Calibrate { .. } => "calibrate",
            Command::Extract { .. } => "extract",
            Command::Sweep { .. } => "sweep",
            Command::Oracle { .. } => "oracle",
        }
    }
}

/// Files and results of one command, not yet written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: String,
    pub seed: u64,
    pub scenario_digest: Option<String>,
    pub inputs: Vec<InputEcho>,
    pub files: Vec<(String, String)>,
    pub results: Value,
    pub summary: String,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_scenario(path: &Path, inputs: &mut Vec<InputEcho>) -> Result<Scenario, CliError> {
    let text = read_text(path)?;
    let scn = parse_scenario(&text, &path.display().to_string())?;
    inputs.push(InputEcho::new("scenario", path, text));
    Ok(scn)
}

fn load_table(role: &str, path: &Path, inputs: &mut Vec<InputEcho>) -> Result<Table, CliError> {
    let text = read_text(path)?;
    let t = Table::parse(&text, &path.display().to_string())?;
    inputs.push(InputEcho::new(role, path, text));
    Ok(t)
}

/// Run a command without touching the output directory.
pub fn execute(cmd: &Command, seed: Option<u64>) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let (scenario, files, results, summary) = match cmd {
        Command::Simulate { scenario } => {
            let scn = load_scenario(scenario, &mut inputs)?;
            if scn.panels.is_none() {
                scn.require_source_temperature(&scenario.display().to_string())?;
            }
            let (f, r, s) = simulate(&scn)?;
            (Some(scn), f, r, s)
        }
        Command::Calibrate { scenario, sweeps } => match (scenario, sweeps.is_empty()) {
            (Some(path), true) => {
                let scn = load_scenario(path, &mut inputs)?;
                let seed = seed.or(scn.seed).unwrap_or(0);
                let (f, r, s) = calibrate_scenario(&scn, seed)?;
                (Some(scn), f, r, s)
            }
            (None, false) => {
                let tables = sweeps
                    .iter()
                    .map(|p| load_table("sweep", p, &mut inputs).map(|t| (p.display().to_string(), t)))
                    .collect::<Result<Vec<_>, _>>()?;
                let (f, r, s) = calibrate_files(&tables)?;
                (None, f, r, s)
            }
            _ => return Err(CliError::Usage("calibrate takes either --scenario or one or two --sweep files".into())),
        },
        Command::Extract { on, off, scenario } => {
            let scn = load_scenario(scenario, &mut inputs)?;
            let on_t = load_table("on", on, &mut inputs)?;
            let off_t = load_table("off", off, &mut inputs)?;
            let (f, r, s) = extract(&scn, (&on.display().to_string(), &on_t), (&off.display().to_string(), &off_t))?;
            (Some(scn), f, r, s)
        }
        Command::Sweep { scenario } => {
            let scn = load_scenario(scenario, &mut inputs)?;
            let seed = seed.or(scn.seed).unwrap_or(0);
            let (f, r, s) = sweep(&scn, seed, &scenario.display().to_string())?;
            (Some(scn), f, r, s)
        }
        Command::Oracle { scenario } => {
            let scn = load_scenario(scenario, &mut inputs)?;
            scn.require_source_temperature(&scenario.display().to_string())?;
            let seed = seed.or(scn.seed).unwrap_or(0);
            let (f, r, s) = oracle(&scn, seed)?;
            (Some(scn), f, r, s)
        }
    };
    let seed = seed.or(scenario.as_ref().and_then(|s| s.seed)).unwrap_or(0);
    let digest = scenario.as_ref().map(Scenario::digest);
    let files = files
        .into_iter()
        .map(|(name, table)| {
            let table = match &digest {
                Some(d) => table.meta("scenario_digest", d),
                None => table,
            };
            (name, table.to_text())
        })
        .chain(json_files(&results))
        .collect();
    Ok(Outcome {
        command: cmd.name().to_string(),
        seed,
        scenario_digest: digest,
        inputs,
        files,
        results,
        summary,
    })
}

// Results that double as a standalone file.
fn json_files(results: &Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Some(files) = results.get("files").and_then(Value::as_object) {
        for (name, v) in files {
            out.push((name.clone(), format!("{}\n", serde_json::to_string_pretty(v).expect("json"))));
        }
    }
    out
}

/// Write the outcome's files and its run record into `out`.
pub fn write_outcome(out: &Path, outcome: &Outcome) -> Result<RunRecord, CliError> {
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let mut outputs = Vec::new();
    for (name, text) in &outcome.files {
        let path = out.join(name);
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        outputs.push(OutputRef {
            file_name: name.clone(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let record = RunRecord {
        tool: "radcool".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: outcome.command.clone(),
        timestamp: reproducible_timestamp(),
        seed: outcome.seed,
        scenario_digest: outcome.scenario_digest.clone(),
        inputs: outcome.inputs.clone(),
        outputs,
        results: outcome.results.clone(),
    };
    let path = out.join(RECORD_FILE);
    fs::write(&path, record.to_json()).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(record)
}

pub fn run(cmd: &Command, seed: Option<u64>, out: &Path) -> Result<String, CliError> {
    let outcome = execute(cmd, seed)?;
    write_outcome(out, &outcome)?;
    Ok(outcome.summary)
}

/// Re-run the command stored in a record, writing into `out`, and compare
/// every output digest with the record.
pub fn replay(record_path: &Path, out: &Path) -> Result<String, CliError> {
    let text = read_text(record_path)?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: not a run record: {e}", record_path.display())))?;
    let staged = out.join("replay_inputs");
    let mut paths: Vec<(String, PathBuf)> = Vec::new();
    for (i, input) in record.inputs.iter().enumerate() {
        let dir = staged.join(i.to_string());
        fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(&input.file_name);
        if sha256_hex(input.content.as_bytes()) != input.sha256 {
            return Err(CliError::Data(format!("input `{}` does not match its recorded digest", input.file_name)));
        }
        fs::write(&path, &input.content).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        paths.push((input.role.clone(), path));
    }
    let role = |r: &str| paths.iter().find(|(x, _)| x == r).map(|(_, p)| p.clone());
    let missing = |r: &str| CliError::Usage(format!("record has no `{r}` input"));
    let cmd = match record.command.as_str() {
        "simulate" => Command::Simulate { scenario: role("scenario").ok_or_else(|| missing("scenario"))? },
        "calibrate" => Command::Calibrate {
            scenario: role("scenario"),
            sweeps: paths.iter().filter(|(r, _)| r == "sweep").map(|(_, p)| p.clone()).collect(),
        },
        "extract" => Command::Extract {
            on: role("on").ok_or_else(|| missing("on"))?,
            off: role("off").ok_or_else(|| missing("off"))?,
            scenario: role("scenario").ok_or_else(|| missing("scenario"))?,
        },
        "sweep" => Command::Sweep { scenario: role("scenario").ok_or_else(|| missing("scenario"))? },
        "oracle" => Command::Oracle { scenario: role("scenario").ok_or_else(|| missing("scenario"))? },
        other => return Err(CliError::Usage(format!("unknown command `{other}` in record"))),
    };
    let outcome = execute(&cmd, Some(record.seed))?;
    let fresh = write_outcome(out, &outcome)?;
    if fresh.outputs != record.outputs {
        let diff: Vec<&str> = record
            .outputs
            .iter()
            .filter(|o| !fresh.outputs.contains(o))
            .map(|o| o.file_name.as_str())
            .collect();
        return Err(CliError::Data(format!("replay differs from the record in: {}", diff.join(", "))));
    }
    Ok(format!(
        "replayed {} ({} outputs identical to the record)",
        record.command,
        fresh.outputs.len()
    ))
}

type Produced = (Vec<(String, Table)>, Value, String);

fn detuning_column() -> Column {
    Column::new("detuning_hz", "Hz", "offset from center_hz")
}

fn spectrum_table(s: &Spectrum, quantity: &str, center: f64) -> Table {
    let mut cols = vec![detuning_column(), Column::new("psd", "quanta", quantity)];
    if s.sigma().is_some() {
        cols.push(Column::new("sigma", "quanta", "one-standard-deviation uncertainty of psd"));
    }
    let mut t = Table::new(cols)
        .meta("quantity", quantity)
        .meta("units", "quanta")
        .meta("axis", "detuning")
        .meta("center_hz", center);
    for (k, (x, v)) in s.grid().points().iter().zip(s.values()).enumerate() {
        let mut row = vec![*x, *v];
        if let Some(sig) = s.sigma() {
            row.push(sig[k]);
        }
        t.push(row);
    }
    t
}

fn classify(feature: f64, max_deviation: f64) -> &'static str {
    if max_deviation <= 1e-12 {
        "flat"
    } else if feature > 0.0 {
        "peak"
    } else {
        "dip"
    }
}

fn simulate(scn: &Scenario) -> Result<Produced, CliError> {
    let t = &scn.thermal;
    let res = t.resonator;
    let grid = t.window()?;
    let n_en = t.n_en()?;
    let panels = match &scn.panels {
        Some(p) => p.clone(),
        None => vec![PanelOccupancy::Quanta(t.n_in()?)],
    };
    let center_index = grid
        .points()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let mut files = Vec::new();
    let mut panel_results = Vec::new();
    let mut summary = String::new();
    for (k, p) in panels.iter().enumerate() {
        let n_in = match *p {
            PanelOccupancy::Quanta(v) => v,
            PanelOccupancy::Environment => n_en,
        };
        let s_aa = intracavity_psd(&res, n_en, n_in, &grid);
        let s_out = apply_circulator_leakage(&res, n_en, n_in, &t.measurement, &grid)?;
        let off = off_resonance_ideal(&res, n_en, n_in, &t.measurement, &grid)?;
        let s_in = n_in + 0.5;
        let s_en = n_en + 0.5;
        let feature = s_out.values()[center_index] - s_in;
        let max_dev = s_out.values().iter().map(|v| (v - s_in).abs()).fold(0.0, f64::max);
        let regime = classify(feature, max_dev);

        let mut table = Table::new(vec![
            detuning_column(),
            Column::new("s_aa", "quanta/Hz", "intracavity mode PSD; integrates over Hz to n_mode"),
            Column::new("s_out", "quanta", "symmetrized output noise PSD"),
            Column::new("s_in", "quanta", "incoming line baseline n_in + 1/2"),
            Column::new("s_en", "quanta", "environment level n_en + 1/2"),
        ])
        .meta("quantity", "simulated spectra")
        .meta("units", "quanta")
        .meta("axis", "detuning")
        .meta("center_hz", res.f0())
        .meta("n_en", n_en)
        .meta("n_in", n_in)
        .meta("regime", regime);
        for (i, x) in grid.points().iter().enumerate() {
            table.push(vec![*x, s_aa.values()[i], s_out.values()[i], s_in, s_en]);
        }
        files.push((format!("panel_{k}.csv"), table));
        files.push((
            format!("on_{k}.csv"),
            spectrum_table(&s_out, "on-resonance output PSD", res.f0()).meta("n_in", n_in),
        ));
        let off_detuning = t.measurement.off_detuning(&res)?;
        files.push((
            format!("off_{k}.csv"),
            spectrum_table(&off, "off-resonance reference PSD", res.f0()).meta("off_detuning_hz", off_detuning),
        ));

        let n_mode = mode_occupancy(&res, n_en, n_in);
        summary.push_str(&format!(
            "panel {k}: n_in = {n_in:.4}, n_en = {n_en:.4}, n_mode = {n_mode:.4}, {regime} ({feature:+.4} quanta at resonance)\n"
        ));
        panel_results.push(json!({
            "index": k,
            "n_in": n_in,
            "n_en": n_en,
            "n_mode": n_mode,
            "delta_n": n_en - n_in,
            "regime": regime,
            "feature_at_resonance": feature,
            "max_deviation_from_baseline": max_dev,
        }));
    }
    Ok((files, json!({ "panels": panel_results }), summary))
}

fn calibration_json(c: &CalibrationResult) -> Value {
    json!({
        "reference_plane": c.reference_plane.label(),
        "gain": c.gain,
        "sigma_gain": c.sigma_gain,
        "n_add": c.n_add,
        "sigma_n_add": c.sigma_n_add,
        "covariance_gain_n_add": c.covariance_gain_n_add,
    })
}

fn link_json(l: &LinkEstimate) -> Value {
    json!({
        "lambda": l.lambda.value,
        "sigma_lambda": l.lambda.sigma,
        "floor": l.floor.value,
        "sigma_floor": l.floor.sigma,
        "floor_interval": [l.floor_interval.0, l.floor_interval.1],
        "n_eff_link": l.link.n_eff_link(),
    })
}

fn sweep_table(points: &[ThermometryPoint], plane: ReferencePlane, f: f64) -> Table {
    let mut t = Table::new(vec![
        Column::new("temperature_k", "K", "thermal load temperature"),
        Column::new("power_raw", "raw", "detected noise power density, raw detector units"),
        Column::new("sigma_raw", "raw", "one-standard-deviation uncertainty of power_raw"),
    ])
    .meta("quantity", "noise thermometry sweep")
    .meta("units", "raw detector units")
    .meta("reference_plane", plane.label())
    .meta("frequency_hz", f);
    for p in points {
        t.push(vec![p.temperature, p.power, p.sigma.unwrap_or(0.0)]);
    }
    t
}

fn calibration_summary(c: &CalibrationResult) -> String {
    format!(
        "{}: G = {:.6e} ± {:.2e}, n_add = {:.4} ± {:.4}\n",
        c.reference_plane, c.gain, c.sigma_gain, c.n_add, c.sigma_n_add
    )
}

fn link_summary(l: &LinkEstimate) -> String {
    format!(
        "lambda = {:.4} ± {:.4}, link noise = {:.4} (+{:.4}/-{:.4})\n",
        l.lambda.value,
        l.lambda.sigma,
        l.floor.value,
        l.floor_interval.1 - l.floor.value,
        l.floor.value - l.floor_interval.0
    )
}

fn calibrate_scenario(scn: &Scenario, seed: u64) -> Result<Produced, CliError> {
    let t = &scn.thermal;
    let f = t.frequency();
    let temps = &t.thermometry.temperatures;
    let cfg = &t.thermometry.measurement;
    let source_chain: AmplifierChain = t.amplifier.behind_link(&t.link)?;
    let res_pts = thermometry_sweep(&t.amplifier, temps, f, cfg, derive_seed(seed, 1))?;
    let src_pts = thermometry_sweep(&source_chain, temps, f, cfg, derive_seed(seed, 4))?;
    let res_cal = fit_noise_thermometry(&res_pts, f, ReferencePlane::ResonatorOutput)?;
    let src_cal = fit_noise_thermometry(&src_pts, f, ReferencePlane::SourceOutput)?;
    // same draws as the experiment module's calibration of this scenario
    debug_assert_eq!(res_cal, calibrate_resonator_plane(t, derive_seed(seed, 1))?);
    debug_assert_eq!(src_cal, calibrate_source_plane(t, derive_seed(seed, 4))?);
    let link = link_transmission(&src_cal, &res_cal)?;
    let files = vec![
        ("thermometry_resonator.csv".to_string(), sweep_table(&res_pts, ReferencePlane::ResonatorOutput, f)),
        ("thermometry_source.csv".to_string(), sweep_table(&src_pts, ReferencePlane::SourceOutput, f)),
    ];
    let body = json!({
        "calibrations": [calibration_json(&res_cal), calibration_json(&src_cal)],
        "link": link_json(&link),
    });
    let summary = calibration_summary(&res_cal) + &calibration_summary(&src_cal) + &link_summary(&link);
    Ok((files, json!({ "files": { "calibration.json": body.clone() }, "calibration": body }), summary))
}

fn meta_f64(t: &Table, key: &str, path: &str) -> Result<Option<f64>, CliError> {
    match t.get_meta(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Data(format!("{path}: header `{key}` is not a number: `{v}`"))),
    }
}

fn required_column(t: &Table, name: &str, path: &str) -> Result<Vec<f64>, CliError> {
    t.column(name)
        .ok_or_else(|| CliError::Data(format!("{path}: missing column `{name}`")))
}

fn calibrate_files(tables: &[(String, Table)]) -> Result<Produced, CliError> {
    if tables.len() > 2 {
        return Err(CliError::Usage("calibrate takes at most two sweep files".into()));
    }
    let mut cals = Vec::new();
    for (path, t) in tables {
        let plane_label = t
            .get_meta("reference_plane")
            .ok_or_else(|| CliError::Data(format!("{path}: missing `reference_plane` header")))?;
        let plane = ReferencePlane::parse(plane_label)
            .ok_or_else(|| CliError::Data(format!("{path}: unknown reference plane `{plane_label}`")))?;
        let f = meta_f64(t, "frequency_hz", path)?
            .ok_or_else(|| CliError::Data(format!("{path}: missing `frequency_hz` header")))?;
        let temps = required_column(t, "temperature_k", path)?;
        let power = required_column(t, "power_raw", path)?;
        let sigma = t.column("sigma_raw");
        let points: Vec<ThermometryPoint> = (0..temps.len())
            .map(|k| ThermometryPoint {
                temperature: temps[k],
                power: power[k],
                sigma: sigma.as_ref().map(|s| s[k]).filter(|s| *s > 0.0),
            })
            .collect();
        cals.push(fit_noise_thermometry(&points, f, plane)?);
    }
    let mut summary: String = cals.iter().map(calibration_summary).collect();
    let link = if cals.len() == 2 {
        let (src, res) = match (cals[0].reference_plane, cals[1].reference_plane) {
            (ReferencePlane::SourceOutput, ReferencePlane::ResonatorOutput) => (&cals[0], &cals[1]),
            (ReferencePlane::ResonatorOutput, ReferencePlane::SourceOutput) => (&cals[1], &cals[0]),
            (a, b) => {
                return Err(radcool_core::Error::Inconsistent(format!(
                    "paired sweeps must cover both reference planes, got {a} and {b}"
                ))
                .into())
            }
        };
        let l = link_transmission(src, res)?;
        summary.push_str(&link_summary(&l));
        Some(link_json(&l))
    } else {
        None
    };
    let body = json!({
        "calibrations": cals.iter().map(calibration_json).collect::<Vec<_>>(),
        "link": link,
    });
    Ok((Vec::new(), json!({ "files": { "calibration.json": body.clone() }, "calibration": body }), summary))
}

fn spectrum_from_table(t: &Table, path: &str) -> Result<Spectrum, CliError> {
    match t.get_meta("units") {
        Some("quanta") => {}
        other => {
            return Err(CliError::Data(format!(
                "{path}: spectrum must be in quanta, header says `{}`",
                other.unwrap_or("(none)")
            )))
        }
    }
    let center = meta_f64(t, "center_hz", path)?
        .ok_or_else(|| CliError::Data(format!("{path}: missing `center_hz` header")))?;
    let x = required_column(t, "detuning_hz", path)?;
    let v = required_column(t, "psd", path)?;
    let grid = Grid::new(FrequencyAxis::Detuning { center }, x)
        .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
    let s = Spectrum::new(grid, v).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
    match t.column("sigma") {
        Some(sig) => s.with_sigma(sig).map_err(|e| CliError::Data(format!("{path}: {e}"))),
        None => Ok(s),
    }
}

fn occupancy_json(e: &OccupancyEstimate, n_en: f64) -> Value {
    json!({
        "delta_n": e.delta_n,
        "sigma_delta_n": e.sigma_delta_n,
        "n_mode": e.n_mode,
        "sigma_n_mode": e.sigma_n_mode,
        "n_mode_interval": [e.n_mode_interval.0, e.n_mode_interval.1],
        "negative": e.negative,
        "regime": if e.n_mode > n_en { "heating" } else { "cooling" },
        "inputs": {
            "kappa_i_hz": e.inputs_digest.kappa_i,
            "kappa_e_hz": e.inputs_digest.kappa_e,
            "n_en": e.inputs_digest.n_en,
        },
    })
}

fn extract(scn: &Scenario, on: (&str, &Table), off: (&str, &Table)) -> Result<Produced, CliError> {
    let s_on = spectrum_from_table(on.1, on.0)?;
    let s_off = spectrum_from_table(off.1, off.0)?;
    let t = &scn.thermal;
    let res = diagonal_estimate(t.resonator, scn.resonator_sigma);
    let opts = ExtractionOptions {
        off_detuning: meta_f64(off.1, "off_detuning_hz", off.0)?,
        gain_rel_sigma: meta_f64(on.1, "gain_rel_sigma", on.0)?.unwrap_or(0.0),
    };
    let dn = extract_delta_n(&s_on, &s_off, &res.params, opts)?;
    let n_en = t.n_en_measured()?;
    let est = deduce_mode_occupancy(n_en, &dn, &res);
    let body = occupancy_json(&est, n_en.value);
    let summary = format!(
        "delta_n = {:.4} ± {:.4}, n_mode = {:.4} ± {:.4} (n_en = {:.4}, {})\n",
        est.delta_n,
        est.sigma_delta_n,
        est.n_mode,
        est.sigma_n_mode,
        n_en.value,
        body["regime"].as_str().unwrap_or_default()
    );
    Ok((Vec::new(), json!({ "files": { "occupancy.json": body.clone() }, "occupancy": body }), summary))
}

fn sweep(scn: &Scenario, seed: u64, source_name: &str) -> Result<Produced, CliError> {
    let temps = scn.source_sweep.clone().ok_or_else(|| ConfigError {
        source: source_name.to_string(),
        line: None,
        key: Some("source.sweep".into()),
        message: "required by the sweep command".into(),
    })?;
    let t = &scn.thermal;
    let result = run_source_sweep(t, &temps, seed)?;
    let n_en = t.n_en()?;

    let mut rows = Table::new(vec![
        Column::new("source_temperature_k", "K", "thermal source temperature"),
        Column::new("n_in", "quanta", "external bath occupancy at the resonator"),
        Column::new("theory_n_mode", "quanta", "closed-form mode occupancy"),
        Column::new("n_mode", "quanta", "mode occupancy deduced from synthetic measurements"),
        Column::new("sigma_n_mode", "quanta", "one-standard-deviation uncertainty of n_mode"),
        Column::new("lower", "quanta", "expanded interval, lower end (floored at 0)"),
        Column::new("upper", "quanta", "expanded interval, upper end"),
    ])
    .meta("quantity", "mode occupancy versus source temperature")
    .meta("units", "quanta")
    .meta("n_en", n_en)
    .meta("transition_temperature_k", result.transition_temperature);
    let mut summary = format!(
        "n_en = {n_en:.4}; cooling turns into heating at T_s = {:.4} K\n",
        result.transition_temperature
    );
    for r in &result.rows {
        let n_in = t.with_source_temperature(r.source_temperature).n_in()?;
        rows.push(vec![
            r.source_temperature,
            n_in,
            r.theory,
            r.estimate.n_mode,
            r.estimate.sigma_n_mode,
            r.estimate.n_mode_interval.0,
            r.estimate.n_mode_interval.1,
        ]);
        summary.push_str(&format!(
            "T_s = {:.4} K: n_mode = {:.4} ± {:.4} (theory {:.4})\n",
            r.source_temperature, r.estimate.n_mode, r.estimate.sigma_n_mode, r.theory
        ));
    }

    let (lo, hi) = (temps[0], temps[temps.len() - 1]);
    let dense: Vec<f64> = if hi > lo {
        let m = scn.theory_points;
        (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
    } else {
        vec![lo]
    };
    let mut theory = Table::new(vec![
        Column::new("source_temperature_k", "K", "thermal source temperature"),
        Column::new("n_mode", "quanta", "closed-form mode occupancy"),
    ])
    .meta("quantity", "theory curve")
    .meta("units", "quanta")
    .meta("n_en", n_en)
    .meta("transition_temperature_k", result.transition_temperature);
    for (ts, n) in theory_curve(t, &dense)? {
        theory.push(vec![ts, n]);
    }

    let results = json!({
        "n_en": n_en,
        "transition_temperature_k": result.transition_temperature,
        "rows": result.rows.iter().map(|r| json!({
            "source_temperature_k": r.source_temperature,
            "theory_n_mode": r.theory,
            "n_mode": r.estimate.n_mode,
            "sigma_n_mode": r.estimate.sigma_n_mode,
        })).collect::<Vec<_>>(),
    });
    Ok((
        vec![("sweep.csv".into(), rows), ("theory.csv".into(), theory)],
        results,
        summary,
    ))
}

fn band_mean(s: &Spectrum, lo: f64, hi: f64) -> f64 {
    let v: Vec<f64> = s
        .grid()
        .points()
        .iter()
        .zip(s.values())
        .filter(|(x, _)| x.abs() >= lo && x.abs() <= hi)
        .map(|(_, v)| *v)
        .collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn oracle(scn: &Scenario, seed: u64) -> Result<Produced, CliError> {
    let t = &scn.thermal;
    let res = t.resonator;
    let (n_en, n_in) = (t.n_en()?, t.n_in()?);
    let o = scn.oracle;
    let cfg = TrajectoryConfig {
        record_output: true,
        ..TrajectoryConfig::new(res, n_en, n_in, o.kappa_dt, o.decay_times, seed)
    };
    let e = simulate_ensemble(&cfg, o.trajectories)?;
    let closed = mode_occupancy(&res, n_en, n_in);
    let z = (e.occupancy_estimate - closed) / e.standard_error;
    let occupancy_flag = z.abs() > 3.0;

    let k = res.kappa();
    let peak = fit_lorentzian(&e.psd, -3.0 * k, 3.0 * k, false)?;
    let center_grid = Grid::symmetric(res.f0(), k, 3)?;
    let closed_peak = symmetrized_intracavity_psd(&res, n_en, n_in, &center_grid).values()[1];
    let peak_rel = peak.height / closed_peak - 1.0;
    let fwhm_rel = peak.fwhm / k - 1.0;

    let out_psd = e.output_psd.clone().expect("output recorded");
    let probe = Grid::symmetric(res.f0(), 10.0 * k, 3)?;
    let closed_out = output_noise_psd(&res, n_en, n_in, &probe);
    let out_center_rel = band_mean(&out_psd, 0.0, 0.1 * k) / closed_out.values()[1] - 1.0;
    let out_far_rel = band_mean(&out_psd, 8.0 * k, 12.0 * k) / closed_out.values()[0] - 1.0;
    let flags: Vec<&str> = [
        (occupancy_flag, "occupancy differs from the closed form by more than 3 standard errors"),
        (peak_rel.abs() > 0.1, "mode PSD peak differs by more than 10%"),
        (fwhm_rel.abs() > 0.1, "mode PSD width differs by more than 10%"),
        (out_center_rel.abs() > 0.1, "output PSD at resonance differs by more than 10%"),
        (out_far_rel.abs() > 0.1, "output PSD baseline differs by more than 10%"),
    ]
    .into_iter()
    .filter(|(f, _)| *f)
    .map(|(_, m)| m)
    .collect();

    let grid = e.psd.grid().clone();
    let closed_aa = symmetrized_intracavity_psd(&res, n_en, n_in, &grid);
    let closed_o = output_noise_psd(&res, n_en, n_in, &grid);
    let mut table = Table::new(vec![
        detuning_column(),
        Column::new("s_aa_oracle", "quanta/Hz", "Welch PSD of the simulated mode amplitude"),
        Column::new("s_aa_closed", "quanta/Hz", "closed-form symmetrized mode PSD"),
        Column::new("s_out_oracle", "quanta", "Welch PSD of the simulated output field"),
        Column::new("s_out_closed", "quanta", "closed-form output noise PSD"),
    ])
    .meta("quantity", "oracle spectra")
    .meta("units", "quanta")
    .meta("axis", "detuning")
    .meta("center_hz", res.f0())
    .meta("trajectories", o.trajectories);
    for i in 0..grid.len() {
        table.push(vec![
            grid.points()[i],
            e.psd.values()[i],
            closed_aa.values()[i],
            out_psd.values()[i],
            closed_o.values()[i],
        ]);
    }

    let report = json!({
        "trajectories": o.trajectories,
        "decay_times": o.decay_times,
        "kappa_dt": o.kappa_dt,
        "occupancy": {
            "oracle": e.occupancy_estimate,
            "standard_error": e.standard_error,
            "closed_form": closed,
            "z": z,
        },
        "mode_psd": {
            "peak_relative_error": peak_rel,
            "fwhm_relative_error": fwhm_rel,
            "center_offset_hz": peak.center,
        },
        "output_psd": {
            "resonance_relative_error": out_center_rel,
            "baseline_relative_error": out_far_rel,
        },
        "flags": flags,
        "agrees": flags.is_empty(),
    });
    let mut summary = format!(
        "oracle n_mode = {:.5} ± {:.5}, closed form {:.5} (z = {:+.2})\nmode PSD peak {:+.2}%, FWHM {:+.2}%; output PSD at resonance {:+.2}%, baseline {:+.2}%\n",
        e.occupancy_estimate,
        e.standard_error,
        closed,
        z,
        100.0 * peak_rel,
        100.0 * fwhm_rel,
        100.0 * out_center_rel,
        100.0 * out_far_rel
    );
    for f in &flags {
        summary.push_str(&format!("DISCREPANCY: {f}\n"));
    }
    if flags.is_empty() {
        summary.push_str("all checks agree\n");
    }
    Ok((
        vec![("oracle_psd.csv".into(), table)],
        json!({ "files": { "oracle_report.json": report.clone() }, "report": report }),
        summary,
    ))
}

/// Resonator estimate with a diagonal covariance from standard deviations.
fn diagonal_estimate(params: radcool_core::ResonatorParams, sigma: [f64; 3]) -> ResonatorEstimate {
    let mut est = ResonatorEstimate::exact(params);
    for (k, s) in sigma.iter().enumerate() {
        est.covariance[(k, k)] = s * s;
    }
    est
}
