//! Scenario files: flat `section.key = value unit` lines.
//!
//! ```text
//! # base scenario
//! resonator.f0 = 10.53 GHz
//! resonator.kappa_i = 113 kHz
//! resonator.kappa_e = 298 kHz
//! environment.temperature = 1.02 K
//! source.temperature = 70 mK
//! link.lambda = 0.91
//! link.floor = 0.02 quanta
//! ```
//!
//! Physical quantities need an explicit unit. Lists are comma separated,
//! each item with its own unit. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;

use radcool_core::experiment::ThermalScenario;
use radcool_core::instrument::AmplifierChain;
use radcool_core::{LinkParams, ResonatorParams};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        if let Some(k) = &self.key {
            write!(f, ": `{k}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Frequency,
    Temperature,
    /// Bare number.
    Ratio,
    /// Bare number or `quanta`.
    Quanta,
    /// `dB` or a bare linear factor.
    Gain,
    Angle,
    Time,
    Count,
    /// Frequency or multiple of the linewidth (`kappa`, `linewidths`).
    Span,
    TemperatureList,
    /// Occupancies, or the token `n_en`.
    OccupancyList,
}

const KEYS: &[(&str, Kind)] = &[
    ("resonator.f0", Kind::Frequency),
    ("resonator.kappa_i", Kind::Frequency),
    ("resonator.kappa_e", Kind::Frequency),
    ("resonator.f0_sigma", Kind::Frequency),
    ("resonator.kappa_i_sigma", Kind::Frequency),
    ("resonator.kappa_e_sigma", Kind::Frequency),
    ("environment.temperature", Kind::Temperature),
    ("environment.temperature_sigma", Kind::Temperature),
    ("source.temperature", Kind::Temperature),
    ("source.sweep", Kind::TemperatureList),
    ("link.lambda", Kind::Ratio),
    ("link.floor", Kind::Quanta),
    ("link.n_eff", Kind::Quanta),
    ("amplifier.gain", Kind::Gain),
    ("amplifier.n_add", Kind::Quanta),
    ("measurement.resolution_bandwidth", Kind::Frequency),
    ("measurement.integration_time", Kind::Time),
    ("measurement.averages", Kind::Count),
    ("measurement.leakage_amplitude", Kind::Ratio),
    ("measurement.leakage_phase", Kind::Angle),
    ("measurement.detune_off", Kind::Span),
    ("grid.half_width", Kind::Span),
    ("grid.points", Kind::Count),
    ("probe.half_width", Kind::Span),
    ("probe.points", Kind::Count),
    ("probe.noise", Kind::Ratio),
    ("thermometry.temperatures", Kind::TemperatureList),
    ("thermometry.averages", Kind::Count),
    ("simulate.n_in", Kind::OccupancyList),
    ("oracle.trajectories", Kind::Count),
    ("oracle.decay_times", Kind::Ratio),
    ("oracle.kappa_dt", Kind::Ratio),
    ("sweep.theory_points", Kind::Count),
    ("run.seed", Kind::Count),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Span {
    Hz(f64),
    Linewidths(f64),
}

impl Span {
    pub fn hz(&self, kappa: f64) -> f64 {
        match *self {
            Span::Hz(v) => v,
            Span::Linewidths(v) => v * kappa,
        }
    }

    pub fn linewidths(&self, kappa: f64) -> f64 {
        match *self {
            Span::Hz(v) => v / kappa,
            Span::Linewidths(v) => v,
        }
    }
}

/// External-bath occupancy of one simulated panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PanelOccupancy {
    Quanta(f64),
    /// Equal to the environment occupancy.
    Environment,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(f64),
    Count(u64),
    Span(Span),
    List(Vec<f64>),
    Panels(Vec<PanelOccupancy>),
}

/// One `key = value` line as written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub trajectories: usize,
    pub decay_times: f64,
    pub kappa_dt: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            trajectories: 32,
            decay_times: 2000.0,
            kappa_dt: 0.05,
        }
    }
}

/// A parsed scenario file.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub thermal: ThermalScenario,
    /// Source temperatures for `sweep` (K), ascending.
    pub source_sweep: Option<Vec<f64>>,
    /// External-bath occupancies of the panels `simulate` emits.
    pub panels: Option<Vec<PanelOccupancy>>,
    /// Standard deviations of `[f0, kappa_i, kappa_e]` (Hz).
    pub resonator_sigma: [f64; 3],
    pub oracle: OracleSettings,
    pub theory_points: usize,
    pub seed: Option<u64>,
    pub entries: Vec<Entry>,
    source_temperature_given: bool,
}

impl Scenario {
    /// SHA-256 over the normalized `key = value` lines, sorted by key, so
    /// comments, blank lines, ordering and spacing do not change it.
    pub fn digest(&self) -> String {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|e| format!("{} = {}", e.key, normalize(&e.raw)))
            .collect();
        lines.sort();
        let mut h = Sha256::new();
        for l in lines {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Fails unless the scenario names a single source temperature.
    pub fn require_source_temperature(&self, source_name: &str) -> Result<(), ConfigError> {
        if self.source_temperature_given {
            Ok(())
        } else {
            Err(ConfigError {
                source: source_name.to_string(),
                line: None,
                key: Some("source.temperature".into()),
                message: "required by this command".into(),
            })
        }
    }
}

fn normalize(raw: &str) -> String {
    raw.split(',')
        .map(|item| item.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(", ")
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

struct Ctx<'a> {
    source: &'a str,
    line: usize,
    key: &'a str,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source: self.source.to_string(),
            line: Some(self.line),
            key: Some(self.key.to_string()),
            message: message.into(),
        }
    }
}

fn split_unit<'a>(ctx: &Ctx, item: &'a str) -> Result<(f64, Option<&'a str>), ConfigError> {
    let mut parts = item.split_whitespace();
    let number = parts.next().ok_or_else(|| ctx.err("missing value"))?;
    let unit = parts.next();
    if parts.next().is_some() {
        return Err(ctx.err(format!("expected `<number> <unit>`, got `{item}`")));
    }
    let v: f64 = number
        .parse()
        .map_err(|_| ctx.err(format!("`{number}` is not a number")))?;
    if !v.is_finite() {
        return Err(ctx.err("value must be finite"));
    }
    Ok((v, unit))
}

fn need_unit<'a>(ctx: &Ctx, unit: Option<&'a str>, what: &str) -> Result<&'a str, ConfigError> {
    unit.ok_or_else(|| ctx.err(format!("missing unit; expected a {what} unit")))
}

fn frequency(ctx: &Ctx, v: f64, unit: Option<&str>) -> Result<f64, ConfigError> {
    let scale = match need_unit(ctx, unit, "frequency (Hz, kHz, MHz, GHz)")? {
        "Hz" => 1.0,
        "kHz" => 1e3,
        "MHz" => 1e6,
        "GHz" => 1e9,
        u => return Err(ctx.err(format!("unknown frequency unit `{u}` (Hz, kHz, MHz, GHz)"))),
    };
    Ok(v * scale)
}

fn temperature(ctx: &Ctx, v: f64, unit: Option<&str>) -> Result<f64, ConfigError> {
    let scale = match need_unit(ctx, unit, "temperature (K, mK)")? {
        "K" => 1.0,
        "mK" => 1e-3,
        u => return Err(ctx.err(format!("unknown temperature unit `{u}` (K, mK)"))),
    };
    Ok(v * scale)
}

fn parse_value(ctx: &Ctx, kind: Kind, raw: &str) -> Result<Value, ConfigError> {
    let single = |ctx: &Ctx| -> Result<(f64, Option<String>), ConfigError> {
        if raw.contains(',') {
            return Err(ctx.err("expected a single value, not a list"));
        }
        let (v, u) = split_unit(ctx, raw)?;
        Ok((v, u.map(str::to_string)))
    };
    let bare = |ctx: &Ctx, u: &Option<String>, allowed: &[&str]| -> Result<(), ConfigError> {
        match u {
            None => Ok(()),
            Some(u) if allowed.contains(&u.as_str()) => Ok(()),
            Some(u) => Err(ctx.err(format!("unexpected unit `{u}` on a dimensionless value"))),
        }
    };
    match kind {
        Kind::Frequency => {
            let (v, u) = single(ctx)?;
            Ok(Value::Scalar(frequency(ctx, v, u.as_deref())?))
        }
        Kind::Temperature => {
            let (v, u) = single(ctx)?;
            Ok(Value::Scalar(temperature(ctx, v, u.as_deref())?))
        }
        Kind::Ratio => {
            let (v, u) = single(ctx)?;
            bare(ctx, &u, &[])?;
            Ok(Value::Scalar(v))
        }
        Kind::Quanta => {
            let (v, u) = single(ctx)?;
            bare(ctx, &u, &["quanta"])?;
            Ok(Value::Scalar(v))
        }
        Kind::Gain => {
            let (v, u) = single(ctx)?;
            match u.as_deref() {
                None => Ok(Value::Scalar(v)),
                Some("dB") => Ok(Value::Scalar(10f64.powf(v / 10.0))),
                Some(u) => Err(ctx.err(format!("unknown gain unit `{u}` (dB, or none for a linear factor)"))),
            }
        }
        Kind::Angle => {
            let (v, u) = single(ctx)?;
            match need_unit(ctx, u.as_deref(), "angle (rad, deg)")? {
                "rad" => Ok(Value::Scalar(v)),
                "deg" => Ok(Value::Scalar(v.to_radians())),
                u => Err(ctx.err(format!("unknown angle unit `{u}` (rad, deg)"))),
            }
        }
        Kind::Time => {
            let (v, u) = single(ctx)?;
            let scale = match need_unit(ctx, u.as_deref(), "time (s, ms, us)")? {
                "s" => 1.0,
                "ms" => 1e-3,
                "us" => 1e-6,
                u => return Err(ctx.err(format!("unknown time unit `{u}` (s, ms, us)"))),
            };
            Ok(Value::Scalar(v * scale))
        }
        Kind::Count => {
            if raw.contains(',') {
                return Err(ctx.err("expected a single value, not a list"));
            }
            let t = raw.trim();
            t.parse::<u64>()
                .map(Value::Count)
                .map_err(|_| ctx.err(format!("`{t}` is not a non-negative integer")))
        }
        Kind::Span => {
            let (v, u) = single(ctx)?;
            match u.as_deref() {
                Some("kappa") | Some("linewidths") => Ok(Value::Span(Span::Linewidths(v))),
                u => Ok(Value::Span(Span::Hz(frequency(ctx, v, u).map_err(|_| {
                    ctx.err("expected a frequency unit (Hz, kHz, MHz, GHz) or `kappa`/`linewidths`")
                })?))),
            }
        }
        Kind::TemperatureList => {
            let items = list_items(ctx, raw)?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let (v, u) = split_unit(ctx, item)?;
                out.push(temperature(ctx, v, u)?);
            }
            Ok(Value::List(out))
        }
        Kind::OccupancyList => {
            let items = list_items(ctx, raw)?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                if item == "n_en" {
                    out.push(PanelOccupancy::Environment);
                    continue;
                }
                let (v, u) = split_unit(ctx, item)?;
                if let Some(u) = u {
                    if u != "quanta" {
                        return Err(ctx.err(format!("unexpected unit `{u}` on an occupancy")));
                    }
                }
                out.push(PanelOccupancy::Quanta(v));
            }
            Ok(Value::Panels(out))
        }
    }
}

fn list_items<'a>(ctx: &Ctx, raw: &'a str) -> Result<Vec<&'a str>, ConfigError> {
    let items: Vec<&str> = raw.split(',').map(str::trim).collect();
    if items.iter().all(|s| s.is_empty()) {
        return Err(ctx.err("list is empty"));
    }
    if items.iter().any(|s| s.is_empty()) {
        return Err(ctx.err("list has an empty item"));
    }
    Ok(items)
}

/// Parse scenario text. `source_name` labels diagnostics.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<Scenario, ConfigError> {
    let mut values: BTreeMap<&'static str, (usize, Value)> = BTreeMap::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let body = strip_comment(line).trim();
        if body.is_empty() {
            continue;
        }
        let (key, raw) = body.split_once('=').ok_or_else(|| ConfigError {
            source: source_name.to_string(),
            line: Some(n),
            key: None,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = key.trim();
        let raw = raw.trim();
        let (name, kind) = KEYS.iter().find(|(k, _)| *k == key).copied().ok_or_else(|| ConfigError {
            source: source_name.to_string(),
            line: Some(n),
            key: Some(key.to_string()),
            message: "unknown key".into(),
        })?;
        let ctx = Ctx { source: source_name, line: n, key: name };
        if let Some((first, _)) = values.get(name) {
            return Err(ctx.err(format!("repeated; first set on line {first}")));
        }
        let v = parse_value(&ctx, kind, raw)?;
        values.insert(name, (n, v));
        entries.push(Entry {
            line: n,
            key: name.to_string(),
            raw: raw.to_string(),
        });
    }
    build(values, entries, source_name)
}

struct Lookup<'a> {
    values: &'a BTreeMap<&'static str, (usize, Value)>,
    source: &'a str,
}

impl Lookup<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source: self.source.to_string(),
            line: self.values.get(key).map(|(l, _)| *l),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn scalar(&self, key: &str) -> Option<f64> {
        match self.values.get(key) {
            Some((_, Value::Scalar(v))) => Some(*v),
            _ => None,
        }
    }

    fn required(&self, key: &str) -> Result<f64, ConfigError> {
        self.scalar(key).ok_or_else(|| self.err(key, "missing required key"))
    }

    fn count(&self, key: &str) -> Option<u64> {
        match self.values.get(key) {
            Some((_, Value::Count(v))) => Some(*v),
            _ => None,
        }
    }

    fn span(&self, key: &str) -> Option<Span> {
        match self.values.get(key) {
            Some((_, Value::Span(v))) => Some(*v),
            _ => None,
        }
    }

    fn list(&self, key: &str) -> Option<Vec<f64>> {
        match self.values.get(key) {
            Some((_, Value::List(v))) => Some(v.clone()),
            _ => None,
        }
    }

    fn check<T>(&self, key: &str, r: radcool_core::Result<T>) -> Result<T, ConfigError> {
        r.map_err(|e| self.err(key, e.to_string()))
    }

    fn ascending(&self, key: &str, v: &[f64]) -> Result<(), ConfigError> {
        if v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(self.err(key, "list must be sorted in strictly increasing order"));
        }
        Ok(())
    }
}

fn build(
    values: BTreeMap<&'static str, (usize, Value)>,
    entries: Vec<Entry>,
    source_name: &str,
) -> Result<Scenario, ConfigError> {
    let q = Lookup { values: &values, source: source_name };
    let mut t = ThermalScenario::nominal();

    t.resonator = q.check(
        "resonator.kappa_e",
        ResonatorParams::new(
            q.required("resonator.f0")?,
            q.required("resonator.kappa_i")?,
            q.required("resonator.kappa_e")?,
        ),
    )?;
    let kappa = t.resonator.kappa();
    let mut resonator_sigma = [0.0; 3];
    for (k, key) in ["resonator.f0_sigma", "resonator.kappa_i_sigma", "resonator.kappa_e_sigma"]
        .iter()
        .enumerate()
    {
        if let Some(s) = q.scalar(key) {
            if !(s >= 0.0) {
                return Err(q.err(key, "uncertainty must be non-negative"));
            }
            resonator_sigma[k] = s;
        }
    }

    t.environment_temperature = q.required("environment.temperature")?;
    if !(t.environment_temperature > 0.0) {
        return Err(q.err("environment.temperature", "must be positive"));
    }
    if let Some(s) = q.scalar("environment.temperature_sigma") {
        t.environment_temperature_sigma = s;
    }

    let source_sweep = q.list("source.sweep");
    if let Some(s) = &source_sweep {
        q.ascending("source.sweep", s)?;
        if s.iter().any(|t| !(*t > 0.0)) {
            return Err(q.err("source.sweep", "temperatures must be positive"));
        }
    }
    let source_temperature_given = q.scalar("source.temperature").is_some();
    t.source_temperature = match (q.scalar("source.temperature"), &source_sweep) {
        (Some(v), _) => v,
        (None, Some(s)) => s[0],
        // commands that need it check `require_source_temperature`
        (None, None) => t.source_temperature,
    };
    if !(t.source_temperature > 0.0) {
        return Err(q.err("source.temperature", "must be positive"));
    }

    let lambda = q.scalar("link.lambda").unwrap_or(t.link.lambda());
    t.link = match (q.scalar("link.floor"), q.scalar("link.n_eff")) {
        (Some(_), Some(_)) => return Err(q.err("link.n_eff", "give either `link.floor` or `link.n_eff`, not both")),
        (Some(floor), None) => q.check("link.floor", LinkParams::from_floor(lambda, floor))?,
        (None, Some(n)) => q.check("link.n_eff", LinkParams::new(lambda, n))?,
        (None, None) if values.contains_key("link.lambda") => {
            q.check("link.lambda", LinkParams::from_floor(lambda, 0.0))?
        }
        (None, None) => t.link,
    };

    t.amplifier = q.check(
        "amplifier.gain",
        AmplifierChain::new(
            q.scalar("amplifier.gain").unwrap_or(t.amplifier.gain()),
            q.scalar("amplifier.n_add").unwrap_or(t.amplifier.n_add()),
        ),
    )?;

    let m = &mut t.measurement;
    if let Some(v) = q.scalar("measurement.resolution_bandwidth") {
        m.resolution_bandwidth = v;
    }
    if let Some(v) = q.scalar("measurement.integration_time") {
        m.integration_time = Some(v);
    }
    if let Some(v) = q.count("measurement.averages") {
        m.averages = v;
    }
    if let Some(v) = q.scalar("measurement.leakage_amplitude") {
        m.leakage_amplitude = v;
    }
    if let Some(v) = q.scalar("measurement.leakage_phase") {
        m.leakage_phase = v;
    }
    if let Some(v) = q.span("measurement.detune_off") {
        m.detune_off = Some(v.hz(kappa));
    }
    q.check("measurement.averages", m.validate())?;
    q.check("measurement.detune_off", m.off_detuning(&t.resonator).map(|_| ()))?;

    if let Some(v) = q.span("grid.half_width") {
        t.window_linewidths = v.linewidths(kappa);
    }
    if let Some(v) = q.count("grid.points") {
        t.window_points = v as usize;
    }
    if let Some(v) = q.span("probe.half_width") {
        t.probe.half_width_linewidths = v.linewidths(kappa);
    }
    if let Some(v) = q.count("probe.points") {
        t.probe.points = v as usize;
    }
    if let Some(v) = q.scalar("probe.noise") {
        t.probe.noise = v;
    }
    if let Some(v) = q.list("thermometry.temperatures") {
        q.ascending("thermometry.temperatures", &v)?;
        t.thermometry.temperatures = v;
    }
    if let Some(v) = q.count("thermometry.averages") {
        t.thermometry.measurement.averages = v;
    }
    q.check("grid.points", t.validate())?;
    if t.window_linewidths < radcool_core::estimation::occupancy::MIN_EXTRACTION_LINEWIDTHS / 2.0 {
        return Err(q.err("grid.half_width", "window must span at least 10 linewidths in total"));
    }

    let panels = match values.get("simulate.n_in") {
        Some((_, Value::Panels(p))) => {
            if p.iter().any(|x| matches!(x, PanelOccupancy::Quanta(v) if *v < 0.0)) {
                return Err(q.err("simulate.n_in", "occupancies must be non-negative"));
            }
            Some(p.clone())
        }
        _ => None,
    };

    let mut oracle = OracleSettings::default();
    if let Some(v) = q.count("oracle.trajectories") {
        if v < 2 {
            return Err(q.err("oracle.trajectories", "must be at least 2"));
        }
        oracle.trajectories = v as usize;
    }
    if let Some(v) = q.scalar("oracle.decay_times") {
        oracle.decay_times = v;
    }
    if let Some(v) = q.scalar("oracle.kappa_dt") {
        oracle.kappa_dt = v;
    }
    let theory_points = q.count("sweep.theory_points").unwrap_or(200) as usize;
    if theory_points < 2 {
        return Err(q.err("sweep.theory_points", "need at least 2 points"));
    }

    Ok(Scenario {
        thermal: t,
        source_sweep,
        panels,
        resonator_sigma,
        oracle,
        theory_points,
        seed: q.count("run.seed"),
        entries,
        source_temperature_given,
    })
}
