//! Configuration files, trace/dataset serialization and the summary table.
//!
//! Configs are flat TOML with units in the key names. Traces are CSV with
//! 17 significant digits, so stored values parse back bit-exact. The dataset
//! is one JSON object per line plus a TOML manifest whose first line holds
//! the generation timestamp.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cable::CableSpec;
use crate::parallel::Execution;
use crate::scenario::{
    preset, run_batch, run_experiment, sweep, table1_presets, ExperimentRecord,
    RandomizationRanges, RunSettings, Scenario, ScenarioKind,
};
use crate::stability::{
    diverged, report_from_series, AnalysisSettings, Classification, StabilityReport,
};
use crate::Vec3;

pub const NODE_TRACE_HEADER: [&str; 7] = ["time_s", "x_m", "y_m", "z_m", "vx", "vy", "vz"];
pub const REACTION_TRACE_HEADER: [&str; 4] = ["time_s", "fx_n", "fy_n", "fz_n"];
pub const REACTION_FILE: &str = "reaction.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const TABLE_FILE: &str = "table.txt";
/// Key of the manifest line that differs between otherwise identical runs.
pub const TIMESTAMP_KEY: &str = "generated_at_unix_s";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Syntax or schema error; the message carries line and column.
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value for `{key}`: {constraint}")]
    Invalid {
        key: &'static str,
        constraint: String,
    },
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: malformed content: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> OutputError {
    OutputError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// Per-run CSV traces and TOML summary.
    Csv,
    /// `dataset.jsonl` and `manifest.toml`.
    Jsonl,
    /// Text table in the layout of the experiment table.
    Table,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub spec: CableSpec,
    pub scenario: Scenario,
    pub ranges: RandomizationRanges,
    pub count: usize,
    pub output_dir: PathBuf,
    pub settings: RunSettings,
    pub formats: Vec<OutputFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            spec: CableSpec::default(),
            scenario: Scenario::default(),
            ranges: RandomizationRanges::default(),
            count: 10,
            output_dir: PathBuf::from("out"),
            settings: RunSettings::default(),
            formats: vec![OutputFormat::Csv, OutputFormat::Jsonl, OutputFormat::Table],
        }
    }
}

/// On-disk form. Every key is optional; absent keys take the default (or the
/// preset's value when `preset` is set).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    length_m: Option<f64>,
    radius_m: Option<f64>,
    density_kg_m3: Option<f64>,
    youngs_modulus_pa: Option<f64>,
    num_masses: Option<usize>,
    damping_coefficient_ns_m: Option<f64>,
    time_step_s: Option<f64>,
    gravity_m_s2: Option<[f64; 3]>,
    scenario: Option<ScenarioKind>,
    displacement_m: Option<[f64; 3]>,
    settle_duration_s: Option<f64>,
    ramp_duration_s: Option<f64>,
    total_duration_s: Option<f64>,
    monitored_nodes: Option<Vec<usize>>,
    seed: Option<u64>,
    count: Option<usize>,
    range_youngs_modulus_pa: Option<[f64; 2]>,
    range_num_masses: Option<[usize; 2]>,
    range_time_step_s: Option<[f64; 2]>,
    range_damping_coefficient_ns_m: Option<[f64; 2]>,
    output_dir: Option<PathBuf>,
    /// 0 derives the stride from `record_interval_s`.
    record_stride: Option<usize>,
    record_interval_s: Option<f64>,
    formats: Option<Vec<OutputFormat>>,
    position_limit_factor: Option<f64>,
    velocity_limit_m_s: Option<f64>,
    oscillatory_threshold: Option<f64>,
    analysis_window_fraction: Option<f64>,
}

fn check(key: &'static str, ok: bool, constraint: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            key,
            constraint: constraint.to_string(),
        })
    }
}

fn positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    check(key, v.is_finite() && v > 0.0, "must be finite and > 0")?;
    Ok(v)
}

fn non_negative(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    check(key, v.is_finite() && v >= 0.0, "must be finite and >= 0")?;
    Ok(v)
}

fn range(key: &'static str, [lo, hi]: [f64; 2]) -> Result<[f64; 2], ConfigError> {
    check(
        key,
        lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi,
        "must be [min, max] with 0 < min <= max",
    )?;
    Ok([lo, hi])
}

fn finite3(key: &'static str, v: [f64; 3]) -> Result<Vec3, ConfigError> {
    check(
        key,
        v.iter().all(|c| c.is_finite()),
        "components must be finite",
    )?;
    Ok(Vec3::from(v))
}

impl ConfigFile {
    fn resolve(self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(name) = &self.preset {
            let p = preset(name).ok_or_else(|| ConfigError::Invalid {
                key: "preset",
                constraint: format!("unknown preset `{name}`"),
            })?;
            cfg.spec = p.spec;
            cfg.preset = Some(name.clone());
        }
        let spec = &mut cfg.spec;
        if let Some(v) = self.length_m {
            spec.length = positive("length_m", v)?;
        }
        if let Some(v) = self.radius_m {
            spec.radius = positive("radius_m", v)?;
        }
        if let Some(v) = self.density_kg_m3 {
            spec.density = positive("density_kg_m3", v)?;
        }
        if let Some(v) = self.youngs_modulus_pa {
            spec.youngs_modulus = positive("youngs_modulus_pa", v)?;
        }
        if let Some(v) = self.num_masses {
            check("num_masses", v >= 2, "must be >= 2")?;
            spec.num_masses = v;
        }
        if let Some(v) = self.damping_coefficient_ns_m {
            spec.damping_coefficient = non_negative("damping_coefficient_ns_m", v)?;
        }
        if let Some(v) = self.time_step_s {
            spec.time_step = positive("time_step_s", v)?;
        }
        if let Some(v) = self.gravity_m_s2 {
            spec.gravity = finite3("gravity_m_s2", v)?;
        }

        let sc = &mut cfg.scenario;
        if let Some(kind) = self.scenario {
            sc.kind = kind;
        }
        if let Some(v) = self.displacement_m {
            sc.displacement = finite3("displacement_m", v)?;
        }
        if let Some(v) = self.settle_duration_s {
            sc.settle_duration = non_negative("settle_duration_s", v)?;
        }
        if let Some(v) = self.ramp_duration_s {
            sc.ramp_duration = non_negative("ramp_duration_s", v)?;
        }
        if let Some(v) = self.total_duration_s {
            sc.total_duration = positive("total_duration_s", v)?;
        }
        check(
            "total_duration_s",
            sc.total_duration > sc.ramp_duration,
            "must exceed ramp_duration_s",
        )?;
        if let Some(v) = self.monitored_nodes {
            sc.monitored_nodes = v;
        }

        let r = &mut cfg.ranges;
        if let Some(v) = self.seed {
            r.seed = v;
        }
        if let Some(v) = self.range_youngs_modulus_pa {
            r.youngs_modulus = range("range_youngs_modulus_pa", v)?;
        }
        if let Some([lo, hi]) = self.range_num_masses {
            check(
                "range_num_masses",
                lo >= 2 && lo <= hi,
                "must be [min, max] with 2 <= min <= max",
            )?;
            r.num_masses = [lo, hi];
        }
        if let Some(v) = self.range_time_step_s {
            r.time_step = range("range_time_step_s", v)?;
        }
        if let Some(v) = self.range_damping_coefficient_ns_m {
            r.damping_coefficient = range("range_damping_coefficient_ns_m", v)?;
        }
        if let Some(v) = self.count {
            check("count", v >= 1, "must be >= 1")?;
            cfg.count = v;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }

        let st = &mut cfg.settings;
        if let Some(v) = self.record_stride {
            st.record_stride = (v > 0).then_some(v);
        }
        if let Some(v) = self.record_interval_s {
            st.record_interval = positive("record_interval_s", v)?;
        }
        if let Some(v) = self.position_limit_factor {
            st.analysis.position_limit_factor = positive("position_limit_factor", v)?;
        }
        if let Some(v) = self.velocity_limit_m_s {
            st.analysis.velocity_limit = positive("velocity_limit_m_s", v)?;
        }
        if let Some(v) = self.oscillatory_threshold {
            st.analysis.oscillatory_threshold = non_negative("oscillatory_threshold", v)?;
        }
        if let Some(v) = self.analysis_window_fraction {
            check(
                "analysis_window_fraction",
                v > 0.0 && v <= 1.0,
                "must be in (0, 1]",
            )?;
            st.analysis.window_fraction = v;
        }
        if let Some(v) = self.formats {
            cfg.formats = v;
        }
        Ok(cfg)
    }

    fn from_config(cfg: &RunConfig) -> Self {
        let (s, sc, r, st) = (&cfg.spec, &cfg.scenario, &cfg.ranges, &cfg.settings);
        Self {
            preset: cfg.preset.clone(),
            length_m: Some(s.length),
            radius_m: Some(s.radius),
            density_kg_m3: Some(s.density),
            youngs_modulus_pa: Some(s.youngs_modulus),
            num_masses: Some(s.num_masses),
            damping_coefficient_ns_m: Some(s.damping_coefficient),
            time_step_s: Some(s.time_step),
            gravity_m_s2: Some(s.gravity.into()),
            scenario: Some(sc.kind),
            displacement_m: Some(sc.displacement.into()),
            settle_duration_s: Some(sc.settle_duration),
            ramp_duration_s: Some(sc.ramp_duration),
            total_duration_s: Some(sc.total_duration),
            monitored_nodes: Some(sc.monitored_nodes.clone()),
            seed: Some(r.seed),
            count: Some(cfg.count),
            range_youngs_modulus_pa: Some(r.youngs_modulus),
            range_num_masses: Some(r.num_masses),
            range_time_step_s: Some(r.time_step),
            range_damping_coefficient_ns_m: Some(r.damping_coefficient),
            output_dir: Some(cfg.output_dir.clone()),
            record_stride: Some(st.record_stride.unwrap_or(0)),
            record_interval_s: Some(st.record_interval),
            formats: Some(cfg.formats.clone()),
            position_limit_factor: Some(st.analysis.position_limit_factor),
            velocity_limit_m_s: Some(st.analysis.velocity_limit),
            oscillatory_threshold: Some(st.analysis.oscillatory_threshold),
            analysis_window_fraction: Some(st.analysis.window_fraction),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.resolve()
    }

    /// Every key with its resolved value; parses back to the same config.
    pub fn to_toml(&self) -> String {
        toml::to_string(&ConfigFile::from_config(self)).expect("config serializes to TOML")
    }

    pub fn has_format(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

/// Reads, parses, validates and resolves a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text)
}

/// Writes the resolved config into `dir` as `resolved_config.toml`.
pub fn write_resolved_config(config: &RunConfig, dir: &Path) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, config.to_toml()).map_err(io_err(&path))?;
    Ok(path)
}

/// 17 significant digits: enough for an exact f64 round trip.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn node_trace_file(node: usize) -> String {
    format!("node_{node}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub length_m: f64,
    pub radius_m: f64,
    pub density_kg_m3: f64,
    pub youngs_modulus_pa: f64,
    pub num_masses: usize,
    pub damping_coefficient_ns_m: f64,
    pub time_step_s: f64,
    pub gravity_m_s2: [f64; 3],
}

impl From<&CableSpec> for SpecRecord {
    fn from(s: &CableSpec) -> Self {
        Self {
            length_m: s.length,
            radius_m: s.radius,
            density_kg_m3: s.density,
            youngs_modulus_pa: s.youngs_modulus,
            num_masses: s.num_masses,
            damping_coefficient_ns_m: s.damping_coefficient,
            time_step_s: s.time_step,
            gravity_m_s2: s.gravity.into(),
        }
    }
}

impl From<&SpecRecord> for CableSpec {
    fn from(s: &SpecRecord) -> Self {
        Self {
            length: s.length_m,
            radius: s.radius_m,
            density: s.density_kg_m3,
            youngs_modulus: s.youngs_modulus_pa,
            num_masses: s.num_masses,
            damping_coefficient: s.damping_coefficient_ns_m,
            time_step: s.time_step_s,
            gravity: Vec3::from(s.gravity_m_s2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub kind: ScenarioKind,
    pub displacement_m: [f64; 3],
    pub settle_duration_s: f64,
    pub ramp_duration_s: f64,
    pub total_duration_s: f64,
    pub monitored_nodes: Vec<usize>,
}

impl From<&Scenario> for ScenarioRecord {
    fn from(s: &Scenario) -> Self {
        Self {
            kind: s.kind,
            displacement_m: s.displacement.into(),
            settle_duration_s: s.settle_duration,
            ramp_duration_s: s.ramp_duration,
            total_duration_s: s.total_duration,
            monitored_nodes: s.monitored_nodes.clone(),
        }
    }
}

impl From<&ScenarioRecord> for Scenario {
    fn from(s: &ScenarioRecord) -> Self {
        Self {
            kind: s.kind,
            displacement: Vec3::from(s.displacement_m),
            settle_duration: s.settle_duration_s,
            ramp_duration: s.ramp_duration_s,
            total_duration: s.total_duration_s,
            monitored_nodes: s.monitored_nodes.clone(),
        }
    }
}

/// Per-run summary written next to the trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub damping_violations: usize,
    pub sensor_node: usize,
    pub monitored_nodes: Vec<usize>,
    pub initial_centroid_m: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub report: StabilityReport,
    pub spec: SpecRecord,
    pub scenario: ScenarioRecord,
}

impl From<&ExperimentRecord> for RunSummary {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            index: r.index,
            seed: r.seed,
            damping_violations: r.damping_violations,
            sensor_node: r.trace.sensor_node,
            monitored_nodes: r.trace.monitored_nodes.clone(),
            initial_centroid_m: r.trace.initial_centroid.into(),
            error: r.error.clone(),
            report: r.report,
            spec: SpecRecord::from(&r.sampled_spec),
            scenario: ScenarioRecord::from(&r.scenario),
        }
    }
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt_f64))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes one CSV per monitored node, the sensor reaction CSV and the TOML
/// summary into `dir`. Returns the written paths.
pub fn write_traces(record: &ExperimentRecord, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace = &record.trace;
    let mut written = Vec::new();
    for (j, node) in trace.monitored_nodes.iter().enumerate() {
        let path = dir.join(node_trace_file(*node));
        let rows = trace.times.iter().enumerate().map(|(k, t)| {
            let p = trace.node_positions[j][k];
            let v = trace.node_velocities[j][k];
            vec![*t, p.x, p.y, p.z, v.x, v.y, v.z]
        });
        write_csv(&path, &NODE_TRACE_HEADER, rows)?;
        written.push(path);
    }
    let path = dir.join(REACTION_FILE);
    let rows = trace
        .times
        .iter()
        .zip(&trace.reaction_force)
        .map(|(t, f)| vec![*t, f.x, f.y, f.z]);
    write_csv(&path, &REACTION_TRACE_HEADER, rows)?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let text =
        toml::to_string(&RunSummary::from(record)).map_err(|e| malformed(&path, e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    if found != header {
        return Err(malformed(path, format!("unexpected header {found:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| malformed(path, format!("`{f}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeTrace {
    pub times: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

pub fn read_node_trace(path: &Path) -> Result<NodeTrace, OutputError> {
    let mut out = NodeTrace::default();
    for row in read_csv(path, &NODE_TRACE_HEADER)? {
        out.times.push(row[0]);
        out.positions.push(Vec3::new(row[1], row[2], row[3]));
        out.velocities.push(Vec3::new(row[4], row[5], row[6]));
    }
    Ok(out)
}

/// `(times, forces)` from a reaction trace.
pub fn read_reaction_trace(path: &Path) -> Result<(Vec<f64>, Vec<Vec3>), OutputError> {
    let rows = read_csv(path, &REACTION_TRACE_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| (r[0], Vec3::new(r[1], r[2], r[3])))
        .unzip())
}

pub fn read_summary(path: &Path) -> Result<RunSummary, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| malformed(path, e.to_string()))
}

/// Re-runs the detectors on a directory written by [`write_traces`].
///
/// Divergence is checked on the stored (monitored) nodes only, so it can fire
/// later than the in-memory analysis that sees every node.
pub fn analyze_run_dir(
    dir: &Path,
    settings: &AnalysisSettings,
) -> Result<StabilityReport, OutputError> {
    let summary = read_summary(&dir.join(SUMMARY_FILE))?;
    let (times, forces) = read_reaction_trace(&dir.join(REACTION_FILE))?;
    let nodes = summary
        .monitored_nodes
        .iter()
        .map(|n| read_node_trace(&dir.join(node_trace_file(*n))))
        .collect::<Result<Vec<_>, _>>()?;
    for node in &nodes {
        if node.times.len() != times.len() {
            return Err(malformed(dir, "node and reaction traces differ in length"));
        }
    }
    let centroid = Vec3::from(summary.initial_centroid_m);
    let position_limit = settings.position_limit_factor * summary.spec.length_m;
    let mut time_to_instability = f64::INFINITY;
    for (k, t) in times.iter().enumerate() {
        let positions: Vec<Vec3> = nodes.iter().map(|n| n.positions[k]).collect();
        let velocities: Vec<Vec3> = nodes.iter().map(|n| n.velocities[k]).collect();
        let sensor_bad = !forces[k].iter().all(|c| c.is_finite());
        if sensor_bad
            || diverged(
                &positions,
                &velocities,
                &centroid,
                position_limit,
                settings.velocity_limit,
            )
        {
            time_to_instability = *t;
            break;
        }
    }
    let duration = times.last().copied().unwrap_or(0.0);
    Ok(report_from_series(
        time_to_instability,
        &times,
        &forces,
        duration,
        settings,
    ))
}

/// One line of `dataset.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLine {
    pub index: usize,
    pub seed: Option<u64>,
    pub params: SpecRecord,
    pub classification: Classification,
    #[serde(with = "crate::serde_float")]
    pub time_to_instability_s: f64,
    #[serde(with = "crate::serde_float")]
    pub peak_force_amplitude_n: f64,
    #[serde(with = "crate::serde_float")]
    pub dominant_frequency_hz: f64,
    #[serde(with = "crate::serde_float")]
    pub relative_amplitude: f64,
    #[serde(with = "crate::serde_float")]
    pub settling_time_s: f64,
    pub damping_violations: usize,
    pub error: Option<String>,
    /// Trace file paths relative to the dataset directory.
    pub traces: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    seed: Option<u64>,
    count: usize,
    ranges: Option<RangesRecord>,
    base: SpecRecord,
    scenario: ScenarioRecord,
    classification_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RangesRecord {
    youngs_modulus_pa: [f64; 2],
    num_masses: [usize; 2],
    time_step_s: [f64; 2],
    damping_coefficient_ns_m: [f64; 2],
}

pub fn run_dir_name(index: usize) -> String {
    format!("run_{index:04}")
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Dataset context recorded in the manifest.
#[derive(Debug, Clone, Copy)]
pub struct DatasetContext<'a> {
    pub ranges: Option<&'a RandomizationRanges>,
    pub base: &'a CableSpec,
    pub scenario: &'a Scenario,
}

/// Writes per-run traces under `run_NNNN/`, `dataset.jsonl` (one line per
/// record, in record order) and `manifest.toml`.
pub fn write_dataset(
    records: &[ExperimentRecord],
    dir: &Path,
    context: DatasetContext<'_>,
) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut lines = String::new();
    let mut counts: BTreeMap<String, usize> = ["stable", "oscillatory", "unstable"]
        .iter()
        .map(|k| (k.to_string(), 0))
        .collect();
    for record in records {
        let run_dir = dir.join(run_dir_name(record.index));
        let traces = write_traces(record, &run_dir)?
            .iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (stem, relative(p, dir))
            })
            .collect();
        let report = &record.report;
        let line = DatasetLine {
            index: record.index,
            seed: record.seed,
            params: SpecRecord::from(&record.sampled_spec),
            classification: report.classification,
            time_to_instability_s: report.time_to_instability,
            peak_force_amplitude_n: report.peak_force_amplitude,
            dominant_frequency_hz: report.oscillation.dominant_frequency,
            relative_amplitude: report.oscillation.relative_amplitude,
            settling_time_s: report.oscillation.settling_time,
            damping_violations: record.damping_violations,
            error: record.error.clone(),
            traces,
        };
        let json = serde_json::to_string(&line).map_err(|e| malformed(dir, e.to_string()))?;
        lines.push_str(&json);
        lines.push('\n');
        *counts
            .entry(report.classification.as_str().to_lowercase())
            .or_default() += 1;
    }
    let path = dir.join(DATASET_FILE);
    fs::write(&path, lines).map_err(io_err(&path))?;

    let manifest = Manifest {
        seed: context.ranges.map(|r| r.seed),
        count: records.len(),
        ranges: context.ranges.map(|r| RangesRecord {
            youngs_modulus_pa: r.youngs_modulus,
            num_masses: r.num_masses,
            time_step_s: r.time_step,
            damping_coefficient_ns_m: r.damping_coefficient,
        }),
        base: SpecRecord::from(context.base),
        scenario: ScenarioRecord::from(context.scenario),
        classification_counts: counts,
    };
    let body = toml::to_string(&manifest).map_err(|e| malformed(dir, e.to_string()))?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, format!("{TIMESTAMP_KEY} = {stamp}\n{body}")).map_err(io_err(&path))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetLine>, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| malformed(path, e.to_string())))
        .collect()
}

fn fmt_time_to_instability(t: f64) -> String {
    if t.is_finite() {
        format!("{t:.3}")
    } else {
        "inf".to_string()
    }
}

/// Renders records in the column layout of the experiment table.
pub fn report_table(records: &[ExperimentRecord]) -> String {
    let header = [
        "No.",
        "E (MPa)",
        "discretization",
        "Δt (s)",
        "Stability",
        "Sec To Instability",
    ];
    let rows: Vec<[String; 6]> = records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let s = &r.sampled_spec;
            [
                (k + 1).to_string(),
                format!("{}", (s.youngs_modulus / 1e6 * 1e6).round() / 1e6),
                format!("i={}", s.num_masses),
                format!("{}", s.time_step),
                r.report.classification.as_str().to_string(),
                fmt_time_to_instability(r.report.time_to_instability),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        out.push('|');
        for (cell, w) in cells.iter().zip(&widths) {
            let pad = w - cell.chars().count();
            let _ = write!(out, " {cell}{} |", " ".repeat(pad));
        }
        out.push('\n');
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(
        &rule.iter().map(String::as_str).collect::<Vec<_>>(),
        &mut out,
    );
    for row in &rows {
        line(
            &row.iter().map(String::as_str).collect::<Vec<_>>(),
            &mut out,
        );
    }
    out
}

/// Runs the single experiment described by `config` and writes its outputs
/// into `dir`.
pub fn execute_run(config: &RunConfig, dir: &Path) -> Result<ExperimentRecord, ExecuteError> {
    let record = run_experiment(&config.spec, &config.scenario, &config.settings)?;
    write_resolved_config(config, dir)?;
    if config.has_format(OutputFormat::Csv) {
        write_traces(&record, dir)?;
    }
    write_table(config, std::slice::from_ref(&record), dir)?;
    Ok(record)
}

/// Runs the randomized sweep described by `config` and writes the dataset.
pub fn execute_sweep(
    config: &RunConfig,
    dir: &Path,
    execution: Execution,
) -> Result<Vec<ExperimentRecord>, ExecuteError> {
    let records = sweep(
        &config.ranges,
        &config.spec,
        &config.scenario,
        config.count,
        &config.settings,
        execution,
    )?;
    write_resolved_config(config, dir)?;
    let context = DatasetContext {
        ranges: Some(&config.ranges),
        base: &config.spec,
        scenario: &config.scenario,
    };
    write_outputs(config, &records, dir, context)?;
    Ok(records)
}

/// Runs the five experiment-table presets under `config`'s scenario and
/// settings.
pub fn execute_table1(
    config: &RunConfig,
    dir: &Path,
    execution: Execution,
) -> Result<Vec<ExperimentRecord>, ExecuteError> {
    let specs: Vec<CableSpec> = table1_presets().iter().map(|p| p.spec).collect();
    let records = run_batch(&specs, &config.scenario, &config.settings, execution);
    write_resolved_config(config, dir)?;
    let context = DatasetContext {
        ranges: None,
        base: &specs[0],
        scenario: &config.scenario,
    };
    write_outputs(config, &records, dir, context)?;
    Ok(records)
}

fn write_outputs(
    config: &RunConfig,
    records: &[ExperimentRecord],
    dir: &Path,
    context: DatasetContext<'_>,
) -> Result<(), OutputError> {
    if config.has_format(OutputFormat::Jsonl) {
        write_dataset(records, dir, context)?;
    } else if config.has_format(OutputFormat::Csv) {
        for r in records {
            write_traces(r, &dir.join(run_dir_name(r.index)))?;
        }
    }
    write_table(config, records, dir)
}

fn write_table(
    config: &RunConfig,
    records: &[ExperimentRecord],
    dir: &Path,
) -> Result<(), OutputError> {
    if config.has_format(OutputFormat::Table) {
        let path = dir.join(TABLE_FILE);
        fs::write(&path, report_table(records)).map_err(io_err(&path))?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error(transparent)]
    Output(#[from] OutputError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::OscillationMetrics;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let echoed = cfg.to_toml();
        for key in [
            "length_m",
            "youngs_modulus_pa",
            "time_step_s",
            "scenario",
            "range_num_masses",
            "record_stride",
            "analysis_window_fraction",
        ] {
            assert!(
                echoed.contains(&format!("{key} = ")),
                "missing {key} in\n{echoed}"
            );
        }
        assert_eq!(RunConfig::parse(&echoed).unwrap(), cfg);
    }

    #[test]
    fn negative_modulus_names_the_key() {
        match RunConfig::parse("youngs_modulus_pa = -1\n") {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "youngs_modulus_pa"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RunConfig::parse("length_m = 0.5\nradius_m = = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = RunConfig::parse("length_m = 0.5\nlength_in_feet = 3\n").unwrap_err();
        assert!(err.to_string().contains("length_in_feet"), "{err}");
    }

    #[test]
    fn preset_then_overrides() {
        let cfg = RunConfig::parse("preset = \"table1_row4\"\n").unwrap();
        assert_eq!(cfg.spec.youngs_modulus, 1002.6e6);
        assert_eq!(cfg.spec.num_masses, 10);
        assert_eq!(cfg.spec.time_step, 5e-6);
        let cfg = RunConfig::parse("preset = \"table1_row4\"\nnum_masses = 6\n").unwrap();
        assert_eq!(cfg.spec.num_masses, 6);
        assert!(RunConfig::parse("preset = \"row9\"\n").is_err());
    }

    fn record(classification: Classification, tti: f64, e: f64) -> ExperimentRecord {
        ExperimentRecord {
            index: 0,
            seed: None,
            sampled_spec: CableSpec {
                youngs_modulus: e,
                ..CableSpec::default()
            },
            scenario: Scenario::default(),
            trace: Default::default(),
            report: StabilityReport {
                classification,
                time_to_instability: tti,
                peak_force_amplitude: 0.0,
                oscillation: OscillationMetrics::unavailable(),
            },
            damping_violations: 0,
            error: None,
        }
    }

    #[test]
    fn table_layout() {
        let empty = report_table(&[]);
        assert_eq!(empty.lines().count(), 2);
        assert!(empty.starts_with(
            "| No. | E (MPa) | discretization | Δt (s) | Stability | Sec To Instability |"
        ));
        let t = report_table(&[
            record(Classification::Stable, f64::INFINITY, 12.6e6),
            record(Classification::Unstable, 0.409, 1002.6e6),
        ]);
        let rows: Vec<&str> = t.lines().skip(2).collect();
        assert_eq!(rows.len(), 2);
        assert!(
            rows[0].contains("12.6") && rows[0].contains("inf") && rows[0].contains("0.000005")
        );
        assert!(rows[1].contains("1002.6") && rows[1].contains("0.409"));
    }
}
