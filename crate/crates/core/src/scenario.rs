//! Experiment protocols, domain-randomized parameter sampling and sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cable::{discretize, CableSpec, CableState};
use crate::error::{invalid, Result};
use crate::integrator::{run, BoundaryScript, Trajectory};
use crate::parallel::{map_indexed, Execution};
use crate::stability::{
    analyze, check_damping, AnalysisSettings, Classification, OscillationMetrics, StabilityReport,
};
use crate::Vec3;

/// Cable axis at construction; gravity acts along −z.
pub const CABLE_DIRECTION: Vec3 = Vec3::new(1.0, 0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Both ends held at their initial positions.
    StaticFixedEnds,
    /// First end held; the last end holds, ramps by `displacement`, holds.
    EndDisplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// m.
    pub displacement: Vec3,
    /// s, hold time before the ramp starts.
    pub settle_duration: f64,
    /// s.
    pub ramp_duration: f64,
    /// s.
    pub total_duration: f64,
    /// Zero-based node indices whose traces are kept. Indices past the last
    /// node of a given cable are skipped for that cable.
    pub monitored_nodes: Vec<usize>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::EndDisplacement,
            displacement: Vec3::new(0.0, 0.0, 0.005),
            settle_duration: 0.5,
            ramp_duration: 0.1,
            total_duration: 1.0,
            monitored_nodes: vec![2, 4, 8],
        }
    }
}

impl Scenario {
    pub fn static_fixed_ends(total_duration: f64) -> Self {
        Self {
            kind: ScenarioKind::StaticFixedEnds,
            displacement: Vec3::zeros(),
            total_duration,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_duration >= 0.0 && self.ramp_duration.is_finite()) {
            return Err(invalid("ramp_duration", "must be >= 0"));
        }
        if !(self.settle_duration >= 0.0 && self.settle_duration.is_finite()) {
            return Err(invalid("settle_duration", "must be >= 0"));
        }
        if !(self.total_duration > self.ramp_duration && self.total_duration.is_finite()) {
            return Err(invalid(
                "total_duration",
                "must be finite and exceed ramp_duration",
            ));
        }
        if !self.displacement.iter().all(|c| c.is_finite()) {
            return Err(invalid("displacement", "components must be finite"));
        }
        Ok(())
    }

    /// Monitored nodes that exist on a cable of `num_masses` nodes.
    pub fn monitored_for(&self, num_masses: usize) -> Vec<usize> {
        self.monitored_nodes
            .iter()
            .copied()
            .filter(|i| *i < num_masses)
            .collect()
    }
}

/// Boundary scripts for `scenario`, anchored at the nodes' current positions.
pub fn build_scenario_scripts(scenario: &Scenario, state: &CableState) -> Vec<BoundaryScript> {
    let n = state.len();
    let first = state.positions[0];
    let last = state.positions[n - 1];
    let moving = match scenario.kind {
        ScenarioKind::StaticFixedEnds => BoundaryScript::hold(n - 1, last),
        ScenarioKind::EndDisplacement => BoundaryScript::linear_ramp(
            n - 1,
            last,
            last + scenario.displacement,
            scenario.settle_duration,
            scenario.settle_duration + scenario.ramp_duration,
        ),
    };
    vec![BoundaryScript::hold(0, first), moving]
}

/// Sampling ranges for domain randomization. Continuous parameters are drawn
/// log-uniformly, the node count uniformly (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationRanges {
    /// Pa.
    pub youngs_modulus: [f64; 2],
    pub num_masses: [usize; 2],
    /// s.
    pub time_step: [f64; 2],
    /// N·s/m.
    pub damping_coefficient: [f64; 2],
    pub seed: u64,
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            youngs_modulus: [12.6e6, 1002.6e6],
            num_masses: [6, 10],
            time_step: [1e-6, 5e-6],
            damping_coefficient: [1e-3, 0.5],
            seed: 42,
        }
    }
}

impl RandomizationRanges {
    pub fn validate(&self) -> Result<()> {
        let continuous = [
            ("youngs_modulus", self.youngs_modulus),
            ("time_step", self.time_step),
            ("damping_coefficient", self.damping_coefficient),
        ];
        for (name, [lo, hi]) in continuous {
            if !(lo > 0.0 && hi.is_finite() && lo <= hi) {
                return Err(invalid(
                    name,
                    format!("need 0 < min <= max, got [{lo}, {hi}]"),
                ));
            }
        }
        let [lo, hi] = self.num_masses;
        if !(lo >= 2 && lo <= hi) {
            return Err(invalid(
                "num_masses",
                format!("need 2 <= min <= max, got [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    if lo == hi {
        lo
    } else {
        (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
    }
}

/// Draws the `index`-th parameter set. The draw depends only on
/// `(ranges.seed, index)`; fields not covered by `ranges` come from `base`.
pub fn sample(ranges: &RandomizationRanges, base: &CableSpec, index: u64) -> CableSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(ranges.seed);
    rng.set_stream(index);
    let youngs_modulus = log_uniform(&mut rng, ranges.youngs_modulus);
    let num_masses = rng.random_range(ranges.num_masses[0]..=ranges.num_masses[1]);
    let time_step = log_uniform(&mut rng, ranges.time_step);
    let damping_coefficient = log_uniform(&mut rng, ranges.damping_coefficient);
    CableSpec {
        youngs_modulus,
        num_masses,
        time_step,
        damping_coefficient,
        ..*base
    }
}

/// Recording and analysis options for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    /// Steps between snapshots. `None` derives it from `record_interval`.
    pub record_stride: Option<usize>,
    /// s, target snapshot spacing when `record_stride` is unset.
    pub record_interval: f64,
    pub analysis: AnalysisSettings,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            record_stride: None,
            record_interval: 1e-3,
            analysis: AnalysisSettings::default(),
        }
    }
}

impl RunSettings {
    pub fn stride_for(&self, time_step: f64) -> usize {
        self.record_stride
            .unwrap_or_else(|| (self.record_interval / time_step).round() as usize)
            .max(1)
    }
}

/// Snapshot-rate traces kept in a record: monitored node states and the force
/// on the sensor node (node 0, held in every scenario).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSummary {
    pub times: Vec<f64>,
    pub monitored_nodes: Vec<usize>,
    /// `node_positions[j][k]`: node `monitored_nodes[j]` at `times[k]`.
    pub node_positions: Vec<Vec<Vec3>>,
    pub node_velocities: Vec<Vec<Vec3>>,
    pub sensor_node: usize,
    /// Load the sensor node exerts on its constraint, N.
    pub reaction_force: Vec<Vec3>,
    /// Centroid of the initial state, reference for position divergence.
    pub initial_centroid: Vec3,
}

impl TraceSummary {
    fn from_trajectory(traj: &Trajectory, monitored: &[usize], sensor_node: usize) -> Self {
        Self {
            times: traj.sample_times.clone(),
            monitored_nodes: monitored.to_vec(),
            node_positions: monitored
                .iter()
                .map(|i| traj.states.iter().map(|s| s.positions[*i]).collect())
                .collect(),
            node_velocities: monitored
                .iter()
                .map(|i| traj.states.iter().map(|s| s.velocities[*i]).collect())
                .collect(),
            sensor_node,
            reaction_force: traj
                .force_records
                .iter()
                .map(|f| f.total[sensor_node])
                .collect(),
            initial_centroid: traj.states.first().map_or(Vec3::zeros(), |s| s.centroid()),
        }
    }
}

/// One experiment: parameters, traces and analysis. Re-runnable from
/// `sampled_spec` and `scenario` (and `seed`/`index` for sampled runs).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub index: usize,
    pub seed: Option<u64>,
    pub sampled_spec: CableSpec,
    pub scenario: Scenario,
    pub trace: TraceSummary,
    pub report: StabilityReport,
    pub damping_violations: usize,
    /// Set when the experiment could not be run at all.
    pub error: Option<String>,
}

impl ExperimentRecord {
    fn failed(
        index: usize,
        seed: Option<u64>,
        spec: &CableSpec,
        scenario: &Scenario,
        err: String,
    ) -> Self {
        Self {
            index,
            seed,
            sampled_spec: *spec,
            scenario: scenario.clone(),
            trace: TraceSummary::default(),
            report: StabilityReport {
                classification: Classification::Unstable,
                time_to_instability: 0.0,
                peak_force_amplitude: f64::NAN,
                oscillation: OscillationMetrics::unavailable(),
            },
            damping_violations: 0,
            error: Some(err),
        }
    }
}

/// Discretizes, integrates and analyzes one cable under `scenario`.
///
/// A run that diverges is reported as Unstable, not as an error; errors are
/// reserved for invalid inputs.
pub fn run_experiment(
    spec: &CableSpec,
    scenario: &Scenario,
    settings: &RunSettings,
) -> Result<ExperimentRecord> {
    spec.validate()?;
    scenario.validate()?;
    let d = discretize(spec, Vec3::zeros(), CABLE_DIRECTION)?;
    let scripts = build_scenario_scripts(scenario, &d.state);
    let stride = settings.stride_for(spec.time_step);
    let traj = run(
        spec,
        &d.state,
        &d.segments,
        &d.bends,
        &scripts,
        scenario.total_duration,
        stride,
    )?;
    // Held end: the simulated force/torque sensor.
    let sensor_node = 0;
    let report = analyze(spec, &traj, sensor_node, &settings.analysis);
    let damping_violations = check_damping(spec, &traj)
        .iter()
        .filter(|c| c.violated)
        .count();
    let monitored = scenario.monitored_for(spec.num_masses);
    Ok(ExperimentRecord {
        index: 0,
        seed: None,
        sampled_spec: *spec,
        scenario: scenario.clone(),
        trace: TraceSummary::from_trajectory(&traj, &monitored, sensor_node),
        report,
        damping_violations,
        error: None,
    })
}

/// Runs `count` sampled experiments; output is ordered by index whatever the
/// execution mode.
pub fn sweep(
    ranges: &RandomizationRanges,
    base: &CableSpec,
    scenario: &Scenario,
    count: usize,
    settings: &RunSettings,
    execution: Execution,
) -> Result<Vec<ExperimentRecord>> {
    ranges.validate()?;
    if count == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    Ok(map_indexed(count, execution, |index| {
        let spec = sample(ranges, base, index as u64);
        match run_experiment(&spec, scenario, settings) {
            Ok(mut record) => {
                record.index = index;
                record.seed = Some(ranges.seed);
                record
            }
            Err(e) => {
                ExperimentRecord::failed(index, Some(ranges.seed), &spec, scenario, e.to_string())
            }
        }
    }))
}

/// Runs fixed parameter sets, e.g. presets, in the given order.
pub fn run_batch(
    specs: &[CableSpec],
    scenario: &Scenario,
    settings: &RunSettings,
    execution: Execution,
) -> Vec<ExperimentRecord> {
    map_indexed(specs.len(), execution, |index| {
        match run_experiment(&specs[index], scenario, settings) {
            Ok(mut record) => {
                record.index = index;
                record
            }
            Err(e) => ExperimentRecord::failed(index, None, &specs[index], scenario, e.to_string()),
        }
    })
}

/// Named parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub spec: CableSpec,
    /// Stability column of the experiment table, where the preset has one.
    pub expected: Option<Classification>,
}

/// Per-node damping shared by the experiment-table presets, N·s/m.
///
/// With semi-implicit Euler and uniform per-node damping, each mode of
/// angular frequency ω is stable while ω²Δt² + 2·(k_d/m)·Δt < 4. This value
/// puts 2·(k_d/m)·Δt just under 4 for the 10-mass default cable at
/// Δt = 5 µs, so stiffness alone decides the outcome between the table rows:
/// the 1002.6 MPa row crosses the limit and diverges after roughly 0.4 s,
/// the 526 MPa row stays inside it.
pub const TABLE1_DAMPING: f64 = 249.18;

fn table_spec(youngs_modulus: f64, num_masses: usize, time_step: f64) -> CableSpec {
    CableSpec {
        youngs_modulus,
        num_masses,
        time_step,
        damping_coefficient: TABLE1_DAMPING,
        ..CableSpec::default()
    }
}

/// The five experiment-table rows, in positional order.
pub fn table1_presets() -> Vec<Preset> {
    use Classification::{Stable, Unstable};
    vec![
        Preset {
            name: "table1_row1",
            spec: table_spec(12.6e6, 10, 5e-6),
            expected: Some(Stable),
        },
        Preset {
            name: "table1_row2",
            spec: table_spec(526.0e6, 10, 5e-6),
            expected: Some(Stable),
        },
        Preset {
            name: "table1_row3",
            spec: table_spec(1002.0e6, 6, 5e-6),
            expected: Some(Stable),
        },
        Preset {
            name: "table1_row4",
            spec: table_spec(1002.6e6, 10, 5e-6),
            expected: Some(Unstable),
        },
        Preset {
            name: "table1_row5",
            spec: table_spec(1002.6e6, 10, 1e-7),
            expected: Some(Stable),
        },
    ]
}

/// All named presets: the table rows, a 6-mass soft cable, and the stiff
/// 10-mass cable at a coarser 50 µs step.
pub fn presets() -> Vec<Preset> {
    let mut all = table1_presets();
    all.push(Preset {
        name: "soft_6_masses",
        spec: table_spec(12.6e6, 6, 5e-6),
        expected: None,
    });
    all.push(Preset {
        name: "stiff_coarse_step",
        spec: table_spec(1002.6e6, 10, 5e-5),
        expected: None,
    });
    all
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
