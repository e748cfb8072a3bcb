//! Damping bound, divergence detection and force-oscillation metrics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cable::CableSpec;
use crate::error::{invalid, Result};
use crate::integrator::Trajectory;
use crate::Vec3;

/// Velocities below this magnitude make the damping bound vacuous.
pub const REST_SPEED: f64 = 1e-12;
/// Minimum number of samples accepted by [`oscillation_metrics`].
pub const MIN_TRACE_SAMPLES: usize = 8;
/// Band around the final mean used for settling, as a fraction of |mean|.
pub const SETTLING_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    Oscillatory,
    Unstable,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "Stable",
            Classification::Oscillatory => "Oscillatory",
            Classification::Unstable => "Unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationMetrics {
    /// Hz.
    #[serde(rename = "dominant_frequency_hz", with = "crate::serde_float")]
    pub dominant_frequency: f64,
    #[serde(with = "crate::serde_float")]
    pub relative_amplitude: f64,
    /// s, measured from the first sample; ∞ if the trace never settles.
    #[serde(rename = "settling_time_s", with = "crate::serde_float")]
    pub settling_time: f64,
}

impl OscillationMetrics {
    /// Metrics for a trace that could not be analyzed.
    pub fn unavailable() -> Self {
        Self {
            dominant_frequency: f64::NAN,
            relative_amplitude: f64::NAN,
            settling_time: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub classification: Classification,
    /// s from simulation start; ∞ for runs that never diverge.
    #[serde(rename = "time_to_instability_s", with = "crate::serde_float")]
    pub time_to_instability: f64,
    /// N, max |total force| at the sensor node over the analysis window.
    #[serde(rename = "peak_force_amplitude_n", with = "crate::serde_float")]
    pub peak_force_amplitude: f64,
    pub oscillation: OscillationMetrics,
}

/// Thresholds used when turning a trajectory into a [`StabilityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    /// Position limit as a multiple of the cable length.
    pub position_limit_factor: f64,
    /// m/s.
    pub velocity_limit: f64,
    /// Relative amplitude above which a stable run is Oscillatory.
    pub oscillatory_threshold: f64,
    /// Fraction of the run, at its end, used for the oscillation window.
    pub window_fraction: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            position_limit_factor: 10.0,
            velocity_limit: 1e3,
            oscillatory_threshold: 0.1,
            window_fraction: 0.2,
        }
    }
}

/// Upper bound on k_d from |v·m·Δt + F| / |v|.
///
/// `velocity` and `force` are combined as vectors in the numerator. Returns
/// ∞ when the node is at rest.
pub fn damping_bound(velocity: &Vec3, mass: f64, dt: f64, force: &Vec3) -> f64 {
    let speed = velocity.norm();
    if speed < REST_SPEED {
        return f64::INFINITY;
    }
    (velocity * (mass * dt) + force).norm() / speed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingCheck {
    pub time: f64,
    pub node: usize,
    pub bound: f64,
    pub violated: bool,
}

/// Evaluates [`damping_bound`] for every free node at every snapshot, with
/// F the internal (stretch + bend) force.
pub fn check_damping(spec: &CableSpec, trajectory: &Trajectory) -> Vec<DampingCheck> {
    let mut out = Vec::new();
    for ((time, state), forces) in trajectory
        .sample_times
        .iter()
        .zip(&trajectory.states)
        .zip(&trajectory.force_records)
    {
        for node in 0..state.len() {
            if state.fixed_mask[node] {
                continue;
            }
            let bound = damping_bound(
                &state.velocities[node],
                state.node_masses[node],
                spec.time_step,
                &forces.internal(node),
            );
            out.push(DampingCheck {
                time: *time,
                node,
                bound,
                violated: spec.damping_coefficient > bound,
            });
        }
    }
    out
}

/// Time of the earliest snapshot whose state is invalid, non-finite, strays
/// more than `position_limit` from the initial centroid or moves faster than
/// `velocity_limit`. ∞ if none.
pub fn detect_instability(
    trajectory: &Trajectory,
    position_limit: f64,
    velocity_limit: f64,
) -> f64 {
    let Some(first) = trajectory.states.first() else {
        return f64::INFINITY;
    };
    let centroid = first.centroid();
    for (time, state) in trajectory.sample_times.iter().zip(&trajectory.states) {
        if !state.valid
            || diverged(
                &state.positions,
                &state.velocities,
                &centroid,
                position_limit,
                velocity_limit,
            )
        {
            return *time;
        }
    }
    f64::INFINITY
}

/// Per-snapshot divergence test shared by trajectory and stored-trace
/// analysis.
pub fn diverged(
    positions: &[Vec3],
    velocities: &[Vec3],
    centroid: &Vec3,
    position_limit: f64,
    velocity_limit: f64,
) -> bool {
    let bad_position = positions.iter().any(|p| {
        // Negated comparison so NaN counts as diverged.
        !p.iter().all(|c| c.is_finite()) || !((p - centroid).norm() <= position_limit)
    });
    let bad_velocity = velocities
        .iter()
        .any(|v| !v.iter().all(|c| c.is_finite()) || !(v.norm() <= velocity_limit));
    bad_position || bad_velocity
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Frequency, amplitude and settling of a uniformly sampled scalar trace.
///
/// The spectrum and the relative amplitude use the final `window` seconds of
/// the trace (the whole trace if `window` is not positive or exceeds it).
/// Settling time is measured over the whole trace against the window mean.
pub fn oscillation_metrics(
    times: &[f64],
    values: &[f64],
    window: f64,
) -> Result<OscillationMetrics> {
    if times.len() != values.len() {
        return Err(invalid("force_trace", "times and values differ in length"));
    }
    let n = values.len();
    if n < MIN_TRACE_SAMPLES {
        return Err(invalid(
            "force_trace",
            format!("need at least {MIN_TRACE_SAMPLES} samples, got {n}"),
        ));
    }
    let t0 = times[0];
    let t_end = times[n - 1];
    let dt = (t_end - t0) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(invalid("force_trace", "sample times must increase"));
    }

    let start = if window > 0.0 && window < t_end - t0 {
        let cut = t_end - window;
        times
            .iter()
            .position(|t| *t >= cut - 1e-12 * dt)
            .unwrap_or(0)
    } else {
        0
    };
    let start = start.min(n - 2);
    let tail = &values[start..];
    let tail_mean = mean(tail);

    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let spread = hi - lo;
    let relative_amplitude = if tail_mean.abs() <= 1e-12 {
        if spread > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        spread / (2.0 * tail_mean.abs())
    };

    let dominant_frequency = dominant_frequency(tail, tail_mean, dt);

    let band = SETTLING_BAND * tail_mean.abs();
    let settling_time = match values
        .iter()
        .rposition(|v| !((v - tail_mean).abs() <= band))
    {
        None => 0.0,
        Some(last) if last + 1 == n => f64::INFINITY,
        Some(last) => times[last + 1] - t0,
    };

    Ok(OscillationMetrics {
        dominant_frequency,
        relative_amplitude,
        settling_time,
    })
}

/// Peak of the rectangular-window magnitude spectrum, zero bin excluded.
fn dominant_frequency(samples: &[f64], mean: f64, dt: f64) -> f64 {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut best = (0usize, 0.0f64);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let mag = c.norm();
        if mag > best.1 {
            best = (k, mag);
        }
    }
    best.0 as f64 / (n as f64 * dt)
}

/// Unstable iff a divergence time exists; otherwise Oscillatory when the
/// relative amplitude exceeds `threshold`.
pub fn classify(
    time_to_instability: f64,
    relative_amplitude: f64,
    threshold: f64,
) -> Classification {
    if time_to_instability.is_finite() {
        Classification::Unstable
    } else if relative_amplitude > threshold {
        Classification::Oscillatory
    } else {
        Classification::Stable
    }
}

/// Full report for a trajectory, using the total force on `sensor_node`
/// (its z-component for the oscillation metrics).
pub fn analyze(
    spec: &CableSpec,
    trajectory: &Trajectory,
    sensor_node: usize,
    settings: &AnalysisSettings,
) -> StabilityReport {
    let time_to_instability = detect_instability(
        trajectory,
        settings.position_limit_factor * spec.length,
        settings.velocity_limit,
    );
    let forces: Vec<Vec3> = trajectory
        .force_records
        .iter()
        .map(|f| f.total[sensor_node])
        .collect();
    report_from_series(
        time_to_instability,
        &trajectory.sample_times,
        &forces,
        trajectory.duration(),
        settings,
    )
}

/// Builds a report from a divergence time and a sensor force series.
///
/// Only samples before the divergence time enter the oscillation metrics and
/// the peak force; the window is `settings.window_fraction · duration`.
pub fn report_from_series(
    time_to_instability: f64,
    times: &[f64],
    sensor_forces: &[Vec3],
    duration: f64,
    settings: &AnalysisSettings,
) -> StabilityReport {
    let usable = times
        .iter()
        .take_while(|t| **t < time_to_instability)
        .count()
        .min(sensor_forces.len());
    let times = &times[..usable];
    let forces = &sensor_forces[..usable];
    let z: Vec<f64> = forces.iter().map(|f| f.z).collect();
    let window = settings.window_fraction * duration;
    let oscillation =
        oscillation_metrics(times, &z, window).unwrap_or(OscillationMetrics::unavailable());

    let window_start = times.last().map_or(0.0, |t| t - window);
    let peak_force_amplitude = times
        .iter()
        .zip(forces)
        .filter(|(t, _)| **t >= window_start)
        .map(|(_, f)| f.norm())
        .fold(0.0, f64::max);

    StabilityReport {
        classification: classify(
            time_to_instability,
            oscillation.relative_amplitude,
            settings.oscillatory_threshold,
        ),
        time_to_instability,
        peak_force_amplitude,
        oscillation,
    }
}
