//! Fixed-step semi-implicit Euler integration with scripted boundary nodes.

use std::fmt;
use std::sync::Arc;

use crate::cable::{BendingElement, CableSpec, CableState, StretchSegment};
use crate::error::{invalid, Error, Result};
use crate::forces::{accumulate_into, ForceBreakdown};
use crate::Vec3;

type MotionFn = dyn Fn(f64) -> (Vec3, Vec3) + Send + Sync;

/// Prescribed motion of a held node.
#[derive(Clone)]
pub enum Motion {
    Hold(Vec3),
    /// Holds `from` until `t_start`, moves at constant velocity, then holds `to`
    /// from `t_end` on.
    LinearRamp {
        from: Vec3,
        to: Vec3,
        t_start: f64,
        t_end: f64,
    },
    /// Arbitrary `time -> (position, velocity)` map.
    Custom(Arc<MotionFn>),
}

impl fmt::Debug for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Motion::Hold(p) => f.debug_tuple("Hold").field(p).finish(),
            Motion::LinearRamp {
                from,
                to,
                t_start,
                t_end,
            } => f
                .debug_struct("LinearRamp")
                .field("from", from)
                .field("to", to)
                .field("t_start", t_start)
                .field("t_end", t_end)
                .finish(),
            Motion::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Motion {
    pub fn evaluate(&self, t: f64) -> (Vec3, Vec3) {
        match self {
            Motion::Hold(p) => (*p, Vec3::zeros()),
            Motion::LinearRamp {
                from,
                to,
                t_start,
                t_end,
            } => {
                if t <= *t_start {
                    (*from, Vec3::zeros())
                } else if t >= *t_end {
                    (*to, Vec3::zeros())
                } else {
                    let span = t_end - t_start;
                    let frac = (t - t_start) / span;
                    (from + (to - from) * frac, (to - from) / span)
                }
            }
            Motion::Custom(f) => f(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryScript {
    pub node_index: usize,
    pub motion: Motion,
}

impl BoundaryScript {
    pub fn hold(node_index: usize, position: Vec3) -> Self {
        Self {
            node_index,
            motion: Motion::Hold(position),
        }
    }

    pub fn linear_ramp(node_index: usize, from: Vec3, to: Vec3, t_start: f64, t_end: f64) -> Self {
        Self {
            node_index,
            motion: Motion::LinearRamp {
                from,
                to,
                t_start,
                t_end,
            },
        }
    }

    pub fn evaluate(&self, t: f64) -> (Vec3, Vec3) {
        self.motion.evaluate(t)
    }
}

/// Recorded run: snapshots every `record_stride` steps plus the last state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub states: Vec<CableState>,
    /// Forces evaluated at each snapshot; NaN-filled where evaluation failed.
    pub force_records: Vec<ForceBreakdown>,
    pub record_stride: usize,
    /// Time of the first invalid state, if the run stopped early.
    pub halted_at: Option<f64>,
    pub steps_taken: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.sample_times.last().copied().unwrap_or(0.0)
    }
}

fn check_scripts(state: &CableState, scripts: &[BoundaryScript]) -> Result<()> {
    for s in scripts {
        if s.node_index >= state.len() {
            return Err(Error::NodeOutOfRange {
                index: s.node_index,
                len: state.len(),
            });
        }
    }
    Ok(())
}

/// Overwrites scripted nodes with their prescribed position and velocity at
/// `state.time` and marks them fixed.
pub fn apply_scripts(state: &mut CableState, scripts: &[BoundaryScript]) {
    for s in scripts {
        let (p, v) = s.evaluate(state.time);
        state.positions[s.node_index] = p;
        state.velocities[s.node_index] = v;
        state.fixed_mask[s.node_index] = true;
    }
}

/// Reusable integrator for one cable; owns the force buffer so stepping does
/// not allocate.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    spec: &'a CableSpec,
    segments: &'a [StretchSegment],
    bends: &'a [BendingElement],
    scripts: &'a [BoundaryScript],
    forces: ForceBreakdown,
}

impl<'a> Stepper<'a> {
    pub fn new(
        spec: &'a CableSpec,
        segments: &'a [StretchSegment],
        bends: &'a [BendingElement],
        scripts: &'a [BoundaryScript],
    ) -> Self {
        Self {
            spec,
            segments,
            bends,
            scripts,
            forces: ForceBreakdown::zeros(0),
        }
    }

    /// Forces at `state`, kept in the internal buffer.
    pub fn evaluate(&mut self, state: &CableState) -> Result<&ForceBreakdown> {
        accumulate_into(
            &mut self.forces,
            state,
            self.segments,
            self.bends,
            self.spec,
            None,
        )?;
        Ok(&self.forces)
    }

    /// Advances `state` by one step using forces already held in the buffer
    /// (from [`Stepper::evaluate`] on the same state). `new_time` is the time
    /// after the step.
    fn advance(&self, state: &mut CableState, new_time: f64) {
        let dt = self.spec.time_step;
        for i in 0..state.len() {
            if state.fixed_mask[i] {
                continue;
            }
            let accel = self.forces.total[i] / state.node_masses[i];
            state.velocities[i] += accel * dt;
            let v = state.velocities[i];
            state.positions[i] += v * dt;
        }
        state.time = new_time;
        apply_scripts(state, self.scripts);
        if !state.is_finite() {
            state.valid = false;
        }
    }

    /// One full step in place: force evaluation then update.
    pub fn step_in_place(&mut self, state: &mut CableState) {
        let new_time = state.time + self.spec.time_step;
        self.step_to(state, new_time);
    }

    fn step_to(&mut self, state: &mut CableState, new_time: f64) {
        if !state.valid {
            state.time = new_time;
            return;
        }
        if self.evaluate(state).is_err() {
            state.valid = false;
            state.time = new_time;
            return;
        }
        self.advance(state, new_time);
    }
}

/// Advances a copy of `state` by one fixed step.
///
/// Free nodes: v ← v + (F/m)·Δt, then x ← x + v·Δt. Scripted nodes take their
/// prescribed position and velocity at the new time. A step that meets a
/// degenerate segment or produces non-finite values returns a state with
/// `valid == false`.
pub fn step(
    state: &CableState,
    segments: &[StretchSegment],
    bends: &[BendingElement],
    spec: &CableSpec,
    scripts: &[BoundaryScript],
) -> CableState {
    let mut next = state.clone();
    if check_scripts(state, scripts).is_err() {
        next.valid = false;
        return next;
    }
    Stepper::new(spec, segments, bends, scripts).step_in_place(&mut next);
    next
}

/// Number of steps needed to cover `duration`, i.e. ⌈duration/Δt⌉.
pub fn step_count(duration: f64, dt: f64) -> usize {
    let ratio = duration / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integrates from `initial` for `duration` seconds.
///
/// Snapshots are kept every `record_stride` steps (t = 0 included) plus the
/// final state. The run stops at the first invalid state, which is recorded
/// as the last snapshot and reported in [`Trajectory::halted_at`].
pub fn run(
    spec: &CableSpec,
    initial: &CableState,
    segments: &[StretchSegment],
    bends: &[BendingElement],
    scripts: &[BoundaryScript],
    duration: f64,
    record_stride: usize,
) -> Result<Trajectory> {
    spec.validate()?;
    initial.check_consistent()?;
    check_scripts(initial, scripts)?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration", format!("must be > 0, got {duration}")));
    }
    if record_stride == 0 {
        return Err(invalid("record_stride", "must be >= 1"));
    }

    let dt = spec.time_step;
    let total_steps = step_count(duration, dt);
    let start = initial.time;
    let mut stepper = Stepper::new(spec, segments, bends, scripts);
    let mut state = initial.clone();
    apply_scripts(&mut state, scripts);
    if !state.is_finite() {
        state.valid = false;
    }

    let capacity = total_steps / record_stride + 2;
    let mut traj = Trajectory {
        sample_times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        force_records: Vec::with_capacity(capacity),
        record_stride,
        halted_at: None,
        steps_taken: 0,
    };

    let mut k = 0;
    loop {
        let forces_ok = state.valid && stepper.evaluate(&state).is_ok();
        if !forces_ok {
            state.valid = false;
        }
        let last = k == total_steps || !state.valid;
        if k % record_stride == 0 || last {
            traj.sample_times.push(state.time);
            traj.force_records.push(if forces_ok {
                stepper.forces.clone()
            } else {
                ForceBreakdown::nan(state.len())
            });
            traj.states.push(state.clone());
        }
        if !state.valid {
            traj.halted_at = Some(state.time);
            break;
        }
        if last {
            break;
        }
        k += 1;
        // Time from the step index, so snapshot spacing does not drift.
        stepper.advance(&mut state, start + k as f64 * dt);
        traj.steps_taken = k;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cable::discretize;
    use approx::assert_relative_eq;

    fn single_mass() -> CableState {
        CableState {
            time: 0.0,
            positions: vec![Vec3::zeros()],
            velocities: vec![Vec3::zeros()],
            node_masses: vec![1.0],
            fixed_mask: vec![false],
            valid: true,
        }
    }

    #[test]
    fn force_free_step_only_advances_time() {
        let spec = CableSpec {
            gravity: Vec3::zeros(),
            ..CableSpec::default()
        };
        let d = discretize(&spec, Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let next = step(&d.state, &d.segments, &d.bends, &spec, &[]);
        assert_eq!(next.time, spec.time_step);
        for (a, b) in next.positions.iter().zip(&d.state.positions) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(next.valid);
    }

    #[test]
    fn free_fall_velocity_is_linear_in_steps() {
        let spec = CableSpec {
            time_step: 0.001,
            damping_coefficient: 0.0,
            ..CableSpec::default()
        };
        let mut state = single_mass();
        for k in 1..=500 {
            state = step(&state, &[], &[], &spec, &[]);
            assert_relative_eq!(
                state.velocities[0].z,
                -9.81 * k as f64 * 0.001,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn held_node_never_moves() {
        let spec = CableSpec::default();
        let d = discretize(&spec, Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let anchor = d.state.positions[0];
        let scripts = [BoundaryScript::hold(0, anchor)];
        let mut state = d.state.clone();
        apply_scripts(&mut state, &scripts);
        for _ in 0..2000 {
            state = step(&state, &d.segments, &d.bends, &spec, &scripts);
            assert_eq!(state.positions[0], anchor);
            assert_eq!(state.velocities[0], Vec3::zeros());
        }
        // The free end has fallen.
        assert!(state.positions[9].z < 0.0);
    }

    #[test]
    fn ramp_profile() {
        let from = Vec3::new(0.5, 0.0, 0.0);
        let to = from + Vec3::new(0.0, 0.0, 0.005);
        let m = Motion::LinearRamp {
            from,
            to,
            t_start: 0.5,
            t_end: 0.6,
        };
        assert_eq!(m.evaluate(0.0), (from, Vec3::zeros()));
        assert_eq!(m.evaluate(0.7), (to, Vec3::zeros()));
        let (p, v) = m.evaluate(0.55);
        assert_relative_eq!(p.z, 0.0025, max_relative = 1e-12);
        assert_relative_eq!(v.z, 0.05, max_relative = 1e-12);
    }

    #[test]
    fn snapshot_counting() {
        let spec = CableSpec::default();
        let d = discretize(&spec, Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let traj = run(
            &spec,
            &d.state,
            &d.segments,
            &d.bends,
            &[],
            10.0 * spec.time_step,
            1,
        )
        .unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.sample_times[0], 0.0);
        assert_eq!(traj.steps_taken, 10);

        let traj = run(
            &spec,
            &d.state,
            &d.segments,
            &d.bends,
            &[],
            10.0 * spec.time_step,
            4,
        )
        .unwrap();
        // Steps 0, 4, 8 and the final state at 10.
        assert_eq!(traj.len(), 4);
        for w in traj.sample_times.windows(2).take(2) {
            assert!((w[1] - w[0] - 4.0 * spec.time_step).abs() < 1e-12);
        }
    }

    #[test]
    fn run_rejects_bad_arguments() {
        let spec = CableSpec::default();
        let d = discretize(&spec, Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(run(&spec, &d.state, &d.segments, &d.bends, &[], 0.0, 1).is_err());
        assert!(run(&spec, &d.state, &d.segments, &d.bends, &[], 1e-3, 0).is_err());
        let bad = [BoundaryScript::hold(99, Vec3::zeros())];
        assert!(run(&spec, &d.state, &d.segments, &d.bends, &bad, 1e-3, 1).is_err());
    }

    #[test]
    fn non_finite_state_halts_run() {
        let spec = CableSpec::default();
        let d = discretize(&spec, Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let blowup = Motion::Custom(Arc::new(|t: f64| {
            if t > 1e-4 {
                (Vec3::repeat(f64::NAN), Vec3::zeros())
            } else {
                (Vec3::zeros(), Vec3::zeros())
            }
        }));
        let scripts = [BoundaryScript {
            node_index: 0,
            motion: blowup,
        }];
        let traj = run(&spec, &d.state, &d.segments, &d.bends, &scripts, 1e-3, 10).unwrap();
        let halt = traj.halted_at.expect("run should halt");
        assert!(halt > 1e-4 && halt < 1.2e-4);
        assert!(!traj.states.last().unwrap().valid);
        assert_eq!(*traj.sample_times.last().unwrap(), halt);
    }

    #[test]
    fn step_count_rounds_up() {
        assert_eq!(step_count(10.0 * 5e-6, 5e-6), 10);
        assert_eq!(step_count(1.0, 5e-6), 200_000);
        assert_eq!(step_count(1.05e-5, 5e-6), 3);
    }
}
