//! Per-node force evaluation: stretch springs, bending springs, viscous
//! damping and external loads, plus the matching energies.

use crate::cable::{BendingElement, CableSpec, CableState, StretchSegment};
use crate::error::{Error, Result};
use crate::Vec3;

/// Below this length a segment is treated as numerically destroyed.
pub const DEGENERATE_LENGTH: f64 = 1e-12;

/// Per-node forces split by source. `total` is the componentwise sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceBreakdown {
    pub stretch: Vec<Vec3>,
    pub bend: Vec<Vec3>,
    pub damping: Vec<Vec3>,
    pub external: Vec<Vec3>,
    pub total: Vec<Vec3>,
}

impl ForceBreakdown {
    pub fn zeros(n: usize) -> Self {
        Self {
            stretch: vec![Vec3::zeros(); n],
            bend: vec![Vec3::zeros(); n],
            damping: vec![Vec3::zeros(); n],
            external: vec![Vec3::zeros(); n],
            total: vec![Vec3::zeros(); n],
        }
    }

    /// Placeholder record for a state whose forces cannot be evaluated.
    pub fn nan(n: usize) -> Self {
        let v = vec![Vec3::repeat(f64::NAN); n];
        Self {
            stretch: v.clone(),
            bend: v.clone(),
            damping: v.clone(),
            external: v.clone(),
            total: v,
        }
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    /// Stretch plus bend on node `i`: minus the elastic energy gradient.
    pub fn internal(&self, i: usize) -> Vec3 {
        self.stretch[i] + self.bend[i]
    }

    fn clear(&mut self) {
        for buf in [
            &mut self.stretch,
            &mut self.bend,
            &mut self.damping,
            &mut self.external,
            &mut self.total,
        ] {
            buf.iter_mut().for_each(|v| *v = Vec3::zeros());
        }
    }

    fn resize(&mut self, n: usize) {
        if self.len() != n {
            *self = Self::zeros(n);
        }
    }
}

/// Current length of the segment a→b and the unit vector pointing from a to b.
pub fn segment_geometry(pos_a: &Vec3, pos_b: &Vec3) -> Result<(f64, Vec3)> {
    let d = pos_b - pos_a;
    let length = d.norm();
    if !(length >= DEGENERATE_LENGTH) {
        return Err(Error::DegenerateVector);
    }
    Ok((length, d / length))
}

fn segment_index_of(segment: &StretchSegment) -> usize {
    segment.node_a
}

/// Forces on the two endpoints of a linear spring: `(on_a, on_b)`.
///
/// A stretched segment pulls its endpoints together, a compressed one pushes
/// them apart. The two forces are exact negatives of each other.
pub fn stretch_forces(segment: &StretchSegment, state: &CableState) -> Result<(Vec3, Vec3)> {
    let (length, unit) = segment_geometry(
        &state.positions[segment.node_a],
        &state.positions[segment.node_b],
    )
    .map_err(|_| Error::DegenerateSegment {
        index: segment_index_of(segment),
    })?;
    let on_b = unit * (-segment.stiffness * (length - segment.rest_length));
    Ok((-on_b, on_b))
}

/// ½·k_s·(l − l₀)².
pub fn stretch_energy(segment: &StretchSegment, state: &CableState) -> f64 {
    let length = (state.positions[segment.node_b] - state.positions[segment.node_a]).norm();
    let delta = length - segment.rest_length;
    0.5 * segment.stiffness * delta * delta
}

/// Turning angle between two consecutive segment vectors, in [0, π].
pub fn bending_angle(seg_prev: &Vec3, seg_next: &Vec3) -> Result<f64> {
    if !(seg_prev.norm() >= DEGENERATE_LENGTH && seg_next.norm() >= DEGENERATE_LENGTH) {
        return Err(Error::DegenerateVector);
    }
    Ok(seg_next
        .cross(seg_prev)
        .norm()
        .atan2(seg_next.dot(seg_prev)))
}

fn element_segments(element: &BendingElement, state: &CableState) -> Result<(Vec3, Vec3)> {
    let a = state.positions[element.node_mid] - state.positions[element.node_prev];
    let b = state.positions[element.node_next] - state.positions[element.node_mid];
    if !(a.norm() >= DEGENERATE_LENGTH) {
        return Err(Error::DegenerateSegment {
            index: element.node_prev,
        });
    }
    if !(b.norm() >= DEGENERATE_LENGTH) {
        return Err(Error::DegenerateSegment {
            index: element.node_mid,
        });
    }
    Ok((a, b))
}

/// ½·k_b·β² for one bending element.
pub fn bending_energy(element: &BendingElement, state: &CableState) -> Result<f64> {
    let (a, b) = element_segments(element, state)?;
    let beta = bending_angle(&a, &b)? - element.rest_angle;
    Ok(0.5 * element.stiffness * beta * beta)
}

/// Negative gradient of ½·k_b·β² with respect to the three element nodes,
/// returned as `[prev, mid, next]`.
pub fn bending_forces(element: &BendingElement, state: &CableState) -> Result<[Vec3; 3]> {
    let (a, b) = element_segments(element, state)?;
    let (la, lb) = (a.norm(), b.norm());
    let (a_hat, b_hat) = (a / la, b / lb);
    // n = â × b̂ has norm sin β; the gradients of β are (â × n)/(la sin β) and
    // −(b̂ × n)/(lb sin β) for the two segment vectors.
    let normal = a_hat.cross(&b_hat);
    let sin_beta = normal.norm();
    if sin_beta == 0.0 {
        // Straight (smooth minimum) or fully folded (no unique direction).
        return Ok([Vec3::zeros(); 3]);
    }
    let beta = a.cross(&b).norm().atan2(a.dot(&b));
    let scale = element.stiffness * (beta - element.rest_angle) / sin_beta;
    let f_prev = a_hat.cross(&normal) * (scale / la);
    let f_next = b_hat.cross(&normal) * (scale / lb);
    let f_mid = -(f_prev + f_next);
    Ok([f_prev, f_mid, f_next])
}

/// Evaluates every force source for all nodes, fixed nodes included.
///
/// `extra_external`, when given, must hold one vector per node and is added on
/// top of gravity.
pub fn accumulate(
    state: &CableState,
    segments: &[StretchSegment],
    bends: &[BendingElement],
    spec: &CableSpec,
    extra_external: Option<&[Vec3]>,
) -> Result<ForceBreakdown> {
    let mut out = ForceBreakdown::zeros(state.len());
    accumulate_into(&mut out, state, segments, bends, spec, extra_external)?;
    Ok(out)
}

/// In-place variant of [`accumulate`] that reuses `out`'s buffers.
pub fn accumulate_into(
    out: &mut ForceBreakdown,
    state: &CableState,
    segments: &[StretchSegment],
    bends: &[BendingElement],
    spec: &CableSpec,
    extra_external: Option<&[Vec3]>,
) -> Result<()> {
    let n = state.len();
    if let Some(extra) = extra_external {
        if extra.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: extra.len(),
            });
        }
    }
    out.resize(n);
    out.clear();

    for segment in segments {
        let (on_a, on_b) = stretch_forces(segment, state)?;
        out.stretch[segment.node_a] += on_a;
        out.stretch[segment.node_b] += on_b;
    }
    for element in bends {
        let [p, m, q] = bending_forces(element, state)?;
        out.bend[element.node_prev] += p;
        out.bend[element.node_mid] += m;
        out.bend[element.node_next] += q;
    }
    for i in 0..n {
        out.damping[i] = state.velocities[i] * -spec.damping_coefficient;
        out.external[i] = spec.gravity * state.node_masses[i];
        if let Some(extra) = extra_external {
            out.external[i] += extra[i];
        }
        out.total[i] = out.stretch[i] + out.bend[i] + out.damping[i] + out.external[i];
    }
    Ok(())
}

/// Sum of stretch and bending energies.
pub fn elastic_energy(
    state: &CableState,
    segments: &[StretchSegment],
    bends: &[BendingElement],
) -> Result<f64> {
    let stretch: f64 = segments.iter().map(|s| stretch_energy(s, state)).sum();
    let mut bend = 0.0;
    for element in bends {
        bend += bending_energy(element, state)?;
    }
    Ok(stretch + bend)
}

/// −Σ mᵢ g·xᵢ, zero at the origin.
pub fn gravitational_energy(state: &CableState, gravity: &Vec3) -> f64 {
    state
        .positions
        .iter()
        .zip(&state.node_masses)
        .map(|(x, m)| -m * gravity.dot(x))
        .sum()
}

pub fn kinetic_energy(state: &CableState) -> f64 {
    state
        .velocities
        .iter()
        .zip(&state.node_masses)
        .map(|(v, m)| 0.5 * m * v.norm_squared())
        .sum()
}

/// Kinetic + stretch + bend + gravitational potential.
pub fn mechanical_energy(
    state: &CableState,
    segments: &[StretchSegment],
    bends: &[BendingElement],
    gravity: &Vec3,
) -> Result<f64> {
    Ok(kinetic_energy(state)
        + elastic_energy(state, segments, bends)?
        + gravitational_energy(state, gravity))
}
