//! Discretized cable: lumped masses joined by stretch segments, with a bending
//! element on every interior node.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Vec3;

/// Physical and numerical parameters of one cable instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableSpec {
    /// Total rest length, m.
    pub length: f64,
    /// Radius of the circular cross-section, m.
    pub radius: f64,
    /// Material density, kg/m³.
    pub density: f64,
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    pub num_masses: usize,
    /// Per-node viscous damping k_d, N·s/m.
    pub damping_coefficient: f64,
    /// Fixed integration step, s.
    pub time_step: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: Vec3,
}

impl Default for CableSpec {
    fn default() -> Self {
        Self {
            length: 0.5,
            radius: 0.002,
            density: 1000.0,
            youngs_modulus: 12.6e6,
            num_masses: 10,
            damping_coefficient: 0.05,
            time_step: 5e-6,
            gravity: Vec3::new(0.0, 0.0, -9.81),
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

impl CableSpec {
    pub fn validate(&self) -> Result<()> {
        positive("length", self.length)?;
        positive("radius", self.radius)?;
        positive("density", self.density)?;
        positive("youngs_modulus", self.youngs_modulus)?;
        positive("time_step", self.time_step)?;
        if !(self.damping_coefficient.is_finite() && self.damping_coefficient >= 0.0) {
            return Err(invalid(
                "damping_coefficient",
                format!("must be finite and >= 0, got {}", self.damping_coefficient),
            ));
        }
        if self.num_masses < 2 {
            return Err(invalid(
                "num_masses",
                format!("need at least 2 masses, got {}", self.num_masses),
            ));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(invalid("gravity", "components must be finite"));
        }
        Ok(())
    }

    /// Rest length of every segment, L/(n−1).
    pub fn segment_rest_length(&self) -> f64 {
        self.length / (self.num_masses - 1) as f64
    }

    /// Uniformly lumped node mass ρAL/n.
    pub fn node_mass(&self) -> f64 {
        let area = PI * self.radius * self.radius;
        self.density * area * self.length / self.num_masses as f64
    }

    /// Total cable mass ρAL.
    pub fn total_mass(&self) -> f64 {
        self.density * PI * self.radius * self.radius * self.length
    }
}

/// Positions, velocities and lumped masses at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CableState {
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub node_masses: Vec<f64>,
    /// `true` where the node position is prescribed by a boundary script.
    pub fixed_mask: Vec<bool>,
    /// Cleared by the integrator when a step produced non-finite values or a
    /// degenerate segment.
    pub valid: bool,
}

impl CableState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(self.velocities.iter())
            .all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Checks the array-length and mass invariants.
    pub fn check_consistent(&self) -> Result<()> {
        let n = self.positions.len();
        for found in [
            self.velocities.len(),
            self.node_masses.len(),
            self.fixed_mask.len(),
        ] {
            if found != n {
                return Err(Error::LengthMismatch { expected: n, found });
            }
        }
        if let Some(m) = self.node_masses.iter().find(|m| !(**m > 0.0)) {
            return Err(invalid("node_masses", format!("must be > 0, got {m}")));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.positions.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.positions.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchSegment {
    pub node_a: usize,
    pub node_b: usize,
    /// l₀, m.
    pub rest_length: f64,
    /// k_s, N/m.
    pub stiffness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BendingElement {
    pub node_prev: usize,
    pub node_mid: usize,
    pub node_next: usize,
    /// k_b, N·m.
    pub stiffness: f64,
    /// Always 0: the rest shape is straight.
    pub rest_angle: f64,
}

/// Output of [`discretize`]: initial state plus the element lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub state: CableState,
    pub segments: Vec<StretchSegment>,
    pub bends: Vec<BendingElement>,
}

/// Area and second moment of a solid circular cross-section.
pub fn cross_section_properties(radius: f64) -> Result<(f64, f64)> {
    positive("radius", radius)?;
    let r2 = radius * radius;
    Ok((PI * r2, PI * r2 * r2 / 4.0))
}

/// Axial spring stiffness k_s = E·A/l₀.
pub fn linear_stiffness(youngs_modulus: f64, area: f64, rest_length: f64) -> Result<f64> {
    positive("youngs_modulus", youngs_modulus)?;
    positive("area", area)?;
    positive("rest_length", rest_length)?;
    Ok(youngs_modulus * area / rest_length)
}

/// Bending spring stiffness k_b = E·I/l₀.
pub fn bending_stiffness(youngs_modulus: f64, second_moment: f64, rest_length: f64) -> Result<f64> {
    positive("youngs_modulus", youngs_modulus)?;
    positive("second_moment", second_moment)?;
    positive("rest_length", rest_length)?;
    Ok(youngs_modulus * second_moment / rest_length)
}

/// Lays out `spec.num_masses` nodes on a straight line starting at `anchor`.
///
/// `direction` must have unit norm (within 1e-9). All nodes start at rest and
/// free; every segment starts at its rest length.
pub fn discretize(spec: &CableSpec, anchor: Vec3, direction: Vec3) -> Result<Discretization> {
    spec.validate()?;
    if !direction.iter().all(|c| c.is_finite()) || (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(invalid("direction", "must have unit norm"));
    }
    let n = spec.num_masses;
    let (area, second_moment) = cross_section_properties(spec.radius)?;
    let rest_length = spec.segment_rest_length();
    let k_s = linear_stiffness(spec.youngs_modulus, area, rest_length)?;
    let k_b = bending_stiffness(spec.youngs_modulus, second_moment, rest_length)?;
    let mass = spec.density * area * spec.length / n as f64;

    let positions = (0..n)
        .map(|i| anchor + direction * (rest_length * i as f64))
        .collect();
    let segments = (0..n - 1)
        .map(|a| StretchSegment {
            node_a: a,
            node_b: a + 1,
            rest_length,
            stiffness: k_s,
        })
        .collect();
    let bends = (1..n.saturating_sub(1))
        .map(|mid| BendingElement {
            node_prev: mid - 1,
            node_mid: mid,
            node_next: mid + 1,
            stiffness: k_b,
            rest_angle: 0.0,
        })
        .collect();

    Ok(Discretization {
        state: CableState {
            time: 0.0,
            positions,
            velocities: vec![Vec3::zeros(); n],
            node_masses: vec![mass; n],
            fixed_mask: vec![false; n],
            valid: true,
        },
        segments,
        bends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn x_axis() -> Vec3 {
        Vec3::new(1.0, 0.0, 0.0)
    }

    #[test]
    fn unit_radius_section() {
        let (a, i) = cross_section_properties(1.0).unwrap();
        assert_eq!(a, PI);
        assert_eq!(i, PI / 4.0);
    }

    #[test]
    fn two_millimetre_section() {
        let (a, i) = cross_section_properties(0.002).unwrap();
        assert_relative_eq!(a, 1.2566e-5, max_relative = 1e-4);
        assert_relative_eq!(i, 1.2566e-11, max_relative = 1e-4);
    }

    #[test]
    fn zero_radius_rejected() {
        assert!(matches!(
            cross_section_properties(0.0),
            Err(Error::InvalidParameter { name: "radius", .. })
        ));
        assert!(cross_section_properties(-1.0).is_err());
    }

    #[test]
    fn stiffness_values() {
        assert_eq!(linear_stiffness(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(bending_stiffness(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(
            linear_stiffness(12.6e6, 1.2566e-5, 0.1).unwrap(),
            1583.4,
            max_relative = 1e-4
        );
        assert_relative_eq!(
            bending_stiffness(1002.6e6, 1.2566e-11, 0.1).unwrap(),
            1.2599e-1,
            max_relative = 1e-4
        );
        let k1 = linear_stiffness(2.0, 3.0, 0.4).unwrap();
        let k2 = linear_stiffness(2.0, 3.0, 0.8).unwrap();
        assert_relative_eq!(k1, 2.0 * k2, max_relative = 1e-15);
        let b1 = bending_stiffness(2.0, 3.0, 0.4).unwrap();
        let b2 = bending_stiffness(2.0, 3.0, 0.8).unwrap();
        assert_relative_eq!(b1, 2.0 * b2, max_relative = 1e-15);
    }

    #[test]
    fn zero_rest_length_rejected() {
        assert!(linear_stiffness(1.0, 1.0, 0.0).is_err());
        assert!(bending_stiffness(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn ten_mass_layout() {
        let spec = CableSpec {
            length: 1.0,
            num_masses: 10,
            ..CableSpec::default()
        };
        let d = discretize(&spec, Vec3::zeros(), x_axis()).unwrap();
        assert_eq!(d.segments.len(), 9);
        assert_eq!(d.bends.len(), 8);
        for s in &d.segments {
            assert_relative_eq!(s.rest_length, 1.0 / 9.0, max_relative = 1e-15);
            assert_eq!(s.node_b, s.node_a + 1);
        }
        assert!(d.state.velocities.iter().all(|v| *v == Vec3::zeros()));
        assert!(d.state.fixed_mask.iter().all(|f| !f));
        assert_relative_eq!(d.state.positions[9].x, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn minimal_cable() {
        let spec = CableSpec {
            num_masses: 2,
            ..CableSpec::default()
        };
        let d = discretize(&spec, Vec3::zeros(), x_axis()).unwrap();
        assert_eq!(d.segments.len(), 1);
        assert!(d.bends.is_empty());
    }

    #[test]
    fn lumped_mass_value() {
        let spec = CableSpec {
            length: 0.5,
            num_masses: 6,
            density: 1000.0,
            radius: 0.002,
            ..CableSpec::default()
        };
        let d = discretize(&spec, Vec3::zeros(), x_axis()).unwrap();
        for m in &d.state.node_masses {
            assert_relative_eq!(*m, 1.0472e-3, max_relative = 1e-4);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = CableSpec {
            num_masses: 1,
            ..CableSpec::default()
        };
        assert!(discretize(&spec, Vec3::zeros(), x_axis()).is_err());
        assert!(discretize(
            &CableSpec::default(),
            Vec3::zeros(),
            Vec3::new(2.0, 0.0, 0.0)
        )
        .is_err());
        let spec = CableSpec {
            damping_coefficient: -1.0,
            ..CableSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
