//! Neumann Green's function of the unit disk and the host interaction matrix.
//!
//! The room is the unit disk `|x| < 1` with area `π`. For a source at `x0` the
//! Green's function solves `ΔG = 1/|Ω| − δ(x − x0)` with a homogeneous Neumann
//! condition on `|x| = 1` and zero spatial mean. Its closed form is
//!
//! ```text
//! G(x; x0) = −ln|x − x0|/(2π) − ln(|x|²|x0|² + 1 − 2 x·x0)/(4π) + (|x|² + |x0|²)/(4π) − 3/(8π)
//! ```
//!
//! and the regular part left after removing the logarithmic singularity is
//!
//! ```text
//! R(x0) = −ln(1 − |x0|²)/(2π) + |x0|²/(2π) − 3/(8π)
//! ```

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Evaluations closer than this to the source are treated as the singular point.
pub const COINCIDENT_TOLERANCE: f64 = 1e-12;

/// Default host radius.
pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("points {x} and {x0} coincide (|x - x0| = {distance:e}); the Green's function is singular there")]
    CoincidentPoints { x: Point, x0: Point, distance: f64 },
    #[error("point {point} lies outside the open unit disk (|x| = {norm})")]
    OutsideDisk { point: Point, norm: f64 },
    #[error("host radius epsilon = {0} must lie in (0, 0.5)")]
    InvalidEpsilon(f64),
    #[error("hosts {first} and {second} overlap: distance {distance} <= 2*epsilon = {limit}")]
    HostOverlap {
        first: usize,
        second: usize,
        distance: f64,
        limit: f64,
    },
    #[error("host {index} at |x| = {norm} does not fit inside the room (needs |x| < 1 - epsilon = {limit})")]
    HostNearBoundary { index: usize, norm: f64, limit: f64 },
    #[error("host {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

/// A point of the (dimensionless) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self::new(x, y)
    }
}

/// A domain with a closed-form Neumann Green's function.
///
/// Only the unit disk ships; everything downstream talks to the room through
/// this trait.
pub trait NeumannGreens {
    fn area(&self) -> f64;
    fn value(&self, x: Point, x0: Point) -> Result<f64, GeometryError>;
    fn regular_part(&self, x0: Point) -> Result<f64, GeometryError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UnitDisk;

impl NeumannGreens for UnitDisk {
    fn area(&self) -> f64 {
        PI
    }

    fn value(&self, x: Point, x0: Point) -> Result<f64, GeometryError> {
        greens_value(x, x0)
    }

    fn regular_part(&self, x0: Point) -> Result<f64, GeometryError> {
        regular_part(x0)
    }
}

fn check_interior(p: Point) -> Result<(), GeometryError> {
    let norm = p.norm();
    if !(norm < 1.0) {
        return Err(GeometryError::OutsideDisk { point: p, norm });
    }
    Ok(())
}

/// Neumann Green's function `G(x; x0)` of the unit disk.
pub fn greens_value(x: Point, x0: Point) -> Result<f64, GeometryError> {
    check_interior(x)?;
    check_interior(x0)?;
    let distance = x.distance(x0);
    if distance < COINCIDENT_TOLERANCE {
        return Err(GeometryError::CoincidentPoints { x, x0, distance });
    }
    Ok(greens_unchecked(x, x0))
}

/// Closed form without domain checks. The expression is written so that
/// swapping the arguments yields the bit-identical result.
pub(crate) fn greens_unchecked(x: Point, x0: Point) -> f64 {
    let a = x.norm_sq();
    let b = x0.norm_sq();
    let dx = x.x - x0.x;
    let dy = x.y - x0.y;
    let dist_sq = dx * dx + dy * dy;
    let image = a * b + 1.0 - 2.0 * x.dot(x0);
    -dist_sq.ln() / (4.0 * PI) - image.ln() / (4.0 * PI) + (a + b) / (4.0 * PI) - 3.0 / (8.0 * PI)
}

/// Regular part `R(x0)` of the Green's function at its source point.
pub fn regular_part(x0: Point) -> Result<f64, GeometryError> {
    check_interior(x0)?;
    let b = x0.norm_sq();
    Ok(-(1.0 - b).ln() / (2.0 * PI) + b / (2.0 * PI) - 3.0 / (8.0 * PI))
}

/// Host layout inside the unit disk.
///
/// Construction validates that every host disk of radius `epsilon` sits
/// inside the room and that no two hosts overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    hosts: Vec<Point>,
    epsilon: f64,
}

impl DomainSpec {
    pub fn new(hosts: Vec<Point>, epsilon: f64) -> Result<Self, GeometryError> {
        let errors = Self::violations(&hosts, epsilon);
        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(Self { hosts, epsilon }),
        }
    }

    /// Every violated layout invariant, in a stable order.
    pub fn violations(hosts: &[Point], epsilon: f64) -> Vec<GeometryError> {
        let mut errors = Vec::new();
        if !(epsilon > 0.0 && epsilon < 0.5) {
            errors.push(GeometryError::InvalidEpsilon(epsilon));
            return errors;
        }
        for (index, p) in hosts.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                errors.push(GeometryError::NonFinite { index });
                continue;
            }
            let norm = p.norm();
            let limit = 1.0 - epsilon;
            if !(norm < limit) {
                errors.push(GeometryError::HostNearBoundary { index, norm, limit });
            }
        }
        for i in 0..hosts.len() {
            for j in (i + 1)..hosts.len() {
                let distance = hosts[i].distance(hosts[j]);
                let limit = 2.0 * epsilon;
                if !(distance > limit) {
                    errors.push(GeometryError::HostOverlap {
                        first: i,
                        second: j,
                        distance,
                        limit,
                    });
                }
            }
        }
        errors
    }

    pub fn hosts(&self) -> &[Point] {
        &self.hosts
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `μ = −1/ln ε`, always recomputed from `epsilon`.
    pub fn mu(&self) -> f64 {
        mu_from_epsilon(self.epsilon)
    }

    pub fn area(&self) -> f64 {
        UnitDisk.area()
    }
}

pub fn mu_from_epsilon(epsilon: f64) -> f64 {
    -1.0 / epsilon.ln()
}

/// Symmetric `m × m` matrix with `R(x_j)` on the diagonal and `G(x_i; x_j)` off it.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl GreensMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    /// Largest `|G_ij − G_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn build_greens_matrix(spec: &DomainSpec) -> Result<GreensMatrix, GeometryError> {
    let hosts = spec.hosts();
    let dim = hosts.len();
    let mut entries = vec![0.0; dim * dim];
    for i in 0..dim {
        entries[i * dim + i] = regular_part(hosts[i])?;
        for j in 0..dim {
            if i != j {
                entries[i * dim + j] = greens_value(hosts[i], hosts[j])?;
            }
        }
    }
    Ok(GreensMatrix { dim, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from a 40-digit evaluation of the closed forms.
    const G_HALF_ORIGIN: f64 = 0.010_845_960_643_891_212;
    const R_ORIGIN: f64 = -0.119_366_207_318_921_5;
    const R_HALF: f64 = -0.033_791_447_676_325_96;
    const G_OPPOSITE_HALVES: f64 = -0.115_091_870_756_684_15;

    #[test]
    fn greens_value_reference_point() {
        let g = greens_value(Point::new(0.5, 0.0), Point::ORIGIN).unwrap();
        assert!((g - G_HALF_ORIGIN).abs() < 1e-15, "{g}");
    }

    #[test]
    fn greens_value_is_symmetric() {
        let a = Point::new(0.3, 0.2);
        let b = Point::new(-0.4, 0.1);
        assert_eq!(greens_value(a, b).unwrap(), greens_value(b, a).unwrap());
    }

    #[test]
    fn coincident_points_are_rejected() {
        let p = Point::new(0.1, 0.2);
        assert!(matches!(
            greens_value(p, p),
            Err(GeometryError::CoincidentPoints { .. })
        ));
        assert!(greens_value(p, p.offset(1e-9, 0.0)).is_ok());
    }

    #[test]
    fn regular_part_values() {
        assert!((regular_part(Point::ORIGIN).unwrap() - R_ORIGIN).abs() < 1e-15);
        assert!((regular_part(Point::ORIGIN).unwrap() + 3.0 / (8.0 * PI)).abs() < 1e-16);
        assert!((regular_part(Point::new(0.5, 0.0)).unwrap() - R_HALF).abs() < 1e-15);
    }

    #[test]
    fn regular_part_diverges_at_boundary() {
        let mut last = f64::NEG_INFINITY;
        for i in 0..=99 {
            let r = 0.9 + 0.099 * i as f64 / 99.0;
            let value = regular_part(Point::new(r, 0.0)).unwrap();
            assert!(value > last);
            last = value;
        }
        assert!(last > 0.7);
        assert!(matches!(
            regular_part(Point::new(1.0, 0.0)),
            Err(GeometryError::OutsideDisk { .. })
        ));
    }

    #[test]
    fn matrix_single_host_at_origin() {
        let spec = DomainSpec::new(vec![Point::ORIGIN], 0.05).unwrap();
        let g = build_greens_matrix(&spec).unwrap();
        assert_eq!(g.dim(), 1);
        assert_eq!(g.get(0, 0), -3.0 / (8.0 * PI));
    }

    #[test]
    fn matrix_two_symmetric_hosts() {
        let spec =
            DomainSpec::new(vec![Point::new(-0.5, 0.0), Point::new(0.5, 0.0)], 0.05).unwrap();
        let g = build_greens_matrix(&spec).unwrap();
        assert!((g.get(0, 0) - R_HALF).abs() < 1e-15);
        assert_eq!(g.get(0, 0), g.get(1, 1));
        assert!((g.get(0, 1) - G_OPPOSITE_HALVES).abs() < 1e-15);
        assert_eq!(g.asymmetry(), 0.0);
    }

    #[test]
    fn matrix_without_hosts_is_empty() {
        let spec = DomainSpec::new(vec![], 0.05).unwrap();
        assert!(build_greens_matrix(&spec).unwrap().is_empty());
    }

    #[test]
    fn layout_validation() {
        let overlap = DomainSpec::new(vec![Point::ORIGIN, Point::new(0.05, 0.0)], 0.05);
        assert!(matches!(overlap, Err(GeometryError::HostOverlap { .. })));
        let edge = DomainSpec::new(vec![Point::new(0.99, 0.0)], 0.05);
        assert!(matches!(edge, Err(GeometryError::HostNearBoundary { .. })));
        assert!(matches!(
            DomainSpec::new(vec![], 0.5),
            Err(GeometryError::InvalidEpsilon(_))
        ));
        let spec = DomainSpec::new(vec![], std::f64::consts::E.recip()).unwrap();
        assert!((spec.mu() - 1.0).abs() < 1e-15);
    }
}
