//! Within-host basic reproduction numbers.
//!
//! The two-term expansion is
//!
//! ```text
//! R1 = p β2 N0/(δ c) + p β1 ξ N0 (2π D0 + |Ω|)/(2π δ D0 |Ω| c)
//! R2 = p β1 ξ R N0/(δ c)
//! R0 = R1 + (μ/D0) R2
//! ```
//!
//! with `R` the regular part of the Green's function at the host. The
//! next-generation matrices are ordered `(V, E, I, v)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix4;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::Variant;
use crate::geometry::{regular_part, GeometryError};
use crate::params::HostParams;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReproductionError {
    #[error("{field} must be positive (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("within-host R0 needs exactly one host, the scenario has {0}")]
    HostCount(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grid spec '{0}' must look like lo:hi:steps with lo <= hi and steps >= 1")]
    BadGrid(String),
}

/// Everything the reproduction numbers depend on for one host.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R0Inputs {
    pub host: HostParams,
    pub d0: f64,
    pub mu: f64,
    /// Regular part of the Green's function at the host position.
    pub regular: f64,
    pub area: f64,
    pub n0: f64,
}

impl R0Inputs {
    pub fn new(
        host: HostParams,
        d0: f64,
        mu: f64,
        regular: f64,
        area: f64,
        n0: f64,
    ) -> Result<Self, ReproductionError> {
        for (field, value) in [("d0", d0), ("area", area), ("n0", n0), ("mu", mu)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ReproductionError::NotPositive { field, value });
            }
        }
        for (field, value) in [("delta", host.delta), ("c", host.c), ("k", host.k)] {
            if !(value > 0.0) {
                return Err(ReproductionError::NotPositive { field, value });
            }
        }
        Ok(Self {
            host,
            d0,
            mu,
            regular,
            area,
            n0,
        })
    }

    /// Inputs for the only host of a single-host scenario.
    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self, ReproductionError> {
        if cfg.hosts.len() != 1 {
            return Err(ReproductionError::HostCount(cfg.hosts.len()));
        }
        let regular = regular_part(cfg.domain.hosts()[0])?;
        Self::new(
            cfg.hosts[0],
            cfg.d0,
            cfg.domain.mu(),
            regular,
            cfg.domain.area(),
            cfg.n0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoTerm {
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
}

pub fn r0_two_term(x: &R0Inputs) -> TwoTerm {
    let h = &x.host;
    let scale = h.p * x.n0 / (h.delta * h.c);
    let r1 = scale * h.beta2
        + scale * h.beta1 * h.xi * (2.0 * PI * x.d0 + x.area) / (2.0 * PI * x.d0 * x.area);
    let r2 = scale * h.beta1 * h.xi * x.regular;
    TwoTerm {
        r0: r1 + x.mu / x.d0 * r2,
        r1,
        r2,
    }
}

pub fn r0_well_mixed(x: &R0Inputs) -> f64 {
    let h = &x.host;
    let scale = h.p * x.n0 / (h.delta * h.c);
    scale * h.beta2 + scale * h.beta1 * h.xi / x.area
}

pub fn r0_tcl(x: &R0Inputs) -> f64 {
    let h = &x.host;
    h.p * h.beta2 * x.n0 / (h.delta * h.c)
}

/// The reproduction number that matches a model variant: the two-term
/// expansion for both spatial variants, the well-mixed and TCL closed forms
/// otherwise.
pub fn r0_for_variant(x: &R0Inputs, variant: Variant) -> f64 {
    match variant {
        Variant::Multiscale => r0_two_term(x).r0,
        Variant::LeadingOrder => r0_two_term(x).r1,
        Variant::WellMixed => r0_well_mixed(x),
        Variant::Tcl => r0_tcl(x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgmPair {
    pub f: Matrix4<f64>,
    pub v: Matrix4<f64>,
}

/// New-infection row entry for the viral-load column.
fn virus_infectivity(x: &R0Inputs) -> f64 {
    let h = &x.host;
    h.beta1 * x.n0 * h.xi * (1.0 + 2.0 * PI * x.mu * x.regular) / (2.0 * PI * x.d0) + h.beta2 * x.n0
}

pub fn ngm_matrices(x: &R0Inputs) -> NgmPair {
    let h = &x.host;
    let mut f = Matrix4::zeros();
    f[(1, 0)] = h.beta1 * x.n0;
    f[(1, 3)] = virus_infectivity(x);
    #[rustfmt::skip]
    let v = Matrix4::new(
        1.0, 0.0,      0.0,      -h.xi / x.area,
        0.0, h.k,      0.0,      0.0,
        0.0, -h.k,     h.delta,  0.0,
        0.0, 0.0,      -h.p,     h.c,
    );
    NgmPair { f, v }
}

/// Spectral radius of `F V⁻¹`.
///
/// `F` has a single nonzero row `f` (the eclipse row), so `F V⁻¹` has rank one
/// and its only nonzero eigenvalue is `fᵀ V⁻¹ e_E`. Solving `V x = e_E` by
/// back substitution gives `x = (ξ p/(|Ω| δ c), 1/k, 1/δ, p/(δ c))`.
pub fn ngm_spectral_r0(x: &R0Inputs) -> f64 {
    let h = &x.host;
    let x_v = h.p / (h.delta * h.c);
    let x_air = h.xi / x.area * x_v;
    (h.beta1 * x.n0 * x_air + virus_infectivity(x) * x_v).abs()
}

/// `lo:hi:steps` grid with `steps` equally spaced points including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self, ReproductionError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || steps == 0 || (steps == 1 && lo != hi) {
            return Err(ReproductionError::BadGrid(format!("{lo}:{hi}:{steps}")));
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        (0..self.steps)
            .map(|i| {
                if i == self.steps - 1 {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = ReproductionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReproductionError::BadGrid(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let steps: usize = steps.trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi, steps).map_err(|_| bad())
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.steps)
    }
}

/// Default β grid of the contour sweep: zero to twice the reference rate.
pub const DEFAULT_BETA_GRID: Grid = Grid {
    lo: 0.0,
    hi: 2.0 * 5.6e-7,
    steps: 200,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub beta1: f64,
    pub beta2: f64,
    pub r1: f64,
    pub r0: f64,
}

/// Evaluates the two-term expansion on a `β1 × β2` grid, `β1` in the outer loop.
pub fn sweep_r0(base: &R0Inputs, beta1: &Grid, beta2: &Grid) -> Vec<SweepPoint> {
    let b2_values = beta2.values();
    let mut out = Vec::with_capacity(beta1.steps * beta2.steps);
    for b1 in beta1.values() {
        for &b2 in &b2_values {
            let mut x = *base;
            x.host.beta1 = b1;
            x.host.beta2 = b2;
            let t = r0_two_term(&x);
            out.push(SweepPoint {
                beta1: b1,
                beta2: b2,
                r1: t.r1,
                r0: t.r0,
            });
        }
    }
    out
}
