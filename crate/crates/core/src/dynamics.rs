//! Right-hand sides of the reduced airborne/within-host system.
//!
//! State layout is fixed: `[V, T_1, E_1, I_1, v_1, T_2, E_2, I_2, v_2, ...]`,
//! so a room with `m` hosts has `4m + 1` components.
//!
//! Each host `j` is infected through the pressure
//!
//! ```text
//! A_j = β1_j (V + ξ_j v_j / (2π D0)) + (μ/D0) β1_j (𝒢Ψ)_j,    Ψ_i = ξ_i v_i
//! ```
//!
//! and follows target-cell-limited kinetics
//!
//! ```text
//! T' = −A T − β2 T v,  E' = A T + β2 T v − k E,  I' = k E − δ I,  v' = p I − c v [− ξ v]
//! ```
//!
//! while the room average obeys `V' = Σ ξ_i v_i / |Ω| − V`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_greens_matrix, GeometryError, GreensMatrix};
use crate::params::HostParams;
use crate::scenario::ScenarioConfig;

pub const HOST_BLOCK: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("state has length {got}, expected {expected} (4m + 1 with m = {hosts})")]
    DimensionMismatch {
        got: usize,
        expected: usize,
        hosts: usize,
    },
    #[error("state component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("the published two-host system needs exactly 2 hosts, got {0}")]
    NotTwoHosts(usize),
    #[error("{0} host parameter sets for {1} host positions")]
    HostCountMismatch(usize, usize),
    #[error("D0 must be positive (got {0})")]
    InvalidDiffusion(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which reduced model to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full reduced model including the Green's-matrix position correction.
    Multiscale,
    /// Position-independent leading order: the Green's term is dropped.
    LeadingOrder,
    /// Fast-diffusion limit: only the room average `V` infects.
    WellMixed,
    /// Isolated target-cell-limited hosts; `V` is computed but never fed back.
    Tcl,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Multiscale,
        Variant::LeadingOrder,
        Variant::WellMixed,
        Variant::Tcl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Multiscale => "multiscale",
            Variant::LeadingOrder => "leading_order",
            Variant::WellMixed => "well_mixed",
            Variant::Tcl => "tcl",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "multiscale" => Ok(Variant::Multiscale),
            "leading_order" => Ok(Variant::LeadingOrder),
            "well_mixed" => Ok(Variant::WellMixed),
            "tcl" => Ok(Variant::Tcl),
            other => Err(format!(
                "unknown variant '{other}' (expected multiscale, leading_order, well_mixed or tcl)"
            )),
        }
    }
}

/// A variant plus the optional `−ξ v` exhalation loss in the within-host
/// virus equation. The two-host system of the onset experiments carries
/// that loss while the general model does not; the TCL variant never applies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub variant: Variant,
    pub exhalation_loss: bool,
}

impl ModelVariant {
    pub const fn new(variant: Variant, exhalation_loss: bool) -> Self {
        Self {
            variant,
            exhalation_loss,
        }
    }
}

impl Default for ModelVariant {
    fn default() -> Self {
        Self::new(Variant::Multiscale, false)
    }
}

/// Within-host compartments of one host.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostState {
    #[serde(rename = "T")]
    pub target: f64,
    #[serde(rename = "E")]
    pub eclipse: f64,
    #[serde(rename = "I")]
    pub infected: f64,
    #[serde(rename = "v")]
    pub virus: f64,
}

impl HostState {
    pub const fn new(target: f64, eclipse: f64, infected: f64, virus: f64) -> Self {
        Self {
            target,
            eclipse,
            infected,
            virus,
        }
    }

    /// Uninfected host with all target cells intact.
    pub const fn susceptible() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    /// `T + E + I`.
    pub fn cell_mass(&self) -> f64 {
        self.target + self.eclipse + self.infected
    }
}

/// Flattened `4m + 1` state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemState(Vec<f64>);

impl SystemState {
    pub fn new(airborne: f64, hosts: &[HostState]) -> Self {
        let mut data = Vec::with_capacity(1 + HOST_BLOCK * hosts.len());
        data.push(airborne);
        for h in hosts {
            data.extend_from_slice(&[h.target, h.eclipse, h.infected, h.virus]);
        }
        Self(data)
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self, DynamicsError> {
        if data.is_empty() || !(data.len() - 1).is_multiple_of(HOST_BLOCK) {
            return Err(DynamicsError::DimensionMismatch {
                got: data.len(),
                expected: 1 + HOST_BLOCK * (data.len().saturating_sub(1) / HOST_BLOCK),
                hosts: data.len().saturating_sub(1) / HOST_BLOCK,
            });
        }
        Ok(Self(data))
    }

    pub fn zeros(hosts: usize) -> Self {
        Self(vec![0.0; 1 + HOST_BLOCK * hosts])
    }

    pub fn host_count(&self) -> usize {
        (self.0.len() - 1) / HOST_BLOCK
    }

    pub fn airborne(&self) -> f64 {
        self.0[0]
    }

    pub fn host(&self, j: usize) -> HostState {
        let b = &self.0[1 + HOST_BLOCK * j..1 + HOST_BLOCK * (j + 1)];
        HostState::new(b[0], b[1], b[2], b[3])
    }

    pub fn hosts(&self) -> impl Iterator<Item = HostState> + '_ {
        (0..self.host_count()).map(move |j| self.host(j))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Column labels matching the layout: `V, T_1, E_1, I_1, v_1, ...`.
    pub fn labels(hosts: usize) -> Vec<String> {
        let mut out = vec!["V".to_string()];
        for j in 1..=hosts {
            for name in ["T", "E", "I", "v"] {
                out.push(format!("{name}_{j}"));
            }
        }
        out
    }
}

/// Index of `v_j` in the flat layout.
pub const fn virus_index(host: usize) -> usize {
    1 + HOST_BLOCK * host + 3
}

/// Index of `T_j` in the flat layout.
pub const fn target_index(host: usize) -> usize {
    1 + HOST_BLOCK * host
}

/// A right-hand side `y' = f(t, y)` on a fixed-size state.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynamicsError>;

    /// Row-major `∂f_i/∂y_j` into `jac` (length `dim²`). The default uses
    /// forward differences with `f(t, y)` supplied as `f0`.
    fn jacobian(&self, t: f64, y: &[f64], f0: &[f64], jac: &mut [f64]) -> Result<(), DynamicsError> {
        let n = self.dim();
        let mut shifted = y.to_vec();
        let mut f1 = vec![0.0; n];
        for j in 0..n {
            let step = f64::EPSILON.sqrt() * y[j].abs().max(1e-8);
            shifted[j] = y[j] + step;
            self.eval(t, &shifted, &mut f1)?;
            shifted[j] = y[j];
            for i in 0..n {
                jac[i * n + j] = (f1[i] - f0[i]) / step;
            }
        }
        Ok(())
    }
}

/// The reduced system for one scenario, with the Green's matrix precomputed.
#[derive(Debug, Clone)]
pub struct Dynamics {
    hosts: Vec<HostParams>,
    d0: f64,
    mu: f64,
    area: f64,
    greens: GreensMatrix,
    model: ModelVariant,
}

impl Dynamics {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, DynamicsError> {
        let greens = build_greens_matrix(&cfg.domain)?;
        Self::with_greens(cfg, greens)
    }

    /// Uses a caller-supplied interaction matrix, e.g. the zero matrix.
    pub fn with_greens(cfg: &ScenarioConfig, greens: GreensMatrix) -> Result<Self, DynamicsError> {
        let m = cfg.domain.host_count();
        if cfg.hosts.len() != m || greens.dim() != m {
            return Err(DynamicsError::HostCountMismatch(cfg.hosts.len(), m));
        }
        if !(cfg.d0 > 0.0) {
            return Err(DynamicsError::InvalidDiffusion(cfg.d0));
        }
        Ok(Self {
            hosts: cfg.hosts.clone(),
            d0: cfg.d0,
            mu: cfg.domain.mu(),
            area: cfg.domain.area(),
            greens,
            model: cfg.model,
        })
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn model(&self) -> ModelVariant {
        self.model
    }

    pub fn greens(&self) -> &GreensMatrix {
        &self.greens
    }

    /// Airborne infection pressure `A_j` acting on host `j`.
    pub fn infection_pressure(&self, y: &[f64], j: usize) -> f64 {
        let h = &self.hosts[j];
        let airborne = y[0];
        let v_j = y[virus_index(j)];
        match self.model.variant {
            Variant::Tcl => 0.0,
            Variant::WellMixed => h.beta1 * airborne,
            Variant::LeadingOrder => h.beta1 * (airborne + h.xi * v_j / (2.0 * PI * self.d0)),
            Variant::Multiscale => {
                let row = self.greens.row(j);
                let mut g_psi = 0.0;
                for (i, g) in row.iter().enumerate() {
                    g_psi += g * self.hosts[i].xi * y[virus_index(i)];
                }
                h.beta1 * (airborne + h.xi * v_j / (2.0 * PI * self.d0))
                    + self.mu / self.d0 * h.beta1 * g_psi
            }
        }
    }

    fn check(&self, y: &[f64], dy: &[f64]) -> Result<(), DynamicsError> {
        let expected = 1 + HOST_BLOCK * self.hosts.len();
        if y.len() != expected || dy.len() != expected {
            return Err(DynamicsError::DimensionMismatch {
                got: if y.len() != expected { y.len() } else { dy.len() },
                expected,
                hosts: self.hosts.len(),
            });
        }
        if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { index, value });
        }
        Ok(())
    }

    /// Writes `dy/dt` into `dy`. Does not allocate.
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<(), DynamicsError> {
        self.check(y, dy)?;
        let mut shed = 0.0;
        for (j, h) in self.hosts.iter().enumerate() {
            shed += h.xi * y[virus_index(j)];
        }
        dy[0] = shed / self.area - y[0];

        let loss = self.model.exhalation_loss && self.model.variant != Variant::Tcl;
        for (j, h) in self.hosts.iter().enumerate() {
            let base = 1 + HOST_BLOCK * j;
            let (t, e, i, v) = (y[base], y[base + 1], y[base + 2], y[base + 3]);
            let infection = self.infection_pressure(y, j) * t + h.beta2 * t * v;
            dy[base] = -infection;
            dy[base + 1] = infection - h.k * e;
            dy[base + 2] = h.k * e - h.delta * i;
            dy[base + 3] = h.p * i - h.c * v - if loss { h.xi * v } else { 0.0 };
        }
        Ok(())
    }
}

impl OdeSystem for Dynamics {
    fn dim(&self) -> usize {
        1 + HOST_BLOCK * self.hosts.len()
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynamicsError> {
        self.rhs(y, dy)
    }

    fn jacobian(&self, _t: f64, y: &[f64], _f0: &[f64], jac: &mut [f64]) -> Result<(), DynamicsError> {
        let n = self.dim();
        if y.len() != n || jac.len() != n * n {
            return Err(DynamicsError::DimensionMismatch {
                got: y.len(),
                expected: n,
                hosts: self.hosts.len(),
            });
        }
        jac.fill(0.0);
        jac[0] = -1.0;
        for (i, h) in self.hosts.iter().enumerate() {
            jac[virus_index(i)] = h.xi / self.area;
        }
        let loss = self.model.exhalation_loss && self.model.variant != Variant::Tcl;
        let variant = self.model.variant;
        for (j, h) in self.hosts.iter().enumerate() {
            let b = 1 + HOST_BLOCK * j;
            let (t, v) = (y[b], y[b + 3]);
            let a = self.infection_pressure(y, j);
            // Sensitivities of the infection flux A_j T_j + β2 T_j v_j.
            let d_target = a + h.beta2 * v;
            let d_air = if variant == Variant::Tcl { 0.0 } else { h.beta1 * t };
            let mut d_virus = vec![0.0; self.hosts.len()];
            d_virus[j] += h.beta2 * t;
            match variant {
                Variant::Multiscale | Variant::LeadingOrder => {
                    d_virus[j] += h.beta1 * t * h.xi / (2.0 * PI * self.d0);
                    if variant == Variant::Multiscale {
                        for (i, g) in self.greens.row(j).iter().enumerate() {
                            d_virus[i] += h.beta1 * t * self.mu / self.d0 * g * self.hosts[i].xi;
                        }
                    }
                }
                Variant::WellMixed | Variant::Tcl => {}
            }
            for (row, sign) in [(b, -1.0), (b + 1, 1.0)] {
                jac[row * n + b] = sign * d_target;
                jac[row * n] = sign * d_air;
                for (i, d) in d_virus.iter().enumerate() {
                    jac[row * n + virus_index(i)] += sign * d;
                }
            }
            jac[(b + 1) * n + b + 1] = -h.k;
            jac[(b + 2) * n + b + 1] = h.k;
            jac[(b + 2) * n + b + 2] = -h.delta;
            jac[(b + 3) * n + b + 2] = h.p;
            jac[(b + 3) * n + b + 3] = -h.c - if loss { h.xi } else { 0.0 };
        }
        Ok(())
    }
}

/// `d(state)/dt` for a scenario with a precomputed Green's matrix.
pub fn rhs(
    state: &SystemState,
    cfg: &ScenarioConfig,
    greens: &GreensMatrix,
) -> Result<SystemState, DynamicsError> {
    let dynamics = Dynamics::with_greens(cfg, greens.clone())?;
    let mut out = SystemState::zeros(dynamics.host_count());
    dynamics.rhs(state.as_slice(), out.as_mut_slice())?;
    Ok(out)
}

/// The two-host system used for the onset experiments: leading-order
/// coupling, no Green's term, and `−ξ_j v_j` losses in the virus equations.
/// Written out longhand; the production rate `π_j` of that
/// system is the same parameter as `p_j`. Only the host rates, `D0` and the
/// room area are read from `cfg`.
pub fn two_host_published_rhs(
    state: &SystemState,
    cfg: &ScenarioConfig,
) -> Result<SystemState, DynamicsError> {
    if cfg.hosts.len() != 2 {
        return Err(DynamicsError::NotTwoHosts(cfg.hosts.len()));
    }
    if state.as_slice().len() != 9 {
        return Err(DynamicsError::DimensionMismatch {
            got: state.as_slice().len(),
            expected: 9,
            hosts: 2,
        });
    }
    if let Some((index, &value)) = state
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite())
    {
        return Err(DynamicsError::NonFinite { index, value });
    }
    let d0 = cfg.d0;
    let omega = cfg.domain.area();
    let y = state.as_slice();
    let [cap_v, t1, e1, i1, v1, t2, e2, i2, v2] = [y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8]];
    let h1 = &cfg.hosts[0];
    let h2 = &cfg.hosts[1];

    let d_v = (h1.xi * v1 + h2.xi * v2) / omega - cap_v;

    let air1 = h1.beta1 * t1 * (cap_v + h1.xi * v1 / (2.0 * PI * d0));
    let d_t1 = -air1 - h1.beta2 * t1 * v1;
    let d_e1 = air1 + h1.beta2 * t1 * v1 - h1.k * e1;
    let d_i1 = h1.k * e1 - h1.delta * i1;
    let d_v1 = h1.p * i1 - h1.c * v1 - h1.xi * v1;

    let air2 = h2.beta1 * t2 * (cap_v + h2.xi * v2 / (2.0 * PI * d0));
    let d_t2 = -air2 - h2.beta2 * t2 * v2;
    let d_e2 = air2 + h2.beta2 * t2 * v2 - h2.k * e2;
    let d_i2 = h2.k * e2 - h2.delta * i2;
    let d_v2 = h2.p * i2 - h2.c * v2 - h2.xi * v2;

    SystemState::from_vec(vec![d_v, d_t1, d_e1, d_i1, d_v1, d_t2, d_e2, d_i2, d_v2])
}
