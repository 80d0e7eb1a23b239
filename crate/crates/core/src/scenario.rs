//! Scenario configuration: the in-memory model, the TOML file schema, and
//! validation with field-named errors.
//!
//! ```toml
//! [domain]
//! epsilon = 0.05
//!
//! [[hosts]]
//! position = [0.0, 0.0]
//! beta1 = 5.6e-7
//! beta2 = 5.6e-7
//! xi = 4.19
//! k = 0.4
//! delta = 0.17
//! p = 1.6e10
//! c = 1.0
//!
//! [simulation]
//! d0 = 2.0
//! t_end = 30.0
//! variant = "multiscale"
//! exhalation_loss = false
//!
//! [initial]
//! V = 0.0
//! T = [1.0]
//! E = [1.25e-8]
//! I = [0.0]
//! v = [0.0]
//! ```

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{HostState, ModelVariant, SystemState, Variant, HOST_BLOCK};
use crate::geometry::{DomainSpec, GeometryError, Point, DEFAULT_EPSILON};
use crate::integrator::{IntegratorConfig, Method};
use crate::params::{nondimensionalize, DimensionalParams, HostParams};

/// Cells per host used to seed an infection: `E(0) = 1/N(0)`.
pub const SEED_CELLS: f64 = 8e7;
pub const SEED_ECLIPSE: f64 = 1.0 / SEED_CELLS;
/// Simulated time of the built-in single- and two-host presets.
pub const PRESET_T_END: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<FieldError>),
}

impl ScenarioError {
    pub fn fields(&self) -> &[FieldError] {
        match self {
            ScenarioError::Invalid(errors) => errors,
            _ => &[],
        }
    }
}

/// A complete, runnable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub domain: DomainSpec,
    pub hosts: Vec<HostParams>,
    pub d0: f64,
    pub initial: SystemState,
    pub model: ModelVariant,
    pub t_end: f64,
    pub integrator: IntegratorConfig,
    /// Initial cell mass entering the reproduction number.
    pub n0: f64,
}

fn geometry_field(e: &GeometryError) -> String {
    match e {
        GeometryError::HostNearBoundary { index, .. } | GeometryError::NonFinite { index } => {
            format!("hosts[{index}].position")
        }
        GeometryError::HostOverlap { first, second, .. } => {
            format!("hosts[{first}].position/hosts[{second}].position")
        }
        GeometryError::InvalidEpsilon(_) => "domain.epsilon".to_string(),
        _ => "domain".to_string(),
    }
}

fn common_violations(
    d0: f64,
    t_end: f64,
    integrator: &IntegratorConfig,
    n0: f64,
    initial: &SystemState,
    m: usize,
) -> Vec<FieldError> {
    let mut out = Vec::new();
    if !(d0 > 0.0 && d0.is_finite()) {
        out.push(FieldError::new("simulation.d0", format!("must be positive, got {d0}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        out.push(FieldError::new("simulation.t_end", format!("must be positive, got {t_end}")));
    }
    for (field, message) in integrator.violations() {
        out.push(FieldError::new(format!("simulation.{field}"), message));
    }
    if !(n0 > 0.0 && n0.is_finite()) {
        out.push(FieldError::new("reproduction.n0", format!("must be positive, got {n0}")));
    }
    let expected = 1 + HOST_BLOCK * m;
    let y = initial.as_slice();
    if y.len() != expected {
        out.push(FieldError::new(
            "initial",
            format!("state has {} components, expected {expected}", y.len()),
        ));
    } else {
        for (label, &value) in SystemState::labels(m).iter().zip(y) {
            if !(value >= 0.0 && value.is_finite()) {
                out.push(FieldError::new(
                    format!("initial.{label}"),
                    format!("must be finite and non-negative, got {value}"),
                ));
            }
        }
    }
    out
}

impl ScenarioConfig {
    /// Every violated invariant of an already assembled configuration.
    pub fn violations(&self) -> Vec<FieldError> {
        let mut out = Vec::new();
        let m = self.domain.host_count();
        if self.hosts.len() != m {
            out.push(FieldError::new(
                "hosts",
                format!("{} parameter sets for {m} positions", self.hosts.len()),
            ));
        }
        for (j, h) in self.hosts.iter().enumerate() {
            for e in h.violations() {
                out.push(FieldError::new(format!("hosts[{j}]"), e.to_string()));
            }
        }
        out.extend(common_violations(
            self.d0,
            self.t_end,
            &self.integrator,
            self.n0,
            &self.initial,
            m,
        ));
        out
    }

    /// Room with no hosts and airborne concentration `v0`.
    pub fn empty_room(v0: f64, t_end: f64) -> Self {
        Self {
            domain: DomainSpec::new(Vec::new(), DEFAULT_EPSILON).expect("empty layout is valid"),
            hosts: Vec::new(),
            d0: 1.0,
            initial: SystemState::new(v0, &[]),
            model: ModelVariant::default(),
            t_end,
            integrator: IntegratorConfig::default(),
            n0: 1.0,
        }
    }

    /// One reference host at the centre of the room, infection seeded in the
    /// eclipse compartment.
    pub fn single_host(d0: f64, model: ModelVariant) -> Self {
        Self {
            domain: DomainSpec::new(vec![Point::ORIGIN], DEFAULT_EPSILON)
                .expect("centred host is valid"),
            hosts: vec![HostParams::REFERENCE],
            d0,
            initial: SystemState::new(0.0, &[HostState::new(1.0, SEED_ECLIPSE, 0.0, 0.0)]),
            model,
            t_end: PRESET_T_END,
            integrator: IntegratorConfig::default(),
            n0: 1.0,
        }
    }

    /// Two reference hosts; host 1 is seeded, host 2 starts uninfected.
    ///
    /// # Panics
    /// If the positions violate the layout invariants.
    pub fn two_host(first: Point, second: Point, d0: f64, model: ModelVariant) -> Self {
        Self {
            domain: DomainSpec::new(vec![first, second], DEFAULT_EPSILON)
                .expect("preset positions are valid"),
            hosts: vec![HostParams::REFERENCE; 2],
            d0,
            initial: SystemState::new(
                0.0,
                &[
                    HostState::new(1.0, SEED_ECLIPSE, 0.0, 0.0),
                    HostState::susceptible(),
                ],
            ),
            model,
            t_end: PRESET_T_END,
            integrator: IntegratorConfig::default(),
            n0: 1.0,
        }
    }

    /// Named two-host layout with the published two-host model
    /// (leading-order coupling plus exhalation loss).
    pub fn two_host_case(case: TwoHostCase, d0: f64) -> Self {
        let [a, b] = case.positions();
        Self::two_host(a, b, d0, ModelVariant::new(Variant::LeadingOrder, true))
    }

    /// Random valid scenario for invariant sweeps: 1 to 4 hosts placed
    /// uniformly in `|x| < 0.9`, every rate a log-uniform multiple in
    /// `[0.5, 2]` of the reference value, `D0` log-uniform in
    /// `[RANDOM_D0.0, RANDOM_D0.1]`, any variant, either loss setting. The
    /// first host is seeded.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let m = rng.random_range(1..=4);
        let mut positions: Vec<Point> = Vec::with_capacity(m);
        while positions.len() < m {
            let r = 0.9 * rng.random::<f64>().sqrt();
            let p = Point::from_polar(r, std::f64::consts::TAU * rng.random::<f64>());
            let mut trial = positions.clone();
            trial.push(p);
            if DomainSpec::new(trial, DEFAULT_EPSILON).is_ok() {
                positions.push(p);
            }
        }
        let mut scale = |v: f64| v * 2f64.powf(rng.random_range(-1.0..=1.0));
        let r = HostParams::REFERENCE;
        let hosts: Vec<HostParams> = (0..m)
            .map(|_| HostParams {
                beta1: scale(r.beta1),
                beta2: scale(r.beta2),
                xi: scale(r.xi),
                k: scale(r.k),
                delta: scale(r.delta),
                p: scale(r.p),
                c: scale(r.c),
            })
            .collect();
        let (lo, hi) = RANDOM_D0;
        let d0 = (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
        let variant = Variant::ALL[rng.random_range(0..Variant::ALL.len())];
        let loss = rng.random::<bool>();
        let states: Vec<HostState> = (0..m)
            .map(|j| {
                if j == 0 {
                    HostState::new(1.0, SEED_ECLIPSE, 0.0, 0.0)
                } else {
                    HostState::susceptible()
                }
            })
            .collect();
        Self {
            domain: DomainSpec::new(positions, DEFAULT_EPSILON).expect("positions were checked"),
            hosts,
            d0,
            initial: SystemState::new(0.0, &states),
            model: ModelVariant::new(variant, loss),
            t_end: PRESET_T_END,
            integrator: IntegratorConfig::default(),
            n0: 1.0,
        }
    }
}

/// `D0` range of [`ScenarioConfig::random`], spanning the single-host
/// experiments.
pub const RANDOM_D0: (f64, f64) = (0.002, 2.0);

/// Host layouts of the two-host experiments: hosts at `(∓s, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoHostCase {
    I,
    II,
    III,
}

impl TwoHostCase {
    pub const ALL: [TwoHostCase; 3] = [TwoHostCase::I, TwoHostCase::II, TwoHostCase::III];

    pub fn half_separation(self) -> f64 {
        match self {
            TwoHostCase::I => 0.15,
            TwoHostCase::II => 0.5,
            TwoHostCase::III => 0.85,
        }
    }

    pub fn positions(self) -> [Point; 2] {
        let s = self.half_separation();
        [Point::new(-s, 0.0), Point::new(s, 0.0)]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TwoHostCase::I => "I",
            TwoHostCase::II => "II",
            TwoHostCase::III => "III",
        }
    }
}

impl std::str::FromStr for TwoHostCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(TwoHostCase::I),
            "II" | "2" => Ok(TwoHostCase::II),
            "III" | "3" => Ok(TwoHostCase::III),
            other => Err(format!("unknown case '{other}' (expected I, II or III)")),
        }
    }
}

/// Checks every invariant and returns the configuration unchanged when it
/// holds; `μ` and `|Ω|` are always derived from the domain.
pub fn validate_scenario(cfg: ScenarioConfig) -> Result<ScenarioConfig, ScenarioError> {
    let errors = cfg.violations();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ScenarioError::Invalid(errors))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSection {
    pub position: [f64; 2],
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub xi: Option<f64>,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub dimensional: Option<DimensionalParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub d0: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub exhalation_loss: bool,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: Option<usize>,
    pub method: Option<Method>,
}

fn default_variant() -> Variant {
    Variant::Multiscale
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(rename = "V", default)]
    pub airborne: f64,
    #[serde(rename = "T")]
    pub target: Vec<f64>,
    #[serde(rename = "E")]
    pub eclipse: Vec<f64>,
    #[serde(rename = "I")]
    pub infected: Vec<f64>,
    #[serde(rename = "v")]
    pub virus: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproductionSection {
    #[serde(default = "one")]
    pub n0: f64,
}

fn one() -> f64 {
    1.0
}

/// The scenario file as written on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub domain: DomainSection,
    #[serde(default)]
    pub hosts: Vec<HostSection>,
    pub simulation: SimulationSection,
    pub initial: InitialSection,
    pub reproduction: Option<ReproductionSection>,
}

/// A validated configuration plus non-fatal remarks about the input.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Resolves rates, assembles the state vector and validates everything,
    /// collecting one error per violated field.
    pub fn into_config(self) -> Result<LoadedScenario, ScenarioError> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let epsilon = self.domain.epsilon;
        let m = self.hosts.len();

        let positions: Vec<Point> = self.hosts.iter().map(|h| Point::from(h.position)).collect();
        let layout = DomainSpec::violations(&positions, epsilon);
        for e in &layout {
            errors.push(FieldError::new(geometry_field(e), e.to_string()));
        }

        let mut hosts = Vec::with_capacity(m);
        let mut derived_d0 = None;
        for (j, section) in self.hosts.iter().enumerate() {
            let direct = [
                section.beta1,
                section.beta2,
                section.xi,
                section.k,
                section.delta,
                section.p,
                section.c,
            ];
            let converted = match &section.dimensional {
                Some(dp) => match nondimensionalize(dp, epsilon) {
                    Ok((h, d0)) => {
                        derived_d0.get_or_insert(d0);
                        Some(h)
                    }
                    Err(e) => {
                        errors.push(FieldError::new(format!("hosts[{j}].dimensional"), e.to_string()));
                        None
                    }
                },
                None => None,
            };
            let names = ["beta1", "beta2", "xi", "k", "delta", "p", "c"];
            let mut values = [0.0; 7];
            let mut complete = true;
            for (slot, (name, given)) in names.iter().zip(direct).enumerate() {
                let from_dimensional = converted.map(|h| h.fields()[slot].1);
                match (given, from_dimensional) {
                    (Some(v), Some(_)) => {
                        warnings.push(format!(
                            "hosts[{j}].{name}: both a dimensionless value and a dimensional block are given; using the dimensionless value"
                        ));
                        values[slot] = v;
                    }
                    (Some(v), None) => values[slot] = v,
                    (None, Some(v)) => values[slot] = v,
                    (None, None) => {
                        if section.dimensional.is_none() {
                            errors.push(FieldError::new(
                                format!("hosts[{j}].{name}"),
                                "missing (give the rate or a [hosts.dimensional] block)",
                            ));
                        }
                        complete = false;
                    }
                }
            }
            let host = HostParams {
                beta1: values[0],
                beta2: values[1],
                xi: values[2],
                k: values[3],
                delta: values[4],
                p: values[5],
                c: values[6],
            };
            if complete {
                for e in host.violations() {
                    errors.push(FieldError::new(format!("hosts[{j}]"), e.to_string()));
                }
            }
            hosts.push(host);
        }

        let d0 = match (self.simulation.d0, derived_d0) {
            (Some(d0), Some(_)) => {
                warnings.push(
                    "simulation.d0 overrides the diffusion scale implied by the dimensional block"
                        .to_string(),
                );
                d0
            }
            (Some(d0), None) => d0,
            (None, Some(d0)) => d0,
            (None, None) => {
                errors.push(FieldError::new("simulation.d0", "missing"));
                1.0
            }
        };

        let init = &self.initial;
        for (name, values) in [
            ("T", &init.target),
            ("E", &init.eclipse),
            ("I", &init.infected),
            ("v", &init.virus),
        ] {
            if values.len() != m {
                errors.push(FieldError::new(
                    format!("initial.{name}"),
                    format!("has {} entries for {m} hosts", values.len()),
                ));
            }
        }

        let defaults = IntegratorConfig::default();
        let sim = &self.simulation;
        let integrator = IntegratorConfig {
            rtol: sim.rtol.unwrap_or(defaults.rtol),
            atol: sim.atol.unwrap_or(defaults.atol),
            h_init: sim.h_init,
            h_max: sim.h_max,
            max_steps: sim.max_steps.unwrap_or(defaults.max_steps),
            check_negativity: true,
            method: sim.method.unwrap_or(defaults.method),
        };
        if sim.variant == Variant::Tcl && sim.exhalation_loss {
            warnings.push("simulation.exhalation_loss has no effect for the tcl variant".to_string());
        }

        let lengths_ok = [&init.target, &init.eclipse, &init.infected, &init.virus]
            .iter()
            .all(|v| v.len() == m);
        let host_states: Vec<HostState> = if lengths_ok {
            (0..m)
                .map(|j| {
                    HostState::new(
                        init.target[j],
                        init.eclipse[j],
                        init.infected[j],
                        init.virus[j],
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let initial = SystemState::new(init.airborne, &host_states);
        let n0 = self.reproduction.as_ref().map_or(1.0, |r| r.n0);
        let scalar = common_violations(d0, sim.t_end, &integrator, n0, &initial, m);
        // A length mismatch is already reported per compartment above.
        errors.extend(scalar.into_iter().filter(|e| lengths_ok || e.field != "initial"));
        if !errors.is_empty() {
            return Err(ScenarioError::Invalid(errors));
        }

        let config = ScenarioConfig {
            domain: DomainSpec::new(positions, epsilon).map_err(|e| {
                ScenarioError::Invalid(vec![FieldError::new(geometry_field(&e), e.to_string())])
            })?,
            hosts,
            d0,
            initial,
            model: ModelVariant::new(sim.variant, sim.exhalation_loss),
            t_end: sim.t_end,
            integrator,
            n0,
        };
        let config = validate_scenario(config)?;
        for (j, p) in config.domain.hosts().iter().enumerate() {
            if p.norm() >= 0.9 {
                warnings.push(format!(
                    "hosts[{j}] sits at |x| = {:.3}; the regular part is large there and the two-term expansion degrades",
                    p.norm()
                ));
            }
        }
        Ok(LoadedScenario { config, warnings })
    }

    /// Serializable form of an in-memory configuration.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let hosts = cfg
            .domain
            .hosts()
            .iter()
            .zip(&cfg.hosts)
            .map(|(p, h)| HostSection {
                position: [p.x, p.y],
                beta1: Some(h.beta1),
                beta2: Some(h.beta2),
                xi: Some(h.xi),
                k: Some(h.k),
                delta: Some(h.delta),
                p: Some(h.p),
                c: Some(h.c),
                dimensional: None,
            })
            .collect();
        let states: Vec<HostState> = cfg.initial.hosts().collect();
        Self {
            domain: DomainSection {
                epsilon: cfg.domain.epsilon(),
            },
            hosts,
            simulation: SimulationSection {
                d0: Some(cfg.d0),
                t_end: cfg.t_end,
                variant: cfg.model.variant,
                exhalation_loss: cfg.model.exhalation_loss,
                rtol: Some(cfg.integrator.rtol),
                atol: Some(cfg.integrator.atol),
                h_init: cfg.integrator.h_init,
                h_max: cfg.integrator.h_max,
                max_steps: Some(cfg.integrator.max_steps),
                method: Some(cfg.integrator.method),
            },
            initial: InitialSection {
                airborne: cfg.initial.airborne(),
                target: states.iter().map(|s| s.target).collect(),
                eclipse: states.iter().map(|s| s.eclipse).collect(),
                infected: states.iter().map(|s| s.infected).collect(),
                virus: states.iter().map(|s| s.virus).collect(),
            },
            reproduction: Some(ReproductionSection { n0: cfg.n0 }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario, ScenarioError> {
    ScenarioFile::parse(text)?.into_config()
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}
