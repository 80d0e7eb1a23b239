//! Reduced multiscale model of airborne viral transmission between hosts in
//! a disk-shaped room.
//!
//! Each host carries target-cell-limited within-host kinetics; hosts shed
//! virus into a shared airborne pool whose spatial structure enters through
//! the Neumann Green's function of the unit disk.

pub mod dynamics;
pub mod geometry;
pub mod greens_check;
pub mod integrator;
pub mod params;
pub mod quadrature;
pub mod reproduction;
pub mod scenario;
pub mod sensitivity;

pub use dynamics::{Dynamics, HostState, ModelVariant, OdeSystem, SystemState, Variant};
pub use geometry::{build_greens_matrix, greens_value, regular_part, DomainSpec, GreensMatrix, Point};
pub use integrator::{integrate, IntegrationError, IntegratorConfig, Trajectory};
pub use params::{nondimensionalize, DimensionalParams, HostParams};
pub use reproduction::{ngm_spectral_r0, r0_tcl, r0_two_term, r0_well_mixed, R0Inputs};
pub use scenario::{load_scenario, validate_scenario, ScenarioConfig, ScenarioError, TwoHostCase};
