//! Kinetic parameter sets and the map from dimensional rates to model rates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::mu_from_epsilon;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} must be strictly positive (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("{field} must be non-negative (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} must be finite (got {value})")]
    NonFinite { field: &'static str, value: f64 },
    #[error("epsilon must lie in (0, 0.5) (got {0})")]
    Epsilon(f64),
}

/// Rates in physical units for one host and the room it sits in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionalParams {
    /// Airborne infection rate, length/time.
    pub b1: f64,
    /// In-vivo infection rate, 1/(time · copies/mL).
    pub b2: f64,
    /// Exhalation rate, 1/(length · time).
    pub gamma: f64,
    /// Eclipse exit rate, 1/time.
    pub alpha: f64,
    /// Infected-cell death rate, 1/time.
    pub d: f64,
    /// Virus production, (copies/mL)/(time · cells).
    pub rho: f64,
    /// In-vivo clearance, 1/time.
    pub phi: f64,
    /// Airborne degradation, 1/time.
    pub k_r: f64,
    /// Airborne diffusivity, length²/time.
    #[serde(rename = "D_r")]
    pub d_r: f64,
    /// Reference airborne density, copies/mL.
    pub r_c: f64,
    /// Room radius.
    #[serde(rename = "L")]
    pub length: f64,
    /// Target cells per host.
    #[serde(rename = "N")]
    pub cells: f64,
}

impl DimensionalParams {
    /// The dimensional column of the reference parameter table (`D_r` and `L`
    /// are not given there and are set to 1).
    pub fn reference() -> Self {
        Self {
            b1: 1e-8,
            b2: 1e-8,
            gamma: 2.0,
            alpha: 4.0,
            d: 1.7,
            rho: 1e2,
            phi: 10.0,
            k_r: 10.0,
            d_r: 1.0,
            r_c: 1.0,
            length: 1.0,
            cells: 8e7,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 12] {
        [
            ("b1", self.b1),
            ("b2", self.b2),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("d", self.d),
            ("rho", self.rho),
            ("phi", self.phi),
            ("k_r", self.k_r),
            ("D_r", self.d_r),
            ("r_c", self.r_c),
            ("L", self.length),
            ("N", self.cells),
        ]
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (field, value) in self.fields() {
            if !value.is_finite() {
                return Err(ParamError::NonFinite { field, value });
            }
            if value <= 0.0 {
                return Err(ParamError::NotPositive { field, value });
            }
        }
        Ok(())
    }
}

/// Dimensionless kinetic and coupling rates of one host.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostParams {
    pub beta1: f64,
    pub beta2: f64,
    pub xi: f64,
    pub k: f64,
    pub delta: f64,
    pub p: f64,
    pub c: f64,
}

impl HostParams {
    /// Dimensionless reference values.
    pub const REFERENCE: HostParams = HostParams {
        beta1: 5.6e-7,
        beta2: 5.6e-7,
        xi: 4.19,
        k: 0.4,
        delta: 0.17,
        p: 1.6e10,
        c: 1.0,
    };

    pub fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("xi", self.xi),
            ("k", self.k),
            ("delta", self.delta),
            ("p", self.p),
            ("c", self.c),
        ]
    }

    /// All rates finite and non-negative; `k`, `delta` and `c` strictly positive.
    pub fn violations(&self) -> Vec<ParamError> {
        let mut out = Vec::new();
        for (field, value) in self.fields() {
            if !value.is_finite() {
                out.push(ParamError::NonFinite { field, value });
            } else if matches!(field, "k" | "delta" | "c") {
                if value <= 0.0 {
                    out.push(ParamError::NotPositive { field, value });
                }
            } else if value < 0.0 {
                out.push(ParamError::Negative { field, value });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl Default for HostParams {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// Maps physical rates to model rates for a host of relative radius `epsilon`.
///
/// Returns the host rates together with the diffusion scale `D0 = μ D`, where
/// `D = D_r/(k_r L²)` and `μ = −1/ln ε`. Both the airborne infection rate and
/// the exhalation rate carry the host perimeter `2π ε`.
pub fn nondimensionalize(
    dp: &DimensionalParams,
    epsilon: f64,
) -> Result<(HostParams, f64), ParamError> {
    dp.validate()?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(ParamError::Epsilon(epsilon));
    }
    let perimeter = 2.0 * PI * epsilon;
    let host = HostParams {
        beta1: perimeter * dp.b1 / (dp.k_r * dp.length),
        beta2: dp.b2 * dp.r_c / dp.k_r,
        xi: perimeter * dp.gamma * dp.length / dp.k_r,
        k: dp.alpha / dp.k_r,
        delta: dp.d / dp.k_r,
        p: dp.rho * dp.cells / (dp.k_r * dp.r_c),
        c: dp.phi / dp.k_r,
    };
    let diffusion = dp.d_r / (dp.k_r * dp.length * dp.length);
    Ok((host, mu_from_epsilon(epsilon) * diffusion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_rates_reproduce_table() {
        let (host, _) = nondimensionalize(&DimensionalParams::reference(), 0.05).unwrap();
        assert!((host.k - 0.4).abs() < 1e-15);
        assert!((host.delta - 0.17).abs() < 1e-15);
        assert!((host.c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_scale_identity() {
        let ones = DimensionalParams {
            b1: 1.0,
            b2: 1.0,
            gamma: 1.0,
            alpha: 1.0,
            d: 1.0,
            rho: 1.0,
            phi: 1.0,
            k_r: 1.0,
            d_r: 1.0,
            r_c: 1.0,
            length: 1.0,
            cells: 1.0,
        };
        let eps = (-1.0_f64).exp();
        let (host, d0) = nondimensionalize(&ones, eps).unwrap();
        let perimeter = 2.0 * PI * eps;
        assert!((d0 - 1.0).abs() < 1e-15);
        assert_eq!(host.k, 1.0);
        assert_eq!(host.delta, 1.0);
        assert_eq!(host.c, 1.0);
        assert_eq!(host.p, 1.0);
        assert_eq!(host.beta2, 1.0);
        assert_eq!(host.beta1, perimeter);
        assert_eq!(host.xi, perimeter);
    }

    #[test]
    fn rejects_non_positive_input() {
        let mut dp = DimensionalParams::reference();
        dp.phi = 0.0;
        assert!(matches!(
            nondimensionalize(&dp, 0.05),
            Err(ParamError::NotPositive { field: "phi", .. })
        ));
        assert!(matches!(
            nondimensionalize(&DimensionalParams::reference(), 0.7),
            Err(ParamError::Epsilon(_))
        ));
    }

    #[test]
    fn host_param_validation() {
        assert!(HostParams::REFERENCE.validate().is_ok());
        let mut h = HostParams::REFERENCE;
        h.beta1 = 0.0;
        assert!(h.validate().is_ok());
        h.delta = 0.0;
        h.p = -1.0;
        assert_eq!(h.violations().len(), 2);
    }

    proptest! {
        // Changing the time unit multiplies every rate by the same factor.
        #[test]
        fn time_unit_does_not_change_model_rates(
            s in 1e-3..1e3f64,
            eps in 0.01..0.3f64,
            jitter in prop::array::uniform12(0.5..2.0f64),
        ) {
            let r = DimensionalParams::reference();
            let dp = DimensionalParams {
                b1: r.b1 * jitter[0],
                b2: r.b2 * jitter[1],
                gamma: r.gamma * jitter[2],
                alpha: r.alpha * jitter[3],
                d: r.d * jitter[4],
                rho: r.rho * jitter[5],
                phi: r.phi * jitter[6],
                k_r: r.k_r * jitter[7],
                d_r: r.d_r * jitter[8],
                r_c: r.r_c * jitter[9],
                length: r.length * jitter[10],
                cells: r.cells * jitter[11],
            };
            let scaled = DimensionalParams {
                b1: dp.b1 * s,
                b2: dp.b2 * s,
                gamma: dp.gamma * s,
                alpha: dp.alpha * s,
                d: dp.d * s,
                rho: dp.rho * s,
                phi: dp.phi * s,
                k_r: dp.k_r * s,
                d_r: dp.d_r * s,
                ..dp
            };
            let (a, da) = nondimensionalize(&dp, eps).unwrap();
            let (b, db) = nondimensionalize(&scaled, eps).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-14 * x.abs().max(y.abs());
            prop_assert!(close(da, db));
            for (x, y) in a.fields().iter().zip(b.fields().iter()) {
                prop_assert!(close(x.1, y.1), "{}: {} vs {}", x.0, x.1, y.1);
            }
        }
    }
}
