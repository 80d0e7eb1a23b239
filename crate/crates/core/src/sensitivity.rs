//! Latin hypercube sampling and partial rank correlation coefficients.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ModelVariant, Variant};
use crate::integrator::integrate;
use crate::params::HostParams;
use crate::reproduction::{r0_for_variant, R0Inputs};
use crate::scenario::ScenarioConfig;

/// Share of samples allowed to fail integration before a run is abandoned.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
pub const DEFAULT_SAMPLES: usize = 1000;
/// Simulated time for peak viral load evaluations.
pub const PEAK_T_END: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("range for {name}: {message}")]
    InvalidRange { name: String, message: String },
    #[error("need at least 2 samples and 1 range (got n = {n}, d = {d})")]
    TooSmall { n: usize, d: usize },
    #[error("{name} cannot be varied for the {variant} model")]
    NotApplicable { name: String, variant: Variant },
    #[error("{failed} of {n} samples failed to integrate (limit {limit}); first failure at sample {index}: {message}")]
    TooManyFailures {
        failed: usize,
        n: usize,
        limit: usize,
        index: usize,
        message: String,
    },
    #[error(transparent)]
    Prcc(#[from] PrccError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrccError {
    #[error("need more samples than parameters + 2 (n = {n}, d = {d})")]
    TooFewSamples { n: usize, d: usize },
    #[error("output has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("column {0} is constant")]
    ConstantColumn(usize),
    #[error("output is constant")]
    ConstantOutput,
    #[error("regression for parameter {0} is rank deficient (collinear ranked inputs)")]
    RankDeficient(usize),
}

/// Parameters that a sensitivity run may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensParam {
    Beta1,
    Beta2,
    Xi,
    K,
    Delta,
    P,
    C,
    D0,
}

impl SensParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SensParam::Beta1 => "beta1",
            SensParam::Beta2 => "beta2",
            SensParam::Xi => "xi",
            SensParam::K => "k",
            SensParam::Delta => "delta",
            SensParam::P => "p",
            SensParam::C => "c",
            SensParam::D0 => "d0",
        }
    }

    /// Whether the parameter enters the given model at all.
    pub fn applies_to(self, variant: Variant) -> bool {
        match variant {
            Variant::Tcl => !matches!(self, SensParam::Beta1 | SensParam::Xi | SensParam::D0),
            Variant::WellMixed => self != SensParam::D0,
            _ => true,
        }
    }

    fn apply(self, cfg: &mut ScenarioConfig, value: f64) {
        if self == SensParam::D0 {
            cfg.d0 = value;
            return;
        }
        for h in &mut cfg.hosts {
            match self {
                SensParam::Beta1 => h.beta1 = value,
                SensParam::Beta2 => h.beta2 = value,
                SensParam::Xi => h.xi = value,
                SensParam::K => h.k = value,
                SensParam::Delta => h.delta = value,
                SensParam::P => h.p = value,
                SensParam::C => h.c = value,
                SensParam::D0 => unreachable!(),
            }
        }
    }
}

impl fmt::Display for SensParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SensParam::Beta1,
            SensParam::Beta2,
            SensParam::Xi,
            SensParam::K,
            SensParam::Delta,
            SensParam::P,
            SensParam::C,
            SensParam::D0,
        ]
        .into_iter()
        .find(|p| p.as_str() == s.to_ascii_lowercase())
        .ok_or_else(|| format!("unknown parameter '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    #[serde(alias = "logarithmic")]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub name: SensParam,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub scale: Scale,
}

impl ParamRange {
    pub fn new(name: SensParam, low: f64, high: f64, scale: Scale) -> Self {
        Self {
            name,
            low,
            high,
            scale,
        }
    }

    pub fn validate(&self) -> Result<(), SensitivityError> {
        let bad = |message: &str| SensitivityError::InvalidRange {
            name: self.name.to_string(),
            message: message.to_string(),
        };
        if !(self.low.is_finite() && self.high.is_finite()) {
            return Err(bad("bounds must be finite"));
        }
        if !(self.low < self.high) {
            return Err(bad("low must be below high"));
        }
        if self.scale == Scale::Log && !(self.low > 0.0) {
            return Err(bad("a logarithmic range needs low > 0"));
        }
        Ok(())
    }

    /// Maps `u ∈ [0, 1]` to the range.
    pub fn map(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.low + u * (self.high - self.low),
            Scale::Log => (self.low.ln() + u * (self.high.ln() - self.low.ln())).exp(),
        }
    }
}

/// Reference values times `[0.5, 2]`, log scale for the rates spanning
/// orders of magnitude, for every parameter the model uses.
pub fn default_ranges(variant: Variant) -> Vec<ParamRange> {
    let t = HostParams::REFERENCE;
    let all = [
        (SensParam::Beta1, t.beta1, Scale::Log),
        (SensParam::Beta2, t.beta2, Scale::Log),
        (SensParam::Xi, t.xi, Scale::Linear),
        (SensParam::K, t.k, Scale::Linear),
        (SensParam::Delta, t.delta, Scale::Linear),
        (SensParam::P, t.p, Scale::Log),
        (SensParam::C, t.c, Scale::Linear),
        (SensParam::D0, 2.0, Scale::Linear),
    ];
    all.into_iter()
        .filter(|(p, _, _)| p.applies_to(variant))
        .map(|(p, v, s)| ParamRange::new(p, 0.5 * v, 2.0 * v, s))
        .collect()
}

/// `n × d` Latin hypercube sample, one row per sample.
///
/// Each dimension gets its own random permutation of the `n` strata and a
/// uniform offset inside each stratum.
pub fn lhs_sample(ranges: &[ParamRange], n: usize, seed: u64) -> Result<Vec<Vec<f64>>, SensitivityError> {
    if n < 2 || ranges.is_empty() {
        return Err(SensitivityError::TooSmall { n, d: ranges.len() });
    }
    for r in ranges {
        r.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; ranges.len()]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, range) in ranges.iter().enumerate() {
        strata.sort_unstable();
        strata.shuffle(&mut rng);
        for (row, &stratum) in rows.iter_mut().zip(&strata) {
            let u = (stratum as f64 + rng.random::<f64>()) / n as f64;
            row[j] = range.map(u.min(1.0));
        }
    }
    Ok(rows)
}

/// 1-based ranks with ties sharing their average rank.
pub fn rank(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Residuals of regressing `target` on `design` (columns include the intercept).
fn residuals(design: &DMatrix<f64>, target: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * scale) {
        return None;
    }
    let q = qr.q();
    let fitted = &q * (q.transpose() * target);
    Some(target - fitted)
}

/// PRCC of every input column with the output.
///
/// Outer errors concern the whole problem; an inner error means only that
/// parameter's regression was degenerate.
pub fn prcc(inputs: &[Vec<f64>], output: &[f64]) -> Result<Vec<Result<f64, PrccError>>, PrccError> {
    let n = inputs.len();
    let d = inputs.first().map_or(0, Vec::len);
    if output.len() != n {
        return Err(PrccError::LengthMismatch {
            got: output.len(),
            expected: n,
        });
    }
    if n <= d + 2 || d == 0 {
        return Err(PrccError::TooFewSamples { n, d });
    }
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|j| rank(&inputs.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect();
    for (j, col) in columns.iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            return Err(PrccError::ConstantColumn(j));
        }
    }
    let y = rank(output);
    if y.iter().all(|&v| v == y[0]) {
        return Err(PrccError::ConstantOutput);
    }
    let y = DVector::from_vec(y);

    Ok((0..d)
        .map(|j| {
            let design = DMatrix::from_fn(n, d, |i, c| match c {
                0 => 1.0,
                _ => {
                    let col = if c - 1 < j { c - 1 } else { c };
                    columns[col][i]
                }
            });
            let xj = DVector::from_column_slice(&columns[j]);
            let rx = residuals(&design, &xj).ok_or(PrccError::RankDeficient(j))?;
            // x_j lying in the span of the other columns leaves no residual.
            let spread = (&xj - DVector::repeat(n, xj.mean())).norm();
            if rx.norm() <= 1e-9 * spread {
                return Err(PrccError::RankDeficient(j));
            }
            let ry = residuals(&design, &y).ok_or(PrccError::RankDeficient(j))?;
            let r = pearson(rx.as_slice(), ry.as_slice());
            if r.is_finite() {
                Ok(r)
            } else {
                Err(PrccError::RankDeficient(j))
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    R0,
    PeakV,
}

/// Single reference host at the origin used for sensitivity runs: the
/// requested variant with exhalation loss, seeded infection, `t_end` =
/// [`PEAK_T_END`].
pub fn sensitivity_template(variant: Variant) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::single_host(2.0, ModelVariant::new(variant, true));
    cfg.t_end = PEAK_T_END;
    cfg
}

fn evaluate(cfg: &ScenarioConfig, target: Target) -> Result<f64, String> {
    match target {
        Target::R0 => {
            let x = R0Inputs::from_scenario(cfg).map_err(|e| e.to_string())?;
            Ok(r0_for_variant(&x, cfg.model.variant))
        }
        Target::PeakV => {
            let traj = integrate(cfg, &cfg.integrator).map_err(|e| e.to_string())?;
            traj.peak_virus(0).map(|(_, v)| v).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityResult {
    pub target: Target,
    pub parameters: Vec<SensParam>,
    pub prcc: Vec<f64>,
    pub n: usize,
    pub n_effective: usize,
    pub seed: u64,
    /// `(sample index, reason)` of every dropped sample.
    pub dropped: Vec<(usize, String)>,
}

impl SensitivityResult {
    pub fn get(&self, p: SensParam) -> Option<f64> {
        self.parameters.iter().position(|&q| q == p).map(|i| self.prcc[i])
    }
}

fn check_ranges(ranges: &[ParamRange], variant: Variant) -> Result<(), SensitivityError> {
    for (i, r) in ranges.iter().enumerate() {
        r.validate()?;
        if !r.name.applies_to(variant) {
            return Err(SensitivityError::NotApplicable {
                name: r.name.to_string(),
                variant,
            });
        }
        if ranges[..i].iter().any(|q| q.name == r.name) {
            return Err(SensitivityError::InvalidRange {
                name: r.name.to_string(),
                message: "listed twice".to_string(),
            });
        }
    }
    Ok(())
}

/// Model outputs at every sample row; evaluated in parallel, keyed by index.
pub fn evaluate_samples(
    ranges: &[ParamRange],
    samples: &[Vec<f64>],
    target: Target,
    template: &ScenarioConfig,
) -> Vec<Result<f64, String>> {
    samples
        .par_iter()
        .map(|row| {
            let mut cfg = template.clone();
            for (r, &v) in ranges.iter().zip(row) {
                r.name.apply(&mut cfg, v);
            }
            evaluate(&cfg, target)
        })
        .collect()
}

/// PRCCs of one model output over a Latin hypercube sample.
pub fn run_sensitivity(
    ranges: &[ParamRange],
    n: usize,
    seed: u64,
    target: Target,
    template: &ScenarioConfig,
) -> Result<SensitivityResult, SensitivityError> {
    check_ranges(ranges, template.model.variant)?;
    let samples = lhs_sample(ranges, n, seed)?;
    let outputs = evaluate_samples(ranges, &samples, target, template);
    summarize(ranges, &samples, outputs, target, seed)
}

fn summarize(
    ranges: &[ParamRange],
    samples: &[Vec<f64>],
    outputs: Vec<Result<f64, String>>,
    target: Target,
    seed: u64,
) -> Result<SensitivityResult, SensitivityError> {
    let n = samples.len();
    let mut kept_x = Vec::with_capacity(n);
    let mut kept_y = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for (i, out) in outputs.into_iter().enumerate() {
        match out {
            Ok(y) if y.is_finite() => {
                kept_x.push(samples[i].clone());
                kept_y.push(y);
            }
            Ok(y) => dropped.push((i, format!("non-finite output {y}"))),
            Err(e) => dropped.push((i, e)),
        }
    }
    let limit = (MAX_FAILURE_FRACTION * n as f64).floor() as usize;
    if dropped.len() > limit {
        let (index, message) = dropped[0].clone();
        return Err(SensitivityError::TooManyFailures {
            failed: dropped.len(),
            n,
            limit,
            index,
            message,
        });
    }
    let values = prcc(&kept_x, &kept_y)?;
    let prcc = values.into_iter().collect::<Result<Vec<f64>, PrccError>>()?;
    Ok(SensitivityResult {
        target,
        parameters: ranges.iter().map(|r| r.name).collect(),
        prcc,
        n,
        n_effective: kept_y.len(),
        seed,
        dropped,
    })
}

/// Both outputs from one shared sample, as written to the results table.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityTable {
    pub r0: SensitivityResult,
    pub peak_v: SensitivityResult,
}

pub fn run_sensitivity_table(
    ranges: &[ParamRange],
    n: usize,
    seed: u64,
    template: &ScenarioConfig,
) -> Result<SensitivityTable, SensitivityError> {
    check_ranges(ranges, template.model.variant)?;
    let samples = lhs_sample(ranges, n, seed)?;
    let r0 = evaluate_samples(ranges, &samples, Target::R0, template);
    let peak = evaluate_samples(ranges, &samples, Target::PeakV, template);
    Ok(SensitivityTable {
        r0: summarize(ranges, &samples, r0, Target::R0, seed)?,
        peak_v: summarize(ranges, &samples, peak, Target::PeakV, seed)?,
    })
}

impl SensitivityTable {
    pub const HEADER: &'static str = "parameter,prcc_r0,prcc_peak_v,n_effective,seed";

    /// One CSV line per parameter; `n_effective` counts the samples that
    /// entered both columns.
    pub fn csv_rows(&self) -> Vec<String> {
        let n_effective = self.r0.n_effective.min(self.peak_v.n_effective);
        self.r0
            .parameters
            .iter()
            .enumerate()
            .map(|(i, p)| {
                format!(
                    "{},{:.16e},{:.16e},{},{}",
                    p, self.r0.prcc[i], self.peak_v.prcc[i], n_effective, self.r0.seed
                )
            })
            .collect()
    }
}

/// Contents of a ranges file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesFile {
    pub ranges: Vec<ParamRange>,
    /// Simulated time for the peak viral load.
    pub t_end: Option<f64>,
    pub exhalation_loss: Option<bool>,
    /// Fixed `D0` when it is not varied.
    pub d0: Option<f64>,
}

impl RangesFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn template(&self, variant: Variant) -> ScenarioConfig {
        let mut cfg = sensitivity_template(variant);
        if let Some(t) = self.t_end {
            cfg.t_end = t;
        }
        if let Some(loss) = self.exhalation_loss {
            cfg.model.exhalation_loss = loss;
        }
        if let Some(d0) = self.d0 {
            cfg.d0 = d0;
        }
        cfg
    }
}
