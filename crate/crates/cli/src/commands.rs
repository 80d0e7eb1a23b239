use std::fs;
use std::path::{Path, PathBuf};

use airborne::dynamics::{HostState, ModelVariant, SystemState, Variant};
use airborne::greens_check::run_greens_checks;
use airborne::integrator::{integrate, Trajectory};
use airborne::reproduction::{ngm_spectral_r0, r0_for_variant, r0_two_term, sweep_r0, Grid, R0Inputs};
use airborne::scenario::{parse_scenario, ScenarioConfig, TwoHostCase};
use airborne::sensitivity::{default_ranges, run_sensitivity_table, RangesFile, SensitivityTable};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{num, opt_num, Artifacts, Csv};
use crate::CliError;

/// Scenario file text plus the parsed configuration; warnings go to stderr.
pub struct Loaded {
    pub path: PathBuf,
    pub text: String,
    pub config: ScenarioConfig,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let loaded = parse_scenario(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Loaded {
        path: path.to_path_buf(),
        text,
        config: loaded.config,
    })
}

fn solve(cfg: &ScenarioConfig) -> Result<Trajectory, CliError> {
    integrate(cfg, &cfg.integrator).map_err(|e| CliError::Numerical(e.to_string()))
}

pub fn simulate(config: &Path, out: &Path, samples: usize) -> Result<(), CliError> {
    let loaded = load(config)?;
    let cfg = &loaded.config;
    let traj = solve(cfg)?;
    let mut labels = vec!["t".to_string()];
    labels.extend(SystemState::labels(cfg.domain.host_count()));
    let header: Vec<&str> = labels.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for (t, y) in traj.sample(samples).map_err(|e| CliError::Usage(e.to_string()))? {
        csv.row(std::iter::once(num(t)).chain(y.into_iter().map(num)));
    }
    let mut art = Artifacts::new(out, "simulate")?;
    art.config(&loaded.path, &loaded.text);
    let path = art.write("trajectory.csv", csv.as_str())?;
    art.finish()?;
    eprintln!(
        "{} steps ({} implicit), {} samples -> {}",
        traj.step_count(),
        traj.stiff_steps(),
        samples,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R0Methods {
    Expansion,
    Ngm,
    All,
}

#[derive(Serialize)]
struct R0Record {
    variant: Variant,
    #[serde(rename = "R0", skip_serializing_if = "Option::is_none")]
    r0: Option<f64>,
    #[serde(rename = "R1", skip_serializing_if = "Option::is_none")]
    r1: Option<f64>,
    #[serde(rename = "R2", skip_serializing_if = "Option::is_none")]
    r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ngm_value: Option<f64>,
    inputs: R0Inputs,
}

pub fn r0(config: &Path, variant: Option<Variant>, methods: R0Methods, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = load(config)?;
    let cfg = &loaded.config;
    let inputs = R0Inputs::from_scenario(cfg).map_err(|e| {
        CliError::Config(format!(
            "{e}; the reproduction number is defined per host, split the room into single-host scenarios"
        ))
    })?;
    let position = cfg.domain.hosts()[0];
    if position.norm() >= 0.9 {
        eprintln!(
            "warning: host at |x| = {:.3} has regular part R = {:.4}; the two-term expansion degrades near the wall",
            position.norm(),
            inputs.regular
        );
    }
    let variant = variant.unwrap_or(cfg.model.variant);
    let expansion = methods != R0Methods::Ngm;
    let ngm = methods != R0Methods::Expansion;
    let terms = r0_two_term(&inputs);
    let record = R0Record {
        variant,
        r0: expansion.then(|| r0_for_variant(&inputs, variant)),
        r1: expansion.then_some(terms.r1),
        r2: expansion.then_some(terms.r2),
        ngm_value: ngm.then(|| ngm_spectral_r0(&inputs)),
        inputs,
    };
    let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
    text.push('\n');
    print!("{text}");
    if let Some(dir) = out {
        let mut art = Artifacts::new(dir, "r0")?;
        art.config(&loaded.path, &loaded.text);
        art.write("r0.json", &text)?;
        art.finish()?;
    }
    Ok(())
}

fn reference_or(config: Option<&Path>) -> Result<Option<Loaded>, CliError> {
    config.map(load).transpose()
}

pub fn sweep(
    config: Option<&Path>,
    out: &Path,
    beta1: Grid,
    beta2: Grid,
    d0_list: &[f64],
) -> Result<(), CliError> {
    let loaded = reference_or(config)?;
    let base_cfg = loaded
        .as_ref()
        .map_or_else(|| ScenarioConfig::single_host(1.0, ModelVariant::default()), |l| l.config.clone());
    let mut bases = Vec::with_capacity(d0_list.len());
    for &d0 in d0_list {
        let mut cfg = base_cfg.clone();
        cfg.d0 = d0;
        bases.push(R0Inputs::from_scenario(&cfg).map_err(|e| CliError::Config(e.to_string()))?);
    }
    let tables: Vec<String> = bases
        .par_iter()
        .map(|base| {
            let mut csv = Csv::new(&["beta1", "beta2", "R1", "R0"]);
            for p in sweep_r0(base, &beta1, &beta2) {
                csv.row([num(p.beta1), num(p.beta2), num(p.r1), num(p.r0)]);
            }
            csv.as_str().to_string()
        })
        .collect();
    let mut art = Artifacts::new(out, "sweep-r0")?;
    if let Some(l) = &loaded {
        art.config(&l.path, &l.text);
    }
    for (d0, table) in d0_list.iter().zip(&tables) {
        art.write(&format!("r0_sweep_d0_{d0}.csv"), table)?;
    }
    art.finish()?;
    eprintln!("{} grids of {}x{} points", tables.len(), beta1.steps, beta2.steps);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnsetCase {
    Named(TwoHostCase),
    Custom,
}

impl OnsetCase {
    fn label(self) -> &'static str {
        match self {
            OnsetCase::Named(c) => c.as_str(),
            OnsetCase::Custom => "custom",
        }
    }
}

impl std::str::FromStr for OnsetCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("custom") {
            return Ok(OnsetCase::Custom);
        }
        s.parse().map(OnsetCase::Named)
    }
}

/// Scenario of one onset run. A named case moves the hosts of the supplied
/// scenario (or the reference pair) to the preset positions.
fn onset_scenario(base: Option<&ScenarioConfig>, case: OnsetCase, d0: f64) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match (case, base) {
        (OnsetCase::Custom, Some(b)) => b.clone(),
        (OnsetCase::Custom, None) => {
            return Err(CliError::Config("--case custom needs a two-host --config".to_string()))
        }
        (OnsetCase::Named(c), None) => ScenarioConfig::two_host_case(c, d0),
        (OnsetCase::Named(c), Some(b)) => {
            let [p, q] = c.positions();
            let mut cfg = ScenarioConfig::two_host(p, q, d0, b.model);
            cfg.hosts = b.hosts.clone();
            cfg.initial = b.initial.clone();
            cfg.t_end = b.t_end;
            cfg.n0 = b.n0;
            cfg.integrator = b.integrator;
            cfg
        }
    };
    if cfg.domain.host_count() != 2 {
        return Err(CliError::Config(format!(
            "onset runs need exactly two hosts, the scenario has {}",
            cfg.domain.host_count()
        )));
    }
    cfg.d0 = d0;
    Ok(cfg)
}

pub struct OnsetRow {
    pub d0: f64,
    pub case: &'static str,
    pub first: Option<f64>,
    pub second: Option<f64>,
}

impl OnsetRow {
    pub fn delay(&self) -> Option<f64> {
        Some(self.second? - self.first?)
    }
}

pub fn onset(
    config: Option<&Path>,
    out: &Path,
    cases: &[OnsetCase],
    threshold: f64,
    d0_list: &[f64],
) -> Result<(), CliError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(CliError::Usage(format!("--threshold must be positive, got {threshold}")));
    }
    let loaded = reference_or(config)?;
    let base = loaded.as_ref().map(|l| &l.config);
    if let Some(b) = base {
        let seeded = b.initial.hosts().map(|h: HostState| h.eclipse + h.infected + h.virus > 0.0).collect::<Vec<_>>();
        if seeded.len() == 2 && (!seeded[0] || seeded[1]) {
            eprintln!("warning: onset delays assume host 1 is seeded and host 2 starts uninfected");
        }
    }
    let mut jobs = Vec::new();
    for &case in cases {
        for &d0 in d0_list {
            jobs.push((case, d0, onset_scenario(base, case, d0)?));
        }
    }
    let rows: Vec<Result<OnsetRow, CliError>> = jobs
        .par_iter()
        .map(|(case, d0, cfg)| {
            let traj = solve(cfg)?;
            let first = traj.detect_onset(0, threshold).map_err(|e| CliError::Numerical(e.to_string()))?;
            let second = traj.detect_onset(1, threshold).map_err(|e| CliError::Numerical(e.to_string()))?;
            Ok(OnsetRow {
                d0: *d0,
                case: case.label(),
                first,
                second,
            })
        })
        .collect();
    let mut csv = Csv::new(&["D0", "case", "onset_1", "onset_2", "delay"]);
    for row in rows {
        let row = row?;
        csv.row([num(row.d0), row.case.to_string(), opt_num(row.first), opt_num(row.second), opt_num(row.delay())]);
    }
    let mut art = Artifacts::new(out, "onset")?;
    if let Some(l) = &loaded {
        art.config(&l.path, &l.text);
    }
    art.write("onset.csv", csv.as_str())?;
    art.finish()?;
    print!("{}", csv.as_str());
    Ok(())
}

pub fn sensitivity(
    ranges_path: Option<&Path>,
    out: &Path,
    n: usize,
    seed: u64,
    model: Variant,
) -> Result<(), CliError> {
    if !matches!(model, Variant::Multiscale | Variant::Tcl) {
        return Err(CliError::Usage(format!("--model must be multiscale or tcl, got {model}")));
    }
    let (file, text) = match ranges_path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let file = RangesFile::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            (file, Some(text))
        }
        None => (
            RangesFile {
                ranges: default_ranges(model),
                t_end: None,
                exhalation_loss: None,
                d0: None,
            },
            None,
        ),
    };
    let template = file.template(model);
    let table = run_sensitivity_table(&file.ranges, n, seed, &template).map_err(|e| match e {
        airborne::sensitivity::SensitivityError::TooManyFailures { .. } => CliError::Numerical(e.to_string()),
        _ => CliError::Config(e.to_string()),
    })?;
    let mut csv = Csv::new(&["parameter", "prcc_r0", "prcc_peak_v", "n_effective", "seed"]);
    for line in table.csv_rows() {
        csv.line(&line);
    }
    let mut art = Artifacts::new(out, "sensitivity")?;
    if let (Some(p), Some(t)) = (ranges_path, &text) {
        art.config(p, t);
    }
    art.seed(seed);
    art.write("prcc.csv", csv.as_str())?;
    art.finish()?;
    print_sign_table(&table, model);
    Ok(())
}

fn sign(v: f64) -> &'static str {
    if v.abs() <= 0.2 {
        "~"
    } else if v > 0.0 {
        "+"
    } else {
        "-"
    }
}

fn print_sign_table(table: &SensitivityTable, model: Variant) {
    println!("{model} n={} n_effective={} seed={}", table.r0.n, table.r0.n_effective.min(table.peak_v.n_effective), table.r0.seed);
    println!("{:<10} {:>10}    {:>10}", "parameter", "R0", "peak v");
    for (i, p) in table.r0.parameters.iter().enumerate() {
        let (a, b) = (table.r0.prcc[i], table.peak_v.prcc[i]);
        println!("{:<10} {a:>+10.4} {} {b:>+10.4} {}", p.as_str(), sign(a), sign(b));
    }
    for (i, e) in table.r0.dropped.iter().chain(&table.peak_v.dropped) {
        eprintln!("warning: sample {i} dropped: {e}");
    }
}

#[derive(Serialize)]
struct GreensJson<'a> {
    points: usize,
    seed: u64,
    passed: bool,
    checks: &'a [airborne::greens_check::CheckOutcome],
}

pub fn greens_check(points: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let report = run_greens_checks(points, seed);
    for c in &report.checks {
        println!(
            "{:<22} worst {:>10.3e}  limit {:>7.0e}  {}",
            c.name,
            c.worst,
            c.tolerance,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    if let Some(dir) = out {
        let json = GreensJson {
            points,
            seed,
            passed: report.passed(),
            checks: &report.checks,
        };
        let mut text = serde_json::to_string_pretty(&json).expect("report serializes");
        text.push('\n');
        let mut art = Artifacts::new(dir, "greens-check")?;
        art.seed(seed);
        art.write("greens_check.json", &text)?;
        art.finish()?;
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(CliError::Check(format!("failed checks: {}", failed.join(", "))))
    }
}
