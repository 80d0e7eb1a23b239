//! Dormand–Prince 5(4) integration with dense output and threshold events.
//!
//! Steps are accepted when the RMS of `err_i / (atol + rtol · max(|y_i|, |y_new_i|))`
//! is at most one. Every accepted step stores the five coefficient vectors of
//! the free quartic interpolant, so trajectories can be evaluated anywhere in
//! `[0, t_end]` without re-integrating.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{virus_index, Dynamics, DynamicsError, OdeSystem, SystemState};
use crate::scenario::ScenarioConfig;

/// Lowest value any component may reach before the run is rejected.
pub const NEGATIVITY_FLOOR: f64 = -1e-9;
/// Time accuracy of threshold crossings.
pub const EVENT_TIME_TOL: f64 = 1e-10;
pub const DEFAULT_ONSET_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when absent.
    pub h_init: Option<f64>,
    /// Largest allowed step; unbounded when absent.
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Reject the run if any component drops below [`NEGATIVITY_FLOOR`].
    pub check_negativity: bool,
    pub method: Method,
}

/// Step scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Explicit Dormand–Prince 5(4) throughout.
    DormandPrince,
    /// Linearly implicit Rosenbrock 2(3) throughout.
    Rosenbrock,
    /// Explicit until stiffness is detected, Rosenbrock afterwards.
    #[default]
    Auto,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: None,
            max_steps: 1_000_000,
            check_negativity: true,
            method: Method::Auto,
        }
    }
}

impl IntegratorConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            out.push(("rtol", format!("must lie in (0, 1), got {}", self.rtol)));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            out.push(("atol", format!("must be positive, got {}", self.atol)));
        }
        if let Some(h) = self.h_init {
            if !(h > 0.0 && h.is_finite()) {
                out.push(("h_init", format!("must be positive, got {h}")));
            }
        }
        if let Some(h) = self.h_max {
            if !(h > 0.0) {
                out.push(("h_max", format!("must be positive, got {h}")));
            }
        }
        if self.max_steps == 0 {
            out.push(("max_steps", "must be at least 1".to_string()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { max_steps: usize, t: f64 },
    #[error("step size underflow (h = {h:e}) at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite value in component {index} at t = {t}")]
    NotFinite { t: f64, index: usize },
    #[error("component {index} reached {value:e} at t = {t}, below the {NEGATIVITY_FLOOR:e} floor")]
    Negative { t: f64, index: usize, value: f64 },
    #[error("invalid integrator settings: {0}")]
    InvalidConfig(String),
    #[error("invalid time span [{t0}, {t1}]")]
    InvalidSpan { t0: f64, t1: f64 },
    #[error(transparent)]
    Model(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("host index {index} out of range for {hosts} hosts")]
    InvalidHost { index: usize, hosts: usize },
    #[error("threshold must be positive (got {0})")]
    InvalidThreshold(f64),
    #[error("time {t} outside the trajectory span [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("at least two samples are needed (got {0})")]
    TooFewSamples(usize),
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Fifth-order weights minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Solution of one integration: accepted step ends plus the interpolant on
/// every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    /// Five vectors of length `dim` per step.
    dense: Vec<f64>,
    kinds: Vec<StepKind>,
    /// `(name, time)` annotations, e.g. the switch to the stiff method.
    pub events: Vec<(String, f64)>,
}

/// Which interpolant a step carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepKind {
    /// Quartic interpolant of the explicit pair.
    Quartic,
    /// Quadratic interpolant of the Rosenbrock pair.
    Quadratic,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn host_count(&self) -> usize {
        self.dim.saturating_sub(1) / 4
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step_count(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one point")
    }

    /// State at the `i`-th stored time.
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn system_state(&self, i: usize) -> SystemState {
        SystemState::from_vec(self.state(i).to_vec()).expect("trajectory layout matches the model")
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    /// Component `k` at every stored time.
    pub fn component(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.times.len()).map(move |i| self.states[i * self.dim + k])
    }

    fn step_dense(&self, step: usize) -> &[f64] {
        &self.dense[step * 5 * self.dim..(step + 1) * 5 * self.dim]
    }

    fn locate(&self, t: f64) -> usize {
        let steps = self.step_count();
        let idx = self.times.partition_point(|&s| s <= t);
        idx.saturating_sub(1).min(steps.saturating_sub(1))
    }

    fn eval_component_in(&self, step: usize, t: f64, k: usize) -> f64 {
        let t0 = self.times[step];
        let h = self.times[step + 1] - t0;
        let theta = (t - t0) / h;
        let theta1 = 1.0 - theta;
        let d = self.step_dense(step);
        let n = self.dim;
        let r = |j: usize| d[j * n + k];
        match self.kinds[step] {
            StepKind::Quartic => {
                r(0) + theta * (r(1) + theta1 * (r(2) + theta * (r(3) + theta1 * r(4))))
            }
            StepKind::Quadratic => {
                let w = 1.0 - 2.0 * ROS_D;
                r(0) + theta * theta1 / w * r(1) + theta * (theta - 2.0 * ROS_D) / w * r(2)
            }
        }
    }

    fn push_dormand_prince(&mut self, y: &[f64], h: f64, ws: &Workspace) {
        let n = self.dim;
        self.dense.extend_from_slice(y);
        self.dense.extend((0..n).map(|i| ws.y_new[i] - y[i]));
        self.dense.extend((0..n).map(|i| h * ws.k[0][i] - (ws.y_new[i] - y[i])));
        self.dense.extend((0..n).map(|i| {
            let ydiff = ws.y_new[i] - y[i];
            let bspl = h * ws.k[0][i] - ydiff;
            ydiff - h * ws.k[6][i] - bspl
        }));
        self.dense.extend((0..n).map(|i| {
            h * (D1 * ws.k[0][i]
                + D3 * ws.k[2][i]
                + D4 * ws.k[3][i]
                + D5 * ws.k[4][i]
                + D6 * ws.k[5][i]
                + D7 * ws.k[6][i])
        }));
        self.kinds.push(StepKind::Quartic);
    }

    fn push_rosenbrock(&mut self, y: &[f64], h: f64, k1: &[f64], k2: &[f64]) {
        let n = self.dim;
        self.dense.extend_from_slice(y);
        self.dense.extend(k1.iter().map(|k| h * k));
        self.dense.extend(k2.iter().map(|k| h * k));
        self.dense.extend(std::iter::repeat_n(0.0, 2 * n));
        self.kinds.push(StepKind::Quadratic);
    }

    /// Number of steps taken by the stiff method.
    pub fn stiff_steps(&self) -> usize {
        self.kinds.iter().filter(|k| **k == StepKind::Quadratic).count()
    }

    /// Component `k` at time `t` from the dense output.
    pub fn eval_component(&self, t: f64, k: usize) -> Result<f64, TrajectoryError> {
        self.check_time(t)?;
        if self.step_count() == 0 {
            return Ok(self.states[k]);
        }
        Ok(self.eval_component_in(self.locate(t), t, k))
    }

    /// Full state at time `t` from the dense output.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, TrajectoryError> {
        self.check_time(t)?;
        if self.step_count() == 0 {
            return Ok(self.state(0).to_vec());
        }
        let step = self.locate(t);
        Ok((0..self.dim)
            .map(|k| self.eval_component_in(step, t, k))
            .collect())
    }

    fn check_time(&self, t: f64) -> Result<(), TrajectoryError> {
        let (t0, t1) = (self.t_start(), self.t_end());
        let slack = 1e-12 * t1.abs().max(1.0);
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(TrajectoryError::OutOfRange { t, t0, t1 });
        }
        Ok(())
    }

    /// `n` equally spaced samples over the span, first and last included.
    pub fn sample(&self, n: usize) -> Result<Vec<(f64, Vec<f64>)>, TrajectoryError> {
        if n < 2 {
            return Err(TrajectoryError::TooFewSamples(n));
        }
        let (t0, t1) = (self.t_start(), self.t_end());
        (0..n)
            .map(|i| {
                let t = if i == n - 1 {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                };
                self.eval(t).map(|y| (t, y))
            })
            .collect()
    }

    fn check_host(&self, host: usize) -> Result<(), TrajectoryError> {
        if host >= self.host_count() {
            return Err(TrajectoryError::InvalidHost {
                index: host,
                hosts: self.host_count(),
            });
        }
        Ok(())
    }

    /// Earliest time at which component `k` rises to `threshold`; `Some(t0)`
    /// when it starts at or above it.
    pub fn first_crossing(&self, k: usize, threshold: f64) -> Option<f64> {
        if self.states[k] >= threshold {
            return Some(self.t_start());
        }
        for step in 0..self.step_count() {
            let (ta, tb) = (self.times[step], self.times[step + 1]);
            // The interpolant can overshoot between stored points, so each
            // step is scanned on a few interior nodes before bisecting.
            const SCAN: usize = 8;
            let mut lo = ta;
            let mut found = None;
            for s in 1..=SCAN {
                let t = ta + (tb - ta) * s as f64 / SCAN as f64;
                let value = if s == SCAN {
                    self.states[(step + 1) * self.dim + k]
                } else {
                    self.eval_component_in(step, t, k)
                };
                if value >= threshold {
                    found = Some((lo, t));
                    break;
                }
                lo = t;
            }
            if let Some((mut a, mut b)) = found {
                while b - a > EVENT_TIME_TOL {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if self.eval_component_in(step, mid, k) >= threshold {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                return Some(b);
            }
        }
        None
    }

    /// `(time, value)` of the largest value of component `k`, maximizing the
    /// interpolant on each step rather than reading the stored points only.
    pub fn component_max(&self, k: usize) -> (f64, f64) {
        let mut best = (self.times[0], self.states[k]);
        for i in 1..self.times.len() {
            let value = self.states[i * self.dim + k];
            if value > best.1 {
                best = (self.times[i], value);
            }
        }
        for step in 0..self.step_count() {
            let (ta, tb) = (self.times[step], self.times[step + 1]);
            let f = |t: f64| self.eval_component_in(step, t, k);
            // Coarse scan, then golden-section refinement around the best node.
            const SCAN: usize = 8;
            let mut arg = 0;
            let mut top = f64::NEG_INFINITY;
            for s in 0..=SCAN {
                let value = f(ta + (tb - ta) * s as f64 / SCAN as f64);
                if value > top {
                    top = value;
                    arg = s;
                }
            }
            if arg == 0 || arg == SCAN {
                continue;
            }
            let width = (tb - ta) / SCAN as f64;
            let (t, value) = golden_max(f, ta + width * (arg - 1) as f64, ta + width * (arg + 1) as f64);
            if value > best.1 {
                best = (t, value);
            }
        }
        best
    }

    /// Onset time of host `host`: first time `v_host` reaches `threshold`.
    pub fn detect_onset(&self, host: usize, threshold: f64) -> Result<Option<f64>, TrajectoryError> {
        self.check_host(host)?;
        if !(threshold > 0.0) {
            return Err(TrajectoryError::InvalidThreshold(threshold));
        }
        Ok(self.first_crossing(virus_index(host), threshold))
    }

    /// `(time, value)` of the peak viral load of host `host`.
    pub fn peak_virus(&self, host: usize) -> Result<(f64, f64), TrajectoryError> {
        self.check_host(host)?;
        Ok(self.component_max(virus_index(host)))
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= EVENT_TIME_TOL * b.abs().max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Stage storage for one system, reused across steps.
struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }
}

/// One Dormand–Prince step from `(t, y)` with `k[0] = f(t, y)` already filled.
/// Leaves the fifth-order solution in `ws.y_new`, `f(t + h, y_new)` in
/// `ws.k[6]`, the argument of the sixth stage in `ws.tmp` and the embedded
/// error estimate in `ws.err`.
fn dp_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
) -> Result<(), DynamicsError> {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, $( $a:expr => $src:expr ),+ ) => {{
            for i in 0..n {
                ws.tmp[i] = y[i] + h * (0.0 $( + $a * ws.k[$src][i] )+);
            }
            sys.eval(t + $c * h, &ws.tmp, &mut ws.k[$dst])?;
        }};
    }
    stage!(1, C2, A21 => 0);
    stage!(2, C3, A31 => 0, A32 => 1);
    stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
    stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
    stage!(5, 1.0, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
    for i in 0..n {
        ws.y_new[i] = y[i]
            + h * (A71 * ws.k[0][i]
                + A73 * ws.k[2][i]
                + A74 * ws.k[3][i]
                + A75 * ws.k[4][i]
                + A76 * ws.k[5][i]);
    }
    sys.eval(t + h, &ws.y_new, &mut ws.k[6])?;
    for i in 0..n {
        ws.err[i] = h
            * (E1 * ws.k[0][i]
                + E3 * ws.k[2][i]
                + E4 * ws.k[3][i]
                + E5 * ws.k[4][i]
                + E6 * ws.k[5][i]
                + E7 * ws.k[6][i]);
    }
    Ok(())
}

/// Estimate of `h·|λ|` for the dominant eigenvalue, from the last two stages
/// of an accepted step (both evaluated at `t + h`). Components are weighted
/// as in the error norm so that small but stiff compartments are not masked
/// by large ones.
fn stiffness_ratio(h: f64, y: &[f64], ws: &Workspace, icfg: &IntegratorConfig) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..ws.y_new.len() {
        let w = 1.0 / (icfg.atol + icfg.rtol * y[i].abs().max(ws.y_new[i].abs()));
        num += ((ws.k[6][i] - ws.k[5][i]) * w).powi(2);
        den += ((ws.y_new[i] - ws.tmp[i]) * w).powi(2);
    }
    (den > 0.0).then(|| h * (num / den).sqrt())
}

/// `h·|λ|` above which an explicit step is stability- rather than
/// accuracy-limited.
const STIFF_RATIO: f64 = 3.25;
/// Consecutive stability-limited steps before switching to the stiff method.
const STIFF_STEPS: usize = 15;

// Rosenbrock 2(3) coefficients: d = 1/(2 + √2), e32 = 6 + √2.
const ROS_D: f64 = 0.292_893_218_813_452_4;
const ROS_E32: f64 = 7.414_213_562_373_095;

/// Storage for the linearly implicit method.
struct StiffWorkspace {
    n: usize,
    jac: Vec<f64>,
    dfdt: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    rhs: nalgebra::DVector<f64>,
    current: bool,
}

impl StiffWorkspace {
    fn new(n: usize) -> Self {
        Self {
            n,
            jac: vec![0.0; n * n],
            dfdt: vec![0.0; n],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            rhs: nalgebra::DVector::zeros(n),
            current: false,
        }
    }

    fn refresh<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
    ) -> Result<(), DynamicsError> {
        sys.jacobian(t, y, f0, &mut self.jac)?;
        let dt = f64::EPSILON.sqrt() * t.abs().max(1.0);
        sys.eval(t + dt, y, &mut self.f1)?;
        for i in 0..self.n {
            self.dfdt[i] = (self.f1[i] - f0[i]) / dt;
        }
        self.current = true;
        Ok(())
    }
}

enum StiffFailure {
    Singular,
    Model(DynamicsError),
}

/// One step of the L-stable Rosenbrock pair of orders 2 and 3. `ws.k[0]`
/// holds `f(t, y)`; on return `ws.y_new`, `ws.err` and `ws.k[6] = f(t + h,
/// y_new)` are filled as for [`dp_step`], and `sw.k1`, `sw.k2` hold the
/// stage vectors needed by the interpolant.
fn rosenbrock_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    sw: &mut StiffWorkspace,
) -> Result<(), StiffFailure> {
    let n = sw.n;
    let hd = h * ROS_D;
    let w = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - hd * sw.jac[i * n + j]
    });
    let lu = w.lu();
    let solve = |rhs: &nalgebra::DVector<f64>| lu.solve(rhs).ok_or(StiffFailure::Singular);

    for i in 0..n {
        sw.rhs[i] = ws.k[0][i] + hd * sw.dfdt[i];
    }
    let k1 = solve(&sw.rhs)?;
    sw.k1.copy_from_slice(k1.as_slice());
    for i in 0..n {
        ws.tmp[i] = y[i] + 0.5 * h * sw.k1[i];
    }
    sys.eval(t + 0.5 * h, &ws.tmp, &mut sw.f1).map_err(StiffFailure::Model)?;
    for i in 0..n {
        sw.rhs[i] = sw.f1[i] - sw.k1[i];
    }
    let k2 = solve(&sw.rhs)?;
    for i in 0..n {
        sw.k2[i] = k2[i] + sw.k1[i];
        ws.y_new[i] = y[i] + h * sw.k2[i];
    }
    sys.eval(t + h, &ws.y_new, &mut sw.f2).map_err(StiffFailure::Model)?;
    for i in 0..n {
        sw.rhs[i] = sw.f2[i]
            - ROS_E32 * (sw.k2[i] - sw.f1[i])
            - 2.0 * (sw.k1[i] - ws.k[0][i])
            + hd * sw.dfdt[i];
    }
    let k3 = solve(&sw.rhs)?;
    for i in 0..n {
        ws.err[i] = h / 6.0 * (sw.k1[i] - 2.0 * sw.k2[i] + k3[i]);
    }
    ws.k[6].copy_from_slice(&sw.f2);
    Ok(())
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], icfg: &IntegratorConfig) -> f64 {
    let n = y.len().max(1);
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let scale = icfg.atol + icfg.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / n as f64).sqrt()
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    icfg: &IntegratorConfig,
    span: f64,
) -> Result<f64, DynamicsError> {
    let n = y0.len();
    let norm = |v: &[f64], y: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, b)| (a / (icfg.atol + icfg.rtol * b.abs())).powi(2))
            .sum();
        (s / n.max(1) as f64).sqrt()
    };
    let d0 = norm(y0, y0);
    let d1 = norm(f0, y0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.eval(t0 + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff, y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

fn check_accepted(t: f64, y: &[f64], icfg: &IntegratorConfig) -> Result<(), IntegrationError> {
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(IntegrationError::NotFinite { t, index });
    }
    if icfg.check_negativity {
        if let Some((index, &value)) = y.iter().enumerate().find(|(_, &v)| v < NEGATIVITY_FLOOR) {
            return Err(IntegrationError::Negative { t, index, value });
        }
    }
    Ok(())
}

/// Integrates any [`OdeSystem`] from `(t0, y0)` to `t1`.
///
/// With [`Method::Auto`] the explicit pair runs until [`STIFF_STEPS`]
/// consecutive accepted steps are limited by stability rather than accuracy;
/// the rest of the span then uses the Rosenbrock pair.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    icfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    let bad = icfg.violations();
    if !bad.is_empty() {
        let text: Vec<String> = bad.iter().map(|(f, m)| format!("{f} {m}")).collect();
        return Err(IntegrationError::InvalidConfig(text.join("; ")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(IntegrationError::InvalidSpan { t0, t1 });
    }
    let n = sys.dim();
    if y0.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            got: y0.len(),
            expected: n,
            hosts: n.saturating_sub(1) / 4,
        }
        .into());
    }
    if let Some(index) = y0.iter().position(|v| !v.is_finite()) {
        return Err(IntegrationError::NotFinite { t: t0, index });
    }

    let mut ws = Workspace::new(n);
    let mut sw = StiffWorkspace::new(n);
    let mut y = y0.to_vec();
    sys.eval(t0, &y, &mut ws.k[0])?;
    let span = t1 - t0;
    let h_max = icfg.h_max.unwrap_or(span).min(span);
    let mut h = match icfg.h_init {
        Some(h) => h,
        None => initial_step(sys, t0, &y, &ws.k[0], icfg, span)?,
    }
    .min(h_max);

    let mut traj = Trajectory {
        dim: n,
        times: vec![t0],
        states: y.clone(),
        dense: Vec::new(),
        kinds: Vec::new(),
        events: Vec::new(),
    };
    let mut stiff = icfg.method == Method::Rosenbrock;
    let mut stiff_run = 0usize;
    let mut calm_run = 0usize;
    let mut t = t0;
    let mut steps = 0usize;
    let mut rejected_last = false;
    while t < t1 {
        if steps >= icfg.max_steps {
            return Err(IntegrationError::StepBudget {
                max_steps: icfg.max_steps,
                t,
            });
        }
        let mut last = false;
        if t + 1.01 * h >= t1 {
            h = t1 - t;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t, h });
        }
        steps += 1;
        let attempt = if stiff {
            if !sw.current {
                sw.refresh(sys, t, &y, &ws.k[0])?;
            }
            match rosenbrock_step(sys, t, &y, h, &mut ws, &mut sw) {
                Ok(()) => Ok(()),
                Err(StiffFailure::Singular) => Err(None),
                Err(StiffFailure::Model(e)) => Err(Some(e)),
            }
        } else {
            dp_step(sys, t, &y, h, &mut ws).map_err(Some)
        };
        match attempt {
            Ok(()) => {}
            // A trial stage may leave the physical region or the iteration
            // matrix may be singular; shrink and retry.
            Err(None) | Err(Some(DynamicsError::NonFinite { .. })) => {
                h *= 0.25;
                rejected_last = true;
                continue;
            }
            Err(Some(e)) => return Err(e.into()),
        }
        let err = error_norm(&y, &ws.y_new, &ws.err, icfg);
        if !err.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        let exponent = if stiff { -1.0 / 3.0 } else { -0.2 };
        if err > 1.0 {
            h *= (0.9 * err.powf(exponent)).max(0.2);
            rejected_last = true;
            continue;
        }

        let t_new = if last { t1 } else { t + h };
        check_accepted(t_new, &ws.y_new, icfg)?;
        if stiff {
            traj.push_rosenbrock(&y, h, &sw.k1, &sw.k2);
            sw.current = false;
        } else {
            traj.push_dormand_prince(&y, h, &ws);
            if icfg.method == Method::Auto {
                match stiffness_ratio(h, &y, &ws, icfg) {
                    Some(r) if r > STIFF_RATIO => {
                        calm_run = 0;
                        stiff_run += 1;
                        if stiff_run >= STIFF_STEPS {
                            stiff = true;
                            traj.events.push(("stiff_switch".to_string(), t_new));
                        }
                    }
                    _ => {
                        calm_run += 1;
                        if calm_run >= 6 {
                            stiff_run = 0;
                        }
                    }
                }
            }
        }
        t = t_new;
        y.copy_from_slice(&ws.y_new);
        ws.k.swap(0, 6);
        traj.times.push(t);
        traj.states.extend_from_slice(&y);

        let mut factor = (0.9 * err.max(1e-10).powf(exponent)).clamp(0.2, if stiff { 5.0 } else { 10.0 });
        if rejected_last {
            factor = factor.min(1.0);
        }
        rejected_last = false;
        h = (h * factor).min(h_max);
    }
    Ok(traj)
}

/// Integrates a scenario over `[0, t_end]`.
pub fn integrate(cfg: &ScenarioConfig, icfg: &IntegratorConfig) -> Result<Trajectory, IntegrationError> {
    let dynamics = Dynamics::new(cfg)?;
    integrate_system(&dynamics, cfg.initial.as_slice(), 0.0, cfg.t_end, icfg)
}

/// Which solution of the embedded pair a fixed-step run propagates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddedOrder {
    Fifth,
    Fourth,
}

/// Fixed-step run without error control; used for order verification.
pub fn integrate_fixed<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
    order: EmbeddedOrder,
) -> Result<Vec<f64>, IntegrationError> {
    let n = sys.dim();
    let mut ws = Workspace::new(n);
    let mut y = y0.to_vec();
    let h = (t1 - t0) / steps as f64;
    for s in 0..steps {
        let t = t0 + h * s as f64;
        sys.eval(t, &y, &mut ws.k[0])?;
        dp_step(sys, t, &y, h, &mut ws)?;
        for i in 0..n {
            y[i] = match order {
                EmbeddedOrder::Fifth => ws.y_new[i],
                EmbeddedOrder::Fourth => ws.y_new[i] - ws.err[i],
            };
        }
    }
    Ok(y)
}
