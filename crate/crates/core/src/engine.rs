//! The iteration `x^{k+1} = T_k x^k` in its exact, perturbed and
//! superiorized forms, plus the restart construction `x_i^k = T_{k-1}...T_i x^i`
//! used to compare a perturbed trajectory with unperturbed ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::intersection::{project_intersection, INTERSECTION_TOL};
use crate::par::{map_indices, Workers};
use crate::point::Point;
use crate::problem::{Problem, FEASIBILITY_TOL};
use crate::report::CheckReport;
use crate::regularity::rate_constants;
use crate::sets::enlarged_from_projection;
use crate::strings::{validate_schedule, ControlSchedule, PlanGenerator};

pub const DEFAULT_STOP_RESIDUAL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Residual at which an exact continuation is taken as the limit.
pub const LIMIT_RESIDUAL: f64 = 1e-12;
/// Step cap for exact continuations.
pub const LIMIT_MAX_STEPS: usize = 1_000_000;

/// Relative tolerance for Fejer-type distance comparisons.
pub const FEJER_TOL: f64 = 1e-9;
/// Absolute tolerance of the restart deviation bound.
pub const DEVIATION_TOL: f64 = 1e-10;
/// Relative tolerance of the limit-based rate bounds.
pub const RATE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Perturbed,
    Superiorized,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Perturbed => "perturbed",
            Mode::Superiorized => "superiorized",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub max_iter: usize,
    /// Stop once `max_i d(x^k, C_i) <= stop_residual`.
    pub stop_residual: f64,
    pub record_every: usize,
    pub x0: Point,
}

impl RunConfig {
    pub fn new(mode: Mode, x0: Point) -> Self {
        Self {
            mode,
            max_iter: DEFAULT_MAX_ITER,
            stop_residual: DEFAULT_STOP_RESIDUAL,
            record_every: 1,
            x0,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_stop_residual(mut self, stop_residual: f64) -> Self {
        self.stop_residual = stop_residual;
        self
    }

    pub fn with_record_every(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "record_every must be at least 1".into(),
            ));
        }
        if !(self.stop_residual >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop_residual must be nonnegative, got {}",
                self.stop_residual
            )));
        }
        Ok(())
    }
}

/// How the perturbation vector of norm `e_k` is oriented.
#[derive(Clone, Debug, PartialEq)]
pub enum Direction {
    /// Always along this (normalized) vector.
    Fixed(Point),
    /// A fresh uniformly random unit vector per step, keyed on `(seed, k)`.
    RandomUnit { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Magnitudes {
    None,
    /// `e_k = e0 * ratio^k`.
    Geometric { e0: f64, ratio: f64 },
    /// `e_k = values[k]`, zero past the end. `declared_sum` bounds the total.
    Explicit { values: Vec<f64>, declared_sum: f64 },
}

/// Summable errors `e_k` with `|x^{k+1} - T_k x^k| = e_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSchedule {
    magnitudes: Magnitudes,
    direction: Direction,
}

impl PerturbationSchedule {
    pub fn none() -> Self {
        Self {
            magnitudes: Magnitudes::None,
            direction: Direction::RandomUnit { seed: 0 },
        }
    }

    pub fn geometric(e0: f64, ratio: f64, direction: Direction) -> Result<Self> {
        if !(e0 >= 0.0 && e0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "perturbation size must be nonnegative, got {e0}"
            )));
        }
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidParameter(format!(
                "perturbation sequence must be summable (ratio in [0, 1), got {ratio})"
            )));
        }
        Self::with_direction(Magnitudes::Geometric { e0, ratio }, direction)
    }

    pub fn explicit(values: Vec<f64>, declared_sum: f64, direction: Direction) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "perturbation sizes must be nonnegative and finite, got {v}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if !(declared_sum.is_finite() && declared_sum >= sum * (1.0 - 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "perturbation sequence must be summable: declared sum {declared_sum} is below the partial sum {sum}"
            )));
        }
        Self::with_direction(
            Magnitudes::Explicit {
                values,
                declared_sum,
            },
            direction,
        )
    }

    fn with_direction(magnitudes: Magnitudes, direction: Direction) -> Result<Self> {
        if let Direction::Fixed(v) = &direction {
            if !(v.norm() > 0.0) {
                return Err(Error::InvalidParameter(
                    "fixed perturbation direction must be nonzero".into(),
                ));
            }
        }
        Ok(Self {
            magnitudes,
            direction,
        })
    }

    pub fn magnitudes(&self) -> &Magnitudes {
        &self.magnitudes
    }

    pub fn direction(&self) -> &Direction {
        &self.direction
    }

    pub fn is_none(&self) -> bool {
        matches!(self.magnitudes, Magnitudes::None)
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        match &self.magnitudes {
            Magnitudes::None => 0.0,
            Magnitudes::Geometric { e0, ratio } => e0 * ratio.powf(k as f64),
            Magnitudes::Explicit { values, .. } => values.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Upper bound for `sum_{j >= i} e_j`.
    pub fn tail_sum(&self, i: usize) -> f64 {
        match &self.magnitudes {
            Magnitudes::None => 0.0,
            Magnitudes::Geometric { .. } => self.magnitude(i) / (1.0 - self.ratio()),
            Magnitudes::Explicit {
                values,
                declared_sum,
            } => {
                let head: f64 = values.iter().take(i).sum();
                (declared_sum - head).max(values.iter().skip(i).sum())
            }
        }
    }

    fn ratio(&self) -> f64 {
        match &self.magnitudes {
            Magnitudes::Geometric { ratio, .. } => *ratio,
            _ => 0.0,
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match &self.direction {
            Direction::Fixed(v) => v.check_dim(n),
            Direction::RandomUnit { .. } => Ok(()),
        }
    }

    /// The perturbation applied at step `k`, of norm `e_k`.
    pub fn vector(&self, k: usize, n: usize) -> Point {
        let e = self.magnitude(k);
        let unit = match &self.direction {
            Direction::Fixed(v) => v.scale(1.0 / v.norm()),
            Direction::RandomUnit { seed } => random_unit(*seed, k as u64, n),
        };
        unit.scale(e)
    }
}

/// Uniform unit vector from the `(seed, stream)` generator.
pub(crate) fn random_unit(seed: u64, stream: u64, n: usize) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = Point::from_vec(g);
        let len = g.norm();
        if len > 1e-300 {
            return g.scale(1.0 / len);
        }
    }
}

/// Convex objective steered toward by superiorization.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// `1/2 |x - t|^2`
    Quadratic { target: Point },
    /// `sum_i w_i |x_i - t_i|`
    WeightedL1 { weights: Vec<f64>, target: Point },
    /// `<c, x>`
    Linear { c: Point },
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic { target } | Objective::WeightedL1 { target, .. } => target.dim(),
            Objective::Linear { c } => c.dim(),
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        match self {
            Objective::Quadratic { target } => 0.5 * x.distance_sq(target),
            Objective::WeightedL1 { weights, target } => weights
                .iter()
                .zip(x.iter().zip(target.iter()))
                .map(|(w, (a, t))| w * (a - t).abs())
                .sum(),
            Objective::Linear { c } => c.dot(x),
        }
    }

    /// An element of the subdifferential; at an l1 kink the coordinate is 0.
    pub fn subgradient(&self, x: &Point) -> Point {
        match self {
            Objective::Quadratic { target } => x.sub(target),
            Objective::WeightedL1 { weights, target } => Point::from_vec(
                weights
                    .iter()
                    .zip(x.iter().zip(target.iter()))
                    .map(|(w, (a, t))| {
                        let d = a - t;
                        if d > 0.0 {
                            *w
                        } else if d < 0.0 {
                            -*w
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ),
            Objective::Linear { c } => c.clone(),
        }
    }

    /// Whether the objective is differentiable on the ball of radius `h`
    /// around `x`.
    pub fn smooth_near(&self, x: &Point, h: f64) -> bool {
        match self {
            Objective::WeightedL1 { weights, target } => weights
                .iter()
                .zip(x.iter().zip(target.iter()))
                .all(|(w, (a, t))| *w == 0.0 || (a - t).abs() > h),
            _ => true,
        }
    }
}

/// `x^{k+1} = T_k(x^k - beta_k v^k)` with `beta_k = beta0 * ratio^k` and
/// `v^k` a (normalized) subgradient of the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringSpec {
    pub objective: Objective,
    pub normalize: bool,
    pub beta0: f64,
    pub ratio: f64,
    /// Steering vectors are clipped to this norm.
    pub bound: Option<f64>,
}

impl SteeringSpec {
    pub fn new(objective: Objective, beta0: f64, ratio: f64) -> Result<Self> {
        let s = Self {
            objective,
            normalize: true,
            beta0,
            ratio,
            bound: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 >= 0.0 && self.beta0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta0 must be nonnegative, got {}",
                self.beta0
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "steering sequence must be summable (ratio in (0, 1), got {})",
                self.ratio
            )));
        }
        if let Some(v) = self.bound {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "steering bound must be nonnegative, got {v}"
                )));
            }
        }
        if let Objective::WeightedL1 { weights, target } = &self.objective {
            if weights.len() != target.dim() {
                return Err(Error::DimensionMismatch {
                    expected: target.dim(),
                    found: weights.len(),
                });
            }
            if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidParameter(
                    "l1 weights must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta0 * self.ratio.powf(k as f64)
    }

    pub fn phi(&self, x: &Point) -> f64 {
        self.objective.value(x)
    }

    pub fn steering_vector(&self, x: &Point) -> Point {
        let mut v = self.objective.subgradient(x);
        let len = v.norm();
        if self.normalize {
            v = if len > 0.0 { v.scale(1.0 / len) } else { Point::zeros(x.dim()) };
        }
        if let Some(cap) = self.bound {
            let len = v.norm();
            if len > cap {
                v = if cap > 0.0 { v.scale(cap / len) } else { Point::zeros(x.dim()) };
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIter,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIter => "max_iter",
        }
    }
}

/// One recorded iteration. Step quantities describe the move from `x^k`
/// to `x^{k+1}` and are absent on the final row.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub x: Point,
    pub max_residual: f64,
    pub step_norm: Option<f64>,
    pub e_k: Option<f64>,
    pub beta_v: Option<f64>,
    pub phi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub mode: Mode,
    pub record_every: usize,
    /// Rows at `k = 0, record_every, 2 record_every, ...` and the final `k`.
    pub rows: Vec<TraceRow>,
    /// `e_k` (perturbed) or `beta_k |v^k|` (superiorized) for every step;
    /// zeros in exact mode.
    pub step_errors: Vec<f64>,
    pub x_final: Point,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

impl Trace {
    pub fn x0(&self) -> &Point {
        &self.rows[0].x
    }

    pub fn row(&self, k: usize) -> Option<&TraceRow> {
        self.rows
            .binary_search_by_key(&k, |r| r.k)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn iterate(&self, k: usize) -> Option<&Point> {
        self.row(k).map(|r| &r.x)
    }

    pub fn final_residual(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.max_residual)
    }

    /// `sum_{j = from}^{to - 1}` of the recorded step errors.
    pub fn error_sum(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.step_errors.len());
        if from >= to {
            return 0.0;
        }
        self.step_errors[from..to].iter().sum()
    }

    /// `sum_{j >= i}` of the recorded step errors. Steps after the run are
    /// exact, so this is the full tail.
    pub fn tail_sum(&self, i: usize) -> f64 {
        self.error_sum(i, self.step_errors.len())
    }
}

/// Number of plans `validate_schedule` must inspect to cover every window
/// a run of `max_iter` steps can see.
fn validation_horizon(schedule: &ControlSchedule, max_iter: usize) -> usize {
    let s = schedule.declared_s();
    match schedule.generator() {
        PlanGenerator::Fixed(_) => s,
        PlanGenerator::Cyclic(p) => max_iter.min(p.len() + s - 1).max(s),
        PlanGenerator::SeededRandom { .. } => max_iter.max(s),
    }
}

/// Validates the schedule, failing with the first defect found.
pub fn check_schedule(problem: &Problem, schedule: &ControlSchedule, max_iter: usize) -> Result<()> {
    schedule.check_for(problem)?;
    let report = validate_schedule(schedule, problem.len(), validation_horizon(schedule, max_iter))?;
    if let Some((k, missing)) = report.uncovered.first() {
        return Err(Error::InvalidSchedule(format!(
            "window starting at k = {k} of length s = {} misses sets {missing:?}",
            schedule.declared_s()
        )));
    }
    if let Some((k, w)) = report.omega_violations.first() {
        return Err(Error::InvalidSchedule(format!(
            "plan at k = {k} has weight {w} below the declared omega {}",
            schedule.declared_omega_min()
        )));
    }
    if let Some((k, len)) = report.m_violations.first() {
        return Err(Error::InvalidSchedule(format!(
            "plan at k = {k} has a string of length {len} above the declared m {}",
            schedule.declared_m()
        )));
    }
    Ok(())
}

/// Runs the method from `config.x0`.
pub fn run(
    problem: &Problem,
    schedule: &ControlSchedule,
    config: &RunConfig,
    pert: Option<&PerturbationSchedule>,
    steer: Option<&SteeringSpec>,
) -> Result<Trace> {
    config.validate()?;
    problem.check_point(&config.x0)?;
    check_schedule(problem, schedule, config.max_iter)?;
    let n = problem.dim();
    let pert = match config.mode {
        Mode::Perturbed => {
            let p = pert.ok_or_else(|| {
                Error::InvalidParameter("perturbed mode needs a perturbation schedule".into())
            })?;
            p.check_dim(n)?;
            Some(p)
        }
        _ => None,
    };
    let steer = match config.mode {
        Mode::Superiorized => {
            let s = steer.ok_or_else(|| {
                Error::InvalidParameter("superiorized mode needs a steering spec".into())
            })?;
            s.validate()?;
            if s.objective.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.objective.dim(),
                });
            }
            Some(s)
        }
        _ => None,
    };

    let mut rows = Vec::new();
    let mut step_errors = Vec::new();
    let mut x = config.x0.clone();
    let mut k = 0;
    loop {
        let res = problem.max_residual_unchecked(&x);
        let phi = steer.map(|s| s.phi(&x));
        let stop = if res <= config.stop_residual {
            Some(StopReason::Converged)
        } else if k >= config.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };
        if let Some(stop_reason) = stop {
            rows.push(TraceRow {
                k,
                x: x.clone(),
                max_residual: res,
                step_norm: None,
                e_k: None,
                beta_v: None,
                phi,
            });
            return Ok(Trace {
                mode: config.mode,
                record_every: config.record_every,
                rows,
                step_errors,
                x_final: x,
                iterations: k,
                stop_reason,
            });
        }

        let (next, err) = match config.mode {
            Mode::Exact => (schedule.apply(problem, k, &x), 0.0),
            Mode::Perturbed => {
                let p = pert.expect("checked above");
                let mut y = schedule.apply(problem, k, &x);
                let e = p.magnitude(k);
                if e > 0.0 {
                    y = y.add(&p.vector(k, n));
                }
                (y, e)
            }
            Mode::Superiorized => {
                let s = steer.expect("checked above");
                let v = s.steering_vector(&x);
                let beta = s.beta(k);
                let bv = beta * v.norm();
                if bv == 0.0 {
                    (schedule.apply(problem, k, &x), 0.0)
                } else {
                    (schedule.apply(problem, k, &x.axpy(-beta, &v)), bv)
                }
            }
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteIterate { k: k + 1 });
        }
        if k % config.record_every == 0 {
            rows.push(TraceRow {
                k,
                x: x.clone(),
                max_residual: res,
                step_norm: Some(next.distance(&x)),
                e_k: (config.mode == Mode::Perturbed).then_some(err),
                beta_v: (config.mode == Mode::Superiorized).then_some(err),
                phi,
            });
        }
        step_errors.push(err);
        x = next;
        k += 1;
    }
}

/// One entry of a batch for [`run_many`].
#[derive(Clone, Debug)]
pub struct RunJob<'a> {
    pub problem: &'a Problem,
    pub schedule: &'a ControlSchedule,
    pub config: RunConfig,
    pub pert: Option<PerturbationSchedule>,
    pub steer: Option<SteeringSpec>,
}

/// Independent runs, in parallel across jobs; output order matches input.
pub fn run_many(jobs: &[RunJob<'_>], workers: Workers) -> Vec<Result<Trace>> {
    map_indices(jobs.len(), workers, |i| {
        let j = &jobs[i];
        run(j.problem, j.schedule, &j.config, j.pert.as_ref(), j.steer.as_ref())
    })
}

/// Terminal point of an exact continuation, standing in for `x^infinity`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitEstimate {
    pub point: Point,
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
}

impl LimitEstimate {
    /// Extra slack charged to bounds that reference the true limit.
    pub fn tolerance(&self) -> f64 {
        2.0 * self.residual
    }
}

/// Continues `x` exactly with `T_{start_k}, T_{start_k + 1}, ...` until the
/// residual drops to [`LIMIT_RESIDUAL`] or `max_steps` is hit.
pub fn estimate_limit(
    problem: &Problem,
    schedule: &ControlSchedule,
    x: &Point,
    start_k: usize,
    max_steps: usize,
) -> Result<LimitEstimate> {
    problem.check_point(x)?;
    let mut y = x.clone();
    let mut residual = problem.max_residual_unchecked(&y);
    let mut steps = 0;
    while residual > LIMIT_RESIDUAL && steps < max_steps {
        y = schedule.apply(problem, start_k + steps, &y);
        if !y.is_finite() {
            return Err(Error::NonFiniteIterate {
                k: start_k + steps + 1,
            });
        }
        steps += 1;
        residual = problem.max_residual_unchecked(&y);
    }
    Ok(LimitEstimate {
        point: y,
        residual,
        steps,
        converged: residual <= LIMIT_RESIDUAL,
    })
}

/// Limit of a finished run, continuing exactly from its final iterate.
pub fn trace_limit(problem: &Problem, schedule: &ControlSchedule, trace: &Trace) -> Result<LimitEstimate> {
    estimate_limit(problem, schedule, &trace.x_final, trace.iterations, LIMIT_MAX_STEPS)
}

/// `|x^{k'} - z| <= |x^k - z|` (plus the step errors in between, for
/// inexact runs) for consecutive recorded iterates and every witness `z`.
pub fn fejer_monitor(problem: &Problem, trace: &Trace, witnesses: &[Point]) -> Result<CheckReport> {
    for z in witnesses {
        problem.check_feasible(z, FEASIBILITY_TOL)?;
    }
    let mut report = CheckReport::new("|x^(k+1) - z| <= |x^k - z| + e_k for z in C");
    for pair in trace.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let allowance = match trace.mode {
            Mode::Exact => 0.0,
            _ => trace.error_sum(a.k, b.k),
        };
        for z in witnesses {
            let scale = 1.0 + a.x.norm() + z.norm();
            let slack = a.x.distance(z) + allowance - b.x.distance(z);
            report.record(b.k, None, slack, FEJER_TOL * scale);
        }
    }
    Ok(report)
}

/// `|x^{k+1} - T_k x^k| <= e_k` re-verified from consecutive recorded rows.
pub fn envelope_check(problem: &Problem, schedule: &ControlSchedule, trace: &Trace) -> CheckReport {
    let mut report = CheckReport::new("|x^(k+1) - T_k x^k| <= e_k");
    if trace.mode != Mode::Perturbed {
        return report;
    }
    for pair in trace.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.k != a.k + 1 {
            continue;
        }
        let tx = schedule.apply(problem, a.k, &a.x);
        let e = trace.step_errors[a.k];
        let scale = 1.0 + tx.norm();
        report.record(b.k, None, e - b.x.distance(&tx), 1e-12 * scale);
    }
    report
}

/// Exact continuation `x_i^k` from `x^i` at a recorded row.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartPoint {
    pub k: usize,
    pub x: Point,
    /// `|x^k - x_i^k|`
    pub deviation: f64,
    /// `sum_{j=i}^{k-1} e_j`
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartAnalysis {
    pub i: usize,
    /// One point per outer row with `k >= i`.
    pub points: Vec<RestartPoint>,
    /// Estimate of `x_i^infinity`.
    pub limit: LimitEstimate,
    /// `sum_{j >= i} e_j`
    pub tail_sum: f64,
}

impl RestartAnalysis {
    /// `|x^k - x_i^k| <= sum_{j=i}^{k-1} e_j` at every overlapping `k`.
    pub fn deviation_report(&self) -> CheckReport {
        let mut r = CheckReport::new("|x^k - x_i^k| <= sum_{j=i}^{k-1} e_j");
        for p in &self.points {
            r.record(p.k, Some(self.i), p.bound - p.deviation, DEVIATION_TOL);
        }
        r
    }
}

/// Restarts the run exactly from `x^i` and continues to the limit.
pub fn restart_analysis(
    problem: &Problem,
    schedule: &ControlSchedule,
    outer: &Trace,
    i: usize,
    inner_iters: usize,
) -> Result<RestartAnalysis> {
    if outer.mode == Mode::Exact {
        return Err(Error::WrongMode(
            "restart analysis needs a perturbed or superiorized run".into(),
        ));
    }
    if i > outer.iterations {
        return Err(Error::InvalidParameter(format!(
            "restart index {i} is past the end of the run ({} iterations)",
            outer.iterations
        )));
    }
    let xi = outer.iterate(i).ok_or(Error::MissingIterate { k: i })?;
    let mut y = xi.clone();
    let mut k = i;
    let mut points = Vec::new();
    for row in outer.rows.iter().filter(|r| r.k >= i) {
        while k < row.k {
            y = schedule.apply(problem, k, &y);
            k += 1;
        }
        points.push(RestartPoint {
            k,
            x: y.clone(),
            deviation: row.x.distance(&y),
            bound: outer.error_sum(i, k),
        });
    }
    let limit = estimate_limit(problem, schedule, &y, k, inner_iters)?;
    Ok(RestartAnalysis {
        i,
        points,
        limit,
        tail_sum: outer.tail_sum(i),
    })
}

fn rate_tolerance(scale: f64, outer: &LimitEstimate, inner: &LimitEstimate) -> f64 {
    RATE_TOL * scale + outer.tolerance() + inner.tolerance()
}

/// `|x^k - x^inf| <= |x_i^k - x_i^inf| + 2 sum_{j>=i} e_j`.
pub fn strong_rate_check(
    outer: &Trace,
    analysis: &RestartAnalysis,
    outer_limit: &LimitEstimate,
) -> CheckReport {
    let mut r = CheckReport::new("|x^k - x^inf| <= |x_i^k - x_i^inf| + 2 sum_{j>=i} e_j");
    let inf = &outer_limit.point;
    for p in &analysis.points {
        let xk = outer.iterate(p.k).expect("restart points follow recorded rows");
        let lhs = xk.distance(inf);
        let rhs = p.x.distance(&analysis.limit.point) + 2.0 * analysis.tail_sum;
        let scale = 1.0 + xk.norm() + inf.norm();
        r.record(p.k, Some(analysis.i), rhs - lhs, rate_tolerance(scale, outer_limit, &analysis.limit));
    }
    r
}

/// Slack of `|x^inf - x_i^inf| <= sum_{j>=i} e_j`.
pub fn limit_shift_slack(analysis: &RestartAnalysis, outer_limit: &LimitEstimate) -> f64 {
    analysis.tail_sum - outer_limit.point.distance(&analysis.limit.point)
}

/// `|<y, x^k - x^inf>| <= |<y, x_i^k - x_i^inf>| + 2 |y| sum_{j>=i} e_j`.
pub fn weak_rate_check(
    analysis: &RestartAnalysis,
    outer: &Trace,
    outer_limit: &LimitEstimate,
    functionals: &[Point],
) -> Result<CheckReport> {
    if !outer_limit.converged {
        return Err(Error::NotConverged {
            residual: outer_limit.residual,
        });
    }
    let mut r = CheckReport::new(
        "|<y, x^k - x^inf>| <= |<y, x_i^k - x_i^inf>| + 2 |y| sum_{j>=i} e_j",
    );
    let inf = &outer_limit.point;
    for y in functionals {
        y.check_dim(inf.dim())?;
        let ny = y.norm();
        for p in &analysis.points {
            let xk = outer.iterate(p.k).expect("restart points follow recorded rows");
            let lhs = y.dot(&xk.sub(inf)).abs();
            let rhs = y.dot(&p.x.sub(&analysis.limit.point)).abs() + 2.0 * ny * analysis.tail_sum;
            let scale = (1.0 + xk.norm() + inf.norm()) * (1.0 + ny);
            let tol = RATE_TOL * scale + ny * (outer_limit.tolerance() + analysis.limit.tolerance());
            r.record(p.k, Some(analysis.i), rhs - lhs, tol);
        }
    }
    Ok(r)
}

/// Constants of the unperturbed linear rate used by the superiorization
/// bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParams {
    pub omega: f64,
    pub m: usize,
    pub s: usize,
    pub kappa: f64,
}

impl RateParams {
    pub fn from_schedule(schedule: &ControlSchedule, kappa: f64) -> Self {
        Self {
            omega: schedule.declared_omega_min(),
            m: schedule.declared_m(),
            s: schedule.declared_s(),
            kappa,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperiorizationReport {
    pub phi_superiorized: f64,
    pub phi_exact: f64,
    pub limit_superiorized: LimitEstimate,
    pub limit_exact: LimitEstimate,
    /// `phi(sup. limit) - phi(exact limit)`; reported, not required to be <= 0.
    pub phi_gap: f64,
    pub epsilon: f64,
    /// Smallest `i` with `2 sum_{j>=i} beta_j |v^j| <= epsilon`.
    pub i_eps: usize,
    /// `|x^{k+1} - x^inf| <= c_i q^{k-i} + 2 sum_{j>=i} beta_j |v^j|`.
    pub estim1: CheckReport,
    /// `d(x^{k+1}, C_eps) <= c_i q^{k-i}` for `k >= i >= i_eps`.
    pub estim2: CheckReport,
}

impl SuperiorizationReport {
    pub fn passed(&self) -> bool {
        self.estim1.passed() && self.estim2.passed()
    }
}

/// Compares a superiorized run with the exact run from the same start and
/// checks the linear-rate preservation bounds at the given restarts.
#[allow(clippy::too_many_arguments)]
pub fn superiorization_report(
    problem: &Problem,
    schedule: &ControlSchedule,
    steer: &SteeringSpec,
    superiorized: &Trace,
    exact: &Trace,
    rate: RateParams,
    restarts: &[usize],
    epsilon: f64,
) -> Result<SuperiorizationReport> {
    if superiorized.mode != Mode::Superiorized || exact.mode != Mode::Exact {
        return Err(Error::WrongMode(
            "expected a superiorized trace and an exact trace".into(),
        ));
    }
    if superiorized.x0() != exact.x0() {
        return Err(Error::Mismatch("traces start from different points".into()));
    }
    if superiorized.x0().dim() != problem.dim() {
        return Err(Error::Mismatch("traces do not match the problem dimension".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let limit_superiorized = trace_limit(problem, schedule, superiorized)?;
    let limit_exact = trace_limit(problem, schedule, exact)?;
    let phi_superiorized = steer.phi(&limit_superiorized.point);
    let phi_exact = steer.phi(&limit_exact.point);
    let i_eps = (0..=superiorized.iterations)
        .find(|&i| 2.0 * superiorized.tail_sum(i) <= epsilon)
        .unwrap_or(superiorized.iterations);

    let inf = &limit_superiorized.point;
    let mut estim1 = CheckReport::new(
        "|x^(k+1) - x^inf| <= c_i q^(k-i) + 2 sum_{j>=i} beta_j |v^j|",
    );
    let mut estim2 = CheckReport::new("d(x^(k+1), C_eps) <= c_i q^(k-i) for k >= i >= i_eps");
    let mut indices: Vec<usize> = restarts.to_vec();
    indices.push(i_eps);
    indices.sort_unstable();
    indices.dedup();
    for &i in &indices {
        let xi = superiorized.iterate(i).ok_or(Error::MissingIterate { k: i })?;
        let d_i = xi.distance(&project_intersection(problem, xi, INTERSECTION_TOL)?);
        let rc = rate_constants(rate.omega, rate.m, rate.s, rate.kappa, d_i)?;
        let tail = superiorized.tail_sum(i);
        for row in superiorized.rows.iter().filter(|r| r.k > i) {
            let bound = rc.c_r * rc.q_r.powf((row.k - 1 - i) as f64);
            let scale = 1.0 + row.x.norm() + inf.norm();
            let tol = RATE_TOL * scale + limit_superiorized.tolerance();
            estim1.record(row.k, Some(i), bound + 2.0 * tail - row.x.distance(inf), tol);
            if i >= i_eps {
                let p = project_intersection(problem, &row.x, INTERSECTION_TOL)?;
                let d_eps = row.x.distance(&enlarged_from_projection(&row.x, &p, epsilon));
                estim2.record(row.k, Some(i), bound - d_eps, RATE_TOL * scale);
            }
        }
    }
    Ok(SuperiorizationReport {
        phi_superiorized,
        phi_exact,
        phi_gap: phi_superiorized - phi_exact,
        limit_superiorized,
        limit_exact,
        epsilon,
        i_eps,
        estim1,
        estim2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::pt;
    use crate::sets::SetDescriptor;
    use std::f64::consts::PI;

    fn two_lines(theta: f64) -> Problem {
        Problem::new(vec![
            SetDescriptor::line_at_angle(0.0),
            SetDescriptor::line_at_angle(theta),
        ])
        .unwrap()
    }

    fn half_planes() -> Problem {
        Problem::new(vec![
            SetDescriptor::half_space(pt(&[1.0, 0.2]), 0.0).unwrap(),
            SetDescriptor::half_space(pt(&[-0.3, 1.0]), -0.5).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn feasible_start_stops_immediately() {
        let p = half_planes();
        let x0 = pt(&[-3.0, -3.0]);
        let t = run(
            &p,
            &ControlSchedule::cyclic_pointwise(2),
            &RunConfig::new(Mode::Exact, x0.clone()),
            None,
            None,
        )
        .unwrap();
        assert_eq!(t.iterations, 0);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].max_residual, 0.0);
        assert_eq!(t.x_final, x0);
        assert_eq!(t.stop_reason, StopReason::Converged);
    }

    #[test]
    fn alternating_projection_contracts_by_cos_squared() {
        let theta = PI / 3.0;
        let p = two_lines(theta);
        let cfg = RunConfig::new(Mode::Exact, pt(&[1.0, 2.0]))
            .with_stop_residual(0.0)
            .with_max_iter(30);
        let t = run(&p, &ControlSchedule::sweep(2), &cfg, None, None).unwrap();
        let e: Vec<f64> = t.rows.iter().map(|r| r.x.norm()).collect();
        for k in 5..25 {
            let ratio = e[k + 1] / e[k];
            assert!((ratio - 0.25).abs() < 1e-9, "k={k}: {ratio}");
        }
    }

    #[test]
    fn runs_are_deterministic_and_thinned() {
        let p = half_planes();
        let pool = vec![
            crate::strings::StringPlan::sweep(2),
            crate::strings::StringPlan::simultaneous(2),
        ];
        let sched = ControlSchedule::new(PlanGenerator::SeededRandom { pool, seed: 9 }, 1, 0.5, 2)
            .unwrap();
        let cfg = RunConfig::new(Mode::Exact, pt(&[4.0, 5.0])).with_max_iter(50).with_stop_residual(0.0);
        let a = run(&p, &sched, &cfg, None, None).unwrap();
        let b = run(&p, &sched, &cfg, None, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), a.iterations + 1);
        let thin = run(&p, &sched, &cfg.clone().with_record_every(7), None, None).unwrap();
        let mut expected: Vec<usize> = (0..a.iterations).step_by(7).collect();
        expected.push(a.iterations);
        assert_eq!(thin.rows.iter().map(|r| r.k).collect::<Vec<_>>(), expected);
        assert_eq!(thin.x_final, a.x_final);
    }

    #[test]
    fn mode_arguments_are_required() {
        let p = half_planes();
        let s = ControlSchedule::sweep(2);
        let x0 = pt(&[1.0, 1.0]);
        assert!(run(&p, &s, &RunConfig::new(Mode::Perturbed, x0.clone()), None, None).is_err());
        assert!(run(&p, &s, &RunConfig::new(Mode::Superiorized, x0), None, None).is_err());
        let bad = ControlSchedule::cyclic_pointwise(1);
        assert!(matches!(
            run(&p, &bad, &RunConfig::new(Mode::Exact, pt(&[1.0, 1.0])), None, None),
            Err(Error::InvalidSchedule(_))
        ));
    }

    #[test]
    fn perturbations_are_applied_at_full_size() {
        let p = two_lines(PI / 3.0);
        let sched = ControlSchedule::cyclic_pointwise(2);
        let pert = PerturbationSchedule::geometric(0.1, 0.5, Direction::RandomUnit { seed: 3 }).unwrap();
        let cfg = RunConfig::new(Mode::Perturbed, pt(&[2.0, 1.0])).with_stop_residual(1e-13);
        let t = run(&p, &sched, &cfg, Some(&pert), None).unwrap();
        for r in &t.rows[..t.rows.len() - 1] {
            assert_eq!(r.e_k, Some(pert.magnitude(r.k)));
        }
        assert!(envelope_check(&p, &sched, &t).passed());
        assert!(fejer_monitor(&p, &t, &[pt(&[0.0, 0.0])]).unwrap().passed());
        let lim = trace_limit(&p, &sched, &t).unwrap();
        let a0 = restart_analysis(&p, &sched, &t, 0, LIMIT_MAX_STEPS).unwrap();
        assert!(a0.deviation_report().passed());
        assert!(strong_rate_check(&t, &a0, &lim).passed());
        assert!(limit_shift_slack(&a0, &lim) >= 0.0);
        assert!(a0.tail_sum <= 0.2 + 1e-15);
        let w = weak_rate_check(&a0, &t, &lim, &[pt(&[1.0, 0.0]), pt(&[0.0, 0.0])]).unwrap();
        assert!(w.passed());
    }

    #[test]
    fn zero_steering_matches_exact_bitwise() {
        let p = half_planes();
        let s = ControlSchedule::cyclic_pointwise(2);
        let x0 = pt(&[3.0, 2.0]);
        let exact = run(&p, &s, &RunConfig::new(Mode::Exact, x0.clone()), None, None).unwrap();
        let obj = Objective::Quadratic { target: pt(&[0.0, 0.0]) };
        let zero_beta = SteeringSpec::new(obj.clone(), 0.0, 0.5).unwrap();
        let mut zero_bound = SteeringSpec::new(obj, 1.0, 0.5).unwrap();
        zero_bound.bound = Some(0.0);
        for st in [zero_beta, zero_bound] {
            let sup = run(&p, &s, &RunConfig::new(Mode::Superiorized, x0.clone()), None, Some(&st))
                .unwrap();
            assert_eq!(sup.rows.len(), exact.rows.len());
            for (a, b) in sup.rows.iter().zip(&exact.rows) {
                assert!(a.x.iter().zip(b.x.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            }
        }
    }

    #[test]
    fn fejer_flags_injected_expansion() {
        let p = half_planes();
        let x0 = pt(&[3.0, 2.0]);
        let mut t = run(&p, &ControlSchedule::cyclic_pointwise(2), &RunConfig::new(Mode::Exact, x0), None, None)
            .unwrap();
        assert!(fejer_monitor(&p, &t, &[pt(&[-1.0, -1.0])]).unwrap().passed());
        t.rows[3].x = pt(&[50.0, 50.0]);
        let r = fejer_monitor(&p, &t, &[pt(&[-1.0, -1.0])]).unwrap();
        assert_eq!(r.first_violation.unwrap().k, 3);
        assert!(fejer_monitor(&p, &t, &[pt(&[5.0, 5.0])]).is_err());
    }

    #[test]
    fn restart_needs_recorded_iterate() {
        let p = two_lines(PI / 4.0);
        let pert = PerturbationSchedule::geometric(0.1, 0.5, Direction::RandomUnit { seed: 1 }).unwrap();
        let cfg = RunConfig::new(Mode::Perturbed, pt(&[1.0, 1.0])).with_record_every(5);
        let sched = ControlSchedule::sweep(2);
        let t = run(&p, &sched, &cfg, Some(&pert), None).unwrap();
        assert!(matches!(
            restart_analysis(&p, &sched, &t, 3, 100),
            Err(Error::MissingIterate { k: 3 })
        ));
        let exact = run(&p, &sched, &RunConfig::new(Mode::Exact, pt(&[1.0, 1.0])), None, None).unwrap();
        assert!(matches!(restart_analysis(&p, &sched, &exact, 0, 100), Err(Error::WrongMode(_))));
    }

    #[test]
    fn l1_subgradient_is_zero_at_kinks() {
        let o = Objective::WeightedL1 {
            weights: vec![1.0, 2.0],
            target: pt(&[0.0, 1.0]),
        };
        assert_eq!(o.subgradient(&pt(&[0.0, 3.0])), pt(&[0.0, 2.0]));
        assert_eq!(o.value(&pt(&[-1.0, 0.0])), 3.0);
        assert!(!o.smooth_near(&pt(&[0.0, 3.0]), 1e-3));
    }

    #[test]
    fn perturbation_validation() {
        assert!(PerturbationSchedule::geometric(0.1, 1.0, Direction::RandomUnit { seed: 0 })
            .unwrap_err()
            .to_string()
            .contains("perturbation sequence must be summable"));
        assert!(PerturbationSchedule::explicit(vec![0.5, 0.5], 0.9, Direction::RandomUnit { seed: 0 }).is_err());
        let e = PerturbationSchedule::explicit(vec![0.5, 0.25], 0.75, Direction::Fixed(pt(&[0.0, 2.0]))).unwrap();
        assert_eq!(e.magnitude(1), 0.25);
        assert_eq!(e.magnitude(9), 0.0);
        assert_eq!(e.vector(0, 2), pt(&[0.0, 0.5]));
        assert_eq!(e.tail_sum(1), 0.25);
        let g = PerturbationSchedule::geometric(1.0, 0.5, Direction::RandomUnit { seed: 0 }).unwrap();
        assert_eq!(g.tail_sum(0), 2.0);
        assert!((g.vector(4, 3).norm() - 1.0 / 16.0).abs() < 1e-15);
    }
}
