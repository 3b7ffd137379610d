//! JSON problem files: schema, parsing with precise errors, and conversion
//! into the core types.

use std::path::Path;

use feas_core::engine::check_schedule;
use feas_core::{
    ControlSchedule, Direction, Mode, Objective, PerturbationSchedule, PlanGenerator, Point,
    Problem, RunConfig, SetDescriptor, SteeringSpec, StringDef, StringPlan,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only schema version understood.
pub const VERSION: u32 = 1;

/// Default radius of the enlarged set in the superiorization check.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Restart indices chosen when none are declared.
pub const DEFAULT_RESTARTS: usize = 5;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: I/O error: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    /// `message` carries serde's "invalid type: found X, expected Y".
    #[error("schema error at `{path}` (line {line}, column {column}): {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid problem at `{path}`: {message}")]
    Semantic { path: String, message: String },
}

fn semantic(path: impl Into<String>, message: impl std::fmt::Display) -> ParseError {
    ParseError::Semantic {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub dimension: usize,
    pub sets: Vec<SetSpec>,
    /// Optional known point of the intersection, verified on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    pub schedule: ScheduleSpec,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<SteeringFileSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Hyperplane { normal: Vec<f64>, offset: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    AffineSubspace { spanning: Vec<Vec<f64>>, anchor: Vec<f64> },
    LinearSubspace { spanning: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// One plan used at every iteration.
    Fixed,
    /// `plans[k mod len]`.
    Cyclic,
    /// A plan drawn from `plans` keyed on `(seed, k)`.
    #[serde(alias = "seeded-random")]
    SeededRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub plans: Vec<PlanSpec>,
    /// Required for `seeded_random`, rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Declared lower bound on every string weight.
    pub omega: f64,
    /// Declared upper bound on every string length.
    pub m: usize,
    /// Declared intermittence window.
    pub s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub strings: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Exact,
    Perturbed,
    Superiorized,
}

impl From<ModeSpec> for Mode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::Exact => Mode::Exact,
            ModeSpec::Perturbed => Mode::Perturbed,
            ModeSpec::Superiorized => Mode::Superiorized,
        }
    }
}

fn default_max_iter() -> usize {
    feas_core::engine::DEFAULT_MAX_ITER
}

fn default_stop_residual() -> f64 {
    feas_core::engine::DEFAULT_STOP_RESIDUAL
}

fn default_record_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub mode: ModeSpec,
    pub x0: Vec<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_stop_residual")]
    pub stop_residual: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// `e_k = e0 * ratio^k`.
    Geometric {
        e0: f64,
        ratio: f64,
        direction: DirectionSpec,
    },
    /// `e_k = values[k]`, zero past the end.
    Explicit {
        values: Vec<f64>,
        declared_sum: f64,
        direction: DirectionSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSpec {
    Fixed { vector: Vec<f64> },
    RandomUnit { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringFileSpec {
    pub objective: ObjectiveSpec,
    pub beta0: f64,
    pub ratio: f64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic { target: Vec<f64> },
    WeightedL1 { weights: Vec<f64>, target: Vec<f64> },
    Linear { c: Vec<f64> },
}

/// A bound check that can be requested in `analysis.checks`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Fejer,
    ErrorBand,
    Contraction,
    Envelope,
    Deviation,
    StrongRate,
    PerturbedBand,
    WeakRate,
    Superiorization,
    Angle,
}

impl CheckKind {
    pub const ALL: [CheckKind; 10] = [
        CheckKind::Fejer,
        CheckKind::ErrorBand,
        CheckKind::Contraction,
        CheckKind::Envelope,
        CheckKind::Deviation,
        CheckKind::StrongRate,
        CheckKind::PerturbedBand,
        CheckKind::WeakRate,
        CheckKind::Superiorization,
        CheckKind::Angle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Fejer => "fejer",
            CheckKind::ErrorBand => "error_band",
            CheckKind::Contraction => "contraction",
            CheckKind::Envelope => "envelope",
            CheckKind::Deviation => "deviation",
            CheckKind::StrongRate => "strong_rate",
            CheckKind::PerturbedBand => "perturbed_band",
            CheckKind::WeakRate => "weak_rate",
            CheckKind::Superiorization => "superiorization",
            CheckKind::Angle => "angle",
        }
    }

    /// Whether evaluating the check needs a regularity estimate.
    pub fn needs_kappa(self) -> bool {
        matches!(
            self,
            CheckKind::ErrorBand
                | CheckKind::Contraction
                | CheckKind::PerturbedBand
                | CheckKind::Superiorization
                | CheckKind::Angle
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaSpec>,
    /// Restart indices for the perturbation bounds; defaults to
    /// [`DEFAULT_RESTARTS`] recorded indices spread over the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<Vec<usize>>,
    /// Functionals `y` of the weak rate; defaults to the coordinate axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<Vec<Vec<f64>>>,
    /// Enlargement radius of the superiorization check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Extra points of the intersection for the Fejer check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaSpec {
    #[serde(default)]
    pub region: RegionSpec,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    /// `start` for exact runs, `restarts` otherwise.
    #[default]
    Auto,
    /// `B(P_C x0, d(x0, C))`.
    Start,
    /// Enclosing ball of the start balls of every restart.
    Restarts,
    Ball { center: Vec<f64>, radius: f64 },
}

/// A problem file converted into core types.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    pub schedule: ControlSchedule,
    pub config: RunConfig,
    pub perturbation: Option<PerturbationSchedule>,
    pub steering: Option<SteeringSpec>,
    pub functionals: Vec<Point>,
    pub witnesses: Vec<Point>,
    pub region: Option<feas_core::SampleBall>,
}

impl ProblemFile {
    /// Replaces every declared seed with `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        if self.schedule.seed.is_some() {
            self.schedule.seed = Some(seed);
        }
        if let Some(
            PerturbationSpec::Geometric { direction, .. } | PerturbationSpec::Explicit { direction, .. },
        ) = &mut self.perturbation
        {
            if let DirectionSpec::RandomUnit { seed: s } = direction {
                *s = seed;
            }
        }
        if let Some(k) = &mut self.analysis.kappa {
            k.seed = seed;
        }
    }

    pub fn mode(&self) -> Mode {
        self.run.mode.into()
    }

    pub fn epsilon(&self) -> f64 {
        self.analysis.epsilon.unwrap_or(DEFAULT_EPSILON)
    }

    /// Builds and validates every core object.
    pub fn build(&self) -> Result<Instance, ParseError> {
        if self.version != VERSION {
            return Err(semantic(
                "version",
                format!("unsupported version {}, expected {VERSION}", self.version),
            ));
        }
        let n = self.dimension;
        if n == 0 {
            return Err(semantic("dimension", "dimension must be at least 1"));
        }
        if self.sets.is_empty() {
            return Err(semantic("sets", "at least one set is required"));
        }
        let sets = self
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| s.build(n, &format!("sets[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut problem = Problem::new(sets).map_err(|e| semantic("sets", e))?;
        if let Some(w) = &self.witness {
            let w = point(w, n, "witness")?;
            problem = problem.with_witness(w).map_err(|e| semantic("witness", e))?;
        }

        let schedule = self.schedule.build()?;
        let mode = self.mode();
        let config = RunConfig::new(mode, point(&self.run.x0, n, "run.x0")?)
            .with_max_iter(self.run.max_iter)
            .with_stop_residual(self.run.stop_residual)
            .with_record_every(self.run.record_every);
        config.validate().map_err(|e| semantic("run", e))?;
        check_schedule(&problem, &schedule, config.max_iter).map_err(|e| semantic("schedule", e))?;

        let perturbation = self
            .perturbation
            .as_ref()
            .map(|p| p.build(n))
            .transpose()?;
        let steering = self.steering.as_ref().map(|s| s.build(n)).transpose()?;
        match mode {
            Mode::Perturbed if perturbation.is_none() => {
                return Err(semantic("perturbation", "perturbed mode needs a perturbation"))
            }
            Mode::Superiorized if steering.is_none() => {
                return Err(semantic("steering", "superiorized mode needs a steering spec"))
            }
            _ => {}
        }

        let a = &self.analysis;
        let mut seen = Vec::new();
        for (i, c) in a.checks.iter().enumerate() {
            if seen.contains(c) {
                return Err(semantic(
                    format!("analysis.checks[{i}]"),
                    format!("check {} is listed twice", c.name()),
                ));
            }
            seen.push(*c);
        }
        if let Some(c) = a.checks.iter().find(|c| c.needs_kappa()) {
            if a.kappa.is_none() {
                return Err(semantic(
                    "analysis.kappa",
                    format!("check {} needs a kappa estimate; declare analysis.kappa", c.name()),
                ));
            }
        }
        let region = match &a.kappa {
            Some(k) => {
                if k.samples == 0 {
                    return Err(semantic("analysis.kappa.samples", "need at least one sample"));
                }
                match &k.region {
                    RegionSpec::Ball { center, radius } => Some(
                        feas_core::SampleBall::new(point(center, n, "analysis.kappa.region.center")?, *radius)
                            .map_err(|e| semantic("analysis.kappa.region.radius", e))?,
                    ),
                    _ => None,
                }
            }
            None => None,
        };
        if let Some(r) = &a.restarts {
            let every = self.run.record_every;
            if let Some((j, i)) = r.iter().enumerate().find(|(_, i)| **i % every != 0) {
                return Err(semantic(
                    format!("analysis.restarts[{j}]"),
                    format!("restart {i} is not a recorded index (record_every = {every})"),
                ));
            }
        }
        let functionals = match &a.functionals {
            Some(f) => f
                .iter()
                .enumerate()
                .map(|(j, y)| point(y, n, &format!("analysis.functionals[{j}]")))
                .collect::<Result<_, _>>()?,
            None => (0..n).map(|i| Point::unit(n, i)).collect(),
        };
        let witnesses = match &a.witnesses {
            Some(w) => w
                .iter()
                .enumerate()
                .map(|(j, z)| {
                    let path = format!("analysis.witnesses[{j}]");
                    let z = point(z, n, &path)?;
                    problem
                        .check_feasible(&z, feas_core::problem::FEASIBILITY_TOL)
                        .map_err(|e| semantic(path, e))?;
                    Ok(z)
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        if let Some(eps) = a.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(semantic("analysis.epsilon", format!("epsilon must be positive, got {eps}")));
            }
        }
        Ok(Instance {
            problem,
            schedule,
            config,
            perturbation,
            steering,
            functionals,
            witnesses,
            region,
        })
    }
}

fn point(coords: &[f64], n: usize, path: &str) -> Result<Point, ParseError> {
    if coords.len() != n {
        return Err(semantic(
            path,
            format!("dimension mismatch: expected {n} coordinates, found {}", coords.len()),
        ));
    }
    Point::new(coords.to_vec()).map_err(|e| semantic(path, e))
}

impl SetSpec {
    fn build(&self, n: usize, path: &str) -> Result<SetDescriptor, ParseError> {
        let p = |c: &[f64], field: &str| point(c, n, &format!("{path}.{field}"));
        let spanning = |vs: &[Vec<f64>]| -> Result<Vec<Point>, ParseError> {
            vs.iter()
                .enumerate()
                .map(|(j, v)| point(v, n, &format!("{path}.spanning[{j}]")))
                .collect()
        };
        let built = match self {
            SetSpec::HalfSpace { normal, offset } => SetDescriptor::half_space(p(normal, "normal")?, *offset),
            SetSpec::Hyperplane { normal, offset } => SetDescriptor::hyperplane(p(normal, "normal")?, *offset),
            SetSpec::Box { lower, upper } => SetDescriptor::boxed(p(lower, "lower")?, p(upper, "upper")?),
            SetSpec::Ball { center, radius } => SetDescriptor::ball(p(center, "center")?, *radius),
            SetSpec::AffineSubspace { spanning: s, anchor } => {
                SetDescriptor::affine_subspace(spanning(s)?, p(anchor, "anchor")?)
            }
            SetSpec::LinearSubspace { spanning: s } => SetDescriptor::linear_subspace(spanning(s)?, n),
        };
        built.map_err(|e| semantic(path, e))
    }
}

impl PlanSpec {
    fn build(&self, path: &str) -> Result<StringPlan, ParseError> {
        let strings = self
            .strings
            .iter()
            .enumerate()
            .map(|(j, s)| StringDef::new(s.clone()).map_err(|e| semantic(format!("{path}.strings[{j}]"), e)))
            .collect::<Result<Vec<_>, _>>()?;
        StringPlan::new(strings, self.weights.clone()).map_err(|e| semantic(format!("{path}.weights"), e))
    }
}

impl ScheduleSpec {
    fn build(&self) -> Result<ControlSchedule, ParseError> {
        let plans = self
            .plans
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(&format!("schedule.plans[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        if plans.is_empty() {
            return Err(semantic("schedule.plans", "at least one plan is required"));
        }
        let generator = match (self.kind, self.seed) {
            (ScheduleKind::Fixed, None) => {
                if plans.len() != 1 {
                    return Err(semantic(
                        "schedule.plans",
                        format!("a fixed schedule has exactly one plan, found {}", plans.len()),
                    ));
                }
                PlanGenerator::Fixed(plans.into_iter().next().expect("one plan"))
            }
            (ScheduleKind::Cyclic, None) => PlanGenerator::Cyclic(plans),
            (ScheduleKind::SeededRandom, Some(seed)) => PlanGenerator::SeededRandom { pool: plans, seed },
            (ScheduleKind::SeededRandom, None) => {
                return Err(semantic("schedule.seed", "a seeded_random schedule needs an explicit seed"))
            }
            (_, Some(_)) => {
                return Err(semantic("schedule.seed", "only seeded_random schedules take a seed"))
            }
        };
        ControlSchedule::new(generator, self.s, self.omega, self.m).map_err(|e| semantic("schedule", e))
    }
}

impl DirectionSpec {
    fn build(&self, n: usize) -> Result<Direction, ParseError> {
        Ok(match self {
            DirectionSpec::Fixed { vector } => Direction::Fixed(point(vector, n, "perturbation.direction.vector")?),
            DirectionSpec::RandomUnit { seed } => Direction::RandomUnit { seed: *seed },
        })
    }
}

impl PerturbationSpec {
    fn build(&self, n: usize) -> Result<PerturbationSchedule, ParseError> {
        match self {
            PerturbationSpec::Geometric { e0, ratio, direction } => {
                PerturbationSchedule::geometric(*e0, *ratio, direction.build(n)?)
            }
            PerturbationSpec::Explicit {
                values,
                declared_sum,
                direction,
            } => PerturbationSchedule::explicit(values.clone(), *declared_sum, direction.build(n)?),
        }
        .map_err(|e| semantic("perturbation", e))
    }
}

impl SteeringFileSpec {
    fn build(&self, n: usize) -> Result<SteeringSpec, ParseError> {
        let objective = match &self.objective {
            ObjectiveSpec::Quadratic { target } => Objective::Quadratic {
                target: point(target, n, "steering.objective.target")?,
            },
            ObjectiveSpec::WeightedL1 { weights, target } => {
                if weights.len() != n {
                    return Err(semantic(
                        "steering.objective.weights",
                        format!("dimension mismatch: expected {n} weights, found {}", weights.len()),
                    ));
                }
                Objective::WeightedL1 {
                    weights: weights.clone(),
                    target: point(target, n, "steering.objective.target")?,
                }
            }
            ObjectiveSpec::Linear { c } => Objective::Linear {
                c: point(c, n, "steering.objective.c")?,
            },
        };
        let s = SteeringSpec {
            objective,
            normalize: self.normalize,
            beta0: self.beta0,
            ratio: self.ratio,
            bound: self.bound,
        };
        s.validate().map_err(|e| semantic("steering", e))?;
        Ok(s)
    }
}

/// Parses and fully validates problem text.
pub fn parse_problem_str(text: &str) -> Result<ProblemFile, ParseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let pf: ProblemFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ParseError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner),
            }
        } else {
            ParseError::Schema {
                path,
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner),
            }
        }
    })?;
    de.end().map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;
    pf.build()?;
    Ok(pf)
}

/// Reads, parses and validates a problem file.
pub fn parse_problem(path: &Path) -> Result<ProblemFile, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_str(&text)
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

/// Canonical pretty JSON.
pub fn to_json(pf: &ProblemFile) -> String {
    serde_json::to_string_pretty(pf).expect("problem files serialize")
}
