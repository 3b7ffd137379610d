//! Projection methods for convex feasibility problems.
//!
//! Given closed convex sets `C_0, ..., C_{M-1}` in `R^n` with a common
//! point, the dynamic string averaging method iterates
//! `x^{k+1} = T_k x^k` with `T_k` a convex combination of products of
//! metric projections. This crate provides the sets and their
//! projections, the operators and control schedules, exact / perturbed /
//! superiorized runs, linear regularity and rate constants, and numeric
//! checks of every rate inequality those constants promise, together with
//! brute-force oracles for validating all of it.

// `!(x >= 0.0)` deliberately rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod intersection;
pub mod oracles;
pub mod par;
pub mod point;
pub mod problem;
pub mod regularity;
pub mod report;
pub mod sets;
pub mod strings;

pub use engine::{
    run, run_many, Direction, LimitEstimate, Magnitudes, Mode, Objective, PerturbationSchedule,
    RunConfig, SteeringSpec, StopReason, Trace, TraceRow,
};
pub use error::{Error, Result};
pub use intersection::project_intersection;
pub use par::Workers;
pub use point::Point;
pub use problem::Problem;
pub use regularity::{rate_constants, RateConstants, SampleBall};
pub use report::CheckReport;
pub use sets::{EnlargementRadius, SetDescriptor, Shape};
pub use strings::{ControlSchedule, PlanGenerator, StringDef, StringPlan};
