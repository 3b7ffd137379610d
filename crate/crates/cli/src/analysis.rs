//! Evaluates the checks enabled in a problem file against a finished run.

use feas_core::engine::{
    envelope_check, fejer_monitor, limit_shift_slack, restart_analysis, strong_rate_check,
    superiorization_report, trace_limit, weak_rate_check, RateParams, RestartAnalysis, LIMIT_MAX_STEPS,
    RATE_TOL,
};
use feas_core::intersection::INTERSECTION_TOL;
use feas_core::par::map_indices;
use feas_core::regularity::{
    contraction_check, error_band_check, estimate_kappa, friedrichs_cosine_with_kappa,
    perturbed_residual_band_check, rate_from_angle, RegularityEstimate,
};
use feas_core::{
    project_intersection, rate_constants, run, CheckReport, LimitEstimate, Mode,
    RateConstants, RunConfig, SampleBall, Trace, Workers,
};

use crate::problem_file::{CheckKind, Instance, ProblemFile, RegionSpec, DEFAULT_RESTARTS};
use crate::report::{CheckOutcome, RateSummary, RunReport, Status, Summary};

/// Name of the inequality a check instantiates and its statement.
pub fn describe(kind: CheckKind) -> (&'static str, &'static str) {
    match kind {
        CheckKind::Fejer => (
            "Fejer monotonicity with respect to the intersection",
            "|x^(k+1) - z| <= |x^k - z| + e_k for z in C",
        ),
        CheckKind::ErrorBand => (
            "two-sided linear error band of exact runs",
            "(1/2kappa)|x^k - x^inf| <= max_i d(x^k, C_i) <= c_r q_r^k",
        ),
        CheckKind::Contraction => (
            "block contraction of the distance to the intersection",
            "d(x^(k+s), C) <= q_r^s d(x^k, C)",
        ),
        CheckKind::Envelope => (
            "perturbation envelope",
            "|x^(k+1) - T_k x^k| <= e_k",
        ),
        CheckKind::Deviation => (
            "restart deviation bound",
            "|x^k - x_i^k| <= sum_{j=i}^{k-1} e_j",
        ),
        CheckKind::StrongRate => (
            "strong rate of perturbed runs and limit shift",
            "|x^k - x^inf| <= |x_i^k - x_i^inf| + 2 sum_{j>=i} e_j; |x^inf - x_i^inf| <= sum_{j>=i} e_j",
        ),
        CheckKind::PerturbedBand => (
            "residual band of perturbed runs",
            "(1/2kappa)|x^k - x^inf| - 2 T_i <= max_j d(x^k, C_j) <= |x_i^k - x_i^inf| + 2 T_i",
        ),
        CheckKind::WeakRate => (
            "weak rate along fixed functionals",
            "|<y, x^k - x^inf>| <= |<y, x_i^k - x_i^inf>| + 2 |y| sum_{j>=i} e_j",
        ),
        CheckKind::Superiorization => (
            "linear rate preserved under superiorization",
            "|x^(k+1) - x^inf| <= c_i q^(k-i) + 2 sum_{j>=i} beta_j |v^j|; d(x^(k+1), C_eps) <= c_i q^(k-i) for k >= i >= i_eps",
        ),
        CheckKind::Angle => (
            "Friedrichs cosine bounds from the regularity constant",
            "1 - 2M/((M-1)kappa) <= c(C_1, ..., C_M) <= 1 - 1/((M-1)kappa^2)",
        ),
    }
}

/// Index of the first `i` with `2 sum_{j>=i} e_j <= eps`.
fn i_eps(trace: &Trace, eps: f64) -> usize {
    (0..=trace.iterations)
        .find(|&i| 2.0 * trace.tail_sum(i) <= eps)
        .unwrap_or(trace.iterations)
}

/// Declared restarts, or [`DEFAULT_RESTARTS`] recorded indices spread
/// evenly over the run.
pub fn restart_indices(pf: &ProblemFile, trace: &Trace) -> Vec<usize> {
    if let Some(r) = &pf.analysis.restarts {
        return r.clone();
    }
    let ks: Vec<usize> = trace.rows.iter().map(|r| r.k).collect();
    let last = ks.len() - 1;
    let mut out: Vec<usize> = (0..DEFAULT_RESTARTS)
        .map(|j| ks[j * last / DEFAULT_RESTARTS])
        .collect();
    out.dedup();
    out
}

/// Resolves the sampling region of the regularity estimate. `restarts`
/// is consulted only for inexact runs.
pub fn kappa_region(
    pf: &ProblemFile,
    inst: &Instance,
    trace: Option<&Trace>,
) -> Result<SampleBall, String> {
    let spec = pf.analysis.kappa.as_ref().ok_or("analysis.kappa is not declared")?;
    let start = || SampleBall::around_start(&inst.problem, &inst.config.x0).map_err(|e| e.to_string());
    let restarts = |trace: &Trace| {
        let mut idx = restart_indices(pf, trace);
        if trace.mode == Mode::Superiorized {
            let i = i_eps(trace, pf.epsilon());
            if trace.iterate(i).is_some() {
                idx.push(i);
            }
        }
        idx.retain(|&i| i <= trace.iterations);
        SampleBall::for_restarts(&inst.problem, trace, &idx).map_err(|e| e.to_string())
    };
    match (&spec.region, trace) {
        (RegionSpec::Ball { .. }, _) => Ok(inst.region.clone().expect("validated on load")),
        (RegionSpec::Start, _) => start(),
        (RegionSpec::Auto, _) if pf.mode() == Mode::Exact => start(),
        (RegionSpec::Auto | RegionSpec::Restarts, Some(t)) => restarts(t),
        (RegionSpec::Auto | RegionSpec::Restarts, None) => {
            Err("the restart region needs a finished run".into())
        }
    }
}

pub fn kappa_estimate(
    pf: &ProblemFile,
    inst: &Instance,
    trace: Option<&Trace>,
    workers: Workers,
) -> Result<RegularityEstimate, String> {
    let spec = pf.analysis.kappa.as_ref().ok_or("analysis.kappa is not declared")?;
    let region = kappa_region(pf, inst, trace)?;
    estimate_kappa(&inst.problem, &region, spec.samples, spec.seed, workers).map_err(|e| e.to_string())
}

/// Everything the checks share, computed once up front; failures are
/// kept and reported by the checks that depend on them.
struct Context<'a> {
    pf: &'a ProblemFile,
    inst: &'a Instance,
    trace: &'a Trace,
    kappa: Option<Result<RegularityEstimate, String>>,
    rate: Option<Result<RateConstants, String>>,
    limit: Option<Result<LimitEstimate, String>>,
    restarts: Option<Result<Vec<RestartAnalysis>, String>>,
    exact: Option<Result<Trace, String>>,
}

type Shared<T> = Option<Result<T, String>>;

fn need<'c, T>(v: &'c Shared<T>, what: &str) -> Result<&'c T, String> {
    match v {
        Some(Ok(t)) => Ok(t),
        Some(Err(e)) => Err(format!("{what}: {e}")),
        None => Err(format!("{what} was not computed")),
    }
}

impl<'a> Context<'a> {
    fn new(pf: &'a ProblemFile, inst: &'a Instance, trace: &'a Trace, workers: Workers) -> Self {
        let checks = &pf.analysis.checks;
        let has = |k: CheckKind| checks.contains(&k);
        let exact = trace.mode == Mode::Exact;
        let kappa = pf
            .analysis
            .kappa
            .as_ref()
            .map(|_| kappa_estimate(pf, inst, Some(trace), workers));
        let rate = match &kappa {
            Some(Ok(k)) if exact => Some(
                project_intersection(&inst.problem, &inst.config.x0, INTERSECTION_TOL)
                    .and_then(|p| {
                        let s = &inst.schedule;
                        rate_constants(
                            s.declared_omega_min(),
                            s.declared_m(),
                            s.declared_s(),
                            k.inflated(),
                            inst.config.x0.distance(&p),
                        )
                    })
                    .map_err(|e| e.to_string()),
            ),
            _ => None,
        };
        let uses_limit = has(CheckKind::ErrorBand) && exact
            || !exact
                && (has(CheckKind::StrongRate) || has(CheckKind::PerturbedBand) || has(CheckKind::WeakRate));
        let limit = uses_limit.then(|| trace_limit(&inst.problem, &inst.schedule, trace).map_err(|e| e.to_string()));
        let uses_restarts = !exact
            && [
                CheckKind::Deviation,
                CheckKind::StrongRate,
                CheckKind::PerturbedBand,
                CheckKind::WeakRate,
            ]
            .iter()
            .any(|k| has(*k));
        let restarts = uses_restarts.then(|| {
            let idx = restart_indices(pf, trace);
            let jobs = map_indices(idx.len(), workers, |j| {
                restart_analysis(&inst.problem, &inst.schedule, trace, idx[j], LIMIT_MAX_STEPS)
            });
            jobs.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())
        });
        let exact_run = (has(CheckKind::Superiorization) && trace.mode == Mode::Superiorized).then(|| {
            let cfg = RunConfig {
                mode: Mode::Exact,
                ..inst.config.clone()
            };
            run(&inst.problem, &inst.schedule, &cfg, None, None).map_err(|e| e.to_string())
        });
        Self {
            pf,
            inst,
            trace,
            kappa,
            rate,
            limit,
            restarts,
            exact: exact_run,
        }
    }

    fn evaluate(&self, kind: CheckKind) -> CheckOutcome {
        let (ineq, statement) = describe(kind);
        let name = kind.name();
        let skip = |why: &str| CheckOutcome::skipped(name, ineq, statement, why);
        let mode = self.trace.mode;
        let result = match kind {
            CheckKind::ErrorBand | CheckKind::Contraction if mode != Mode::Exact => {
                return skip("applies to exact runs")
            }
            CheckKind::Envelope if mode != Mode::Perturbed => return skip("applies to perturbed runs"),
            CheckKind::Deviation | CheckKind::StrongRate | CheckKind::PerturbedBand | CheckKind::WeakRate
                if mode == Mode::Exact =>
            {
                return skip("applies to perturbed and superiorized runs")
            }
            CheckKind::Superiorization if mode != Mode::Superiorized => {
                return skip("applies to superiorized runs")
            }
            CheckKind::Angle if !self.inst.problem.all_linear_subspaces() => {
                return skip("needs every set to be a linear subspace")
            }
            CheckKind::Angle if self.inst.problem.len() < 2 => return skip("needs at least two subspaces"),
            _ => self.check(kind),
        };
        match result {
            Ok((report, detail)) => {
                let mut o = CheckOutcome::from_report(name, ineq, &report);
                o.statement = statement.into();
                match detail {
                    Some(d) => o.with_detail(d),
                    None => o,
                }
            }
            Err(e) => CheckOutcome::failed(name, ineq, statement, format!("could not evaluate: {e}")),
        }
    }

    fn check(&self, kind: CheckKind) -> Result<(CheckReport, Option<String>), String> {
        let (p, s, t) = (&self.inst.problem, &self.inst.schedule, self.trace);
        let err = |e: feas_core::Error| e.to_string();
        let merged = |reports: &[CheckReport]| {
            let mut r = CheckReport::new(describe(kind).1);
            for x in reports {
                r.merge(x);
            }
            r
        };
        match kind {
            CheckKind::Fejer => {
                let mut w = self.inst.witnesses.clone();
                w.extend(p.witness().cloned());
                w.push(project_intersection(p, t.x0(), INTERSECTION_TOL).map_err(err)?);
                Ok((fejer_monitor(p, t, &w).map_err(err)?, Some(format!("{} witnesses", w.len()))))
            }
            CheckKind::ErrorBand => {
                let kappa = need(&self.kappa, "kappa")?.inflated();
                let rc = need(&self.rate, "rate constants")?;
                let limit = need(&self.limit, "limit")?;
                let b = error_band_check(t, rc, kappa, limit).map_err(err)?;
                Ok((merged(&[b.lower, b.upper]), None))
            }
            CheckKind::Contraction => {
                let rc = need(&self.rate, "rate constants")?;
                Ok((contraction_check(p, t, rc).map_err(err)?, None))
            }
            CheckKind::Envelope => Ok((envelope_check(p, s, t), None)),
            CheckKind::Deviation => {
                let a = need(&self.restarts, "restart analysis")?;
                let r: Vec<CheckReport> = a.iter().map(|a| a.deviation_report()).collect();
                Ok((merged(&r), Some(restart_detail(a))))
            }
            CheckKind::StrongRate => {
                let a = need(&self.restarts, "restart analysis")?;
                let limit = need(&self.limit, "limit")?;
                let mut r = merged(&a.iter().map(|a| strong_rate_check(t, a, limit)).collect::<Vec<_>>());
                for x in a {
                    let scale = 1.0 + limit.point.norm();
                    let tol = RATE_TOL * scale + limit.tolerance() + x.limit.tolerance();
                    r.record(t.iterations, Some(x.i), limit_shift_slack(x, limit), tol);
                }
                Ok((r, Some(restart_detail(a))))
            }
            CheckKind::PerturbedBand => {
                let a = need(&self.restarts, "restart analysis")?;
                let kappa = need(&self.kappa, "kappa")?.inflated();
                let limit = need(&self.limit, "limit")?;
                let b = perturbed_residual_band_check(p, t, a, kappa, limit).map_err(err)?;
                Ok((merged(&[b.lower, b.upper]), Some(restart_detail(a))))
            }
            CheckKind::WeakRate => {
                let a = need(&self.restarts, "restart analysis")?;
                let limit = need(&self.limit, "limit")?;
                let r = a
                    .iter()
                    .map(|a| weak_rate_check(a, t, limit, &self.inst.functionals))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(err)?;
                let detail = format!("{}; {} functionals", restart_detail(a), self.inst.functionals.len());
                Ok((merged(&r), Some(detail)))
            }
            CheckKind::Superiorization => {
                let kappa = need(&self.kappa, "kappa")?.inflated();
                let exact = need(&self.exact, "exact comparison run")?;
                let steer = self.inst.steering.as_ref().ok_or("no steering spec")?;
                let restarts = restart_indices(self.pf, t);
                let rep = superiorization_report(
                    p,
                    s,
                    steer,
                    t,
                    exact,
                    RateParams::from_schedule(s, kappa),
                    &restarts,
                    self.pf.epsilon(),
                )
                .map_err(err)?;
                let detail = format!(
                    "epsilon {}, i_eps {}, phi(superiorized limit) {:e}, phi(exact limit) {:e}, gap {:e}",
                    rep.epsilon, rep.i_eps, rep.phi_superiorized, rep.phi_exact, rep.phi_gap
                );
                Ok((merged(&[rep.estim1, rep.estim2]), Some(detail)))
            }
            CheckKind::Angle => {
                let kappa = need(&self.kappa, "kappa")?.inflated();
                let a = friedrichs_cosine_with_kappa(p.sets(), kappa).map_err(err)?;
                let (lo, hi) = a.bounds.expect("kappa was given");
                let mut r = CheckReport::new(describe(kind).1);
                r.record(0, None, a.cosine - lo.max(0.0), 1e-12);
                r.record(0, None, hi - a.cosine, 1e-12);
                let mut detail = format!("cosine {:.15}, theta {:.15}, bounds [{lo:.6}, {hi:.6}]", a.cosine, a.theta);
                if let Ok(q) = rate_from_angle(a.cosine, s.declared_omega_min(), s.declared_m(), s.declared_s()) {
                    detail.push_str(&format!(", angle rate {q:.12}"));
                }
                Ok((r, Some(detail)))
            }
        }
    }
}

fn restart_detail(a: &[RestartAnalysis]) -> String {
    let idx: Vec<String> = a.iter().map(|a| a.i.to_string()).collect();
    format!("restarts at i = {}", idx.join(", "))
}

/// Runs every enabled check; `workers` parallelizes independent checks,
/// with outcomes always in declaration order.
pub fn analyze(pf: &ProblemFile, inst: &Instance, trace: &Trace, workers: Workers) -> RunReport {
    let ctx = Context::new(pf, inst, trace, workers);
    let checks = &pf.analysis.checks;
    let outcomes = map_indices(checks.len(), workers, |j| ctx.evaluate(checks[j]));
    let kappa = match &ctx.kappa {
        Some(Ok(k)) => Some(k.into()),
        Some(Err(e)) => {
            log::warn!("kappa estimate failed: {e}");
            None
        }
        None => None,
    };
    RunReport {
        summary: Summary::of(trace),
        kappa,
        rate: match &ctx.rate {
            Some(Ok(rc)) => Some(RateSummary::from(rc)),
            _ => None,
        },
        checks: outcomes,
    }
}

/// Prepends a verdict to a report, e.g. the replay comparison of `verify`.
pub fn prepend(report: &mut RunReport, outcome: CheckOutcome) {
    report.checks.insert(0, outcome);
}

/// Count of failed checks.
pub fn failures(report: &RunReport) -> usize {
    report.checks.iter().filter(|c| c.status == Status::Fail).count()
}
