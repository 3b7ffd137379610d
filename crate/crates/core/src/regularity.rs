//! Linear regularity constants, Friedrichs angles, the resulting linear
//! rate constants, and checks of the rate inequalities against runs.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::engine::{LimitEstimate, Mode, RestartAnalysis, Trace, RATE_TOL};
use crate::error::{Error, Result};
use crate::intersection::{intersection_basis, project_intersection, INTERSECTION_TOL};
use crate::par::{map_indices, Workers};
use crate::point::Point;
use crate::problem::Problem;
use crate::report::CheckReport;
use crate::sets::{orthonormalize, SetDescriptor};

/// A sampled `kappa_hat` is divided by this before use in bounds.
pub const KAPPA_INFLATION: f64 = 0.95;

/// Samples whose largest individual residual is below this are skipped.
pub const NEGLIGIBLE_RESIDUAL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBall {
    pub center: Point,
    pub radius: f64,
}

impl SampleBall {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "region radius must be nonnegative, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    /// `B(P_C x0, d(x0, C))`, which contains every exact iterate from `x0`.
    pub fn around_start(problem: &Problem, x0: &Point) -> Result<Self> {
        let p = project_intersection(problem, x0, INTERSECTION_TOL)?;
        let r = x0.distance(&p);
        Self::new(p, r)
    }

    /// Smallest ball centered at the first ball's center containing all.
    pub fn enclosing(balls: &[SampleBall]) -> Result<Self> {
        let first = balls
            .first()
            .ok_or_else(|| Error::InvalidParameter("no balls to enclose".into()))?;
        let r = balls
            .iter()
            .map(|b| first.center.distance(&b.center) + b.radius)
            .fold(0.0, f64::max);
        Self::new(first.center.clone(), r)
    }

    /// Union of the start balls of exact restarts from `x^i`, `i` in
    /// `{0} u restarts`, enclosed in one ball.
    pub fn for_restarts(problem: &Problem, trace: &Trace, restarts: &[usize]) -> Result<Self> {
        let mut balls = vec![Self::around_start(problem, trace.x0())?];
        for &i in restarts {
            let xi = trace.iterate(i).ok_or(Error::MissingIterate { k: i })?;
            balls.push(Self::around_start(problem, xi)?);
        }
        Self::enclosing(&balls)
    }

    /// Uniform draw via a normalized Gaussian and a `U^(1/n)` radius.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        let n = self.center.dim();
        let dir = loop {
            let g = Point::from_vec((0..n).map(|_| StandardNormal.sample(rng)).collect());
            let len = g.norm();
            if len > 1e-300 {
                break g.scale(1.0 / len);
            }
        };
        let u: f64 = Uniform::new(0.0, 1.0).expect("valid range").sample(rng);
        self.center.axpy(self.radius * u.powf(1.0 / n as f64), &dir)
    }
}

/// Sampled lower bound on the linear regularity constant over a ball.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityEstimate {
    /// `max d(x, C) / max_i d(x, C_i)` over samples; a lower bound on the
    /// true constant, never below 1.
    pub kappa_hat: f64,
    pub region: SampleBall,
    pub n_samples: usize,
    /// Samples outside every `C_i` up to [`NEGLIGIBLE_RESIDUAL`].
    pub n_effective: usize,
    pub max_ratio_witness: Point,
}

impl RegularityEstimate {
    /// `kappa_hat / 0.95`, the value bound checks use.
    pub fn inflated(&self) -> f64 {
        self.kappa_hat / KAPPA_INFLATION
    }
}

/// Estimates `kappa` with `n_samples` uniform draws from `region`. Sample
/// `j` depends only on `(seed, j)`, so larger sample counts extend smaller
/// ones and the estimate is monotone in `n_samples`.
pub fn estimate_kappa(
    problem: &Problem,
    region: &SampleBall,
    n_samples: usize,
    seed: u64,
    workers: Workers,
) -> Result<RegularityEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    problem.check_point(&region.center)?;
    let ratios = map_indices(n_samples, workers, |j| -> Result<Option<(f64, Point)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let x = region.sample(&mut rng);
        let max_d = problem.max_residual_unchecked(&x);
        if max_d <= NEGLIGIBLE_RESIDUAL {
            return Ok(None);
        }
        let d = x.distance(&project_intersection(problem, &x, INTERSECTION_TOL)?);
        Ok(Some((d / max_d, x)))
    });
    let mut best: Option<(f64, Point)> = None;
    let mut n_effective = 0;
    for r in ratios {
        if let Some((ratio, x)) = r? {
            n_effective += 1;
            if best.as_ref().is_none_or(|(b, _)| ratio > *b) {
                best = Some((ratio, x));
            }
        }
    }
    let (kappa_hat, witness) = match best {
        Some((r, x)) => (r.max(1.0), x),
        None => (1.0, region.center.clone()),
    };
    Ok(RegularityEstimate {
        kappa_hat,
        region: region.clone(),
        n_samples,
        n_effective,
        max_ratio_witness: witness,
    })
}

/// Constants of the linear rate `|x^k - x^inf| <= c_r q_r^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateConstants {
    pub omega: f64,
    pub m: usize,
    pub s: usize,
    pub kappa: f64,
    pub d0: f64,
    pub c_r: f64,
    pub q_r: f64,
}

impl RateConstants {
    /// `c_r q_r^k`.
    pub fn bound(&self, k: usize) -> f64 {
        self.c_r * self.q_r.powf(k as f64)
    }
}

/// `q_r = (1 - omega / (2 m s kappa^2))^(1/(2s))`, `c_r = 2 d0 / q_r^(s-1)`.
pub fn rate_constants(omega: f64, m: usize, s: usize, kappa: f64, d0: f64) -> Result<RateConstants> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidParameter(format!("omega must lie in (0, 1], got {omega}")));
    }
    if m == 0 || s == 0 {
        return Err(Error::InvalidParameter("m and s must be at least 1".into()));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be at least 1, got {kappa}")));
    }
    if !(d0 >= 0.0 && d0.is_finite()) {
        return Err(Error::InvalidParameter(format!("d0 must be nonnegative, got {d0}")));
    }
    let base = 1.0 - omega / (2.0 * m as f64 * s as f64 * kappa * kappa);
    let q_r = if s == 1 {
        base.sqrt()
    } else {
        base.powf(1.0 / (2.0 * s as f64))
    };
    let c_r = 2.0 * d0 / q_r.powf((s - 1) as f64);
    Ok(RateConstants {
        omega,
        m,
        s,
        kappa,
        d0,
        c_r,
        q_r,
    })
}

/// The three classical controls for `M` sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatePreset {
    /// `P_M ... P_1` each step: `omega = 1, m = M, s = 1`.
    Sweep,
    /// `(1/M) sum P_i`: `omega = 1/M, m = 1, s = 1`.
    Simultaneous,
    /// One projection per step, cycling: `omega = 1, m = 1, s = M`.
    CyclicPointwise,
}

impl RatePreset {
    pub fn params(self, num_sets: usize) -> (f64, usize, usize) {
        match self {
            RatePreset::Sweep => (1.0, num_sets, 1),
            RatePreset::Simultaneous => (1.0 / num_sets as f64, 1, 1),
            RatePreset::CyclicPointwise => (1.0, 1, num_sets),
        }
    }

    pub fn constants(self, num_sets: usize, kappa: f64, d0: f64) -> Result<RateConstants> {
        let (omega, m, s) = self.params(num_sets);
        rate_constants(omega, m, s, kappa, d0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleMethod {
    /// Largest principal-angle cosine between the two orthogonal parts.
    PrincipalAngles,
    /// Top singular value of the stacked orthogonal parts (any `M`).
    Spectral,
    /// Random search; a lower bound.
    Sampled { samples: usize },
}

/// Extended Friedrichs cosine `c(C_1, ..., C_M)` of linear subspaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleReport {
    pub cosine: f64,
    pub theta: f64,
    pub method: AngleMethod,
    pub num_subspaces: usize,
    /// `(1 - 2M/((M-1) kappa), 1 - 1/((M-1) kappa^2))` when a `kappa` was given.
    pub bounds: Option<(f64, f64)>,
}

impl AngleReport {
    fn new(cosine: f64, method: AngleMethod, num_subspaces: usize) -> Self {
        let cosine = cosine.clamp(0.0, 1.0);
        Self {
            cosine,
            theta: cosine.acos(),
            method,
            num_subspaces,
            bounds: None,
        }
    }

    /// Whether the cosine lies in `[max(0, lower), upper]` (up to 1e-12).
    pub fn within_bounds(&self) -> Option<bool> {
        self.bounds.map(|(lo, hi)| {
            self.cosine >= lo.max(0.0) - 1e-12 && self.cosine <= hi + 1e-12
        })
    }
}

/// Orthonormal bases of `C_i n C^perp`. Since `C` is contained in `C_i`,
/// this is the image of `C_i` under the projector onto `C^perp`.
fn orthogonal_parts(sets: &[SetDescriptor]) -> Result<Vec<Vec<Point>>> {
    let common = intersection_basis(sets)?;
    let n = sets[0].dim();
    sets.iter()
        .map(|s| {
            let basis = s.subspace_basis().expect("checked by intersection_basis");
            // basis vectors are unit, so the tail threshold is absolute
            let projected: Vec<Point> = basis
                .iter()
                .map(|u| {
                    let mut w = u.clone();
                    for _ in 0..2 {
                        for b in &common {
                            let c = b.dot(&w);
                            w.add_scaled(-c, b);
                        }
                    }
                    w
                })
                .filter(|w| w.norm() > 1e-10)
                .collect();
            orthonormalize(&projected, n)
        })
        .collect()
}

fn top_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

fn columns(parts: &[&Vec<Point>], n: usize) -> DMatrix<f64> {
    let cols: Vec<&Point> = parts.iter().flat_map(|p| p.iter()).collect();
    DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

/// Exact cosine. For two subspaces this is the top principal-angle cosine;
/// for `M` subspaces it is `(sigma^2 - 1)/(M - 1)` with `sigma` the top
/// singular value of `[W_1 ... W_M]`, which is the supremum of the defining
/// quotient since `sum_{i != j} <x_i, x_j> = |sum x_i|^2 - sum |x_i|^2`.
/// An empty admissible set (e.g. identical subspaces) gives `c = 0`.
pub fn friedrichs_cosine(sets: &[SetDescriptor]) -> Result<AngleReport> {
    let m = sets.len();
    if m < 2 {
        return Err(Error::InvalidParameter(
            "the Friedrichs cosine needs at least two subspaces".into(),
        ));
    }
    let parts = orthogonal_parts(sets)?;
    let n = sets[0].dim();
    if m == 2 {
        let w1 = columns(&[&parts[0]], n);
        let w2 = columns(&[&parts[1]], n);
        let c = if w1.ncols() == 0 || w2.ncols() == 0 {
            0.0
        } else {
            top_singular_value(&(w1.transpose() * w2))
        };
        return Ok(AngleReport::new(c, AngleMethod::PrincipalAngles, m));
    }
    let all: Vec<&Vec<Point>> = parts.iter().collect();
    let sigma = top_singular_value(&columns(&all, n));
    let c = if sigma == 0.0 {
        0.0
    } else {
        (sigma * sigma - 1.0) / (m as f64 - 1.0)
    };
    Ok(AngleReport::new(c, AngleMethod::Spectral, m))
}

/// [`friedrichs_cosine`] with the bounds implied by `kappa` attached.
pub fn friedrichs_cosine_with_kappa(sets: &[SetDescriptor], kappa: f64) -> Result<AngleReport> {
    let mut r = friedrichs_cosine(sets)?;
    r.bounds = Some(cos_kappa_bounds(kappa, sets.len())?);
    Ok(r)
}

/// Random-search lower bound on the cosine: the defining quotient at
/// `n_samples` seeded random tuples `x_i in C_i n C^perp`.
pub fn friedrichs_cosine_sampled(
    sets: &[SetDescriptor],
    n_samples: usize,
    seed: u64,
    workers: Workers,
) -> Result<AngleReport> {
    let m = sets.len();
    if m < 2 {
        return Err(Error::InvalidParameter(
            "the Friedrichs cosine needs at least two subspaces".into(),
        ));
    }
    let parts = orthogonal_parts(sets)?;
    let n = sets[0].dim();
    let quotients = map_indices(n_samples, workers, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut sum = Point::zeros(n);
        let mut sq = 0.0;
        for basis in &parts {
            let mut xi = Point::zeros(n);
            for u in basis {
                let a: f64 = StandardNormal.sample(&mut rng);
                xi.add_scaled(a, u);
            }
            sq += xi.norm_sq();
            sum = sum.add(&xi);
        }
        (sq > 0.0).then(|| (sum.norm_sq() - sq) / ((m as f64 - 1.0) * sq))
    });
    let best = quotients.into_iter().flatten().fold(0.0, f64::max);
    Ok(AngleReport::new(
        best,
        AngleMethod::Sampled { samples: n_samples },
        m,
    ))
}

/// `(1 - 2M/((M-1) kappa), 1 - 1/((M-1) kappa^2))`.
pub fn cos_kappa_bounds(kappa: f64, num_sets: usize) -> Result<(f64, f64)> {
    if !(kappa >= 1.0) {
        return Err(Error::InvalidParameter(format!("kappa must be at least 1, got {kappa}")));
    }
    if num_sets < 2 {
        return Err(Error::InvalidParameter("need at least two sets".into()));
    }
    let m1 = num_sets as f64 - 1.0;
    Ok((
        1.0 - 2.0 * num_sets as f64 / (m1 * kappa),
        1.0 - 1.0 / (m1 * kappa * kappa),
    ))
}

fn check_cosine(c: f64) -> Result<()> {
    if c == 1.0 {
        return Err(Error::InvalidParameter(
            "cosine 1: no linear rate can be derived".into(),
        ));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("cosine must lie in [0, 1), got {c}")));
    }
    Ok(())
}

/// `(1 - (omega/(2ms)) ((1 - c)/4)^2)^(1/(2s))`, an upper bound on `q_r`
/// in terms of the Friedrichs cosine `c`.
pub fn rate_from_angle(cos_theta: f64, omega: f64, m: usize, s: usize) -> Result<f64> {
    check_cosine(cos_theta)?;
    if !(omega > 0.0 && omega <= 1.0) || m == 0 || s == 0 {
        return Err(Error::InvalidParameter(
            "need omega in (0, 1] and m, s >= 1".into(),
        ));
    }
    let t = (1.0 - cos_theta) / 4.0;
    let base = 1.0 - omega / (2.0 * m as f64 * s as f64) * t * t;
    Ok(if s == 1 { base.sqrt() } else { base.powf(1.0 / (2.0 * s as f64)) })
}

/// `r(theta, M) = sqrt(1 - ((1 - c)/(4M))^2)` for cyclic sweeps.
pub fn cyclic_rate_from_angle(cos_theta: f64, num_sets: usize) -> Result<f64> {
    check_cosine(cos_theta)?;
    if num_sets == 0 {
        return Err(Error::InvalidParameter("need at least one set".into()));
    }
    let t = (1.0 - cos_theta) / (4.0 * num_sets as f64);
    Ok((1.0 - t * t).sqrt())
}

/// Both halves of a two-sided band.
#[derive(Clone, Debug, PartialEq)]
pub struct BandReport {
    pub lower: CheckReport,
    pub upper: CheckReport,
}

impl BandReport {
    pub fn passed(&self) -> bool {
        self.lower.passed() && self.upper.passed()
    }
}

/// `(1/2kappa)|x^k - x^inf| <= max_i d(x^k, C_i) <= c_r q_r^k` at every
/// recorded `k` of an exact run.
pub fn error_band_check(
    trace: &Trace,
    rc: &RateConstants,
    kappa: f64,
    limit: &LimitEstimate,
) -> Result<BandReport> {
    if trace.mode != Mode::Exact {
        return Err(Error::WrongMode(
            "the error band applies to exact runs; use the perturbed band".into(),
        ));
    }
    let inf = &limit.point;
    let mut lower = CheckReport::new("(1/2kappa)|x^k - x^inf| <= max_i d(x^k, C_i)");
    let mut upper = CheckReport::new("max_i d(x^k, C_i) <= c_r q_r^k");
    for row in &trace.rows {
        let scale = 1.0 + row.x.norm() + inf.norm();
        let tol = RATE_TOL * scale + limit.tolerance();
        lower.record(row.k, None, row.max_residual - row.x.distance(inf) / (2.0 * kappa), tol);
        upper.record(row.k, None, rc.bound(row.k) - row.max_residual, RATE_TOL * scale);
    }
    Ok(BandReport { lower, upper })
}

/// `d(x^{k+s}, C) <= q_r^s d(x^k, C)` over recorded blocks of `s` steps.
pub fn contraction_check(problem: &Problem, trace: &Trace, rc: &RateConstants) -> Result<CheckReport> {
    let mut r = CheckReport::new("d(x^(k+s), C) <= q_r^s d(x^k, C)");
    let factor = rc.q_r.powf(rc.s as f64);
    let dist = |x: &Point| -> Result<f64> {
        Ok(x.distance(&project_intersection(problem, x, INTERSECTION_TOL)?))
    };
    for row in &trace.rows {
        if let Some(next) = trace.iterate(row.k + rc.s) {
            let d0 = dist(&row.x)?;
            let d1 = dist(next)?;
            let scale = 1.0 + row.x.norm();
            r.record(row.k, None, factor * d0 - d1, RATE_TOL * scale);
        }
    }
    Ok(r)
}

/// For inexact runs and each restart `i`, at every recorded `k >= i`:
/// `(1/2kappa)|x^k - x^inf| - 2 T_i <= max_j d(x^k, C_j) <= |x_i^k - x_i^inf| + 2 T_i`
/// with `T_i = sum_{j>=i} e_j`.
pub fn perturbed_residual_band_check(
    problem: &Problem,
    outer: &Trace,
    analyses: &[RestartAnalysis],
    kappa: f64,
    outer_limit: &LimitEstimate,
) -> Result<BandReport> {
    if analyses.is_empty() {
        return Err(Error::InvalidParameter("no restart analyses given".into()));
    }
    let inf = &outer_limit.point;
    let mut lower = CheckReport::new(
        "(1/2kappa)|x^k - x^inf| - 2 sum_{j>=i} e_j <= max_j d(x^k, C_j)",
    );
    let mut upper = CheckReport::new(
        "max_j d(x^k, C_j) <= |x_i^k - x_i^inf| + 2 sum_{j>=i} e_j",
    );
    for a in analyses {
        for p in &a.points {
            let row = outer.row(p.k).ok_or(Error::MissingIterate { k: p.k })?;
            let res = problem.max_residual(&row.x)?;
            let two_t = 2.0 * a.tail_sum;
            let scale = 1.0 + row.x.norm() + inf.norm();
            let tol = RATE_TOL * scale + outer_limit.tolerance() + a.limit.tolerance();
            lower.record(p.k, Some(a.i), res + two_t - row.x.distance(inf) / (2.0 * kappa), tol);
            upper.record(p.k, Some(a.i), p.x.distance(&a.limit.point) + two_t - res, tol);
        }
    }
    Ok(BandReport { lower, upper })
}
