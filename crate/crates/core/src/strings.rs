//! String averaging operators `U = sum_n w_n P_{j_l} ... P_{j_1}`, dynamic
//! control schedules, and numeric certificates for the strongly
//! quasi-nonexpansive inequalities these operators satisfy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::point::Point;
use crate::problem::{Problem, FEASIBILITY_TOL};
use crate::intersection::{project_intersection, INTERSECTION_TOL};

/// Weights must sum to one within this absolute tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Inequality slacks are accepted down to `-SLACK_TOL * slack_scale(x, z)`.
pub const SLACK_TOL: f64 = 1e-9;

/// `(1 + |x| + |z|)^2`, the magnitude squared-norm inequalities live at.
pub fn slack_scale(x: &Point, z: &Point) -> f64 {
    let s = 1.0 + x.norm() + z.norm();
    s * s
}

/// An ordered tuple of set indices `(j_1, ..., j_l)`; the product
/// `P_{j_l} ... P_{j_1}` applies `j_1` first. Repeats are allowed and count
/// toward the length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StringDef(Vec<usize>);

impl StringDef {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidPlan("strings must be nonempty".into()));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_range(&self, m: usize) -> Result<()> {
        match self.0.iter().find(|&&j| j >= m) {
            Some(&index) => Err(Error::IndexOutOfRange { index, len: m }),
            None => Ok(()),
        }
    }
}

/// A convex combination of strings: one operator `T_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StringPlan {
    strings: Vec<StringDef>,
    weights: Vec<f64>,
}

impl StringPlan {
    pub fn new(strings: Vec<StringDef>, weights: Vec<f64>) -> Result<Self> {
        if strings.is_empty() {
            return Err(Error::InvalidPlan("a plan needs at least one string".into()));
        }
        if strings.len() != weights.len() {
            return Err(Error::InvalidPlan(format!(
                "{} strings but {} weights",
                strings.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidPlan(format!(
                "weights must be strictly positive, got {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidPlan(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { strings, weights })
    }

    /// One string with weight one.
    pub fn single(string: StringDef) -> Self {
        Self {
            strings: vec![string],
            weights: vec![1.0],
        }
    }

    /// `x -> P_{M-1} ... P_0 x`.
    pub fn sweep(m: usize) -> Self {
        Self::single(StringDef((0..m).collect()))
    }

    /// `x -> (1/M) sum_i P_i x`.
    pub fn simultaneous(m: usize) -> Self {
        Self {
            strings: (0..m).map(|i| StringDef(vec![i])).collect(),
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn strings(&self) -> &[StringDef] {
        &self.strings
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Length of the longest string, counting repeats.
    pub fn max_len(&self) -> usize {
        self.strings.iter().map(StringDef::len).max().unwrap_or(0)
    }

    /// Distinct indices appearing in any string, ascending.
    pub fn used_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.strings.iter().flat_map(|s| s.0.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn covers(&self, index: usize) -> bool {
        self.strings.iter().any(|s| s.0.contains(&index))
    }

    pub fn check_for(&self, problem: &Problem) -> Result<()> {
        self.strings
            .iter()
            .try_for_each(|s| s.check_range(problem.len()))
    }
}

/// `P_{j_l} ... P_{j_1} x`.
pub fn apply_string(problem: &Problem, string: &StringDef, x: &Point) -> Result<Point> {
    string.check_range(problem.len())?;
    problem.check_point(x)?;
    Ok(apply_string_unchecked(problem, string, x))
}

pub(crate) fn apply_string_unchecked(problem: &Problem, string: &StringDef, x: &Point) -> Point {
    let sets = problem.sets();
    let mut iter = string.0.iter();
    let first = iter.next().expect("strings are nonempty");
    let mut y = sets[*first].project_unchecked(x);
    for &j in iter {
        y = sets[j].project_unchecked(&y);
    }
    y
}

/// `Q_0 = x, Q_l = P_{j_l} Q_{l-1}`: every partial product of a string.
pub fn string_partials(problem: &Problem, string: &StringDef, x: &Point) -> Result<Vec<Point>> {
    string.check_range(problem.len())?;
    problem.check_point(x)?;
    let mut out = Vec::with_capacity(string.len() + 1);
    out.push(x.clone());
    for &j in &string.0 {
        let next = problem.sets()[j].project_unchecked(out.last().expect("nonempty"));
        out.push(next);
    }
    Ok(out)
}

/// `U x = sum_n w_n (prod_{j in J_n} P_j) x`, summed left to right over `n`.
pub fn apply_operator(problem: &Problem, plan: &StringPlan, x: &Point) -> Result<Point> {
    plan.check_for(problem)?;
    problem.check_point(x)?;
    Ok(apply_operator_unchecked(problem, plan, x))
}

pub(crate) fn apply_operator_unchecked(problem: &Problem, plan: &StringPlan, x: &Point) -> Point {
    let mut terms = plan.strings.iter().zip(&plan.weights);
    let (s0, w0) = terms.next().expect("plans are nonempty");
    // Start from w_0 * y_0 rather than zero so a lone weight-one string
    // reproduces apply_string bit for bit.
    let mut acc = apply_string_unchecked(problem, s0, x).scale(*w0);
    for (s, w) in terms {
        acc.add_scaled(*w, &apply_string_unchecked(problem, s, x));
    }
    acc
}

/// How `plan(k)` is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanGenerator {
    Fixed(StringPlan),
    /// `plan(k) = plans[k mod len]`.
    Cyclic(Vec<StringPlan>),
    /// `plan(k)` drawn from `pool` by a generator keyed on `(seed, k)`, so
    /// any `k` can be replayed without generating its predecessors.
    SeededRandom { pool: Vec<StringPlan>, seed: u64 },
}

/// A dynamic control: the operator sequence `T_k` together with the
/// declared constants `w`, `m`, `s` that the rate bounds use.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    generator: PlanGenerator,
    declared_s: usize,
    declared_omega_min: f64,
    declared_m: usize,
}

impl ControlSchedule {
    pub fn new(
        generator: PlanGenerator,
        declared_s: usize,
        declared_omega_min: f64,
        declared_m: usize,
    ) -> Result<Self> {
        let nonempty = match &generator {
            PlanGenerator::Fixed(_) => true,
            PlanGenerator::Cyclic(p) | PlanGenerator::SeededRandom { pool: p, .. } => !p.is_empty(),
        };
        if !nonempty {
            return Err(Error::InvalidSchedule("plan list is empty".into()));
        }
        if declared_s == 0 || declared_m == 0 {
            return Err(Error::InvalidSchedule(
                "declared s and m must be positive".into(),
            ));
        }
        if !(declared_omega_min > 0.0 && declared_omega_min <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "declared omega must lie in (0, 1], got {declared_omega_min}"
            )));
        }
        Ok(Self {
            generator,
            declared_s,
            declared_omega_min,
            declared_m,
        })
    }

    /// Cyclic projections `P_0, P_1, ..., P_{M-1}, P_0, ...` (`w = 1, m = 1, s = M`).
    pub fn cyclic_pointwise(m: usize) -> Self {
        let plans = (0..m)
            .map(|i| StringPlan::single(StringDef(vec![i])))
            .collect();
        Self::new(PlanGenerator::Cyclic(plans), m, 1.0, 1).expect("valid preset")
    }

    /// One string through every set (`w = 1, m = M, s = 1`).
    pub fn sweep(m: usize) -> Self {
        Self::new(PlanGenerator::Fixed(StringPlan::sweep(m)), 1, 1.0, m).expect("valid preset")
    }

    /// Simultaneous projections (`w = 1/M, m = 1, s = 1`).
    pub fn simultaneous(m: usize) -> Self {
        Self::new(
            PlanGenerator::Fixed(StringPlan::simultaneous(m)),
            1,
            1.0 / m as f64,
            1,
        )
        .expect("valid preset")
    }

    pub fn generator(&self) -> &PlanGenerator {
        &self.generator
    }

    pub fn declared_s(&self) -> usize {
        self.declared_s
    }

    pub fn declared_omega_min(&self) -> f64 {
        self.declared_omega_min
    }

    pub fn declared_m(&self) -> usize {
        self.declared_m
    }

    pub fn plan(&self, k: usize) -> &StringPlan {
        match &self.generator {
            PlanGenerator::Fixed(p) => p,
            PlanGenerator::Cyclic(plans) => &plans[k % plans.len()],
            PlanGenerator::SeededRandom { pool, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                &pool[rng.random_range(0..pool.len())]
            }
        }
    }

    /// Applies `T_k`.
    pub fn apply(&self, problem: &Problem, k: usize, x: &Point) -> Point {
        apply_operator_unchecked(problem, self.plan(k), x)
    }

    /// Every distinct plan the generator can emit.
    pub fn all_plans(&self) -> Vec<&StringPlan> {
        match &self.generator {
            PlanGenerator::Fixed(p) => vec![p],
            PlanGenerator::Cyclic(p) | PlanGenerator::SeededRandom { pool: p, .. } => {
                p.iter().collect()
            }
        }
    }

    pub fn check_for(&self, problem: &Problem) -> Result<()> {
        self.all_plans()
            .into_iter()
            .try_for_each(|p| p.check_for(problem))
    }
}

/// Outcome of [`validate_schedule`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub horizon: usize,
    pub windows_checked: usize,
    /// `(k, missing indices)` for windows `k..k+s` that fail to cover every index.
    pub uncovered: Vec<(usize, Vec<usize>)>,
    /// `(k, min weight)` where a realized weight is below the declared bound.
    pub omega_violations: Vec<(usize, f64)>,
    /// `(k, longest string)` where a realized string exceeds the declared `m`.
    pub m_violations: Vec<(usize, usize)>,
    /// `(k, index)` where a plan refers to a set that does not exist.
    pub index_errors: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn coverage_ok(&self) -> bool {
        self.uncovered.is_empty()
    }

    pub fn first_uncovered(&self) -> Option<usize> {
        self.uncovered.first().map(|(k, _)| *k)
    }

    /// Coverage, declared constants and index ranges all hold.
    pub fn passed(&self) -> bool {
        self.coverage_ok()
            && self.omega_violations.is_empty()
            && self.m_violations.is_empty()
            && self.index_errors.is_empty()
    }
}

/// Checks `s`-intermittency (`I = I_k u ... u I_{k+s-1}` for every
/// `k <= horizon - s`) and the declared `w` and `m` for plans `0..horizon`.
pub fn validate_schedule(
    schedule: &ControlSchedule,
    num_sets: usize,
    horizon: usize,
) -> Result<ValidationReport> {
    let s = schedule.declared_s;
    if horizon < s {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is shorter than the declared s = {s}"
        )));
    }
    let mut report = ValidationReport {
        horizon,
        windows_checked: 0,
        uncovered: Vec::new(),
        omega_violations: Vec::new(),
        m_violations: Vec::new(),
        index_errors: Vec::new(),
    };
    let mut used: Vec<Vec<usize>> = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let plan = schedule.plan(k);
        // relative slack: 1/M weights are not exactly representable
        if plan.min_weight() < schedule.declared_omega_min * (1.0 - 1e-12) {
            report.omega_violations.push((k, plan.min_weight()));
        }
        if plan.max_len() > schedule.declared_m {
            report.m_violations.push((k, plan.max_len()));
        }
        let mut idx = plan.used_indices();
        for &j in idx.iter().filter(|&&j| j >= num_sets) {
            report.index_errors.push((k, j));
        }
        idx.retain(|&j| j < num_sets);
        used.push(idx);
    }

    let mut counts = vec![0usize; num_sets];
    for idx in &used[..s] {
        for &j in idx {
            counts[j] += 1;
        }
    }
    for k in 0..=horizon - s {
        if k > 0 {
            for &j in &used[k - 1] {
                counts[j] -= 1;
            }
            for &j in &used[k + s - 1] {
                counts[j] += 1;
            }
        }
        report.windows_checked += 1;
        if counts.contains(&0) {
            let missing = (0..num_sets).filter(|&j| counts[j] == 0).collect();
            report.uncovered.push((k, missing));
        }
    }
    Ok(report)
}

/// A numeric instance of `|Ux - z|^2 <= |x - z|^2 - rho |x - Ux|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqneCertificate {
    pub rho: f64,
    /// `|Ux - z|^2 + rho |x - Ux|^2`
    pub lhs: f64,
    /// `|x - z|^2`
    pub rhs: f64,
    pub slack: f64,
    pub scale: f64,
}

impl SqneCertificate {
    pub fn is_valid(&self) -> bool {
        self.slack >= -SLACK_TOL * self.scale
    }
}

/// Modulus of a composition of `rho_i`-SQNE operators: `(sum 1/rho_i)^-1`.
pub fn sqne_modulus_composition(rhos: &[f64]) -> f64 {
    1.0 / rhos.iter().map(|r| 1.0 / r).sum::<f64>()
}

/// Modulus of a convex combination `sum w_i U_i` of `rho_i`-SQNE operators:
/// `sum(w_i rho_i / (rho_i + 1)) / sum(w_i / (rho_i + 1))`, which is at least
/// `min rho_i`.
pub fn sqne_modulus_average(weights: &[f64], rhos: &[f64]) -> f64 {
    let num: f64 = weights
        .iter()
        .zip(rhos)
        .map(|(w, r)| w * r / (r + 1.0))
        .sum();
    let den: f64 = weights.iter().zip(rhos).map(|(w, r)| w / (r + 1.0)).sum();
    num / den
}

/// Certificate for the plan's operator with `rho = 1/m`.
pub fn sqne_certificate(
    problem: &Problem,
    plan: &StringPlan,
    x: &Point,
    z: &Point,
) -> Result<SqneCertificate> {
    sqne_certificate_with_rho(problem, plan, x, z, 1.0 / plan.max_len() as f64)
}

/// Certificate for an arbitrary claimed modulus.
pub fn sqne_certificate_with_rho(
    problem: &Problem,
    plan: &StringPlan,
    x: &Point,
    z: &Point,
    rho: f64,
) -> Result<SqneCertificate> {
    plan.check_for(problem)?;
    problem.check_point(x)?;
    problem.check_feasible(z, FEASIBILITY_TOL)?;
    let ux = apply_operator_unchecked(problem, plan, x);
    let lhs = ux.distance_sq(z) + rho * x.distance_sq(&ux);
    let rhs = x.distance_sq(z);
    Ok(SqneCertificate {
        rho,
        lhs,
        rhs,
        slack: rhs - lhs,
        scale: slack_scale(x, z),
    })
}

/// Slack of `|Ux - z|^2 <= |x - z|^2 - sum_l |Q_l x - Q_{l-1} x|^2` for the
/// string product `U`.
pub fn composition_telescope_check(
    problem: &Problem,
    string: &StringDef,
    x: &Point,
    z: &Point,
) -> Result<f64> {
    problem.check_feasible(z, FEASIBILITY_TOL)?;
    let q = string_partials(problem, string, x)?;
    let increments: f64 = q.windows(2).map(|w| w[1].distance_sq(&w[0])).sum();
    let ux = q.last().expect("nonempty");
    Ok(x.distance_sq(z) - increments - ux.distance_sq(z))
}

/// The chain `d(x, C_i)^2 <= (m/w)(|x - z|^2 - |Ux - z|^2) <= (2m/w)|Ux - x| d(x, C)`.
///
/// The middle factor is `m/w`: with `2m/w` the first inequality is loose by
/// two and the second fails (the difference of squares is only bounded by
/// `2|Ux - x| d(x, C)`). The outer bound `d(x, C_i)^2 <= (2m/w)|Ux - x| d(x, C)`
/// is unaffected. The middle term is evaluated twice: at the caller's `z`,
/// where only the first inequality is guaranteed, and at `z = P_C x`, where
/// both are.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialBound {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub mid_at_projection: f64,
    pub scale: f64,
}

impl PartialBound {
    /// `mid - lhs`.
    pub fn first_slack(&self) -> f64 {
        self.mid - self.lhs
    }

    /// `rhs - mid_at_projection`.
    pub fn second_slack(&self) -> f64 {
        self.rhs - self.mid_at_projection
    }

    pub fn holds(&self) -> bool {
        let tol = -SLACK_TOL * self.scale;
        self.first_slack() >= tol
            && self.second_slack() >= tol
            && self.mid_at_projection - self.lhs >= tol
    }
}

pub fn partial_bound_check(
    problem: &Problem,
    plan: &StringPlan,
    x: &Point,
    z: &Point,
    index: usize,
) -> Result<PartialBound> {
    problem.set(index)?;
    plan.check_for(problem)?;
    if !plan.covers(index) {
        return Err(Error::NotCovered { index });
    }
    problem.check_point(x)?;
    problem.check_feasible(z, FEASIBILITY_TOL)?;
    let factor = plan.max_len() as f64 / plan.min_weight();
    let ux = apply_operator_unchecked(problem, plan, x);
    let pc = project_intersection(problem, x, INTERSECTION_TOL)?;
    let d_c = x.distance(&pc);
    let d_i = problem.sets()[index].distance_unchecked(x);
    Ok(PartialBound {
        lhs: d_i * d_i,
        mid: factor * (x.distance_sq(z) - ux.distance_sq(z)),
        rhs: 2.0 * factor * ux.distance(x) * d_c,
        mid_at_projection: factor * (x.distance_sq(&pc) - ux.distance_sq(&pc)),
        scale: slack_scale(x, z),
    })
}

/// `(|Ux - x|, (w / (2 m kappa^2)) d(x, C))`; the first should dominate
/// whenever the family is `kappa`-linearly regular around `x`.
pub fn full_bound_check(
    problem: &Problem,
    plan: &StringPlan,
    x: &Point,
    kappa: f64,
) -> Result<(f64, f64)> {
    plan.check_for(problem)?;
    problem.check_point(x)?;
    let ux = apply_operator_unchecked(problem, plan, x);
    let d_c = x.distance(&project_intersection(problem, x, INTERSECTION_TOL)?);
    let coef = plan.min_weight() / (2.0 * plan.max_len() as f64 * kappa * kappa);
    Ok((ux.distance(x), coef * d_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::pt;
    use crate::sets::SetDescriptor;

    fn quadrant() -> Problem {
        Problem::new(vec![
            SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap(),
            SetDescriptor::half_space(pt(&[0.0, 1.0]), 0.0).unwrap(),
        ])
        .unwrap()
    }

    fn s(ix: &[usize]) -> StringDef {
        StringDef::new(ix.to_vec()).unwrap()
    }

    #[test]
    fn string_application() {
        let p = quadrant();
        assert_eq!(
            apply_string(&p, &s(&[0]), &pt(&[1.0, 1.0])).unwrap(),
            pt(&[0.0, 1.0])
        );
        assert_eq!(
            apply_string(&p, &s(&[0, 1]), &pt(&[1.0, 1.0])).unwrap(),
            pt(&[0.0, 0.0])
        );
        let inside = pt(&[-1.0, -2.0]);
        assert_eq!(apply_string(&p, &s(&[1, 0, 1]), &inside).unwrap(), inside);
        assert!(matches!(
            apply_string(&p, &s(&[2]), &inside),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn operator_application() {
        let p = quadrant();
        let plan = StringPlan::new(vec![s(&[0]), s(&[1])], vec![0.5, 0.5]).unwrap();
        assert_eq!(
            apply_operator(&p, &plan, &pt(&[2.0, 4.0])).unwrap(),
            pt(&[1.0, 2.0])
        );
        let x = pt(&[-0.3, 1.7]);
        let single = StringPlan::single(s(&[1, 0]));
        let a = apply_operator(&p, &single, &x).unwrap();
        let b = apply_string(&p, &s(&[1, 0]), &x).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        let inside = pt(&[-1.0, -1.0]);
        assert_eq!(apply_operator(&p, &plan, &inside).unwrap(), inside);
    }

    #[test]
    fn plan_validation() {
        assert!(StringDef::new(vec![]).is_err());
        let e = StringPlan::new(vec![s(&[0]), s(&[1])], vec![0.5, 0.6]).unwrap_err();
        assert!(e.to_string().contains("weights must sum to 1"));
        assert!(StringPlan::new(vec![s(&[0]), s(&[1])], vec![1.0, 0.0]).is_err());
        assert!(StringPlan::new(vec![s(&[0])], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn schedule_validation_examples() {
        let cyc = ControlSchedule::cyclic_pointwise(4);
        let r = validate_schedule(&cyc, 4, 40).unwrap();
        assert!(r.passed());
        assert_eq!(r.windows_checked, 37);

        let sweep = ControlSchedule::sweep(5);
        assert!(validate_schedule(&sweep, 5, 10).unwrap().passed());

        // never uses the last index
        let plans = (0..3).map(|i| StringPlan::single(s(&[i]))).collect();
        let bad = ControlSchedule::new(PlanGenerator::Cyclic(plans), 3, 1.0, 1).unwrap();
        let r = validate_schedule(&bad, 4, 30).unwrap();
        assert!(!r.passed());
        assert_eq!(r.first_uncovered(), Some(0));
        assert_eq!(r.uncovered[0].1, vec![3]);

        // underdeclared s
        let short = ControlSchedule::new(
            PlanGenerator::Cyclic((0..3).map(|i| StringPlan::single(s(&[i]))).collect()),
            2,
            1.0,
            1,
        )
        .unwrap();
        assert!(!validate_schedule(&short, 3, 10).unwrap().coverage_ok());

        // declared constants are checked
        let sim = ControlSchedule::new(
            PlanGenerator::Fixed(StringPlan::simultaneous(3)),
            1,
            0.5,
            1,
        )
        .unwrap();
        let r = validate_schedule(&sim, 3, 5).unwrap();
        assert!(r.coverage_ok());
        assert_eq!(r.omega_violations.len(), 5);
        assert!(!r.passed());
        assert!(validate_schedule(&ControlSchedule::simultaneous(3), 3, 5)
            .unwrap()
            .passed());
        assert!(validate_schedule(&cyc, 4, 3).is_err());
    }

    #[test]
    fn seeded_random_schedule_is_replayable() {
        let pool = vec![StringPlan::sweep(3), StringPlan::simultaneous(3)];
        let a = ControlSchedule::new(
            PlanGenerator::SeededRandom {
                pool: pool.clone(),
                seed: 42,
            },
            1,
            1.0 / 3.0,
            3,
        )
        .unwrap();
        let b = a.clone();
        let seq_a: Vec<_> = (0..64).map(|k| a.plan(k).clone()).collect();
        let seq_b: Vec<_> = (0..64).rev().map(|k| b.plan(k).clone()).collect();
        assert!(seq_a.iter().eq(seq_b.iter().rev()));
        assert!(seq_a.iter().any(|p| p == &pool[0]));
        assert!(seq_a.iter().any(|p| p == &pool[1]));
    }

    #[test]
    fn certificates_at_fixed_points_have_zero_slack() {
        let p = quadrant();
        let plan = StringPlan::sweep(2);
        let x = pt(&[-1.0, -3.0]);
        let z = pt(&[-2.0, -0.5]);
        let c = sqne_certificate(&p, &plan, &x, &z).unwrap();
        assert_eq!(c.rho, 0.5);
        assert_eq!(c.slack, 0.0);
        assert_eq!(composition_telescope_check(&p, &s(&[0, 1]), &x, &z).unwrap(), 0.0);
        let pb = partial_bound_check(&p, &plan, &x, &z, 1).unwrap();
        assert_eq!((pb.lhs, pb.mid, pb.rhs), (0.0, 0.0, 0.0));
    }

    #[test]
    fn certificates_on_random_points() {
        let p = quadrant();
        let plan = StringPlan::sweep(2);
        let z = pt(&[-0.5, -1.5]);
        for (a, b) in [(2.0, 3.0), (-4.0, 1.0), (0.3, -0.2), (5.0, 5.0)] {
            let x = pt(&[a, b]);
            assert!(sqne_certificate(&p, &plan, &x, &z).unwrap().is_valid());
            assert!(composition_telescope_check(&p, &s(&[0, 1]), &x, &z).unwrap() >= -1e-12);
            assert!(composition_telescope_check(&p, &s(&[1]), &x, &z).unwrap() >= -1e-12);
            for i in 0..2 {
                assert!(partial_bound_check(&p, &plan, &x, &z, i).unwrap().holds());
            }
        }
    }

    #[test]
    fn sqne_errors() {
        let p = quadrant();
        let plan = StringPlan::single(s(&[0]));
        let bad = pt(&[1.0, 0.0]);
        assert!(matches!(
            sqne_certificate(&p, &plan, &bad, &bad),
            Err(Error::Infeasible { set: 0, .. })
        ));
        assert!(matches!(
            partial_bound_check(&p, &plan, &bad, &pt(&[-1.0, -1.0]), 1),
            Err(Error::NotCovered { index: 1 })
        ));
    }

    #[test]
    fn modulus_formulas() {
        assert_eq!(sqne_modulus_composition(&[1.0, 1.0, 1.0]), 1.0 / 3.0);
        let rho = sqne_modulus_average(&[0.5, 0.5], &[1.0, 3.0]);
        assert!((rho - 5.0 / 3.0).abs() < 1e-15);
        assert!(rho >= 1.0);
        assert!((sqne_modulus_average(&[0.2, 0.8], &[2.0, 2.0]) - 2.0).abs() < 1e-15);
    }
}
