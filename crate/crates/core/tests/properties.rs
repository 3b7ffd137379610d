//! Property tests for the invariants the rate analysis rests on.

mod common;

use feas_core::engine::{fejer_monitor, run_many, trace_limit, RunJob};
use feas_core::oracles::{grid_project, two_subspace_exact_limit, FixtureRecord, GridSpec};
use feas_core::regularity::{
    cos_kappa_bounds, estimate_kappa, friedrichs_cosine, friedrichs_cosine_sampled, rate_from_angle,
};
use feas_core::strings::{
    apply_operator, composition_telescope_check, slack_scale, sqne_certificate,
    sqne_certificate_with_rho, sqne_modulus_average, sqne_modulus_composition, validate_schedule,
    SLACK_TOL,
};
use feas_core::{
    project_intersection, rate_constants, run, ControlSchedule, EnlargementRadius, Mode,
    PlanGenerator, Point, Problem, RunConfig, SampleBall, SetDescriptor, StringDef, StringPlan,
    Workers,
};
use proptest::prelude::*;

use common::{random_plan, random_planar_problem, random_set, rng, two_lines, uniform_point};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

/// Two random planes through the origin in `R^3`, which meet in a line.
fn random_planes(seed: u64) -> Vec<SetDescriptor> {
    let mut r = rng(seed, 0);
    (0..2)
        .map(|_| {
            let span = vec![common::unit(&mut r, 3), common::unit(&mut r, 3)];
            SetDescriptor::linear_subspace(span, 3).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn string_operators_are_sqne_and_telescope(seed in any::<u64>()) {
        let (p, _) = random_planar_problem(seed, 0);
        let mut r = rng(seed, 1);
        for _ in 0..20 {
            let x = uniform_point(&mut r, 2, 6.0);
            let z = project_intersection(&p, &uniform_point(&mut r, 2, 6.0), 1e-12).unwrap();
            let plan = random_plan(&mut r, p.len());
            let c = sqne_certificate(&p, &plan, &x, &z).unwrap();
            prop_assert!(c.is_valid(), "slack {}", c.slack);
            for s in plan.strings() {
                let t = composition_telescope_check(&p, s, &x, &z).unwrap();
                prop_assert!(t >= -SLACK_TOL * slack_scale(&x, &z));
            }
        }
    }

    #[test]
    fn operators_are_nonexpansive_and_fix_the_intersection(seed in any::<u64>()) {
        let (p, _) = random_planar_problem(seed, 0);
        let mut r = rng(seed, 2);
        let plan = random_plan(&mut r, p.len());
        for _ in 0..20 {
            let x = uniform_point(&mut r, 2, 6.0);
            let y = uniform_point(&mut r, 2, 6.0);
            let (ux, uy) = (apply_operator(&p, &plan, &x).unwrap(), apply_operator(&p, &plan, &y).unwrap());
            prop_assert!(ux.distance(&uy) <= x.distance(&y) * (1.0 + 1e-12) + 1e-12);
            let z = project_intersection(&p, &x, 1e-12).unwrap();
            let uz = apply_operator(&p, &plan, &z).unwrap();
            prop_assert!(uz.distance(&z) <= 1e-9 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn modulus_formulas_are_certified(seed in any::<u64>()) {
        // composition of m projections is 1/m-SQNE; a convex combination of
        // rho_i-SQNE operators is at least min rho_i
        let (p, _) = random_planar_problem(seed, 0);
        let mut r = rng(seed, 3);
        let plan = random_plan(&mut r, p.len());
        let rhos: Vec<f64> = plan.strings().iter().map(|s| sqne_modulus_composition(&vec![1.0; s.len()])).collect();
        let rho = sqne_modulus_average(plan.weights(), &rhos);
        let min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(rho >= min * (1.0 - 1e-12));
        for _ in 0..20 {
            let x = uniform_point(&mut r, 2, 6.0);
            let z = project_intersection(&p, &uniform_point(&mut r, 2, 6.0), 1e-12).unwrap();
            prop_assert!(sqne_certificate_with_rho(&p, &plan, &x, &z, rho).unwrap().is_valid());
        }
    }

    #[test]
    fn enlarged_distance_identity(seed in any::<u64>(), n in 1usize..6, eps in 0.0f64..2.0) {
        let mut r = rng(seed, 4);
        let (set, w) = random_set(&mut r, n.max(1));
        let x = w.axpy(5.0, &common::unit(&mut r, n.max(1)));
        let d = set.distance(&x).unwrap();
        let de = set.distance_enlarged(&x, EnlargementRadius::new(eps).unwrap()).unwrap();
        if d > eps {
            prop_assert!((d - de - eps).abs() <= 1e-10);
        } else {
            prop_assert!(de == 0.0);
        }
    }

    #[test]
    fn exact_runs_are_fejer_monotone(seed in any::<u64>(), which in 0u64..4) {
        let (p, x0) = random_planar_problem(seed, 0);
        let s = common::schedule_for(which, p.len());
        let t = run(&p, &s, &RunConfig::new(Mode::Exact, x0.clone()).with_max_iter(500), None, None).unwrap();
        let mut r = rng(seed, 5);
        let witnesses: Vec<Point> = (0..4)
            .map(|_| project_intersection(&p, &uniform_point(&mut r, 2, 6.0), 1e-12).unwrap())
            .chain(p.witness().cloned())
            .collect();
        prop_assert!(fejer_monitor(&p, &t, &witnesses).unwrap().passed());
        // max_i d(x^k, C_i) <= d(x^k, C) <= |x^k - z|
        for row in &t.rows {
            let d = row.x.distance(&project_intersection(&p, &row.x, 1e-12).unwrap());
            prop_assert!(row.max_residual <= d * (1.0 + 1e-9) + 1e-12);
            for z in &witnesses {
                prop_assert!(d <= row.x.distance(z) * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn kappa_is_monotone_in_nested_sample_sets(seed in any::<u64>()) {
        let (p, x0) = random_planar_problem(seed, 0);
        let region = SampleBall::around_start(&p, &x0).unwrap();
        let small = estimate_kappa(&p, &region, 500, seed, Workers::AUTO).unwrap();
        let large = estimate_kappa(&p, &region, 2000, seed, Workers::AUTO).unwrap();
        prop_assert!(large.kappa_hat >= small.kappa_hat);
        prop_assert!(small.kappa_hat >= 1.0);
    }

    #[test]
    fn subspace_kappa_is_scale_free(theta in 0.2f64..1.5) {
        let p = two_lines(theta);
        let unit = estimate_kappa(&p, &SampleBall::new(Point::zeros(2), 1.0).unwrap(), 4000, 11, Workers::AUTO).unwrap();
        let wide = estimate_kappa(&p, &SampleBall::new(Point::zeros(2), 10.0).unwrap(), 4000, 11, Workers::AUTO).unwrap();
        prop_assert!((unit.kappa_hat / wide.kappa_hat - 1.0).abs() <= 0.05);
    }

    #[test]
    fn angle_rate_dominates_kappa_rate(theta in 0.1f64..1.5, s in 1usize..4, m in 1usize..4, omega in 0.1f64..1.0) {
        let p = two_lines(theta);
        let kappa = 1.0 / (theta / 2.0).sin();
        let c = friedrichs_cosine(p.sets()).unwrap().cosine;
        let (lo, hi) = cos_kappa_bounds(kappa, 2).unwrap();
        prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
        let q = rate_constants(omega, m, s, kappa, 1.0).unwrap().q_r;
        prop_assert!(rate_from_angle(c, omega, m, s).unwrap() >= q - 1e-15);
        let sampled = friedrichs_cosine_sampled(p.sets(), 200, 3, Workers::AUTO).unwrap().cosine;
        prop_assert!(sampled <= c + 1e-12);
    }

    #[test]
    fn subspace_limit_matches_engine(seed in any::<u64>()) {
        let sets = random_planes(seed);
        prop_assume!(friedrichs_cosine(&sets).unwrap().cosine < 0.95);
        let p = Problem::new(sets.clone()).unwrap();
        let mut r = rng(seed, 6);
        let x0 = uniform_point(&mut r, 3, 5.0);
        let exact = two_subspace_exact_limit(&sets, &x0).unwrap();
        let sched = ControlSchedule::sweep(2);
        let t = run(&p, &sched, &RunConfig::new(Mode::Exact, x0).with_stop_residual(1e-13), None, None).unwrap();
        let lim = trace_limit(&p, &sched, &t).unwrap();
        prop_assert!(lim.point.distance(&exact) <= 1e-9);
    }

    #[test]
    fn parallel_and_sequential_agree(seed in any::<u64>()) {
        let (p, x0) = random_planar_problem(seed, 0);
        let region = SampleBall::around_start(&p, &x0).unwrap();
        let a = estimate_kappa(&p, &region, 1000, seed, Workers::AUTO).unwrap();
        let b = estimate_kappa(&p, &region, 1000, seed, Workers::SEQUENTIAL).unwrap();
        prop_assert_eq!(a, b);
        let grid = GridSpec::cube(2, -8.0, 8.0, 81).unwrap();
        let g1 = grid_project(&p, &x0, &grid, Workers::AUTO).unwrap();
        let g2 = grid_project(&p, &x0, &grid, Workers::SEQUENTIAL).unwrap();
        prop_assert_eq!(g1, g2);
        let sched = ControlSchedule::cyclic_pointwise(p.len());
        let jobs: Vec<RunJob> = (0..4)
            .map(|k| RunJob {
                problem: &p,
                schedule: &sched,
                config: RunConfig::new(Mode::Exact, x0.axpy(k as f64, &Point::unit(2, 0))),
                pert: None,
                steer: None,
            })
            .collect();
        let par: Vec<_> = run_many(&jobs, Workers::AUTO).into_iter().map(|t| t.unwrap()).collect();
        let seq: Vec<_> = run_many(&jobs, Workers::SEQUENTIAL).into_iter().map(|t| t.unwrap()).collect();
        prop_assert_eq!(par, seq);
    }

    #[test]
    fn missing_index_is_reported(m in 2usize..6, drop in 0usize..6, s in 1usize..4) {
        let drop = drop % m;
        let plans: Vec<StringPlan> = (0..m)
            .filter(|&j| j != drop)
            .map(|j| StringPlan::single(StringDef::new(vec![j]).unwrap()))
            .collect();
        let sched = ControlSchedule::new(PlanGenerator::Cyclic(plans), s, 1.0, 1).unwrap();
        let report = validate_schedule(&sched, m, 3 * m + s).unwrap();
        prop_assert!(!report.coverage_ok());
        prop_assert!(report.uncovered.iter().all(|(_, missing)| missing.contains(&drop)));
    }

    #[test]
    fn fixture_lines_round_trip(
        input in prop::collection::vec(-1e6f64..1e6, 0..4),
        output in prop::collection::vec(-1e6f64..1e6, 1..4),
        tol in 0.0f64..1.0,
    ) {
        let rec = FixtureRecord {
            kind: "grid_project/box".into(),
            problem_hash: "0123456789abcdef".into(),
            input,
            output,
            tolerance: tol,
        };
        prop_assert_eq!(FixtureRecord::parse_line(&rec.to_line()).unwrap(), rec);
    }
}
