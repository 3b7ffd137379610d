//! Sequential versus rayon-parallel execution of the data-parallel kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use feas_core::engine::{run_many, RunJob};
use feas_core::oracles::{grid_project, GridSpec};
use feas_core::point::pt;
use feas_core::regularity::estimate_kappa;
use feas_core::{ControlSchedule, Mode, Problem, RunConfig, SampleBall, SetDescriptor, Workers};

fn problem() -> Problem {
    Problem::new(vec![
        SetDescriptor::ball(pt(&[0.0, 0.0]), 1.5).unwrap(),
        SetDescriptor::ball(pt(&[1.0, 0.5]), 1.2).unwrap(),
        SetDescriptor::half_space(pt(&[0.3, 1.0]), 0.6).unwrap(),
        SetDescriptor::half_space(pt(&[-1.0, 0.2]), 0.1).unwrap(),
    ])
    .unwrap()
}

const PATHS: [(&str, Workers); 2] = [("sequential", Workers::SEQUENTIAL), ("parallel", Workers::AUTO)];

fn kappa(c: &mut Criterion) {
    let p = problem();
    let region = SampleBall::around_start(&p, &pt(&[4.0, 3.0])).unwrap();
    let mut g = c.benchmark_group("estimate_kappa_20k");
    for (name, w) in PATHS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &w, |b, &w| {
            b.iter(|| estimate_kappa(black_box(&p), &region, 20_000, 1, w).unwrap())
        });
    }
    g.finish();
}

fn grid(c: &mut Criterion) {
    let p = problem();
    let spec = GridSpec::cube(2, -4.0, 4.0, 401).unwrap();
    let x = pt(&[3.1, 2.7]);
    let mut g = c.benchmark_group("grid_project_401");
    for (name, w) in PATHS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &w, |b, &w| {
            b.iter(|| grid_project(black_box(&p), &x, &spec, w).unwrap())
        });
    }
    g.finish();
}

fn runs(c: &mut Criterion) {
    let p = problem();
    let sched = ControlSchedule::cyclic_pointwise(p.len());
    let jobs: Vec<RunJob> = (0..64)
        .map(|k| {
            let t = k as f64 * 0.1;
            RunJob {
                problem: &p,
                schedule: &sched,
                config: RunConfig::new(Mode::Exact, pt(&[5.0 * t.cos(), 5.0 * t.sin()])),
                pert: None,
                steer: None,
            }
        })
        .collect();
    let mut g = c.benchmark_group("run_many_64");
    for (name, w) in PATHS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &w, |b, &w| {
            b.iter(|| run_many(black_box(&jobs), w))
        });
    }
    g.finish();
}

criterion_group!(benches, kappa, grid, runs);
criterion_main!(benches);
