//! Shared generators for the integration suites.

#![allow(dead_code)]

use feas_core::point::pt;
use feas_core::{Point, Problem, SetDescriptor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn unit(rng: &mut ChaCha8Rng, n: usize) -> Point {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len > 0.1 && len <= 1.0 {
            return Point::new(v.into_iter().map(|a| a / len).collect()).unwrap();
        }
    }
}

pub fn uniform_point(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Point {
    Point::new((0..n).map(|_| rng.random_range(-half_width..half_width)).collect()).unwrap()
}

/// A random planar problem: `M` in `2..=5` half-spaces and balls sharing a
/// witness in their interiors, and an infeasible start.
pub fn random_planar_problem(seed: u64, index: u64) -> (Problem, Point) {
    let mut r = rng(seed, index);
    let m = r.random_range(2..=5);
    let w = uniform_point(&mut r, 2, 1.0);
    let mut sets = Vec::with_capacity(m);
    for _ in 0..m {
        if r.random_bool(0.6) {
            let a = unit(&mut r, 2);
            let b = a.dot(&w) + r.random_range(0.0..1.0);
            sets.push(SetDescriptor::half_space(a, b).unwrap());
        } else {
            let c = w.axpy(r.random_range(0.5..3.0), &unit(&mut r, 2));
            let radius = c.distance(&w) + r.random_range(0.05..1.0);
            sets.push(SetDescriptor::ball(c, radius).unwrap());
        }
    }
    let problem = Problem::new(sets).unwrap().with_witness(w).unwrap();
    loop {
        let x0 = uniform_point(&mut r, 2, 6.0);
        if problem.max_residual(&x0).unwrap() > 0.1 {
            return (problem, x0);
        }
    }
}

/// Any set variant in `R^n`, wrapped with a point inside it.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize) -> (SetDescriptor, Point) {
    let w = uniform_point(rng, n, 1.0);
    let set = match rng.random_range(0..6) {
        0 => {
            let a = unit(rng, n);
            SetDescriptor::half_space(a.clone(), a.dot(&w) + rng.random_range(0.0..1.0)).unwrap()
        }
        1 => {
            let a = unit(rng, n);
            SetDescriptor::hyperplane(a.clone(), a.dot(&w)).unwrap()
        }
        2 => {
            let lo: Vec<f64> = w.iter().map(|v| v - rng.random_range(0.0..1.5)).collect();
            let hi: Vec<f64> = w.iter().map(|v| v + rng.random_range(0.0..1.5)).collect();
            SetDescriptor::boxed(Point::new(lo).unwrap(), Point::new(hi).unwrap()).unwrap()
        }
        3 => SetDescriptor::ball(w.clone(), rng.random_range(0.0..2.0)).unwrap(),
        4 => {
            let k = rng.random_range(1..n.max(2));
            let span = (0..k).map(|_| unit(rng, n)).collect();
            SetDescriptor::affine_subspace(span, w.clone()).unwrap()
        }
        _ => {
            let k = rng.random_range(0..n);
            let span = (0..k).map(|_| unit(rng, n)).collect();
            let set = SetDescriptor::linear_subspace(span, n).unwrap();
            let w = set.project(&w).unwrap();
            return (set, w);
        }
    };
    (set, w)
}

pub fn two_lines(theta: f64) -> Problem {
    Problem::new(vec![SetDescriptor::line_at_angle(0.0), SetDescriptor::line_at_angle(theta)]).unwrap()
}

pub fn origin2() -> Point {
    pt(&[0.0, 0.0])
}

/// A pool of plans, each splitting a random permutation of the sets into
/// two weighted strings; every plan covers every set, so `s = 1`.
pub fn random_string_schedule(m: usize, seed: u64) -> feas_core::ControlSchedule {
    use feas_core::{ControlSchedule, PlanGenerator, StringDef, StringPlan};
    use rand::seq::SliceRandom;
    let mut r = rng(seed, 0);
    let mut pool = Vec::new();
    let (mut omega, mut longest) = (1.0f64, 1usize);
    for _ in 0..3 {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut r);
        let cut = r.random_range(1..m);
        let w = r.random_range(0.3..0.7);
        let (a, b) = perm.split_at(cut);
        longest = longest.max(a.len()).max(b.len());
        omega = omega.min(w).min(1.0 - w);
        pool.push(
            StringPlan::new(
                vec![StringDef::new(a.to_vec()).unwrap(), StringDef::new(b.to_vec()).unwrap()],
                vec![w, 1.0 - w],
            )
            .unwrap(),
        );
    }
    ControlSchedule::new(PlanGenerator::SeededRandom { pool, seed }, 1, omega, longest).unwrap()
}

/// The control used for the `index`-th random problem: the three classical
/// presets and random strings, in rotation.
pub fn schedule_for(index: u64, m: usize) -> feas_core::ControlSchedule {
    use feas_core::ControlSchedule;
    match index % 4 {
        0 => ControlSchedule::sweep(m),
        1 => ControlSchedule::simultaneous(m),
        2 => ControlSchedule::cyclic_pointwise(m),
        _ => random_string_schedule(m, 1000 + index),
    }
}

/// A random plan over `m` sets: one to three strings of length one to five
/// (repeats allowed) with random convex weights.
pub fn random_plan(rng: &mut ChaCha8Rng, m: usize) -> feas_core::StringPlan {
    use feas_core::{StringDef, StringPlan};
    let count = rng.random_range(1..=3);
    let strings: Vec<StringDef> = (0..count)
        .map(|_| {
            let len = rng.random_range(1..=5);
            StringDef::new((0..len).map(|_| rng.random_range(0..m)).collect()).unwrap()
        })
        .collect();
    let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..count - 1].iter().sum();
    weights[count - 1] = 1.0 - head;
    StringPlan::new(strings, weights).unwrap()
}
