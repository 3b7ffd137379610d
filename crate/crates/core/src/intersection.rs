//! Nearest point of the intersection `C = C_0 n ... n C_{M-1}`.
//!
//! Families made only of affine pieces are solved in closed form; small
//! polyhedra (dimension at most 3) and planar families with discs by
//! enumerating candidate active sets; everything else by Dykstra's alternating correction scheme, which unlike
//! plain alternating projections converges to the nearest point itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::point::Point;
use crate::problem::Problem;
use crate::sets::{orthonormalize, SetDescriptor, Shape};

/// Default tolerance for [`project_intersection`].
pub const INTERSECTION_TOL: f64 = 1e-12;

/// Sweep cap for the Dykstra iteration.
pub const DYKSTRA_MAX_SWEEPS: usize = 100_000;

const MAX_ACTIVE_SUBSETS: usize = 20_000;
const RANK_TOL: f64 = 1e-12;
const MAX_PLANAR_PIECES: usize = 200;
/// Boundary crossings closer to tangency than this (relative `h^2 / r^2`)
/// are too ill-conditioned for the planar fast path.
const TANGENCY_TOL: f64 = 1e-4;
/// Line pairs with `|sin angle|` below this are left to the general solver.
const PARALLEL_TOL: f64 = 1e-6;
/// Feasibility slack for closed-form candidates, relative to `1 + |z|`. A
/// loose slack lets a slightly infeasible candidate beat the true
/// projection when `x` is already close to `C`.
const CANDIDATE_TOL: f64 = 1e-13;
/// Fallback slack for polyhedral candidates when no candidate passes
/// [`CANDIDATE_TOL`].
const LOOSE_CANDIDATE_TOL: f64 = 1e-10;

/// `P_C x` for the problem's intersection.
///
/// The result is feasible to `tol` (relative to `1 + |x|`). On failure to
/// reach the tolerance the error carries the best iterate.
pub fn project_intersection(problem: &Problem, x: &Point, tol: f64) -> Result<Point> {
    problem.check_point(x)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "intersection tolerance must be positive, got {tol}"
        )));
    }
    if problem.max_residual_unchecked(x) == 0.0 {
        return Ok(x.clone());
    }
    if problem.len() == 1 {
        return Ok(problem.sets()[0].project_unchecked(x));
    }
    let (rows, discs) = constraint_rows(problem);
    if discs.is_empty() {
        if rows.ineq.is_empty() {
            return affine_projection(problem, x, &rows.eq);
        }
        if problem.dim() <= 3 && subset_count(rows.ineq.len(), problem.dim()) <= MAX_ACTIVE_SUBSETS {
            return active_set_projection(problem, x, &rows);
        }
    } else if problem.dim() == 2 && rows.eq.len() + rows.ineq.len() + discs.len() <= MAX_PLANAR_PIECES {
        if let Some(z) = planar_projection(x, &rows, &discs) {
            return Ok(z);
        }
    }
    dykstra(problem, x, tol, DYKSTRA_MAX_SWEEPS)
}

/// `d(x, C)`.
pub fn distance_to_intersection(problem: &Problem, x: &Point) -> Result<f64> {
    Ok(x.distance(&project_intersection(problem, x, INTERSECTION_TOL)?))
}

/// A unit-normal row `<a, z> = b` or `<a, z> <= b`.
#[derive(Clone, Debug)]
struct Row {
    a: Vec<f64>,
    b: f64,
}

struct Rows {
    eq: Vec<Row>,
    ineq: Vec<Row>,
}

fn unit_row(a: &[f64], b: f64) -> Option<Row> {
    let n = crate::point::norm(a);
    (n > 1e-14).then(|| Row {
        a: a.iter().map(|v| v / n).collect(),
        b: b / n,
    })
}

/// Rows of `(I - U U^T)`, i.e. the constraints `(I - UU^T)(z - anchor) = 0`.
fn complement_rows(basis: &[Point], anchor: Option<&Point>, dim: usize) -> Vec<Row> {
    (0..dim)
        .filter_map(|r| {
            let mut a = vec![0.0; dim];
            a[r] = 1.0;
            for u in basis {
                for (c, ac) in a.iter_mut().enumerate() {
                    *ac -= u[r] * u[c];
                }
            }
            let b = anchor.map_or(0.0, |p| crate::point::dot(&a, p));
            unit_row(&a, b)
        })
        .collect()
}

/// `|z - c| <= r`.
struct Disc<'a> {
    c: &'a Point,
    r: f64,
}

/// The family as linear rows plus the discs that are not linear.
fn constraint_rows(problem: &Problem) -> (Rows, Vec<Disc<'_>>) {
    let n = problem.dim();
    let mut rows = Rows {
        eq: Vec::new(),
        ineq: Vec::new(),
    };
    let mut discs = Vec::new();
    for set in problem.sets() {
        match set.shape() {
            Shape::HalfSpace { normal, offset } => rows.ineq.extend(unit_row(normal, *offset)),
            Shape::Hyperplane { normal, offset } => rows.eq.extend(unit_row(normal, *offset)),
            Shape::Box { lower, upper } => {
                for j in 0..n {
                    let e = Point::unit(n, j);
                    if lower[j] == upper[j] {
                        rows.eq.extend(unit_row(&e, lower[j]));
                    } else {
                        rows.ineq.extend(unit_row(&e, upper[j]));
                        rows.ineq.extend(unit_row(&e.scale(-1.0), -lower[j]));
                    }
                }
            }
            Shape::AffineSubspace { basis, anchor } => {
                rows.eq.extend(complement_rows(basis, Some(anchor), n))
            }
            Shape::LinearSubspace { basis, .. } => rows.eq.extend(complement_rows(basis, None, n)),
            Shape::Ball { center, radius } => discs.push(Disc {
                c: center,
                r: *radius,
            }),
        }
    }
    (rows, discs)
}

fn subset_count(m: usize, n: usize) -> usize {
    let mut total = 1usize;
    let mut binom = 1usize;
    for k in 1..=n.min(m) {
        binom = binom.saturating_mul(m - k + 1) / k;
        total = total.saturating_add(binom);
    }
    total
}

/// Minimum-norm correction onto `{z : <a_r, z> = b_r}`; `None` when the rows
/// are inconsistent.
fn project_onto_rows(x: &Point, rows: &[&Row]) -> Option<Point> {
    if rows.is_empty() {
        return Some(x.clone());
    }
    let n = x.dim();
    let a = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].a[c]);
    let resid = DVector::from_iterator(rows.len(), rows.iter().map(|r| crate::point::dot(&r.a, x) - r.b));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let delta = svd.solve(&resid, RANK_TOL * smax.max(1.0)).ok()?;
    let z = Point::from_vec(x.iter().zip(delta.iter()).map(|(xi, d)| xi - d).collect());
    let scale = 1.0 + z.norm() + rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max);
    let consistent = rows
        .iter()
        .all(|r| (crate::point::dot(&r.a, &z) - r.b).abs() <= 1e-9 * scale);
    consistent.then_some(z)
}

fn affine_projection(problem: &Problem, x: &Point, eq: &[Row]) -> Result<Point> {
    let refs: Vec<&Row> = eq.iter().collect();
    match project_onto_rows(x, &refs) {
        Some(z) => Ok(z),
        None => Err(infeasible(problem, x)),
    }
}

fn infeasible(problem: &Problem, x: &Point) -> Error {
    let res = problem.residuals(x).unwrap_or_default();
    let (set, violation) = res
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |b, (i, r)| if r > b.1 { (i, r) } else { b });
    Error::Infeasible { set, violation }
}

/// The projection lies in the relative interior of some face, and is then
/// the projection onto that face's affine hull, which at most `n` linearly
/// independent active rows describe. The nearest feasible candidate wins.
fn active_set_projection(problem: &Problem, x: &Point, rows: &Rows) -> Result<Point> {
    let n = problem.dim();
    let m = rows.ineq.len();
    let mut best: Option<(f64, Point)> = None;
    let mut best_loose: Option<(f64, Point)> = None;
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let violation = |z: &Point| {
        rows.ineq
            .iter()
            .map(|r| crate::point::dot(&r.a, z) - r.b)
            .fold(0.0, f64::max)
            / (1.0 + z.norm())
    };

    fn visit(
        start: usize,
        left: usize,
        m: usize,
        chosen: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        f(chosen);
        if left == 0 {
            return;
        }
        for j in start..m {
            chosen.push(j);
            visit(j + 1, left - 1, m, chosen, f);
            chosen.pop();
        }
    }

    let mut consider = |active: &[usize]| {
        let mut refs: Vec<&Row> = rows.eq.iter().collect();
        refs.extend(active.iter().map(|&j| &rows.ineq[j]));
        if let Some(z) = project_onto_rows(x, &refs) {
            let v = violation(&z);
            let d = x.distance_sq(&z);
            let slot = if v <= CANDIDATE_TOL {
                &mut best
            } else if v <= LOOSE_CANDIDATE_TOL {
                &mut best_loose
            } else {
                return;
            };
            if slot.as_ref().is_none_or(|(bd, _)| d < *bd) {
                *slot = Some((d, z));
            }
        }
    };
    visit(0, n, m, &mut chosen, &mut consider);
    best.or(best_loose)
        .map(|(_, z)| z)
        .ok_or_else(|| infeasible(problem, x))
}

/// In the plane the projection is `x`, a single-piece projection, or a point
/// where two boundaries (lines or circles) cross, so the nearest feasible
/// candidate among those is exact. `None` when the winner sits at a nearly
/// tangent crossing and should be refined by the general solver.
fn planar_projection(x: &Point, rows: &Rows, discs: &[Disc<'_>]) -> Option<Point> {
    #[derive(Clone, Copy)]
    enum Curve {
        Line([f64; 2], f64),
        Circle([f64; 2], f64),
    }
    let mut curves: Vec<Curve> = rows
        .eq
        .iter()
        .chain(&rows.ineq)
        .map(|r| Curve::Line([r.a[0], r.a[1]], r.b))
        .collect();
    curves.extend(discs.iter().map(|d| Curve::Circle([d.c[0], d.c[1]], d.r)));

    let xv = [x[0], x[1]];
    let feasible = |z: [f64; 2]| {
        let tol = CANDIDATE_TOL * (1.0 + z[0].hypot(z[1]));
        rows.eq.iter().all(|r| (r.a[0] * z[0] + r.a[1] * z[1] - r.b).abs() <= tol)
            && rows.ineq.iter().all(|r| r.a[0] * z[0] + r.a[1] * z[1] - r.b <= tol)
            && discs.iter().all(|d| (z[0] - d.c[0]).hypot(z[1] - d.c[1]) <= d.r + tol)
    };
    // (candidate, well conditioned); `x` itself covers round-off-level residuals
    let mut cands: Vec<([f64; 2], bool)> = vec![(xv, true)];
    for c in &curves {
        match *c {
            Curve::Line(a, b) => {
                let t = a[0] * xv[0] + a[1] * xv[1] - b;
                cands.push(([xv[0] - t * a[0], xv[1] - t * a[1]], true));
            }
            Curve::Circle(c, r) => {
                let (dx, dy) = (xv[0] - c[0], xv[1] - c[1]);
                let len = dx.hypot(dy);
                if len > 0.0 {
                    cands.push(([c[0] + r * dx / len, c[1] + r * dy / len], true));
                }
            }
        }
    }
    // pairwise crossings, flagged near tangency
    let crossings = |cands: &mut Vec<([f64; 2], bool)>, h2: f64, r2: f64, base: [f64; 2], dir: [f64; 2]| {
        if h2 < -TANGENCY_TOL * r2 {
            return;
        }
        let sharp = h2 > TANGENCY_TOL * r2;
        let h = h2.max(0.0).sqrt();
        cands.push(([base[0] + h * dir[0], base[1] + h * dir[1]], sharp));
        cands.push(([base[0] - h * dir[0], base[1] - h * dir[1]], sharp));
    };
    for (i, ci) in curves.iter().enumerate() {
        for cj in &curves[i + 1..] {
            match (*ci, *cj) {
                (Curve::Line(a1, b1), Curve::Line(a2, b2)) => {
                    let det = a1[0] * a2[1] - a1[1] * a2[0];
                    if det.abs() > 1e-12 {
                        let z = [(b1 * a2[1] - b2 * a1[1]) / det, (a1[0] * b2 - a2[0] * b1) / det];
                        cands.push((z, det.abs() > PARALLEL_TOL));
                    }
                }
                (Curve::Line(a, b), Curve::Circle(c, r)) | (Curve::Circle(c, r), Curve::Line(a, b)) => {
                    let off = b - (a[0] * c[0] + a[1] * c[1]);
                    let foot = [c[0] + off * a[0], c[1] + off * a[1]];
                    crossings(&mut cands, r * r - off * off, r * r, foot, [-a[1], a[0]]);
                }
                (Curve::Circle(c1, r1), Curve::Circle(c2, r2)) => {
                    let (dx, dy) = (c2[0] - c1[0], c2[1] - c1[1]);
                    let d = dx.hypot(dy);
                    if d == 0.0 {
                        continue;
                    }
                    let (ux, uy) = (dx / d, dy / d);
                    let along = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
                    let base = [c1[0] + along * ux, c1[1] + along * uy];
                    let r2max = r1.max(r2);
                    crossings(&mut cands, r1 * r1 - along * along, r2max * r2max, base, [-uy, ux]);
                }
            }
        }
    }
    let mut best: Option<(f64, [f64; 2], bool)> = None;
    for (z, sharp) in cands {
        if z[0].is_finite() && z[1].is_finite() && feasible(z) {
            let d = (z[0] - xv[0]).powi(2) + (z[1] - xv[1]).powi(2);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, z, sharp));
            }
        }
    }
    match best {
        Some((_, z, true)) => Some(Point::from_vec(z.to_vec())),
        _ => None,
    }
}

/// Dykstra's algorithm: `y <- P_i(y + p_i)`, `p_i <- y_old + p_i - y`.
pub(crate) fn dykstra(problem: &Problem, x: &Point, tol: f64, max_sweeps: usize) -> Result<Point> {
    let sets = problem.sets();
    let scale = 1.0 + x.norm();
    let mut y = x.clone();
    let mut incs = vec![Point::zeros(problem.dim()); sets.len()];
    for _ in 0..max_sweeps {
        let prev = y.clone();
        for (set, inc) in sets.iter().zip(incs.iter_mut()) {
            let w = y.add(inc);
            let p = set.project_unchecked(&w);
            *inc = w.sub(&p);
            y = p;
        }
        if y.distance(&prev) <= tol * scale
            && problem.max_residual_unchecked(&y) <= 1e3 * tol * scale
        {
            return Ok(y);
        }
    }
    let residual = problem.max_residual_unchecked(&y);
    Err(Error::OracleDidNotConverge {
        best: y,
        residual,
        iterations: max_sweeps,
    })
}

/// Orthonormal basis of the intersection of linear subspaces: the
/// nullspace of the stacked complements `I - P_i`.
pub fn intersection_basis(sets: &[SetDescriptor]) -> Result<Vec<Point>> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidSet("need at least one subspace".into()))?;
    let n = first.dim();
    let mut stacked: Vec<Vec<f64>> = Vec::with_capacity(n * sets.len());
    for (index, s) in sets.iter().enumerate() {
        if !s.is_linear_subspace() {
            return Err(Error::NotSubspace { index });
        }
        if s.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.dim(),
            });
        }
        let basis = s.subspace_basis().expect("linear subspace has a basis");
        for r in 0..n {
            let mut row = vec![0.0; n];
            row[r] = 1.0;
            for u in basis {
                for (c, v) in row.iter_mut().enumerate() {
                    *v -= u[r] * u[c];
                }
            }
            stacked.push(row);
        }
    }
    let a = DMatrix::from_fn(stacked.len(), n, |r, c| stacked[r][c]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let spanning: Vec<Point> = (0..n)
        .filter(|&j| svd.singular_values[j] <= 1e-9)
        .map(|j| Point::from_vec(v_t.row(j).iter().copied().collect()))
        .collect();
    // re-orthonormalize to squeeze out SVD rounding
    orthonormalize(&spanning, n)
}

/// `P_C x` for a family of linear subspaces, from an explicit basis of `C`.
pub fn subspace_intersection_projection(sets: &[SetDescriptor], x: &Point) -> Result<Point> {
    let basis = intersection_basis(sets)?;
    x.check_dim(sets[0].dim())?;
    let mut y = Point::zeros(x.dim());
    for u in &basis {
        y.add_scaled(u.dot(x), u);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::pt;
    use std::f64::consts::PI;

    fn quadrant() -> Problem {
        Problem::new(vec![
            SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap(),
            SetDescriptor::half_space(pt(&[0.0, 1.0]), 0.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn quadrant_examples() {
        let p = quadrant();
        let a = project_intersection(&p, &pt(&[1.0, 2.0]), 1e-12).unwrap();
        assert!(a.distance(&pt(&[0.0, 0.0])) < 1e-14);
        let b = project_intersection(&p, &pt(&[-1.0, 2.0]), 1e-12).unwrap();
        assert!(b.distance(&pt(&[-1.0, 0.0])) < 1e-14);
        let inside = pt(&[-3.0, -4.0]);
        assert_eq!(project_intersection(&p, &inside, 1e-12).unwrap(), inside);
        let d = dykstra(&p, &pt(&[1.0, 2.0]), 1e-12, 1000).unwrap();
        assert!(d.distance(&pt(&[0.0, 0.0])) < 1e-10);
    }

    #[test]
    fn orthogonal_lines_meet_at_origin() {
        let p = Problem::new(vec![
            SetDescriptor::line_at_angle(0.0),
            SetDescriptor::line_at_angle(PI / 2.0),
        ])
        .unwrap();
        for x in [pt(&[3.0, -1.0]), pt(&[0.2, 7.0])] {
            assert!(project_intersection(&p, &x, 1e-12).unwrap().norm() < 1e-14);
        }
        assert!(intersection_basis(p.sets()).unwrap().is_empty());
    }

    #[test]
    fn shared_line() {
        let l = SetDescriptor::linear_subspace(vec![pt(&[1.0, 0.0])], 2).unwrap();
        let sets = vec![l.clone(), l];
        let y = subspace_intersection_projection(&sets, &pt(&[3.0, 4.0])).unwrap();
        assert!(y.distance(&pt(&[3.0, 0.0])) < 1e-14);
    }

    #[test]
    fn planes_meeting_in_a_line() {
        // x3 = 0 and x1 = x2 meet along span{(1,1,0)}
        let p = Problem::new(vec![
            SetDescriptor::linear_subspace(vec![pt(&[1.0, 0.0, 0.0]), pt(&[0.0, 1.0, 0.0])], 3)
                .unwrap(),
            SetDescriptor::linear_subspace(vec![pt(&[1.0, 1.0, 0.0]), pt(&[0.0, 0.0, 1.0])], 3)
                .unwrap(),
        ])
        .unwrap();
        let x = pt(&[3.0, 1.0, 5.0]);
        let y = project_intersection(&p, &x, 1e-12).unwrap();
        assert!(y.distance(&pt(&[2.0, 2.0, 0.0])) < 1e-13);
        let z = subspace_intersection_projection(p.sets(), &x).unwrap();
        assert!(z.distance(&y) < 1e-13);
    }

    #[test]
    fn ball_and_half_space() {
        let p = Problem::new(vec![
            SetDescriptor::ball(pt(&[0.0, 0.0]), 1.0).unwrap(),
            SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap(),
        ])
        .unwrap();
        // nearest point of the left half disc to (1, 2) is (0, 1)
        let y = project_intersection(&p, &pt(&[1.0, 2.0]), 1e-12).unwrap();
        assert!(y.distance(&pt(&[0.0, 1.0])) < 1e-13);
        let d = dykstra(&p, &pt(&[1.0, 2.0]), 1e-12, DYKSTRA_MAX_SWEEPS).unwrap();
        assert!(d.distance(&pt(&[0.0, 1.0])) < 1e-8);
    }

    #[test]
    fn planar_candidates_agree_with_dykstra() {
        // lens of two discs cut by a half-plane
        let p = Problem::new(vec![
            SetDescriptor::ball(pt(&[0.0, 0.0]), 1.0).unwrap(),
            SetDescriptor::ball(pt(&[1.2, 0.3]), 1.0).unwrap(),
            SetDescriptor::half_space(pt(&[0.3, 1.0]), 0.4).unwrap(),
        ])
        .unwrap();
        for k in 0..40 {
            let t = k as f64 * 2.0 * PI / 40.0;
            let x = pt(&[0.6 + 3.0 * t.cos(), 0.15 + 3.0 * t.sin()]);
            let fast = project_intersection(&p, &x, 1e-12).unwrap();
            let slow = dykstra(&p, &x, 1e-13, DYKSTRA_MAX_SWEEPS).unwrap();
            assert!(fast.distance(&slow) < 1e-7, "{x:?}: {fast:?} vs {slow:?}");
            assert!(p.max_residual(&fast).unwrap() < 1e-12);
        }
    }

    #[test]
    fn balls_in_space_use_dykstra() {
        let p = Problem::new(vec![
            SetDescriptor::ball(pt(&[0.0, 0.0, 0.0]), 1.0).unwrap(),
            SetDescriptor::half_space(pt(&[0.0, 0.0, 1.0]), 0.0).unwrap(),
        ])
        .unwrap();
        let y = project_intersection(&p, &pt(&[0.0, 0.0, 3.0]), 1e-12).unwrap();
        assert!(y.norm() < 1e-8);
    }

    #[test]
    fn box_and_hyperplane() {
        let p = Problem::new(vec![
            SetDescriptor::boxed(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap(),
            SetDescriptor::hyperplane(pt(&[1.0, 1.0]), 1.0).unwrap(),
        ])
        .unwrap();
        let y = project_intersection(&p, &pt(&[3.0, 0.0]), 1e-12).unwrap();
        assert!(y.distance(&pt(&[1.0, 0.0])) < 1e-13);
        let y = project_intersection(&p, &pt(&[1.0, 1.0]), 1e-12).unwrap();
        assert!(y.distance(&pt(&[0.5, 0.5])) < 1e-13);
    }

    #[test]
    fn disjoint_affine_sets_are_reported() {
        let p = Problem::new(vec![
            SetDescriptor::hyperplane(pt(&[1.0, 0.0]), 0.0).unwrap(),
            SetDescriptor::hyperplane(pt(&[1.0, 0.0]), 1.0).unwrap(),
        ])
        .unwrap();
        assert!(matches!(
            project_intersection(&p, &pt(&[5.0, 0.0]), 1e-12),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn dykstra_reports_cap() {
        let p = Problem::new(vec![
            SetDescriptor::ball(pt(&[0.0, 0.0]), 1.0).unwrap(),
            SetDescriptor::ball(pt(&[1.5, 0.0]), 1.0).unwrap(),
        ])
        .unwrap();
        match dykstra(&p, &pt(&[0.7, 3.0]), 1e-12, 2) {
            Err(Error::OracleDidNotConverge { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
