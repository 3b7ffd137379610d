//! Closed convex sets with closed-form metric projections.
//!
//! Every set in the catalog has an exact projection, so bound checks built on
//! top of these never carry inner-solver error. Subspaces are stored through
//! an orthonormal basis; spanning vectors passed to the constructors are
//! orthonormalized on the way in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{dot, Point};

/// Relative membership tolerance: `x` is treated as a member when its
/// distance is at most `MEMBERSHIP_TOL * (1 + |x|)`.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Spanning vectors whose Gram-Schmidt residual falls below this fraction of
/// their original length are treated as linearly dependent and dropped.
const DEPENDENCE_TOL: f64 = 1e-10;

/// The geometric description of a set. Read access only: values are built
/// through the validating constructors on [`SetDescriptor`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// `{x : <a, x> <= b}`
    HalfSpace { normal: Point, offset: f64 },
    /// `{x : <a, x> = b}`
    Hyperplane { normal: Point, offset: f64 },
    Box { lower: Point, upper: Point },
    Ball { center: Point, radius: f64 },
    /// `anchor + span(basis)`, basis orthonormal.
    AffineSubspace { basis: Vec<Point>, anchor: Point },
    /// `span(basis)`, basis orthonormal; an empty basis is `{0}`.
    LinearSubspace { basis: Vec<Point>, dim: usize },
}

/// A nonempty closed convex subset of `R^n` with an exact projection rule.
#[derive(Clone, Debug, PartialEq)]
pub struct SetDescriptor {
    shape: Shape,
}

/// Radius `eps >= 0` of the enlargement `C_eps = {x : d(x, C) <= eps}`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct EnlargementRadius(f64);

impl EnlargementRadius {
    pub fn new(eps: f64) -> Result<Self> {
        if eps.is_finite() && eps >= 0.0 {
            Ok(Self(eps))
        } else {
            Err(Error::InvalidParameter(format!(
                "enlargement radius must be finite and nonnegative, got {eps}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl SetDescriptor {
    pub fn half_space(normal: Point, offset: f64) -> Result<Self> {
        check_normal(&normal, offset)?;
        Ok(Self {
            shape: Shape::HalfSpace { normal, offset },
        })
    }

    pub fn hyperplane(normal: Point, offset: f64) -> Result<Self> {
        check_normal(&normal, offset)?;
        Ok(Self {
            shape: Shape::Hyperplane { normal, offset },
        })
    }

    pub fn boxed(lower: Point, upper: Point) -> Result<Self> {
        lower.check_dim(upper.dim())?;
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::InvalidSet(format!(
                "box lower bound exceeds upper bound in coordinate {i}"
            )));
        }
        Ok(Self {
            shape: Shape::Box { lower, upper },
        })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidSet(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Self {
            shape: Shape::Ball { center, radius },
        })
    }

    /// `anchor + span(spanning)`; the spanning vectors need not be orthonormal.
    pub fn affine_subspace(spanning: Vec<Point>, anchor: Point) -> Result<Self> {
        let basis = orthonormalize(&spanning, anchor.dim())?;
        Ok(Self {
            shape: Shape::AffineSubspace { basis, anchor },
        })
    }

    /// `span(spanning)` in `R^dim`.
    pub fn linear_subspace(spanning: Vec<Point>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyPoint);
        }
        let basis = orthonormalize(&spanning, dim)?;
        Ok(Self {
            shape: Shape::LinearSubspace { basis, dim },
        })
    }

    /// The line through the origin spanned by `(cos t, sin t)`.
    pub fn line_at_angle(t: f64) -> Self {
        let dir = Point::from_vec(vec![t.cos(), t.sin()]);
        Self::linear_subspace(vec![dir], 2).expect("unit direction spans a line")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::HalfSpace { normal, .. } | Shape::Hyperplane { normal, .. } => normal.dim(),
            Shape::Box { lower, .. } => lower.dim(),
            Shape::Ball { center, .. } => center.dim(),
            Shape::AffineSubspace { anchor, .. } => anchor.dim(),
            Shape::LinearSubspace { dim, .. } => *dim,
        }
    }

    pub fn is_linear_subspace(&self) -> bool {
        matches!(self.shape, Shape::LinearSubspace { .. })
    }

    /// Orthonormal basis for the two subspace variants.
    pub fn subspace_basis(&self) -> Option<&[Point]> {
        match &self.shape {
            Shape::AffineSubspace { basis, .. } | Shape::LinearSubspace { basis, .. } => {
                Some(basis)
            }
            _ => None,
        }
    }

    fn check_input(&self, x: &Point) -> Result<()> {
        x.check_dim(self.dim())?;
        if let Some(index) = x.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "query point",
                index,
            });
        }
        Ok(())
    }

    /// Metric projection `P_C x`.
    pub fn project(&self, x: &Point) -> Result<Point> {
        self.check_input(x)?;
        Ok(self.project_unchecked(x))
    }

    /// Projection without dimension or finiteness checks; used on hot paths
    /// where inputs were validated once up front.
    pub(crate) fn project_unchecked(&self, x: &Point) -> Point {
        match &self.shape {
            Shape::HalfSpace { normal, offset } => {
                let excess = normal.dot(x) - offset;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x.axpy(-excess / normal.norm_sq(), normal)
                }
            }
            Shape::Hyperplane { normal, offset } => {
                let excess = normal.dot(x) - offset;
                x.axpy(-excess / normal.norm_sq(), normal)
            }
            Shape::Box { lower, upper } => Point::from_vec(
                x.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
                    .collect(),
            ),
            Shape::Ball { center, radius } => {
                let offset = x.sub(center);
                let r = offset.norm();
                if r <= *radius {
                    x.clone()
                } else {
                    center.axpy(radius / r, &offset)
                }
            }
            Shape::AffineSubspace { basis, anchor } => {
                let rel = x.sub(anchor);
                let mut y = anchor.clone();
                for u in basis {
                    y.add_scaled(u.dot(&rel), u);
                }
                y
            }
            Shape::LinearSubspace { basis, dim } => {
                let mut y = Point::zeros(*dim);
                for u in basis {
                    y.add_scaled(u.dot(x), u);
                }
                y
            }
        }
    }

    /// `d(x, C) = |x - P_C x|`.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.distance_unchecked(x))
    }

    pub(crate) fn distance_unchecked(&self, x: &Point) -> f64 {
        match &self.shape {
            // A point strictly inside must give an exact zero.
            Shape::HalfSpace { normal, offset } if normal.dot(x) <= *offset => 0.0,
            Shape::Ball { center, radius } if x.distance(center) <= *radius => 0.0,
            _ => x.distance(&self.project_unchecked(x)),
        }
    }

    /// Projection onto the enlargement `C_eps`. Points already within `eps`
    /// of the set are returned unchanged; otherwise the result lies on the
    /// segment `[P_C x, x]` at distance `eps` from `P_C x`.
    pub fn project_enlarged(&self, x: &Point, eps: EnlargementRadius) -> Result<Point> {
        self.check_input(x)?;
        let p = self.project_unchecked(x);
        Ok(enlarged_from_projection(x, &p, eps.value()))
    }

    /// `d(x, C_eps)` through the enlarged projection.
    pub fn distance_enlarged(&self, x: &Point, eps: EnlargementRadius) -> Result<f64> {
        Ok(x.distance(&self.project_enlarged(x, eps)?))
    }

    /// `true` iff `d(x, C) <= tol`.
    pub fn contains(&self, x: &Point, tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "membership tolerance must be nonnegative, got {tol}"
            )));
        }
        Ok(self.distance(x)? <= tol)
    }

    /// Membership at the default relative tolerance.
    pub fn contains_default(&self, x: &Point) -> Result<bool> {
        self.contains(x, MEMBERSHIP_TOL * (1.0 + x.norm()))
    }

    /// Membership tested on the defining inequalities, relaxed by `slack`,
    /// without going through the projection. Grid oracles use this so that
    /// their answers stay independent of the closed-form projections.
    pub fn satisfies(&self, z: &[f64], slack: f64) -> bool {
        match &self.shape {
            Shape::HalfSpace { normal, offset } => {
                dot(normal, z) - offset <= slack * normal.norm()
            }
            Shape::Hyperplane { normal, offset } => {
                (dot(normal, z) - offset).abs() <= slack * normal.norm()
            }
            Shape::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack),
            Shape::Ball { center, radius } => {
                let r2: f64 = z
                    .iter()
                    .zip(center.iter())
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                r2.sqrt() <= radius + slack
            }
            Shape::AffineSubspace { basis, anchor } => {
                let rel: Vec<f64> = z.iter().zip(anchor.iter()).map(|(a, p)| a - p).collect();
                orth_residual(basis, &rel) <= slack
            }
            Shape::LinearSubspace { basis, .. } => orth_residual(basis, z) <= slack,
        }
    }

    /// A stable text form used for fixture hashing.
    pub fn canonical(&self) -> String {
        fn list(p: &[f64]) -> String {
            p.iter()
                .map(|v| format!("{v:.17e}"))
                .collect::<Vec<_>>()
                .join(",")
        }
        match &self.shape {
            Shape::HalfSpace { normal, offset } => {
                format!("halfspace[{}|{offset:.17e}]", list(normal))
            }
            Shape::Hyperplane { normal, offset } => {
                format!("hyperplane[{}|{offset:.17e}]", list(normal))
            }
            Shape::Box { lower, upper } => format!("box[{}|{}]", list(lower), list(upper)),
            Shape::Ball { center, radius } => format!("ball[{}|{radius:.17e}]", list(center)),
            Shape::AffineSubspace { basis, anchor } => format!(
                "affine[{}|{}]",
                basis.iter().map(|u| list(u)).collect::<Vec<_>>().join(";"),
                list(anchor)
            ),
            Shape::LinearSubspace { basis, dim } => format!(
                "linear[{}|{dim}]",
                basis.iter().map(|u| list(u)).collect::<Vec<_>>().join(";")
            ),
        }
    }
}

/// `P_{C_eps} x` from `x` and `P_C x`.
pub fn enlarged_from_projection(x: &Point, proj: &Point, eps: f64) -> Point {
    let d = x.distance(proj);
    if d <= eps {
        x.clone()
    } else {
        let t = eps / d;
        proj.lerp(x, t)
    }
}

fn check_normal(normal: &Point, offset: f64) -> Result<()> {
    if !offset.is_finite() {
        return Err(Error::NonFinite {
            what: "offset",
            index: 0,
        });
    }
    if normal.norm() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSet("normal vector must be nonzero".into()))
    }
}

fn orth_residual(basis: &[Point], v: &[f64]) -> f64 {
    let mut r = v.to_vec();
    for u in basis {
        let c = dot(u, v);
        for (ri, ui) in r.iter_mut().zip(u.iter()) {
            *ri -= c * ui;
        }
    }
    crate::point::norm(&r)
}

/// Modified Gram-Schmidt with one reorthogonalization pass; dependent
/// vectors are dropped.
pub(crate) fn orthonormalize(spanning: &[Point], dim: usize) -> Result<Vec<Point>> {
    let mut basis: Vec<Point> = Vec::with_capacity(spanning.len());
    for v in spanning {
        v.check_dim(dim)?;
        let original = v.norm();
        if original == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &basis {
                let c = u.dot(&w);
                w.add_scaled(-c, u);
            }
        }
        let len = w.norm();
        if len > DEPENDENCE_TOL * original {
            basis.push(w.scale(1.0 / len));
        }
    }
    Ok(basis)
}

/// Largest deviation of the Gram matrix of `basis` from the identity.
pub fn orthonormality_defect(basis: &[Point]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((u.dot(v) - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::pt;
    use approx::assert_abs_diff_eq;

    fn eps(v: f64) -> EnlargementRadius {
        EnlargementRadius::new(v).unwrap()
    }

    #[test]
    fn half_space_projection() {
        let h = SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(h.project(&pt(&[2.0, 3.0])).unwrap(), pt(&[0.0, 3.0]));
        assert_eq!(h.distance(&pt(&[2.0, 3.0])).unwrap(), 2.0);
    }

    #[test]
    fn ball_projection() {
        let b = SetDescriptor::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(b.project(&pt(&[0.2, -0.3])).unwrap(), pt(&[0.2, -0.3]));
        let y = b.project(&pt(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(y[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn distances() {
        let hp = SetDescriptor::hyperplane(pt(&[0.0, 1.0]), 2.0).unwrap();
        assert_eq!(hp.distance(&pt(&[5.0, 2.0])).unwrap(), 0.0);
        let bx = SetDescriptor::boxed(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(
            bx.distance(&pt(&[2.0, 2.0])).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn enlarged_projection_examples() {
        let h = SetDescriptor::half_space(pt(&[1.0]), 0.0).unwrap();
        let y = h.project_enlarged(&pt(&[3.0]), eps(1.0)).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-15);
        // against the shifted half-space x <= 1
        let shifted = SetDescriptor::half_space(pt(&[1.0]), 1.0).unwrap();
        assert_eq!(shifted.project(&pt(&[3.0])).unwrap(), y);
        let d = h.distance(&pt(&[3.0])).unwrap();
        let de = h.distance_enlarged(&pt(&[3.0]), eps(1.0)).unwrap();
        assert_abs_diff_eq!(d, de + 1.0, epsilon = 1e-15);

        let b = SetDescriptor::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        let y = b.project_enlarged(&pt(&[3.0, 0.0]), eps(1.0)).unwrap();
        assert_abs_diff_eq!(y[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-15);

        let inside = pt(&[1.5, 0.0]);
        assert_eq!(b.project_enlarged(&inside, eps(1.0)).unwrap(), inside);
    }

    #[test]
    fn contains_examples() {
        let bx = SetDescriptor::boxed(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap();
        assert!(bx.contains(&pt(&[0.5, 0.5]), 0.0).unwrap());
        let hp = SetDescriptor::hyperplane(pt(&[1.0, 1.0]), 1.0).unwrap();
        assert!(!hp.contains(&pt(&[1.0, 1.0]), 1e-9).unwrap());
        assert_abs_diff_eq!(
            hp.distance(&pt(&[1.0, 1.0])).unwrap(),
            1.0 / 2f64.sqrt(),
            epsilon = 1e-15
        );
        let b = SetDescriptor::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        assert!(b.contains(&pt(&[1.0, 0.0]), 0.0).unwrap());
        assert!(b.contains(&pt(&[1.0, 0.0]), -1.0).is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(SetDescriptor::half_space(pt(&[0.0, 0.0]), 1.0).is_err());
        assert!(SetDescriptor::boxed(pt(&[1.0, 0.0]), pt(&[0.0, 1.0])).is_err());
        assert!(SetDescriptor::ball(pt(&[0.0]), -1.0).is_err());
        assert!(matches!(
            SetDescriptor::boxed(pt(&[0.0]), pt(&[1.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        let h = SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap();
        assert!(matches!(
            h.project(&pt(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn degenerate_singletons() {
        let b = SetDescriptor::ball(pt(&[1.0, 2.0]), 0.0).unwrap();
        assert_eq!(b.project(&pt(&[5.0, -3.0])).unwrap(), pt(&[1.0, 2.0]));
        let bx = SetDescriptor::boxed(pt(&[1.0, 2.0]), pt(&[1.0, 2.0])).unwrap();
        assert_eq!(bx.project(&pt(&[5.0, -3.0])).unwrap(), pt(&[1.0, 2.0]));
    }

    #[test]
    fn subspaces_are_orthonormalized() {
        let s = SetDescriptor::linear_subspace(
            vec![pt(&[1.0, 1.0, 0.0]), pt(&[2.0, 0.0, 0.0]), pt(&[3.0, 1.0, 0.0])],
            3,
        )
        .unwrap();
        let basis = s.subspace_basis().unwrap();
        assert_eq!(basis.len(), 2);
        assert!(orthonormality_defect(basis) < 1e-10);
        let y = s.project(&pt(&[1.0, 2.0, 3.0])).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(y[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(y[2], 0.0, epsilon = 1e-14);

        let a = SetDescriptor::affine_subspace(vec![pt(&[0.0, 2.0])], pt(&[1.0, 0.0])).unwrap();
        assert_eq!(a.project(&pt(&[4.0, 7.0])).unwrap(), pt(&[1.0, 7.0]));
    }

    #[test]
    fn satisfies_matches_membership_on_simple_cases() {
        let h = SetDescriptor::half_space(pt(&[1.0, 1.0]), 1.0).unwrap();
        assert!(h.satisfies(&[0.0, 0.0], 0.0));
        assert!(!h.satisfies(&[1.0, 1.0], 0.0));
        let l = SetDescriptor::line_at_angle(0.0);
        assert!(l.satisfies(&[3.0, 0.0], 0.0));
        assert!(!l.satisfies(&[3.0, 0.1], 0.05));
    }
}
