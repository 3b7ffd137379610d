use crate::error::{Error, Result};
use crate::point::Point;
use crate::sets::SetDescriptor;

/// Tolerance for points that are required to be feasible (witnesses,
/// reference points of the quasi-nonexpansive inequalities), relative to
/// `1 + |z|`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A feasibility instance: the family `C_0, ..., C_{M-1}` in a common `R^n`.
/// Indices are zero-based throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    sets: Vec<SetDescriptor>,
    dim: usize,
    witness: Option<Point>,
}

impl Problem {
    pub fn new(sets: Vec<SetDescriptor>) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidSet("a problem needs at least one set".into()))?;
        let dim = first.dim();
        for s in &sets {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
        }
        Ok(Self {
            sets,
            dim,
            witness: None,
        })
    }

    /// Attaches a point certified to lie in every set.
    pub fn with_witness(mut self, witness: Point) -> Result<Self> {
        self.check_feasible(&witness, FEASIBILITY_TOL)?;
        self.witness = Some(witness);
        Ok(self)
    }

    pub fn sets(&self) -> &[SetDescriptor] {
        &self.sets
    }

    pub fn set(&self, index: usize) -> Result<&SetDescriptor> {
        self.sets.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.sets.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn witness(&self) -> Option<&Point> {
        self.witness.as_ref()
    }

    pub fn all_linear_subspaces(&self) -> bool {
        self.sets.iter().all(SetDescriptor::is_linear_subspace)
    }

    pub(crate) fn check_point(&self, x: &Point) -> Result<()> {
        x.check_dim(self.dim)?;
        if let Some(index) = x.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "query point",
                index,
            });
        }
        Ok(())
    }

    /// `d(x, C_i)` for every set.
    pub fn residuals(&self, x: &Point) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self
            .sets
            .iter()
            .map(|s| s.distance_unchecked(x))
            .collect())
    }

    /// `max_i d(x, C_i)`.
    pub fn max_residual(&self, x: &Point) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.max_residual_unchecked(x))
    }

    pub(crate) fn max_residual_unchecked(&self, x: &Point) -> f64 {
        self.sets
            .iter()
            .map(|s| s.distance_unchecked(x))
            .fold(0.0, f64::max)
    }

    /// Errors with the most violated set when `z` is farther than
    /// `rel_tol * (1 + |z|)` from some `C_i`.
    pub fn check_feasible(&self, z: &Point, rel_tol: f64) -> Result<()> {
        let res = self.residuals(z)?;
        let tol = rel_tol * (1.0 + z.norm());
        let (set, violation) = res
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, r)| if r > best.1 { (i, r) } else { best });
        if violation > tol {
            Err(Error::Infeasible { set, violation })
        } else {
            Ok(())
        }
    }

    /// Membership on the defining inequalities of every set.
    pub fn satisfies(&self, z: &[f64], slack: f64) -> bool {
        self.sets.iter().all(|s| s.satisfies(z, slack))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::pt;

    fn quadrant() -> Problem {
        Problem::new(vec![
            SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap(),
            SetDescriptor::half_space(pt(&[0.0, 1.0]), 0.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn residuals_and_feasibility() {
        let p = quadrant();
        assert_eq!(p.residuals(&pt(&[1.0, 2.0])).unwrap(), vec![1.0, 2.0]);
        assert_eq!(p.max_residual(&pt(&[1.0, 2.0])).unwrap(), 2.0);
        assert!(matches!(
            p.check_feasible(&pt(&[1.0, 2.0]), 1e-8),
            Err(Error::Infeasible { set: 1, .. })
        ));
        assert!(p.clone().with_witness(pt(&[-1.0, -1.0])).is_ok());
        assert!(p.with_witness(pt(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let r = Problem::new(vec![
            SetDescriptor::half_space(pt(&[1.0, 0.0]), 0.0).unwrap(),
            SetDescriptor::half_space(pt(&[1.0]), 0.0).unwrap(),
        ]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        assert!(Problem::new(vec![]).is_err());
    }
}
