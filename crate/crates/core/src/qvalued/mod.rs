//! `Q`-valued functions: unordered `Q`-tuples of points of `R^m` with the
//! optimal matching metric, sampled fields of them, their decomposition
//! into single-valued branches, and the height and tilt functionals.

mod assignment;
mod branch;
mod field;
mod functional;

pub use assignment::{bounded_matching, brute_force_assignment, metric_g, optimal_assignment, optimal_matching};
pub use branch::{branch_decompose, branch_jets, Branch, BranchSet, SlotJet};
pub use field::{read_qfield, read_qfield_csv, write_qfield, write_qfield_csv, QField};
pub use functional::{
    lipschitz_extend, q_height, q_height_best, q_tilt, sobolev_poincare_check, PoincareReport,
};

use std::cmp::Ordering;

use nalgebra::DVector;

use crate::error::{check_dim, invalid, Result};

/// An unordered `Q`-tuple of points of `R^m`, stored in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct QValue {
    points: Vec<DVector<f64>>,
}

pub(crate) fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl QValue {
    /// Sorts the points into canonical order. Requires `Q >= 1` points of a
    /// common positive dimension.
    pub fn new(mut points: Vec<DVector<f64>>) -> Result<Self> {
        let m = points
            .first()
            .ok_or_else(|| invalid("a Q-valued point needs at least one point"))?
            .len();
        if m == 0 {
            return Err(invalid("points must have positive dimension"));
        }
        for p in &points {
            check_dim(m, p.len())?;
            if p.iter().any(|x| !x.is_finite()) {
                return Err(invalid("points must be finite"));
            }
        }
        points.sort_by(lex_cmp);
        Ok(Self { points })
    }

    /// `Q` points of the real line.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| DVector::from_element(1, v)).collect())
    }

    /// `Q` copies of one point.
    pub fn repeated(point: DVector<f64>, q: usize) -> Result<Self> {
        Self::new(vec![point; q])
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn m(&self) -> usize {
        self.points[0].len()
    }

    /// The points in canonical order.
    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// All points shifted by `v`.
    pub fn translated(&self, v: &DVector<f64>) -> Result<Self> {
        check_dim(self.m(), v.len())?;
        Self::new(self.points.iter().map(|p| p + v).collect())
    }

    /// Multiplicity of `y` among the points (exact comparison).
    pub fn multiplicity_of(&self, y: &DVector<f64>) -> usize {
        self.points.iter().filter(|p| *p == y).count()
    }
}
