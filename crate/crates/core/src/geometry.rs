//! Unoriented planes, cylinders and cones.
//!
//! A plane is stored as its orthogonal projection matrix. Distances between
//! planes are Frobenius norms of projection differences, which makes the
//! space of planes a compact metric space without choosing bases.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::numeric::TOL_STRUCTURAL;

/// A point or vector of the ambient space.
pub type Point = DVector<f64>;

/// An `n`-dimensional linear subspace of `R^{n+m}`, stored as the
/// orthogonal projection onto it.
///
/// The plane also remembers the orthonormal basis it was built from, so that
/// serializing the basis and rebuilding reproduces the projection bit for
/// bit. Equality compares projections only.
#[derive(Clone, Debug)]
pub struct Plane {
    plane_dim: usize,
    projection: DMatrix<f64>,
    basis: Vec<Point>,
}

impl PartialEq for Plane {
    fn eq(&self, other: &Self) -> bool {
        self.projection == other.projection
    }
}

impl Plane {
    /// Validates a projection matrix: square, symmetric, idempotent and of
    /// integral trace.
    pub fn from_projection(projection: DMatrix<f64>) -> Result<Self> {
        let d = projection.nrows();
        check_dim(d, projection.ncols())?;
        if d == 0 {
            return Err(invalid("ambient dimension must be positive"));
        }
        let asym = (&projection - projection.transpose()).norm();
        if asym > TOL_STRUCTURAL {
            return Err(Error::Invariant(format!(
                "projection not symmetric (defect {asym:e})"
            )));
        }
        let idem = (&projection * &projection - &projection).norm();
        if idem > TOL_STRUCTURAL {
            return Err(Error::Invariant(format!(
                "projection not idempotent (defect {idem:e})"
            )));
        }
        let trace = projection.trace();
        let plane_dim = trace.round();
        if (trace - plane_dim).abs() > TOL_STRUCTURAL || plane_dim < 1.0 {
            return Err(Error::Invariant(format!(
                "projection trace {trace} is not a positive integer"
            )));
        }
        // Rebuild from the canonical basis so that the stored projection is
        // a deterministic function of the stored basis.
        let basis = pivoted_basis(&projection, plane_dim as usize);
        Ok(Self::from_orthonormal(d, &basis))
    }

    /// The span of the given vectors, which must be linearly independent.
    pub fn from_spanning(vectors: &[Point]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| invalid("a plane needs at least one spanning vector"))?;
        let d = first.len();
        let mut basis: Vec<Point> = Vec::with_capacity(vectors.len());
        for v in vectors {
            check_dim(d, v.len())?;
            let mut w = v.clone();
            // Two Gram-Schmidt passes keep the basis orthonormal to rounding.
            for _ in 0..2 {
                for e in &basis {
                    let c = e.dot(&w);
                    w.axpy(-c, e, 1.0);
                }
            }
            let norm = w.norm();
            if norm <= 1e-12 * v.norm().max(1.0) {
                return Err(invalid("spanning vectors are linearly dependent"));
            }
            basis.push(w / norm);
        }
        Ok(Self::from_orthonormal(d, &basis))
    }

    /// Rebuilds a plane from an orthonormal basis, checked to `1e-10`.
    pub fn from_orthonormal_basis(basis: Vec<Point>) -> Result<Self> {
        let d = basis
            .first()
            .ok_or_else(|| invalid("a plane needs at least one basis vector"))?
            .len();
        for (i, a) in basis.iter().enumerate() {
            check_dim(d, a.len())?;
            for b in &basis[..=i] {
                let expect = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                if (a.dot(b) - expect).abs() > TOL_STRUCTURAL {
                    return Err(Error::Invariant("basis is not orthonormal".into()));
                }
            }
        }
        Ok(Self::from_orthonormal(d, &basis))
    }

    fn from_orthonormal(d: usize, basis: &[Point]) -> Self {
        let mut projection = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v: f64 = basis.iter().map(|e| e[i] * e[j]).sum();
                projection[(i, j)] = v;
                projection[(j, i)] = v;
            }
        }
        Self {
            plane_dim: basis.len(),
            projection,
            basis: basis.to_vec(),
        }
    }

    /// The span of the listed standard basis vectors of `R^ambient_dim`.
    pub fn coordinate(ambient_dim: usize, axes: &[usize]) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("a coordinate plane needs at least one axis"));
        }
        let mut projection = DMatrix::zeros(ambient_dim, ambient_dim);
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        for &i in axes {
            if i >= ambient_dim {
                return Err(invalid(format!("axis {i} out of range {ambient_dim}")));
            }
            if projection[(i, i)] != 0.0 {
                return Err(invalid(format!("axis {i} listed twice")));
            }
            projection[(i, i)] = 1.0;
        }
        let basis = sorted
            .iter()
            .map(|&i| {
                let mut e = Point::zeros(ambient_dim);
                e[i] = 1.0;
                e
            })
            .collect();
        Ok(Self {
            plane_dim: axes.len(),
            projection,
            basis,
        })
    }

    /// `R^n × {0}` inside `R^{n+m}`.
    pub fn horizontal(n: usize, m: usize) -> Result<Self> {
        Self::coordinate(n + m, &(0..n).collect::<Vec<_>>())
    }

    /// A random plane spanned by `n` Gaussian vectors of `R^{n+m}`.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(invalid("plane dimension must be positive"));
        }
        loop {
            let vectors: Vec<Point> = (0..n)
                .map(|_| Point::from_fn(n + m, |_, _| rng.sample(StandardNormal)))
                .collect();
            if let Ok(p) = Self::from_spanning(&vectors) {
                return Ok(p);
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn plane_dim(&self) -> usize {
        self.plane_dim
    }

    /// Codimension `m`.
    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.plane_dim
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    /// The orthogonal complement.
    pub fn complement(&self) -> Option<Plane> {
        if self.codim() == 0 {
            return None;
        }
        let d = self.ambient_dim();
        let projection = DMatrix::identity(d, d) - &self.projection;
        let basis = pivoted_basis(&projection, self.codim());
        Some(Self::from_orthonormal(d, &basis))
    }

    /// Orthogonal projection of `v` onto the plane.
    pub fn project(&self, v: &Point) -> Result<Point> {
        check_dim(self.ambient_dim(), v.len())?;
        Ok(&self.projection * v)
    }

    /// Orthogonal projection of `v` onto the complement.
    pub fn perp_project(&self, v: &Point) -> Result<Point> {
        check_dim(self.ambient_dim(), v.len())?;
        Ok(v - &self.projection * v)
    }

    /// Euclidean distance from `v` to the plane; `v` must have the ambient
    /// dimension.
    pub fn dist(&self, v: &Point) -> f64 {
        let p = &self.projection * v;
        (v - p).norm()
    }

    /// An orthonormal basis of the plane: the one it was built from, or,
    /// for planes given by a projection, the result of pivoted Gram-Schmidt
    /// on the projection columns. Coordinate planes get their standard basis
    /// vectors in increasing order.
    pub fn basis(&self) -> &[Point] {
        &self.basis
    }

    /// An orthonormal basis of the orthogonal complement by pivoted
    /// Gram-Schmidt on the columns of `I - P`.
    pub fn complement_basis(&self) -> Vec<Point> {
        let d = self.ambient_dim();
        pivoted_basis(&(DMatrix::identity(d, d) - &self.projection), self.codim())
    }

    /// Squared Frobenius distance to another plane, without error checks.
    pub(crate) fn dist_sq_unchecked(&self, other: &Plane) -> f64 {
        self.projection
            .iter()
            .zip(other.projection.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

fn pivoted_basis(columns: &DMatrix<f64>, rank: usize) -> Vec<Point> {
    let d = columns.nrows();
    let mut basis: Vec<Point> = Vec::with_capacity(rank);
    let mut used = vec![false; d];
    while basis.len() < rank {
        let mut best: Option<(usize, Point, f64)> = None;
        for j in (0..d).filter(|&j| !used[j]) {
            let mut w: Point = columns.column(j).into_owned();
            for _ in 0..2 {
                for e in &basis {
                    let c = e.dot(&w);
                    w.axpy(-c, e, 1.0);
                }
            }
            let norm = w.norm();
            // Strictly greater keeps the lowest index among ties.
            if best.as_ref().map_or(true, |(_, _, b)| norm > *b + 1e-12) {
                best = Some((j, w, norm));
            }
        }
        let (j, w, norm) = best.expect("rank exceeds ambient dimension");
        used[j] = true;
        basis.push(w / norm);
    }
    basis
}

/// Frobenius norm `|P_S - P_T|` of the difference of projections.
pub fn grassmann_dist(s: &Plane, t: &Plane) -> Result<f64> {
    check_dim(s.ambient_dim(), t.ambient_dim())?;
    Ok(s.dist_sq_unchecked(t).sqrt())
}

/// The `n`-dimensional Jacobian of the projection onto `t` restricted to `s`.
///
/// With `B` an orthonormal basis matrix of `s` this is
/// `sqrt(det((P_T B)^T (P_T B)))`, a number in `[0, 1]`.
pub fn jacobian_lambda(s: &Plane, t: &Plane) -> Result<f64> {
    check_dim(s.ambient_dim(), t.ambient_dim())?;
    check_dim(s.plane_dim(), t.plane_dim())?;
    let b = DMatrix::from_columns(s.basis());
    let image = t.projection() * b;
    let gram = image.transpose() * &image;
    let det = gram.determinant().max(0.0);
    Ok(det.sqrt().min(1.0))
}

/// Membership in the cone complement set
/// `{x : s^{-1} dist(x - a, V) < |x - a| < r}`.
///
/// `s = 0` drops the left condition (it reads `dist < ∞`).
pub fn in_cone_complement(a: &Point, r: f64, v_plane: &Plane, s: f64, x: &Point) -> bool {
    let w = x - a;
    let len = w.norm();
    if len >= r {
        return false;
    }
    if s == 0.0 {
        return true;
    }
    v_plane.dist(&w) / s < len
}

/// A cylinder height, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Height {
    Finite(f64),
    Infinite,
}

impl Height {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_infinite() && h > 0.0 {
            Ok(Height::Infinite)
        } else if h > 0.0 {
            Ok(Height::Finite(h))
        } else {
            Err(invalid(format!("cylinder height must be positive, got {h}")))
        }
    }

    /// The height as a float, `+∞` for the infinite sentinel.
    pub fn value(self) -> f64 {
        match self {
            Height::Finite(h) => h,
            Height::Infinite => f64::INFINITY,
        }
    }

    /// Whether `x` lies within the closed height bound.
    pub fn admits(self, x: f64) -> bool {
        match self {
            Height::Finite(h) => x <= h,
            Height::Infinite => true,
        }
    }

    /// `self + extra`, infinite stays infinite.
    pub fn extended(self, extra: f64) -> Height {
        match self {
            Height::Finite(h) => Height::Finite(h + extra),
            Height::Infinite => Height::Infinite,
        }
    }

    pub fn scaled(self, factor: f64) -> Height {
        match self {
            Height::Finite(h) => Height::Finite(h * factor),
            Height::Infinite => Height::Infinite,
        }
    }
}

/// The closed cylinder `{x : |P_T(x-a)| <= r, |P_T^⊥(x-a)| <= h}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    center: Point,
    radius: f64,
    height: Height,
    axis: Plane,
}

impl Cylinder {
    pub fn new(center: Point, radius: f64, height: Height, axis: Plane) -> Result<Self> {
        check_dim(axis.ambient_dim(), center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("cylinder radius must be positive, got {radius}")));
        }
        if let Height::Finite(h) = height {
            if !(h > 0.0) {
                return Err(invalid(format!("cylinder height must be positive, got {h}")));
            }
        }
        Ok(Self {
            center,
            radius,
            height,
            axis,
        })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn height(&self) -> Height {
        self.height
    }

    pub fn axis(&self) -> &Plane {
        &self.axis
    }

    /// Closed membership test.
    pub fn contains(&self, x: &Point) -> bool {
        if x.len() != self.center.len() {
            return false;
        }
        let w = x - &self.center;
        let lateral = self.axis.projection() * &w;
        if lateral.norm() > self.radius {
            return false;
        }
        self.height.admits((w - lateral).norm())
    }

    /// Same center and axis with new radius and height.
    pub fn resized(&self, radius: f64, height: Height) -> Result<Self> {
        Self::new(self.center.clone(), radius, height, self.axis.clone())
    }
}

/// Closed membership in the cylinder; see [`Cylinder::contains`].
pub fn in_cylinder(c: &Cylinder, x: &Point) -> bool {
    c.contains(x)
}
