//! Discrete integral varifolds.
//!
//! A varifold is a finite list of atoms. Each atom carries a position, an
//! approximate tangent plane, an integer multiplicity, a positive quadrature
//! weight (its share of `n`-dimensional area) and a mean curvature vector.
//! Every functional below is a weighted sum over atoms, with mass element
//! `multiplicity * weight`.

mod generators;
mod io;

pub use generators::{
    gen_catenoid, gen_parallel_planes, gen_plane, gen_plane_union_catenoid, gen_qgraph,
    gen_qgraph_analytic, gen_sphere, AffineSheets, BumpSheets, ParaboloidSheet, QSheets,
    SineSheet, UNION_PLANE_EXTENT,
};
pub use io::{read_varifold, read_varifold_csv, write_varifold, write_varifold_csv};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{Plane, Point};
use crate::numeric::{pairwise_sum, unit_ball_volume};

/// One quadrature atom of a discrete varifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub position: Point,
    pub tangent: Plane,
    pub multiplicity: u32,
    pub weight: f64,
    pub mean_curvature: Point,
}

impl Atom {
    /// An atom with zero mean curvature.
    pub fn new(position: Point, tangent: Plane, multiplicity: u32, weight: f64) -> Result<Self> {
        let h = Point::zeros(position.len());
        Self::with_curvature(position, tangent, multiplicity, weight, h)
    }

    pub fn with_curvature(
        position: Point,
        tangent: Plane,
        multiplicity: u32,
        weight: f64,
        mean_curvature: Point,
    ) -> Result<Self> {
        check_dim(tangent.ambient_dim(), position.len())?;
        check_dim(position.len(), mean_curvature.len())?;
        if multiplicity == 0 {
            return Err(invalid("atom multiplicity must be at least 1"));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(invalid(format!("atom weight must be positive, got {weight}")));
        }
        Ok(Self {
            position,
            tangent,
            multiplicity,
            weight,
            mean_curvature,
        })
    }

    /// Mass `multiplicity * weight`.
    pub fn mass(&self) -> f64 {
        self.multiplicity as f64 * self.weight
    }
}

/// Dimension-dependent constants entering set definitions and thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub isoperimetric_gamma: f64,
    pub besicovitch: f64,
    pub unit_ball_volume: f64,
    placeholder_gamma: bool,
    placeholder_besicovitch: bool,
}

impl Constants {
    /// Exact unit ball volume; the isoperimetric and covering constants are
    /// set to the placeholder value `1.0`.
    pub fn for_dim(n: usize) -> Self {
        Self {
            isoperimetric_gamma: 1.0,
            besicovitch: 1.0,
            unit_ball_volume: unit_ball_volume(n),
            placeholder_gamma: true,
            placeholder_besicovitch: true,
        }
    }

    pub fn with_isoperimetric_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("isoperimetric constant must be positive, got {gamma}")));
        }
        self.isoperimetric_gamma = gamma;
        self.placeholder_gamma = false;
        Ok(self)
    }

    pub fn with_besicovitch(mut self, b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid(format!("Besicovitch constant must be positive, got {b}")));
        }
        self.besicovitch = b;
        self.placeholder_besicovitch = false;
        Ok(self)
    }

    /// Report flags naming constants still at their placeholder value.
    pub fn placeholder_flags(&self) -> Vec<&'static str> {
        let mut flags = Vec::new();
        if self.placeholder_gamma {
            flags.push("placeholder_isoperimetric_gamma");
        }
        if self.placeholder_besicovitch {
            flags.push("placeholder_besicovitch");
        }
        flags
    }
}

/// A differentiable vector field on the ambient space.
pub trait VectorField: Sync {
    fn value(&self, x: &Point) -> Point;
    /// The Jacobian matrix `Dη(x)`, rows indexed by output component.
    fn jacobian(&self, x: &Point) -> DMatrix<f64>;
}

/// `η(x) = φ(x) (b + A (x - c))` with the cutoff
/// `φ(x) = (1 - |x - c|² / R²)³` inside the ball `B(c, R)` and zero outside.
///
/// A compactly supported `C²` polynomial field used to probe stationarity.
#[derive(Clone, Debug)]
pub struct BumpField {
    pub center: Point,
    pub radius: f64,
    pub constant: Point,
    pub linear: DMatrix<f64>,
}

impl BumpField {
    fn parts(&self, x: &Point) -> Option<(Point, f64, Point)> {
        let w = x - &self.center;
        let s = 1.0 - w.norm_squared() / (self.radius * self.radius);
        if s <= 0.0 {
            return None;
        }
        let poly = &self.constant + &self.linear * &w;
        Some((w, s, poly))
    }

    /// `sup |η| + sup |Dη|` (Frobenius) over the given sample points.
    pub fn c1_norm_on<'a, I: IntoIterator<Item = &'a Point>>(&self, points: I) -> f64 {
        let (mut sup_v, mut sup_d) = (0.0f64, 0.0f64);
        for x in points {
            sup_v = sup_v.max(self.value(x).norm());
            sup_d = sup_d.max(self.jacobian(x).norm());
        }
        sup_v + sup_d
    }
}

impl VectorField for BumpField {
    fn value(&self, x: &Point) -> Point {
        match self.parts(x) {
            Some((_, s, poly)) => poly * s.powi(3),
            None => Point::zeros(x.len()),
        }
    }

    fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        match self.parts(x) {
            Some((w, s, poly)) => {
                // D(φ p) = φ A + p ⊗ ∇φ, ∇φ = -6 s² w / R²
                let grad = w * (-6.0 * s * s / (self.radius * self.radius));
                &self.linear * s.powi(3) + poly * grad.transpose()
            }
            None => DMatrix::zeros(x.len(), x.len()),
        }
    }
}

/// A finite weighted atomic model of an integral varifold.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteVarifold {
    n: usize,
    m: usize,
    atoms: Vec<Atom>,
    mesh_scale: f64,
}

impl DiscreteVarifold {
    /// Validates shapes; an empty atom list is allowed (zero measure).
    pub fn new(n: usize, m: usize, atoms: Vec<Atom>, mesh_scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("varifold dimension must be positive"));
        }
        if !(mesh_scale > 0.0 && mesh_scale.is_finite()) {
            return Err(invalid(format!("mesh scale must be positive, got {mesh_scale}")));
        }
        for a in &atoms {
            check_dim(n + m, a.position.len())?;
            check_dim(n, a.tangent.plane_dim())?;
        }
        Ok(Self {
            n,
            m,
            atoms,
            mesh_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ambient_dim(&self) -> usize {
        self.n + self.m
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn mesh_scale(&self) -> f64 {
        self.mesh_scale
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The varifold restricted to the atoms with the given indices.
    pub fn restrict_to(&self, indices: &[usize]) -> Self {
        Self {
            n: self.n,
            m: self.m,
            atoms: indices.iter().map(|&i| self.atoms[i].clone()).collect(),
            mesh_scale: self.mesh_scale,
        }
    }

    /// The varifold restricted to atoms whose position satisfies `keep`.
    pub fn restrict(&self, keep: impl Fn(&Point) -> bool) -> Self {
        Self {
            n: self.n,
            m: self.m,
            atoms: self
                .atoms
                .iter()
                .filter(|a| keep(&a.position))
                .cloned()
                .collect(),
            mesh_scale: self.mesh_scale,
        }
    }

    /// Disjoint union of two varifolds of the same dimensions.
    pub fn union(&self, other: &Self) -> Result<Self> {
        check_dim(self.n, other.n)?;
        check_dim(self.m, other.m)?;
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Self::new(self.n, self.m, atoms, self.mesh_scale.max(other.mesh_scale))
    }

    /// The configuration shifted by `shift`.
    pub fn translated(&self, shift: &Point) -> Result<Self> {
        check_dim(self.ambient_dim(), shift.len())?;
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: &a.position + shift,
                ..a.clone()
            })
            .collect();
        Self::new(self.n, self.m, atoms, self.mesh_scale)
    }

    /// Applies `x ↦ λ x` to the configuration, scaling weights by `λ^n` and
    /// curvature by `1/λ`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(invalid(format!("scale factor must be positive, got {factor}")));
        }
        let wf = factor.powi(self.n as i32);
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: &a.position * factor,
                tangent: a.tangent.clone(),
                multiplicity: a.multiplicity,
                weight: a.weight * wf,
                mean_curvature: &a.mean_curvature / factor,
            })
            .collect();
        Self::new(self.n, self.m, atoms, self.mesh_scale * factor)
    }

    /// Sum of `f(atom) * mass` over atoms selected by `select`, in atom order
    /// with pairwise summation.
    pub(crate) fn weighted_sum<S, F>(&self, select: S, f: F) -> f64
    where
        S: Fn(&Atom) -> bool + Sync,
        F: Fn(&Atom) -> f64 + Sync,
    {
        let terms: Vec<f64> = self
            .atoms
            .par_iter()
            .map(|a| if select(a) { a.mass() * f(a) } else { 0.0 })
            .collect();
        pairwise_sum(&terms)
    }

    /// Total mass `Σ θ w`.
    pub fn total_mass(&self) -> f64 {
        self.weighted_sum(|_| true, |_| 1.0)
    }

    /// `μ(region)` for a region given by a membership predicate.
    pub fn measure<R: Fn(&Point) -> bool + Sync>(&self, region: R) -> f64 {
        self.weighted_sum(|a| region(&a.position), |_| 1.0)
    }

    /// `μ(B(a, ρ)) / (ω_n ρ^n)` with an open ball.
    pub fn density_ratio(&self, a: &Point, rho: f64) -> Result<f64> {
        check_positive_radius(rho)?;
        check_dim(self.ambient_dim(), a.len())?;
        let mass = self.measure(|x| (x - a).norm() < rho);
        Ok(mass / (unit_ball_volume(self.n) * rho.powi(self.n as i32)))
    }

    /// `δμ(η) = Σ θ w tr(Dη(x) P_x)`.
    pub fn first_variation_field<F: VectorField>(&self, eta: &F) -> f64 {
        self.weighted_sum(
            |_| true,
            |a| {
                let d = eta.jacobian(&a.position);
                let p = a.tangent.projection();
                // tr(D P) = Σ_ij D_ij P_ji, P symmetric
                d.iter().zip(p.iter()).map(|(x, y)| x * y).sum()
            },
        )
    }

    /// `‖δμ‖(region) = Σ θ w |H|` over the region.
    pub fn first_variation_norm<R: Fn(&Point) -> bool + Sync>(&self, region: R) -> f64 {
        self.weighted_sum(|a| region(&a.position), |a| a.mean_curvature.norm())
    }

    /// The curvature measure `ψ(region)`: `‖δμ‖` for `p = 1`, `∫ |H|^p dμ`
    /// for `1 < p <= n`.
    pub fn hp_integrand_norm<R: Fn(&Point) -> bool + Sync>(&self, region: R, p: f64) -> Result<f64> {
        if !(p >= 1.0 && p <= self.n as f64) {
            return Err(invalid(format!(
                "curvature exponent must satisfy 1 <= p <= {}, got {p}",
                self.n
            )));
        }
        if p == 1.0 {
            return Ok(self.first_variation_norm(region));
        }
        Ok(self.weighted_sum(|a| region(&a.position), |a| a.mean_curvature.norm().powf(p)))
    }

    /// `ρ^{-n} ∫_{B(x,ρ)} |P_ξ - P_T|² dμ(ξ)` over the open ball.
    pub fn tilt_excess(&self, x: &Point, rho: f64, t: &Plane) -> Result<f64> {
        check_positive_radius(rho)?;
        self.check_point_and_plane(x, t)?;
        let sum = self.weighted_sum(
            |a| (&a.position - x).norm() < rho,
            |a| a.tangent.dist_sq_unchecked(t),
        );
        Ok(sum / rho.powi(self.n as i32))
    }

    /// `ρ^{-n-2} ∫_{B(x,ρ)} dist(ξ - x, T)² dμ(ξ)` over the open ball.
    pub fn height_excess(&self, x: &Point, rho: f64, t: &Plane) -> Result<f64> {
        check_positive_radius(rho)?;
        self.check_point_and_plane(x, t)?;
        let sum = self.weighted_sum(
            |a| (&a.position - x).norm() < rho,
            |a| t.dist(&(&a.position - x)).powi(2),
        );
        Ok(sum / rho.powi(self.n as i32 + 2))
    }

    fn check_point_and_plane(&self, x: &Point, t: &Plane) -> Result<()> {
        check_dim(self.ambient_dim(), x.len())?;
        check_dim(self.ambient_dim(), t.ambient_dim())?;
        check_dim(self.n, t.plane_dim())
    }
}

fn check_positive_radius(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("radius must be positive, got {rho}")))
    }
}
