//! Synthetic varifolds with analytic tangents and curvature.
//!
//! All parametric generators use the same atomization: the parameter domain
//! is cut into lattice cells `[k h, (k+1) h)`, one atom sits at the lower
//! vertex `k h` of each cell, and its weight is the exact area of the cell's
//! image (tensor Gauss-Legendre quadrature of the area element). Tangent
//! planes and mean curvature are evaluated analytically at the vertex.
//! The scheme is mass-consistent and first-order accurate for smooth
//! integrands.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::geometry::{Plane, Point};
use crate::numeric::gauss_legendre_unit;
use crate::qvalued::{branch_jets, QField};

use super::{Atom, DiscreteVarifold};

const CELL_QUADRATURE_ORDER: usize = 4;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {x}")))
    }
}

/// Lattice vertices `k h` of `R^n` with `|k h| < extent`, in lexicographic
/// order of `k`.
fn disk_vertices(n: usize, extent: f64, h: f64) -> Vec<Vec<f64>> {
    let kmax = (extent / h).ceil() as i64 + 1;
    let mut out = Vec::new();
    let mut k = vec![-kmax; n];
    loop {
        let x: Vec<f64> = k.iter().map(|&ki| ki as f64 * h).collect();
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() < extent {
            out.push(x);
        }
        // odometer increment, last index fastest
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            k[i] += 1;
            if k[i] <= kmax {
                break;
            }
            k[i] = -kmax;
        }
    }
}

/// Tensor Gauss-Legendre rule on `[0,1)^n`.
fn cell_rule(n: usize) -> Vec<(Vec<f64>, f64)> {
    let (nodes, weights) = gauss_legendre_unit(CELL_QUADRATURE_ORDER);
    let mut rule = vec![(Vec::new(), 1.0)];
    for _ in 0..n {
        rule = rule
            .into_iter()
            .flat_map(|(p, w)| {
                nodes.iter().zip(&weights).map(move |(x, wx)| {
                    let mut q = p.clone();
                    q.push(*x);
                    (q, w * wx)
                })
            })
            .collect();
    }
    rule
}

/// `h^n` times the mean of `density` over the cell `[corner, corner + h)`.
///
/// Normalized by the rule's total weight so a constant density integrates
/// to exactly `h^n * density`.
fn cell_area(rule: &[(Vec<f64>, f64)], corner: &[f64], h: f64, density: impl Fn(&[f64]) -> f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut y = vec![0.0; corner.len()];
    for (p, w) in rule {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = corner[i] + p[i] * h;
        }
        num += w * density(&y);
        den += w;
    }
    let mean = if num == den { 1.0 } else { num / den };
    mean * h.powi(corner.len() as i32)
}

/// Analytic families of `Q` graph sheets `u_i : R^n → R^m`.
pub trait QSheets: Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn q(&self) -> usize;
    fn value(&self, sheet: usize, x: &[f64]) -> DVector<f64>;
    /// `m × n` Jacobian.
    fn jacobian(&self, sheet: usize, x: &[f64]) -> DMatrix<f64>;
    /// One `n × n` Hessian per output component.
    fn hessian(&self, sheet: usize, x: &[f64]) -> Vec<DMatrix<f64>>;
}

/// `u_i(x) = b_i + A_i x`.
#[derive(Clone, Debug)]
pub struct AffineSheets {
    pub offsets: Vec<DVector<f64>>,
    pub slopes: Vec<DMatrix<f64>>,
}

impl AffineSheets {
    /// Constant sheets at the given offsets of `R^m`.
    pub fn flat(n: usize, offsets: Vec<DVector<f64>>) -> Self {
        let slopes = offsets.iter().map(|b| DMatrix::zeros(b.len(), n)).collect();
        Self { offsets, slopes }
    }
}

impl QSheets for AffineSheets {
    fn n(&self) -> usize {
        self.slopes.first().map_or(0, |a| a.ncols())
    }
    fn m(&self) -> usize {
        self.offsets.first().map_or(0, |b| b.len())
    }
    fn q(&self) -> usize {
        self.offsets.len()
    }
    fn value(&self, i: usize, x: &[f64]) -> DVector<f64> {
        &self.offsets[i] + &self.slopes[i] * DVector::from_column_slice(x)
    }
    fn jacobian(&self, i: usize, _x: &[f64]) -> DMatrix<f64> {
        self.slopes[i].clone()
    }
    fn hessian(&self, _i: usize, x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(x.len(), x.len()); self.m()]
    }
}

/// `u(x) = ε sin(x_1)` over `R^2`, codimension one.
#[derive(Clone, Copy, Debug)]
pub struct SineSheet {
    pub amplitude: f64,
}

impl QSheets for SineSheet {
    fn n(&self) -> usize {
        2
    }
    fn m(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        1
    }
    fn value(&self, _: usize, x: &[f64]) -> DVector<f64> {
        DVector::from_element(1, self.amplitude * x[0].sin())
    }
    fn jacobian(&self, _: usize, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[self.amplitude * x[0].cos(), 0.0])
    }
    fn hessian(&self, _: usize, x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_row_slice(2, 2, &[-self.amplitude * x[0].sin(), 0.0, 0.0, 0.0])]
    }
}

/// `u(x) = c |x|²` over `R^n`, codimension one.
#[derive(Clone, Copy, Debug)]
pub struct ParaboloidSheet {
    pub n: usize,
    pub curvature: f64,
}

impl QSheets for ParaboloidSheet {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        1
    }
    fn value(&self, _: usize, x: &[f64]) -> DVector<f64> {
        DVector::from_element(1, self.curvature * x.iter().map(|v| v * v).sum::<f64>())
    }
    fn jacobian(&self, _: usize, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(1, self.n, |_, j| 2.0 * self.curvature * x[j])
    }
    fn hessian(&self, _: usize, _: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::identity(self.n, self.n) * (2.0 * self.curvature)]
    }
}

/// Constant sheets `u_i = base_i` in codimension one, with a Gaussian bump
/// `amplitude · exp(-|x - center|² / width²)` added to one of them.
#[derive(Clone, Debug)]
pub struct BumpSheets {
    pub base: Vec<f64>,
    pub bumped_sheet: usize,
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl BumpSheets {
    fn bump(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let r2: f64 = d.iter().map(|v| v * v).sum();
        (self.amplitude * (-r2 / (self.width * self.width)).exp(), d)
    }
}

impl QSheets for BumpSheets {
    fn n(&self) -> usize {
        self.center.len()
    }
    fn m(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        self.base.len()
    }
    fn value(&self, i: usize, x: &[f64]) -> DVector<f64> {
        let extra = if i == self.bumped_sheet { self.bump(x).0 } else { 0.0 };
        DVector::from_element(1, self.base[i] + extra)
    }
    fn jacobian(&self, i: usize, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        if i != self.bumped_sheet {
            return DMatrix::zeros(1, n);
        }
        let (b, d) = self.bump(x);
        let s = -2.0 * b / (self.width * self.width);
        DMatrix::from_fn(1, n, |_, j| s * d[j])
    }
    fn hessian(&self, i: usize, x: &[f64]) -> Vec<DMatrix<f64>> {
        let n = x.len();
        if i != self.bumped_sheet {
            return vec![DMatrix::zeros(n, n)];
        }
        let (b, d) = self.bump(x);
        let w2 = self.width * self.width;
        vec![DMatrix::from_fn(n, n, |j, k| {
            let delta = if j == k { 1.0 } else { 0.0 };
            b * (4.0 * d[j] * d[k] / (w2 * w2) - 2.0 * delta / w2)
        })]
    }
}

/// Atom data of the graph `x ↦ (x, u(x))` from the jet of `u` at `x`.
///
/// The mean curvature is `P^⊥ Σ g^{ij} (0, ∂_ij u)` with `g = I + DuᵀDu`.
fn graph_atom(
    x: &[f64],
    value: &DVector<f64>,
    jac: &DMatrix<f64>,
    hess: &[DMatrix<f64>],
    multiplicity: u32,
    weight: f64,
) -> Result<Atom> {
    let n = x.len();
    let m = value.len();
    let mut position = Point::zeros(n + m);
    position.rows_mut(0, n).copy_from_slice(x);
    position.rows_mut(n, m).copy_from(value);
    let spanning: Vec<Point> = (0..n)
        .map(|j| {
            let mut t = Point::zeros(n + m);
            t[j] = 1.0;
            t.rows_mut(n, m).copy_from(&jac.column(j));
            t
        })
        .collect();
    let tangent = Plane::from_spanning(&spanning)?;
    let metric = DMatrix::identity(n, n) + jac.transpose() * jac;
    let inverse = metric
        .try_inverse()
        .ok_or_else(|| invalid("singular graph metric"))?;
    let mut accel = Point::zeros(n + m);
    for (c, h) in hess.iter().enumerate() {
        accel[n + c] = inverse.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
    }
    let h = &accel - tangent.projection() * &accel;
    Atom::with_curvature(position, tangent, multiplicity, weight, h)
}

fn graph_area_density(jac: &DMatrix<f64>) -> f64 {
    let n = jac.ncols();
    (DMatrix::identity(n, n) + jac.transpose() * jac).determinant().sqrt()
}

/// The graphs of all sheets over the disk `|x| < extent`, one unit-multiplicity
/// atom per sheet and lattice vertex.
pub fn gen_qgraph_analytic<S: QSheets + ?Sized>(sheets: &S, extent: f64, mesh: f64) -> Result<DiscreteVarifold> {
    check_positive("extent", extent)?;
    check_positive("mesh", mesh)?;
    let (n, m) = (sheets.n(), sheets.m());
    if n == 0 || sheets.q() == 0 {
        return Err(invalid("sheet family must have positive dimension and count"));
    }
    let rule = cell_rule(n);
    let mut atoms = Vec::new();
    for x in disk_vertices(n, extent, mesh) {
        for i in 0..sheets.q() {
            let weight = cell_area(&rule, &x, mesh, |y| graph_area_density(&sheets.jacobian(i, y)));
            atoms.push(graph_atom(
                &x,
                &sheets.value(i, &x),
                &sheets.jacobian(i, &x),
                &sheets.hessian(i, &x),
                1,
                weight,
            )?);
        }
    }
    DiscreteVarifold::new(n, m, atoms, mesh)
}

/// The horizontal plane `R^n × {0}` over the disk `|x| < extent` with
/// multiplicity `q`.
pub fn gen_plane(n: usize, m: usize, q: u32, extent: f64, mesh: f64) -> Result<DiscreteVarifold> {
    check_positive("extent", extent)?;
    check_positive("mesh", mesh)?;
    if q == 0 || n == 0 {
        return Err(invalid("plane needs positive multiplicity and dimension"));
    }
    let tangent = Plane::horizontal(n, m)?;
    let weight = mesh.powi(n as i32);
    let atoms = disk_vertices(n, extent, mesh)
        .into_iter()
        .map(|x| {
            let mut p = Point::zeros(n + m);
            p.rows_mut(0, n).copy_from_slice(&x);
            Atom::new(p, tangent.clone(), q, weight)
        })
        .collect::<Result<Vec<_>>>()?;
    DiscreteVarifold::new(n, m, atoms, mesh)
}

/// Horizontal unit-density planes at the given offsets in `R^m`.
pub fn gen_parallel_planes(n: usize, offsets: &[DVector<f64>], extent: f64, mesh: f64) -> Result<DiscreteVarifold> {
    if offsets.is_empty() {
        return Err(invalid("at least one offset required"));
    }
    gen_qgraph_analytic(&AffineSheets::flat(n, offsets.to_vec()), extent, mesh)
}

/// The graph of a sampled `Q`-valued field, one atom per masked node and
/// slot. Derivatives come from finite differences along the branches of the
/// field, so the field must be Lipschitz with constant `lip_bound`.
pub fn gen_qgraph(field: &QField, lip_bound: f64) -> Result<DiscreteVarifold> {
    let jets = branch_jets(field, lip_bound)?;
    let dx = field.dx();
    let weight_base = dx.powi(field.n() as i32);
    let mut atoms = Vec::new();
    for (node, slots) in jets.iter().enumerate() {
        let Some(slots) = slots else { continue };
        let x: Vec<f64> = field.node_position(node).iter().copied().collect();
        for jet in slots {
            let weight = weight_base * graph_area_density(&jet.jacobian);
            atoms.push(graph_atom(&x, &jet.value, &jet.jacobian, &jet.hessian, 1, weight)?);
        }
    }
    DiscreteVarifold::new(field.n(), field.m(), atoms, dx)
}

/// The round sphere of radius `radius` in `R^{n+1}` for `n ∈ {1, 2}`, with
/// mean curvature `-n x / R²`.
pub fn gen_sphere(n: usize, radius: f64, mesh: f64) -> Result<DiscreteVarifold> {
    check_positive("radius", radius)?;
    check_positive("mesh", mesh)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut atoms = Vec::new();
    let curvature = |x: &Point| -(n as f64) * x / (radius * radius);
    match n {
        1 => {
            let count = (two_pi * radius / mesh).ceil() as usize;
            let step = two_pi / count as f64;
            for j in 0..count {
                let t = (j as f64 + 0.5) * step;
                let x = Point::from_column_slice(&[radius * t.cos(), radius * t.sin()]);
                let tangent = Plane::from_spanning(&[Point::from_column_slice(&[-t.sin(), t.cos()])])?;
                let h = curvature(&x);
                atoms.push(Atom::with_curvature(x, tangent, 1, radius * step, h)?);
            }
        }
        2 => {
            let polar_count = (std::f64::consts::PI * radius / mesh).ceil() as usize;
            let azimuth_count = (two_pi * radius / mesh).ceil() as usize;
            let dpolar = std::f64::consts::PI / polar_count as f64;
            let dazimuth = two_pi / azimuth_count as f64;
            for i in 0..polar_count {
                let (top, bottom) = ((i as f64 * dpolar).cos(), ((i + 1) as f64 * dpolar).cos());
                let area = radius * radius * dazimuth * (top - bottom);
                // Area midpoint of the band, so a polar cap's mass is unbiased.
                let th = (0.5 * (top + bottom)).acos();
                for j in 0..azimuth_count {
                    let ph = (j as f64 + 0.5) * dazimuth;
                    let normal = Point::from_column_slice(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                    let x = &normal * radius;
                    let projection = DMatrix::identity(3, 3) - &normal * normal.transpose();
                    let projection = (&projection + projection.transpose()) * 0.5;
                    let tangent = Plane::from_projection(projection)?;
                    let h = curvature(&x);
                    atoms.push(Atom::with_curvature(x, tangent, 1, area, h)?);
                }
            }
        }
        _ => return Err(invalid(format!("sphere generator supports n = 1, 2, got {n}"))),
    }
    DiscreteVarifold::new(n, 1, atoms, mesh)
}

/// The catenoid `cosh x_3 = |(x_1, x_2)|` for `|x_3| < extent`, a stationary
/// surface (zero mean curvature).
///
/// Parametrized by `(t, φ) ↦ (cosh t cos φ, cosh t sin φ, t)`. The reported
/// mesh scale is the largest physical cell side, `mesh · cosh(extent)`.
pub fn gen_catenoid(extent: f64, mesh: f64) -> Result<DiscreteVarifold> {
    check_positive("extent", extent)?;
    check_positive("mesh", mesh)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let t_count = (2.0 * extent / mesh).ceil() as usize;
    let dt = 2.0 * extent / t_count as f64;
    let phi_count = (two_pi / mesh).ceil() as usize;
    let dphi = two_pi / phi_count as f64;
    let primitive = |t: f64| t / 2.0 + (2.0 * t).sinh() / 4.0;
    let mut atoms = Vec::with_capacity(t_count * phi_count);
    for i in 0..t_count {
        let t = -extent + i as f64 * dt;
        let area = dphi * (primitive(t + dt) - primitive(t));
        for j in 0..phi_count {
            let ph = j as f64 * dphi;
            let x = Point::from_column_slice(&[t.cosh() * ph.cos(), t.cosh() * ph.sin(), t]);
            let dt_vec = Point::from_column_slice(&[t.sinh() * ph.cos(), t.sinh() * ph.sin(), 1.0]);
            let dphi_vec = Point::from_column_slice(&[-ph.sin(), ph.cos(), 0.0]);
            let tangent = Plane::from_spanning(&[dt_vec, dphi_vec])?;
            atoms.push(Atom::new(x, tangent, 1, area)?);
        }
    }
    DiscreteVarifold::new(2, 1, atoms, dt.max(dphi) * extent.cosh())
}

/// Radius of the plane patch in [`gen_plane_union_catenoid`].
pub const UNION_PLANE_EXTENT: f64 = 3.5;

/// The plane `{x_3 = 1/2}` over the disk of radius
/// [`UNION_PLANE_EXTENT`] together with the catenoid cut at the same
/// lateral radius. Both pieces are stationary.
pub fn gen_plane_union_catenoid(mesh: f64) -> Result<DiscreteVarifold> {
    let plane = gen_parallel_planes(2, &[DVector::from_element(1, 0.5)], UNION_PLANE_EXTENT, mesh)?;
    let catenoid = gen_catenoid(UNION_PLANE_EXTENT.acosh(), mesh)?;
    let union = plane.union(&catenoid)?;
    DiscreteVarifold::new(2, 1, union.atoms().to_vec(), mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_vertices_are_inside_and_ordered() {
        let v = disk_vertices(2, 1.0, 0.25);
        assert!(v.iter().all(|x| (x[0] * x[0] + x[1] * x[1]).sqrt() < 1.0));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v.contains(&vec![0.0, 0.0]));
    }

    #[test]
    fn constant_density_cell_area_is_exact() {
        let rule = cell_rule(2);
        assert_eq!(cell_area(&rule, &[0.3, -0.1], 0.1, |_| 1.0), 0.1f64.powi(2));
    }

    #[test]
    fn sheet_derivatives_match_finite_differences() {
        let bump = BumpSheets {
            base: vec![0.0, 0.5],
            bumped_sheet: 0,
            amplitude: 0.3,
            center: vec![0.1, -0.2],
            width: 0.4,
        };
        let para = ParaboloidSheet { n: 2, curvature: 0.7 };
        let sine = SineSheet { amplitude: 0.2 };
        let families: [&dyn QSheets; 3] = [&bump, &para, &sine];
        let x = [0.23, 0.11];
        let e = 1e-5;
        for s in families {
            let jac = s.jacobian(0, &x);
            let hess = s.hessian(0, &x);
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += e;
                xm[j] -= e;
                let d = (s.value(0, &xp)[0] - s.value(0, &xm)[0]) / (2.0 * e);
                assert!((d - jac[(0, j)]).abs() < 1e-8);
                let dj = (s.jacobian(0, &xp) - s.jacobian(0, &xm)) / (2.0 * e);
                for k in 0..2 {
                    assert!((dj[(0, k)] - hess[0][(j, k)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn paraboloid_mean_curvature_at_vertex() {
        // At the vertex of c|x|² the surface has both principal curvatures
        // 2c, so H = (0, 0, 4c).
        let s = ParaboloidSheet { n: 2, curvature: 0.5 };
        let x = [0.0, 0.0];
        let atom = graph_atom(&x, &s.value(0, &x), &s.jacobian(0, &x), &s.hessian(0, &x), 1, 1.0).unwrap();
        assert!((atom.mean_curvature - Point::from_column_slice(&[0.0, 0.0, 2.0])).norm() < 1e-12);
    }

    #[test]
    fn generators_reject_bad_parameters() {
        assert!(gen_plane(2, 1, 1, 0.0, 0.1).is_err());
        assert!(gen_plane(2, 1, 0, 1.0, 0.1).is_err());
        assert!(gen_catenoid(1.0, -0.1).is_err());
        assert!(gen_sphere(3, 1.0, 0.1).is_err());
        assert!(gen_parallel_planes(2, &[], 1.0, 0.1).is_err());
    }
}
