//! The Lipschitz `Q`-valued approximation of a varifold over a cylinder:
//! the bad set `B`, the graphical parts `A` and `H`, the good sets of the
//! fixed-scale inequality, the cell classes `Y`/`Z`/`N`, the approximating
//! field `f`, and numerical checks of the approximation's conclusions.
//!
//! "For some radius" quantifiers run over a finite [`RadiusSchedule`]. Ball
//! statistics use closed balls except where an open ball is named.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::excess::{cell_indices, QPlane};
use crate::geometry::{jacobian_lambda, Cylinder, Height, Point};
use crate::numeric::{fmt_f64, lq_norm, pairwise_sum, Exponent};
use crate::qvalued::{branch_jets, metric_g, write_qfield_csv, QField, QValue};
use crate::varifold::{Constants, DiscreteVarifold};

/// Test radii for "for some `0 < ρ < 2r`" conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum RadiusSchedule {
    /// `ρ_k = 2r · ratio^{-(k+1)}` for `k = 0..count`.
    Geometric { count: usize, ratio: f64 },
    /// Explicit radii, strictly decreasing, inside `(0, 2r)`.
    Explicit(Vec<f64>),
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        RadiusSchedule::Geometric { count: 24, ratio: 1.3 }
    }
}

impl RadiusSchedule {
    /// The radii for cylinder radius `r`, decreasing.
    pub fn radii(&self, r: f64) -> Result<Vec<f64>> {
        match self {
            RadiusSchedule::Geometric { count, ratio } => {
                if *count == 0 || !(*ratio > 1.0 && ratio.is_finite()) {
                    return Err(invalid("geometric schedule needs count >= 1 and ratio > 1"));
                }
                Ok((0..*count).map(|k| 2.0 * r * ratio.powi(-(k as i32 + 1))).collect())
            }
            RadiusSchedule::Explicit(radii) => {
                if radii.is_empty() {
                    return Err(invalid("radius schedule is empty"));
                }
                if radii.iter().any(|&p| !(p > 0.0 && p < 2.0 * r)) {
                    return Err(invalid("schedule radii must lie in (0, 2r)"));
                }
                if radii.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(invalid("schedule radii must be strictly decreasing"));
                }
                Ok(radii.clone())
            }
        }
    }
}

/// Parameters of the approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxParams {
    pub q: usize,
    pub eps: f64,
    pub eps1: f64,
    /// `δ_1, …, δ_5`.
    pub delta: [f64; 5],
    pub lip: f64,
    pub mass_bound: f64,
    pub schedule: RadiusSchedule,
    /// Fiber cell width; defaults to the varifold's mesh scale.
    pub cell_width: Option<f64>,
}

impl ApproxParams {
    /// Defaults for a `Q`-sheeted fixture: `ε = ε₁ = 0.1`, `δ_1..δ_4 = 0.5`,
    /// `δ_5` at its upper bound, `L = 1`, `M = Q + 2`.
    pub fn new(q: usize, n: usize, constants: &Constants) -> Self {
        Self {
            q,
            eps: 0.1,
            eps1: 0.1,
            delta: [0.5, 0.5, 0.5, 0.5, delta5_bound(n, constants).min(1.0)],
            lip: 1.0,
            mass_bound: q as f64 + 2.0,
            schedule: RadiusSchedule::default(),
            cell_width: None,
        }
    }

    pub fn validate(&self, n: usize, constants: &Constants) -> Result<()> {
        if self.q == 0 {
            return Err(invalid("Q must be positive"));
        }
        if !(self.eps > 0.0 && self.eps1 > 0.0 && self.eps1 <= self.eps) {
            return Err(invalid(format!("need 0 < eps1 <= eps, got eps={} eps1={}", self.eps, self.eps1)));
        }
        if self.delta.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return Err(invalid("each delta must lie in (0, 1]"));
        }
        let bound = delta5_bound(n, constants);
        if self.delta[4] > bound {
            return Err(invalid(format!("delta5 = {} exceeds (2 gamma n)^-n / omega_n = {bound}", self.delta[4])));
        }
        if !(self.lip > 0.0 && self.lip.is_finite()) {
            return Err(invalid("L must be positive and finite"));
        }
        if !(self.mass_bound >= 1.0 && self.mass_bound.is_finite()) {
            return Err(invalid("M must be finite and at least 1"));
        }
        if let Some(dx) = self.cell_width {
            if !(dx > 0.0 && dx.is_finite()) {
                return Err(invalid("cell width must be positive"));
            }
        }
        if let RadiusSchedule::Explicit(r) = &self.schedule {
            if r.is_empty() {
                return Err(invalid("radius schedule is empty"));
            }
        }
        Ok(())
    }
}

/// `(2 γ_n n)^{-n} / ω_n`.
pub fn delta5_bound(n: usize, constants: &Constants) -> f64 {
    (2.0 * constants.isoperimetric_gamma * n as f64).powi(-(n as i32)) / constants.unit_ball_volume
}

/// `max{3 + 2Q + (12Q + 6) 5^n, 4(Q + 2)/δ_1}`.
pub fn gamma3(q: usize, n: usize, delta1: f64) -> f64 {
    let q = q as f64;
    (3.0 + 2.0 * q + (12.0 * q + 6.0) * 5f64.powi(n as i32)).max(4.0 * (q + 2.0) / delta1)
}

/// Sums over a ball: mass, curvature mass `Σ θw|H|`, tilt mass
/// `Σ θw |P - P_T|`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BallSums {
    pub mass: f64,
    pub curvature: f64,
    pub tilt: f64,
}

impl std::ops::AddAssign for BallSums {
    fn add_assign(&mut self, o: Self) {
        self.mass += o.mass;
        self.curvature += o.curvature;
        self.tilt += o.tilt;
    }
}

/// Per-atom contributions in a canonical (lexicographic position) order, so
/// that ball sums do not depend on the input atom order.
struct BallScanner {
    dim: usize,
    /// Positions in canonical order, flattened.
    positions: Vec<f64>,
    contrib: Vec<BallSums>,
}

impl BallScanner {
    fn new(v: &DiscreteVarifold, c: &Cylinder) -> Self {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&i, &j| {
            crate::qvalued::lex_cmp(&v.atoms()[i].position, &v.atoms()[j].position).then(i.cmp(&j))
        });
        let positions = order.iter().flat_map(|&i| v.atoms()[i].position.iter().copied()).collect();
        let contrib = order
            .iter()
            .map(|&i| {
                let a = &v.atoms()[i];
                BallSums {
                    mass: a.mass(),
                    curvature: a.mass() * a.mean_curvature.norm(),
                    tilt: a.mass() * a.tangent.dist_sq_unchecked(c.axis()).sqrt(),
                }
            })
            .collect();
        Self {
            dim: v.ambient_dim(),
            positions,
            contrib,
        }
    }

    /// Sums over the balls of the given decreasing radii around `x`.
    fn scan(&self, x: &Point, radii: &[f64], closed: bool) -> Vec<BallSums> {
        let mut buckets = vec![BallSums::default(); radii.len()];
        let x = x.as_slice();
        let outer = radii[0];
        for (j, p) in self.positions.chunks_exact(self.dim).enumerate() {
            let d = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d > outer {
                continue;
            }
            let count = if closed {
                radii.partition_point(|&r| d <= r)
            } else {
                radii.partition_point(|&r| d < r)
            };
            if count > 0 {
                buckets[count - 1] += self.contrib[j];
            }
        }
        for k in (0..radii.len().saturating_sub(1)).rev() {
            let next = buckets[k + 1];
            buckets[k] += next;
        }
        buckets
    }
}

fn in_cylinder_atoms(v: &DiscreteVarifold, c: &Cylinder) -> Vec<usize> {
    (0..v.len()).filter(|&i| c.contains(&v.atoms()[i].position)).collect()
}

fn curvature_exceeds(s: &BallSums, threshold: f64, n: usize) -> bool {
    s.curvature > threshold * s.mass.powf(1.0 - 1.0 / n as f64)
}

fn check_inputs(v: &DiscreteVarifold, c: &Cylinder) -> Result<()> {
    check_dim(v.ambient_dim(), c.axis().ambient_dim())?;
    check_dim(v.n(), c.axis().plane_dim())
}

/// Atoms of the cylinder where, for some schedule radius, the curvature or
/// the tilt in the closed ball exceeds the `ε₁` thresholds.
pub fn bad_set(v: &DiscreteVarifold, c: &Cylinder, params: &ApproxParams) -> Result<Vec<usize>> {
    check_inputs(v, c)?;
    let radii = params.schedule.radii(c.radius())?;
    let scanner = BallScanner::new(v, c);
    let n = v.n();
    Ok(in_cylinder_atoms(v, c)
        .into_par_iter()
        .filter(|&i| {
            scanner.scan(&v.atoms()[i].position, &radii, true).iter().any(|s| {
                curvature_exceeds(s, params.eps1, n) || s.tilt > params.eps1 * s.mass
            })
        })
        .collect())
}

/// Atoms of the cylinder with small curvature and tilt in the open ball of
/// radius `2r` and lower density `δ_5 ω_n ρ^n` at every schedule radius.
pub fn preliminary_graphical_part(
    v: &DiscreteVarifold,
    c: &Cylinder,
    params: &ApproxParams,
    constants: &Constants,
) -> Result<Vec<usize>> {
    check_inputs(v, c)?;
    let radii = params.schedule.radii(c.radius())?;
    let scanner = BallScanner::new(v, c);
    let n = v.n();
    let two_r = [2.0 * c.radius()];
    let omega = constants.unit_ball_volume;
    Ok(in_cylinder_atoms(v, c)
        .into_par_iter()
        .filter(|&i| {
            let x = &v.atoms()[i].position;
            let big = scanner.scan(x, &two_r, false)[0];
            if curvature_exceeds(&big, params.eps, n) || big.tilt > params.eps * big.mass {
                return false;
            }
            scanner
                .scan(x, &radii, true)
                .iter()
                .zip(&radii)
                .all(|(s, &rho)| s.mass >= params.delta[4] * omega * rho.powi(n as i32))
        })
        .collect())
}

/// `(G, A)` of the fixed-scale inequality: supported atoms of the cylinder
/// whose closed-ball curvature stays below `(2γ_n)^{-1} μ^{1-1/n}`,
/// respectively `ε μ^{1-1/n}`, at every schedule radius.
pub fn good_sets_g_a(
    v: &DiscreteVarifold,
    c: &Cylinder,
    params: &ApproxParams,
    constants: &Constants,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_inputs(v, c)?;
    let radii = params.schedule.radii(c.radius())?;
    let scanner = BallScanner::new(v, c);
    let n = v.n();
    let g_threshold = 1.0 / (2.0 * constants.isoperimetric_gamma);
    let flags: Vec<(usize, bool, bool)> = in_cylinder_atoms(v, c)
        .into_par_iter()
        .filter(|&i| v.atoms()[i].mass() > 0.0)
        .map(|i| {
            let sums = scanner.scan(&v.atoms()[i].position, &radii, true);
            let in_g = sums.iter().all(|s| !curvature_exceeds(s, g_threshold, n));
            let in_a = sums.iter().all(|s| !curvature_exceeds(s, params.eps, n));
            (i, in_g, in_a)
        })
        .collect();
    let g = flags.iter().filter(|f| f.1).map(|f| f.0).collect();
    let a = flags.iter().filter(|f| f.2).map(|f| f.0).collect();
    Ok((g, a))
}

/// Class of a fiber cell by the total multiplicity of its `A`-atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    /// Exactly `Q`.
    Y,
    /// Fewer than `Q`.
    Z,
    /// More than `Q`.
    N,
}

impl CellClass {
    fn label(self) -> &'static str {
        match self {
            CellClass::Y => "Y",
            CellClass::Z => "Z",
            CellClass::N => "N",
        }
    }
}

/// The estimate `𝓛^n(C) + μ(D) <= Γ μ(B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conclusion3 {
    pub lebesgue_c: f64,
    pub mass_d: f64,
    pub mass_b: f64,
    /// `None` when both sides vanish.
    pub ratio: Option<f64>,
    pub gamma: f64,
}

impl Conclusion3 {
    pub fn holds(&self) -> bool {
        self.ratio.map_or(true, |r| r <= self.gamma)
    }
}

/// The one-sided Lipschitz pairing between `H` and the `Y` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Conclusion4 {
    /// `H` atoms violating `|σ(x - a)| <= h - δ_4 r`.
    pub height_violations: usize,
    /// Largest `λ <= 1` such that every pair at base distance below `λ r`
    /// succeeds.
    pub lambda: f64,
    pub pairs_checked: usize,
    /// `A`-atoms of positive mass outside `H`.
    pub a_outside_h: usize,
}

/// Affine-approximation relations checked on `Y` cells with finite
/// difference jets of `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conclusion7 {
    pub cells: usize,
    /// `H` atoms with `‖P - P_T‖ > |Af|`, operator norm on the left.
    pub tilt_violations: usize,
    /// Largest `|Af|^2 / (Q (1 + Lip f^2) max ‖P - P_T‖^2)`.
    pub max_affine_ratio: f64,
}

/// Numerical diagnostics of the approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxDiagnostics {
    pub cell_width: f64,
    pub lip_f: f64,
    pub lip_bound: f64,
    /// Every `Y` cell carries multiplicity exactly `Q`.
    pub counting_holds: bool,
    pub conclusion3: Conclusion3,
    pub conclusion4: Conclusion4,
    /// Measure of `Y` cells adjacent to a non-`Y` cell.
    pub boundary_measure: f64,
    pub conclusion7: Option<Conclusion7>,
    /// `ν(A) = Σ θ w Λ_n(p_T | T_x)` over `A`.
    pub coarea_nu: f64,
    /// Cell-counted projected mass `Σ_cells (Σ θ) dx^n` over `A`.
    pub coarea_cells: f64,
    /// `|ν(A) - coarea_cells|`.
    pub coarea_defect: f64,
    /// `ν(A) - (1 - n ε²) μ(A)`, nonnegative when the coarea estimate holds.
    pub coarea_margin: f64,
    pub warnings: Vec<String>,
}

/// The approximation and its diagnostics. Atom sets index the input
/// varifold; cell sets index `cells`.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxResult {
    pub bad: Vec<usize>,
    pub graphical: Vec<usize>,
    pub preliminary: Vec<usize>,
    pub good: Vec<usize>,
    pub good_eps: Vec<usize>,
    /// Lattice index of each cell; the cell center is `π(a) + k dx`.
    pub cells: Vec<Vec<i64>>,
    pub class: Vec<CellClass>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    pub n_set: Vec<usize>,
    /// `A`-atoms of each cell.
    pub cell_atoms: Vec<Vec<usize>>,
    /// `f` on `Y`, in base coordinates relative to `π(a)`.
    pub f: QField,
    pub diagnostics: ApproxDiagnostics,
}

fn base_coords(c: &Cylinder, x: &Point) -> DVector<f64> {
    let rel = x - c.center();
    DVector::from_iterator(c.axis().plane_dim(), c.axis().basis().iter().map(|e| e.dot(&rel)))
}

fn height_coords(basis: &[Point], x: &Point) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.iter().map(|e| e.dot(x)))
}

fn cell_assignment(
    v: &DiscreteVarifold,
    c: &Cylinder,
    atoms: &[usize],
    dx: f64,
    lookup: &HashMap<Vec<i64>, usize>,
    cells: usize,
) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); cells];
    for &i in atoms {
        let base = base_coords(c, &v.atoms()[i].position) / dx;
        let rounded: Vec<i64> = base.iter().map(|b| b.round() as i64).collect();
        let cell = lookup.get(&rounded).copied().or_else(|| {
            let truncated: Vec<i64> = base.iter().map(|b| b.trunc() as i64).collect();
            lookup.get(&truncated).copied()
        });
        if let Some(k) = cell {
            out[k].push(i);
        }
    }
    out
}

fn dist_to_cylinder(c: &Cylinder, x: &Point) -> f64 {
    let w = x - c.center();
    let lateral = c.axis().projection() * &w;
    let vertical = (w - &lateral).norm();
    let over_r = (lateral.norm() - c.radius()).max(0.0);
    let over_h = match c.height() {
        Height::Finite(h) => (vertical - h).max(0.0),
        Height::Infinite => 0.0,
    };
    over_r.hypot(over_h)
}

/// Mass hypotheses of the approximation, returned as warnings naming the
/// failed inequality.
pub fn check_hypotheses(v: &DiscreteVarifold, c: &Cylinder, params: &ApproxParams, constants: &Constants) -> Vec<String> {
    let mut warnings = Vec::new();
    let n = v.n();
    let r = c.radius();
    let vol = constants.unit_ball_volume * r.powi(n as i32);
    let q = params.q as f64;
    let [d1, d2, d3, d4, _] = params.delta;
    let mass_c = v.measure(|x| c.contains(x));
    if mass_c < (q - 1.0 + d1) * vol {
        warnings.push(format!("mass_lower: mu(C)={} < (Q-1+delta1) omega r^n={}", fmt_f64(mass_c), fmt_f64((q - 1.0 + d1) * vol)));
    }
    if mass_c > (q + 1.0 - d2) * vol {
        warnings.push(format!("mass_upper: mu(C)={} > (Q+1-delta2) omega r^n={}", fmt_f64(mass_c), fmt_f64((q + 1.0 - d2) * vol)));
    }
    if let Height::Finite(h) = c.height() {
        if h <= 2.0 * d4 * r {
            warnings.push(format!("height: h={} <= 2 delta4 r={}", fmt_f64(h), fmt_f64(2.0 * d4 * r)));
        }
        let outer = c.resized(r, Height::Finite(h + d4 * r)).expect("positive height");
        let inner_h = h - 2.0 * d4 * r;
        let slab = v.measure(|x| {
            outer.contains(x)
                && !(inner_h > 0.0 && c.resized(r, Height::Finite(inner_h)).expect("positive").contains(x))
        });
        if slab > (1.0 - d3) * vol {
            warnings.push(format!("slab: mass {} > (1-delta3) omega r^n={}", fmt_f64(slab), fmt_f64((1.0 - d3) * vol)));
        }
    }
    let mass_u = v.measure(|x| dist_to_cylinder(c, x) < 2.0 * r);
    if mass_u > params.mass_bound * vol {
        warnings.push(format!("neighbourhood: mu(U)={} > M omega r^n={}", fmt_f64(mass_u), fmt_f64(params.mass_bound * vol)));
    }
    warnings
}

/// Builds `B`, `A`, `H`, the good sets, the cell classes and `f`, and
/// evaluates the conclusion diagnostics. Hypothesis failures become
/// warnings; an empty `Y` is not an error here.
pub fn build_approximation(
    v: &DiscreteVarifold,
    c: &Cylinder,
    params: &ApproxParams,
    constants: &Constants,
) -> Result<ApproxResult> {
    check_inputs(v, c)?;
    params.validate(v.n(), constants)?;
    let n = v.n();
    let r = c.radius();
    let qq = params.q;
    let dx = params.cell_width.unwrap_or(v.mesh_scale());
    if !(dx > 0.0) {
        return Err(invalid("cell width must be positive"));
    }
    let mut warnings = check_hypotheses(v, c, params, constants);
    for flag in constants.placeholder_flags() {
        warnings.push(flag.to_string());
    }

    let inside = in_cylinder_atoms(v, c);
    let bad = bad_set(v, c, params)?;
    let is_bad = membership(v.len(), &bad);
    let graphical: Vec<usize> = inside.iter().copied().filter(|&i| !is_bad[i]).collect();
    let preliminary = preliminary_graphical_part(v, c, params, constants)?;
    let (good, good_eps) = good_sets_g_a(v, c, params, constants)?;

    let cells = cell_indices(n, r, dx);
    let lookup: HashMap<Vec<i64>, usize> = cells.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let cell_atoms = cell_assignment(v, c, &graphical, dx, &lookup, cells.len());
    let all_cell_atoms = cell_assignment(v, c, &inside, dx, &lookup, cells.len());
    let mult = |atoms: &[usize]| -> usize { atoms.iter().map(|&i| v.atoms()[i].multiplicity as usize).sum() };
    let class: Vec<CellClass> = cell_atoms
        .iter()
        .map(|a| match mult(a).cmp(&qq) {
            std::cmp::Ordering::Equal => CellClass::Y,
            std::cmp::Ordering::Less => CellClass::Z,
            std::cmp::Ordering::Greater => CellClass::N,
        })
        .collect();
    let pick = |k: CellClass| -> Vec<usize> { (0..cells.len()).filter(|&i| class[i] == k).collect() };
    let (y, z, n_set) = (pick(CellClass::Y), pick(CellClass::Z), pick(CellClass::N));

    let height_basis = c.axis().complement_basis();
    let values: Vec<Option<QValue>> = cell_atoms
        .iter()
        .zip(&class)
        .map(|(atoms, &k)| {
            (k == CellClass::Y).then(|| {
                let pts = atoms
                    .iter()
                    .flat_map(|&i| {
                        let a = &v.atoms()[i];
                        std::iter::repeat(height_coords(&height_basis, &a.position)).take(a.multiplicity as usize)
                    })
                    .collect();
                QValue::new(pts).expect("finite heights")
            })
        })
        .collect();
    let f = QField::from_fn(n, v.m(), qq, r, dx, |x| {
        let k: Vec<i64> = x.iter().map(|t| (t / dx).round() as i64).collect();
        lookup.get(&k).and_then(|&i| values[i].clone())
    })?;

    let counting_holds = y.iter().all(|&i| mult(&cell_atoms[i]) == qq);
    let lip_f = all_pairs_lipschitz(&f);
    if lip_f > params.lip {
        warnings.push(format!("lipschitz: Lip f={} > L={}", fmt_f64(lip_f), fmt_f64(params.lip)));
    }

    // Conclusion (3): C = ball ∖ (Y ∖ π(B)), D = cylinder ∩ π^{-1}(C).
    let cell_area = dx.powi(n as i32);
    let in_c_set: Vec<bool> = (0..cells.len())
        .map(|i| class[i] != CellClass::Y || all_cell_atoms[i].iter().any(|&j| is_bad[j]))
        .collect();
    let lebesgue_c = in_c_set.iter().filter(|&&b| b).count() as f64 * cell_area;
    let mass_d = pairwise_sum(
        &(0..cells.len())
            .filter(|&i| in_c_set[i])
            .flat_map(|i| all_cell_atoms[i].iter().map(|&j| v.atoms()[j].mass()))
            .collect::<Vec<_>>(),
    );
    let mass_b = pairwise_sum(&bad.iter().map(|&j| v.atoms()[j].mass()).collect::<Vec<_>>());
    let numerator = lebesgue_c + mass_d;
    let ratio = if numerator == 0.0 && mass_b == 0.0 {
        None
    } else {
        Some(numerator / mass_b)
    };
    let conclusion3 = Conclusion3 {
        lebesgue_c,
        mass_d,
        mass_b,
        ratio,
        gamma: gamma3(qq, n, params.delta[0]),
    };
    if !conclusion3.holds() {
        warnings.push(format!("conclusion3: ratio {} > Gamma {}", fmt_f64(ratio.unwrap_or(0.0)), fmt_f64(conclusion3.gamma)));
    }

    let conclusion4 = pairing_check(v, c, params, &preliminary, &graphical, &cells, &cell_atoms, &class, dx);

    let boundary_measure = y
        .iter()
        .filter(|&&i| {
            (0..n).any(|axis| {
                [-1i64, 1].iter().any(|&s| {
                    let mut k = cells[i].clone();
                    k[axis] += s;
                    lookup.get(&k).map_or(true, |&j| class[j] != CellClass::Y)
                })
            })
        })
        .count() as f64
        * cell_area;

    let conclusion7 = affine_check(v, c, params, &f, lip_f, &preliminary, &all_cell_atoms, &lookup, &cells);

    let coarea_nu = pairwise_sum(
        &graphical
            .iter()
            .map(|&i| {
                let a = &v.atoms()[i];
                a.mass() * jacobian_lambda(&a.tangent, c.axis()).expect("same dimensions")
            })
            .collect::<Vec<_>>(),
    );
    let coarea_cells = cell_atoms.iter().map(|a| mult(a) as f64).sum::<f64>() * cell_area;
    let mass_a = pairwise_sum(&graphical.iter().map(|&i| v.atoms()[i].mass()).collect::<Vec<_>>());
    let coarea_margin = coarea_nu - (1.0 - n as f64 * params.eps * params.eps) * mass_a;

    Ok(ApproxResult {
        bad,
        graphical,
        preliminary,
        good,
        good_eps,
        cells,
        class,
        y,
        z,
        n_set,
        cell_atoms,
        f,
        diagnostics: ApproxDiagnostics {
            cell_width: dx,
            lip_f,
            lip_bound: params.lip,
            counting_holds,
            conclusion3,
            conclusion4,
            boundary_measure,
            conclusion7,
            coarea_nu,
            coarea_cells,
            coarea_defect: (coarea_nu - coarea_cells).abs(),
            coarea_margin,
            warnings,
        },
    })
}

fn membership(len: usize, set: &[usize]) -> Vec<bool> {
    let mut out = vec![false; len];
    for &i in set {
        out[i] = true;
    }
    out
}

/// `max 𝒢(f(x), f(y)) / |x - y|` over all pairs of masked-in nodes.
pub fn all_pairs_lipschitz(f: &QField) -> f64 {
    let nodes: Vec<usize> = (0..f.node_count()).filter(|&i| f.is_masked_in(i)).collect();
    nodes
        .par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let xi = f.node_position(i);
            let fi = f.sample(i).expect("masked in");
            nodes[a + 1..]
                .iter()
                .map(|&j| {
                    let d = (f.node_position(j) - &xi).norm();
                    metric_g(fi, f.sample(j).expect("masked in")).expect("uniform shape") / d
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn pairing_check(
    v: &DiscreteVarifold,
    c: &Cylinder,
    params: &ApproxParams,
    preliminary: &[usize],
    graphical: &[usize],
    cells: &[Vec<i64>],
    cell_atoms: &[Vec<usize>],
    class: &[CellClass],
    dx: f64,
) -> Conclusion4 {
    let r = c.radius();
    let d4 = params.delta[3];
    let height_basis = c.axis().complement_basis();
    let center_height = height_coords(&height_basis, c.center());
    let height_violations = preliminary
        .iter()
        .filter(|&&i| match c.height() {
            Height::Finite(h) => (height_coords(&height_basis, &v.atoms()[i].position) - &center_height).norm() > h - d4 * r,
            Height::Infinite => false,
        })
        .count();
    let base: Vec<DVector<f64>> = v.atoms().iter().map(|a| base_coords(c, &a.position)).collect();
    let heights: Vec<DVector<f64>> = v.atoms().iter().map(|a| height_coords(&height_basis, &a.position)).collect();
    let y_cells: Vec<(DVector<f64>, &Vec<usize>)> = (0..cells.len())
        .filter(|&i| class[i] == CellClass::Y)
        .map(|i| (DVector::from_iterator(cells[i].len(), cells[i].iter().map(|&k| k as f64 * dx)), &cell_atoms[i]))
        .collect();
    let dist = |a: &DVector<f64>, b: &DVector<f64>| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let results: Vec<(usize, f64)> = preliminary
        .par_iter()
        .map(|&i| {
            let (b1, s1) = (&base[i], &heights[i]);
            let mut worst = f64::INFINITY;
            for (center, atoms) in &y_cells {
                let ok = atoms
                    .iter()
                    .any(|&j| dist(&heights[j], s1) <= params.lip * dist(&base[j], b1));
                if !ok {
                    worst = worst.min(dist(center, b1));
                }
            }
            (y_cells.len(), worst)
        })
        .collect();
    let pairs_checked = results.iter().map(|r| r.0).sum();
    let min_fail = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let in_h = membership(v.len(), preliminary);
    let a_outside_h = graphical
        .iter()
        .filter(|&&i| v.atoms()[i].mass() > 0.0 && !in_h[i])
        .count();
    Conclusion4 {
        height_violations,
        lambda: (min_fail / r).min(1.0),
        pairs_checked,
        a_outside_h,
    }
}

/// Spectral norm of `P_S - P_T`; the affine relations are stated in the
/// operator norm.
fn operator_dist(s: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    (s - t).symmetric_eigen().eigenvalues.amax()
}

#[allow(clippy::too_many_arguments)]
fn affine_check(
    v: &DiscreteVarifold,
    c: &Cylinder,
    params: &ApproxParams,
    f: &QField,
    lip_f: f64,
    preliminary: &[usize],
    all_cell_atoms: &[Vec<usize>],
    lookup: &HashMap<Vec<i64>, usize>,
    cells: &[Vec<i64>],
) -> Option<Conclusion7> {
    if f.masked_count() == 0 {
        return None;
    }
    let jets = branch_jets(f, lip_f.max(params.lip)).ok()?;
    let in_h = membership(v.len(), preliminary);
    let qq = params.q as f64;
    let mut checked = 0;
    let mut tilt_violations = 0;
    let mut max_ratio = 0.0f64;
    for (node, slots) in jets.iter().enumerate() {
        let Some(slots) = slots else { continue };
        let Some(&cell) = lookup.get(f.node_lattice(node)) else { continue };
        debug_assert_eq!(&cells[cell], f.node_lattice(node));
        let affine_sq: f64 = slots.iter().map(|s| s.jacobian.norm_squared()).sum();
        let tilts: Vec<f64> = all_cell_atoms[cell]
            .iter()
            .filter(|&&i| in_h[i])
            .map(|&i| operator_dist(v.atoms()[i].tangent.projection(), c.axis().projection()))
            .collect();
        if tilts.is_empty() {
            continue;
        }
        checked += 1;
        tilt_violations += tilts.iter().filter(|&&t| t > affine_sq.sqrt() * (1.0 + 1e-9)).count();
        let max_tilt_sq = tilts.iter().map(|t| t * t).fold(0.0, f64::max);
        let bound = qq * (1.0 + lip_f * lip_f) * max_tilt_sq;
        let ratio = if affine_sq == 0.0 {
            0.0
        } else if bound == 0.0 {
            f64::INFINITY
        } else {
            affine_sq / bound
        };
        max_ratio = max_ratio.max(ratio);
    }
    Some(Conclusion7 {
        cells: checked,
        tilt_violations,
        max_affine_ratio: max_ratio,
    })
}

/// Both sides of the height estimate for a `Q`-valued plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Conclusion6Report {
    /// `𝓛^n(ball ∖ Y) <= ½ ω_n (λ r / 6)^n` with the empirical `λ`.
    pub applicable: bool,
    pub lambda: f64,
    /// `‖dist(·, spt P)‖_{L^q(μ ⌞ H)}`.
    pub lhs: f64,
    /// `‖g‖_{L^q(𝓛^n ⌞ Y)}`.
    pub g_norm: f64,
    /// `𝓛^n(ball ∖ Y)`.
    pub missing_area: f64,
    /// `(12)^{n+1} Q`.
    pub factor: f64,
    /// Smallest constant in front of the area term making the estimate
    /// hold (0 if the `g` term alone suffices).
    pub gamma_empirical: f64,
    /// `sup_H dist(·, spt P)`.
    pub sup_lhs: f64,
    /// `‖g‖_∞ + 2 (𝓛^n(ball ∖ Y) / ω_n)^{1/n}`.
    pub sup_rhs: f64,
}

impl Conclusion6Report {
    pub fn sup_holds(&self) -> bool {
        self.sup_lhs <= self.sup_rhs * (1.0 + 1e-12) + 1e-15
    }
}

/// The height estimate for `res` and the plane `p` with finite `q`; the
/// sup form is always evaluated.
pub fn conclusion6_check(
    v: &DiscreteVarifold,
    c: &Cylinder,
    res: &ApproxResult,
    p: &QPlane,
    q: Exponent,
    constants: &Constants,
) -> Result<Conclusion6Report> {
    check_inputs(v, c)?;
    if p.axis() != c.axis() {
        return Err(Error::AxisMismatch("plane is not parallel to the cylinder axis".into()));
    }
    if p.q() != res.f.q() {
        return Err(invalid("plane and approximation have different Q"));
    }
    let n = v.n();
    let r = c.radius();
    let omega = constants.unit_ball_volume;
    let cell_area = res.f.cell_volume();
    let lambda = res.diagnostics.conclusion4.lambda;
    let missing_area = (res.cells.len() - res.y.len()) as f64 * cell_area;
    let applicable = missing_area <= 0.5 * omega * (lambda * r / 6.0).powi(n as i32);
    let dists: Vec<(f64, f64)> = res
        .preliminary
        .iter()
        .map(|&i| (p.dist_to_support(&v.atoms()[i].position), v.atoms()[i].mass()))
        .collect();
    let lhs = lq_norm(dists.iter().copied(), q);
    let sup_lhs = lq_norm(dists.iter().copied(), Exponent::Infinity);
    let g: Vec<(f64, f64)> = (0..res.f.node_count())
        .filter_map(|i| res.f.sample(i))
        .map(|s| (metric_g(s, p.offsets()).expect("same shape"), cell_area))
        .collect();
    let g_norm = lq_norm(g.iter().copied(), q);
    let g_sup = lq_norm(g.iter().copied(), Exponent::Infinity);
    let factor = 12f64.powi(n as i32 + 1) * p.q() as f64;
    let area_term = missing_area.powf(q.reciprocal() + 1.0 / n as f64);
    let excess = lhs / factor - g_norm;
    let gamma_empirical = if excess <= 0.0 {
        0.0
    } else if area_term > 0.0 {
        excess / area_term
    } else {
        f64::INFINITY
    };
    Ok(Conclusion6Report {
        applicable,
        lambda,
        lhs,
        g_norm,
        missing_area,
        factor,
        gamma_empirical,
        sup_lhs,
        sup_rhs: g_sup + 2.0 * (missing_area / omega).powf(1.0 / n as f64),
    })
}

impl ApproxDiagnostics {
    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let opt = |x: Option<f64>| x.map_or("vacuous".to_string(), fmt_f64);
        let _ = writeln!(s, "cell_width={}", fmt_f64(self.cell_width));
        let _ = writeln!(s, "lip_f={}", fmt_f64(self.lip_f));
        let _ = writeln!(s, "lip_bound={}", fmt_f64(self.lip_bound));
        let _ = writeln!(s, "counting_holds={}", self.counting_holds);
        let c3 = &self.conclusion3;
        let _ = writeln!(s, "c3_lebesgue_c={}", fmt_f64(c3.lebesgue_c));
        let _ = writeln!(s, "c3_mass_d={}", fmt_f64(c3.mass_d));
        let _ = writeln!(s, "c3_mass_b={}", fmt_f64(c3.mass_b));
        let _ = writeln!(s, "c3_ratio={}", opt(c3.ratio));
        let _ = writeln!(s, "c3_gamma={}", fmt_f64(c3.gamma));
        let _ = writeln!(s, "c3_holds={}", c3.holds());
        let c4 = &self.conclusion4;
        let _ = writeln!(s, "c4_height_violations={}", c4.height_violations);
        let _ = writeln!(s, "c4_lambda={}", fmt_f64(c4.lambda));
        let _ = writeln!(s, "c4_pairs_checked={}", c4.pairs_checked);
        let _ = writeln!(s, "c4_a_outside_h={}", c4.a_outside_h);
        let _ = writeln!(s, "c5_boundary_measure={}", fmt_f64(self.boundary_measure));
        match &self.conclusion7 {
            Some(c7) => {
                let _ = writeln!(s, "c7_cells={}", c7.cells);
                let _ = writeln!(s, "c7_tilt_violations={}", c7.tilt_violations);
                let _ = writeln!(s, "c7_max_affine_ratio={}", fmt_f64(c7.max_affine_ratio));
            }
            None => {
                let _ = writeln!(s, "c7_cells=unavailable");
            }
        }
        let _ = writeln!(s, "coarea_nu={}", fmt_f64(self.coarea_nu));
        let _ = writeln!(s, "coarea_cells={}", fmt_f64(self.coarea_cells));
        let _ = writeln!(s, "coarea_defect={}", fmt_f64(self.coarea_defect));
        let _ = writeln!(s, "coarea_margin={}", fmt_f64(self.coarea_margin));
        let _ = writeln!(s, "warnings={}", self.warnings.join(";"));
        s
    }
}

fn write_index_csv(path: &Path, header: &str, rows: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record([header]).map_err(Error::from)?;
    for r in rows {
        w.write_record([r.to_string()]).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

impl ApproxResult {
    /// Writes the result into `dir`: atom sets `bad.csv`, `graphical.csv`,
    /// `preliminary.csv`, `good.csv`, `good_eps.csv`; `cells.csv` with each
    /// cell's lattice index and class; `y.csv`, `z.csv`, `n.csv`; the field
    /// `f.csv`; and `diagnostics.txt`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, set) in [
            ("bad", &self.bad),
            ("graphical", &self.graphical),
            ("preliminary", &self.preliminary),
            ("good", &self.good),
            ("good_eps", &self.good_eps),
        ] {
            write_index_csv(&dir.join(format!("{name}.csv")), "atom", set)?;
        }
        for (name, set) in [("y", &self.y), ("z", &self.z), ("n", &self.n_set)] {
            write_index_csv(&dir.join(format!("{name}.csv")), "cell", set)?;
        }
        let mut w = csv::Writer::from_path(dir.join("cells.csv")).map_err(Error::from)?;
        let n = self.cells.first().map_or(0, Vec::len);
        let mut header = vec!["cell".to_string()];
        header.extend((1..=n).map(|i| format!("k_{i}")));
        header.push("class".into());
        header.push("atoms".into());
        w.write_record(&header).map_err(Error::from)?;
        for (i, k) in self.cells.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(k.iter().map(|x| x.to_string()));
            row.push(self.class[i].label().into());
            row.push(self.cell_atoms[i].len().to_string());
            w.write_record(&row).map_err(Error::from)?;
        }
        w.flush()?;
        write_qfield_csv(&self.f, dir.join("f.csv"))?;
        fs::write(dir.join("diagnostics.txt"), self.diagnostics.to_key_values())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
