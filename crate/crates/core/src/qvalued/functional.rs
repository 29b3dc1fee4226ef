//! Height and tilt functionals of `Q`-valued fields, the best-constant
//! height, Lipschitz extension and the Sobolev-Poincaré comparison.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::numeric::{lq_norm, Exponent};

use super::{branch_jets, metric_g, optimal_matching, QField, QValue};

const RESTARTS: usize = 20;
const PROBES: usize = 100;
const MAX_ITERATIONS: usize = 200;
const MAX_SEED_CANDIDATES: usize = 256;
const OPTIMIZER_SEED: u64 = 0x51ea_11ed;

fn masked_samples(f: &QField) -> Result<Vec<&QValue>> {
    let s: Vec<&QValue> = f.samples().iter().flatten().collect();
    if s.is_empty() {
        return Err(Error::EmptyDomain("field has no masked-in nodes".into()));
    }
    Ok(s)
}

fn height_of(samples: &[&QValue], s: &QValue, q: Exponent, cell: f64) -> f64 {
    let dists: Vec<f64> = samples
        .par_iter()
        .map(|v| metric_g(v, s).expect("uniform shape"))
        .collect();
    lq_norm(dists.into_iter().map(|d| (d, cell)), q)
}

/// The `q`-height `‖x ↦ 𝒢(f(x), s)‖_{L^q}` over the masked domain, with
/// each node standing for a cell of volume `dx^n`.
pub fn q_height(f: &QField, s: &QValue, q: Exponent) -> Result<f64> {
    check_dim(f.q(), s.q())?;
    check_dim(f.m(), s.m())?;
    let samples = masked_samples(f)?;
    Ok(height_of(&samples, s, q, f.cell_volume()))
}

/// One alternating step: match every sample to `s`, then move each slot to
/// the power mean of the points assigned to it (`q = ∞`: approximate
/// minimax center of the stacked assignment vectors).
fn improve(samples: &[&QValue], s: &QValue, q: Exponent) -> QValue {
    let (qq, m) = (s.q(), s.m());
    let matched: Vec<(Vec<usize>, f64)> = samples
        .par_iter()
        .map(|v| optimal_matching(v, s).expect("uniform shape"))
        .collect();
    // Stacked vectors: slot j of sample x receives the point matched to it.
    let stacked: Vec<Vec<&DVector<f64>>> = samples
        .iter()
        .zip(&matched)
        .map(|(v, (sigma, _))| {
            let mut slots = vec![&v.points()[0]; qq];
            for (i, &j) in sigma.iter().enumerate() {
                slots[j] = &v.points()[i];
            }
            slots
        })
        .collect();
    let slots: Vec<DVector<f64>> = match q {
        Exponent::Finite(p) => {
            let scale = matched.iter().map(|(_, c)| c.sqrt()).fold(0.0, f64::max);
            let floor = 1e-12 * scale.max(1e-300);
            let weights: Vec<f64> = matched
                .iter()
                .map(|(_, c)| if p == 2.0 { 1.0 } else { c.sqrt().max(floor).powf(p - 2.0) })
                .collect();
            let total: f64 = weights.iter().sum();
            (0..qq)
                .map(|j| {
                    let mut acc = DVector::zeros(m);
                    for (w, st) in weights.iter().zip(&stacked) {
                        acc.axpy(*w, st[j], 1.0);
                    }
                    acc / total
                })
                .collect()
        }
        Exponent::Infinity => {
            // Badoiu-Clarkson iteration for the minimal enclosing ball center.
            let mut center: Vec<DVector<f64>> = s.points().to_vec();
            for step in 1..=MAX_ITERATIONS {
                let far = stacked
                    .iter()
                    .map(|st| (0..qq).map(|j| (st[j] - &center[j]).norm_squared()).sum::<f64>())
                    .enumerate()
                    .fold((0, -1.0), |b, (i, d)| if d > b.1 { (i, d) } else { b })
                    .0;
                let t = 1.0 / (step as f64 + 1.0);
                for (j, c) in center.iter_mut().enumerate() {
                    *c += (stacked[far][j] - &*c) * t;
                }
            }
            center
        }
    };
    QValue::new(slots).expect("finite slots")
}

fn descend(samples: &[&QValue], start: QValue, q: Exponent, cell: f64) -> (QValue, f64) {
    let mut best = (start.clone(), height_of(samples, &start, q, cell));
    let mut current = start;
    for _ in 0..MAX_ITERATIONS {
        let next = improve(samples, &current, q);
        let value = height_of(samples, &next, q, cell);
        let improved = value < best.1 * (1.0 - 1e-13);
        if value < best.1 {
            best = (next.clone(), value);
        }
        if !improved {
            break;
        }
        current = next;
    }
    best
}

fn spread(samples: &[&QValue]) -> f64 {
    let m = samples[0].m();
    let count = (samples.len() * samples[0].q()) as f64;
    let mut centroid = DVector::zeros(m);
    for v in samples {
        for p in v.points() {
            centroid += p;
        }
    }
    centroid /= count;
    samples
        .iter()
        .flat_map(|v| v.points().iter())
        .map(|p| (p - &centroid).norm())
        .fold(0.0, f64::max)
}

fn perturbed<R: Rng>(base: &QValue, scale: f64, rng: &mut R) -> QValue {
    let pts = base
        .points()
        .iter()
        .map(|p| p.map(|x| x + scale * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    QValue::new(pts).expect("finite")
}

/// An approximate minimizer `s*` of `s ↦ h_q(f, s)` and its height.
///
/// Seeds are the node values themselves (so constant fields give exactly
/// zero); the best seed and 20 randomized restarts are refined by
/// alternating matching and power-mean updates, and 100 random probes are
/// checked at the end, adopting any that does better.
pub fn q_height_best(f: &QField, q: Exponent) -> Result<(QValue, f64)> {
    let samples = masked_samples(f)?;
    let cell = f.cell_volume();
    let stride = samples.len().div_ceil(MAX_SEED_CANDIDATES);
    let seeds: Vec<(QValue, f64)> = samples
        .iter()
        .step_by(stride)
        .map(|s| ((*s).clone(), height_of(&samples, s, q, cell)))
        .collect();
    let warm = seeds
        .iter()
        .fold(None::<&(QValue, f64)>, |b, c| match b {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
        .expect("nonempty")
        .clone();
    if warm.1 == 0.0 {
        return Ok(warm);
    }
    let width = spread(&samples);
    let mut rng = ChaCha8Rng::seed_from_u64(OPTIMIZER_SEED);
    let mut starts = vec![warm.0.clone()];
    for _ in 0..RESTARTS {
        let base = samples[rng.gen_range(0..samples.len())];
        starts.push(perturbed(base, 0.1 * width, &mut rng));
    }
    let results: Vec<(QValue, f64)> = starts
        .into_par_iter()
        .map(|s| descend(&samples, s, q, cell))
        .collect();
    let mut best = warm;
    for r in results {
        if r.1 < best.1 {
            best = r;
        }
    }
    for _ in 0..PROBES {
        let base = samples[rng.gen_range(0..samples.len())];
        let probe = perturbed(base, 0.1 * width, &mut rng);
        let value = height_of(&samples, &probe, q, cell);
        if value < best.1 {
            best = descend(&samples, probe, q, cell);
        }
    }
    Ok(best)
}

/// The `q`-tilt: `L^q` norm of `|Af|`, where `|Af(x)|² = Σ_i ‖Df_i(x)‖²_F`
/// sums squared Frobenius norms of the branch derivatives at `x`.
/// Derivatives are finite differences along the branches of the field,
/// decomposed with its measured Lipschitz constant.
pub fn q_tilt(f: &QField, q: Exponent) -> Result<f64> {
    masked_samples(f)?;
    let jets = branch_jets(f, f.lipschitz_constant())?;
    let cell = f.cell_volume();
    let values: Vec<(f64, f64)> = jets
        .iter()
        .flatten()
        .map(|slots| {
            let sq: f64 = slots.iter().map(|j| j.jacobian.norm_squared()).sum();
            (sq.sqrt(), cell)
        })
        .collect();
    Ok(lq_norm(values, q))
}

/// Extends `f` from its masked domain to every node selected by `target`.
///
/// Nodes are filled in breadth-first layers: a new node receives the
/// slotwise average of its already-filled axis neighbors, each matched
/// optimally to the first of them. The new values are then relaxed by
/// Jacobi sweeps of the same matched average until they settle. Nodes not
/// connected to the domain copy the nearest filled node. With
/// `clip = Some((c, R))` every new point is retracted radially into the
/// closed ball `B̄(c, R)`.
pub fn lipschitz_extend(
    f: &QField,
    target: impl Fn(usize) -> bool,
    clip: Option<(&DVector<f64>, f64)>,
) -> Result<QField> {
    masked_samples(f)?;
    if let Some((c, r)) = clip {
        check_dim(f.m(), c.len())?;
        if !(r >= 0.0) {
            return Err(invalid("clip radius must be nonnegative"));
        }
    }
    let mut out = f.clone();
    let wanted: Vec<bool> = (0..f.node_count()).map(|i| target(i) && !f.is_masked_in(i)).collect();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut queued = vec![false; f.node_count()];
    let enqueue_neighbors = |node: usize, queue: &mut VecDeque<usize>, queued: &mut Vec<bool>| {
        for axis in 0..f.n() {
            for sign in [-1, 1] {
                if let Some(j) = f.neighbor(node, axis, sign) {
                    if wanted[j] && !queued[j] {
                        queued[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    };
    for i in 0..f.node_count() {
        if f.is_masked_in(i) {
            enqueue_neighbors(i, &mut queue, &mut queued);
        }
    }
    let retract = |v: QValue| -> QValue {
        match clip {
            Some((c, r)) => {
                let pts = v
                    .points()
                    .iter()
                    .map(|p| {
                        let d = (p - c).norm();
                        if d > r {
                            c + (p - c) * (r / d)
                        } else {
                            p.clone()
                        }
                    })
                    .collect();
                QValue::new(pts).expect("finite")
            }
            None => v,
        }
    };
    // Process layer by layer so each layer only sees earlier layers.
    while !queue.is_empty() {
        let layer: Vec<usize> = queue.drain(..).collect();
        let mut filled = Vec::with_capacity(layer.len());
        for &node in &layer {
            let neighbors: Vec<&QValue> = (0..f.n())
                .flat_map(|axis| [-1, 1].map(|s| f.neighbor(node, axis, s)))
                .flatten()
                .filter_map(|j| out.sample(j))
                .collect();
            let avg = matched_mean(neighbors[0], &neighbors)?;
            filled.push((node, avg));
        }
        for (node, v) in filled {
            out.set_sample(node, Some(v))?;
        }
        for &node in &layer {
            enqueue_neighbors(node, &mut queue, &mut queued);
        }
    }
    smooth(&mut out, &wanted)?;
    // Components without a path to the domain.
    let sources: Vec<usize> = (0..f.node_count()).filter(|&i| out.is_masked_in(i)).collect();
    for i in 0..f.node_count() {
        if wanted[i] && out.is_masked_in(i) {
            let v = out.sample(i).expect("filled").clone();
            out.set_sample(i, Some(retract(v)))?;
        } else if wanted[i] {
            let x = f.node_position(i);
            let nearest = sources
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = (f.node_position(a) - &x).norm();
                    let db = (f.node_position(b) - &x).norm();
                    da.total_cmp(&db)
                })
                .expect("nonempty domain");
            let v = out.sample(nearest).expect("source").clone();
            out.set_sample(i, Some(retract(v)))?;
        }
    }
    Ok(out)
}

/// Matched neighbor average of a filled node, with its own value as the
/// matching reference.
fn neighbor_average(field: &QField, node: usize) -> Result<Option<QValue>> {
    let own = field.sample(node).expect("filled");
    let neighbors: Vec<&QValue> = (0..field.n())
        .flat_map(|axis| [-1, 1].map(|s| field.neighbor(node, axis, s)))
        .flatten()
        .filter_map(|j| field.sample(j))
        .collect();
    if neighbors.is_empty() {
        return Ok(None);
    }
    Ok(Some(matched_mean(own, &neighbors)?))
}

/// Slotwise mean of `values`, each matched optimally to `reference`.
/// Accumulates offsets from the reference so that equal inputs reproduce
/// the reference exactly.
fn matched_mean(reference: &QValue, values: &[&QValue]) -> Result<QValue> {
    let mut acc: Vec<DVector<f64>> = vec![DVector::zeros(reference.m()); reference.q()];
    for other in values {
        let (sigma, _) = optimal_matching(reference, other)?;
        for (i, &j) in sigma.iter().enumerate() {
            acc[i] += &other.points()[j] - &reference.points()[i];
        }
    }
    let k = values.len() as f64;
    QValue::new(
        acc.into_iter()
            .zip(reference.points())
            .map(|(d, r)| r + d / k)
            .collect(),
    )
}

/// Jacobi sweeps of the matched neighbor average over the new nodes, with
/// the original domain held fixed: a discrete harmonic extension, which
/// removes the staircase left by the layer fill.
fn smooth(field: &mut QField, new_nodes: &[bool]) -> Result<()> {
    const SWEEPS: usize = 500;
    let active: Vec<usize> = (0..field.node_count())
        .filter(|&i| new_nodes[i] && field.is_masked_in(i))
        .collect();
    if active.is_empty() {
        return Ok(());
    }
    let scale = field
        .samples()
        .iter()
        .flatten()
        .flat_map(|v| v.points().iter().map(|p| p.norm()))
        .fold(0.0, f64::max);
    for _ in 0..SWEEPS {
        let updates: Vec<Option<QValue>> = active
            .par_iter()
            .map(|&i| neighbor_average(field, i))
            .collect::<Result<_>>()?;
        let mut change = 0.0f64;
        for (&i, u) in active.iter().zip(updates) {
            if let Some(u) = u {
                change = change.max(metric_g(field.sample(i).expect("filled"), &u)?);
                field.set_sample(i, Some(u))?;
            }
        }
        if change <= 1e-12 * (1.0 + scale) {
            break;
        }
    }
    Ok(())
}

/// Both sides of the `Q`-valued Sobolev-Poincaré inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincareReport {
    pub tilt_exponent: Exponent,
    /// `q* = nq/(n-q)` for `q < n`, `∞` for `q > n`.
    pub height_exponent: Exponent,
    pub best_value: QValue,
    pub height: f64,
    pub tilt: f64,
    /// `height / tilt`; `None` when both vanish, `+∞` when only the tilt
    /// vanishes.
    pub ratio: Option<f64>,
}

impl PoincareReport {
    /// Whether a vanishing tilt came with a vanishing height.
    pub fn zero_case_consistent(&self) -> bool {
        self.tilt > 0.0 || self.height == 0.0
    }
}

/// Evaluates `h_{q*}(f)` (or `h_∞(f)` for `q > n`) against `t_q(f)`.
pub fn sobolev_poincare_check(f: &QField, q: Exponent) -> Result<PoincareReport> {
    let n = f.n() as f64;
    let height_exponent = match q {
        Exponent::Finite(v) if v == n => {
            return Err(invalid("the exponent q = n is excluded"));
        }
        Exponent::Finite(v) if v < n => q.sobolev_conjugate(f.n()).expect("q < n"),
        _ => Exponent::Infinity,
    };
    let tilt = q_tilt(f, q)?;
    let (best_value, height) = q_height_best(f, height_exponent)?;
    let ratio = if tilt > 0.0 {
        Some(height / tilt)
    } else if height == 0.0 {
        None
    } else {
        Some(f64::INFINITY)
    };
    Ok(PoincareReport {
        tilt_exponent: q,
        height_exponent,
        best_value,
        height,
        tilt,
        ratio,
    })
}
