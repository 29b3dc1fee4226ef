//! Decomposition of a Lipschitz `Q`-valued field into single-valued
//! branches, and finite-difference jets along them.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

use super::{bounded_matching, optimal_matching, QField};

/// A single-valued Lipschitz function on part of the field's lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    nodes: Vec<usize>,
    values: Vec<DVector<f64>>,
    lipschitz: f64,
}

impl Branch {
    /// Nodes of the branch domain, increasing.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value_at(&self, node: usize) -> Option<&DVector<f64>> {
        self.nodes.binary_search(&node).ok().map(|i| &self.values[i])
    }

    /// Largest difference quotient over adjacent nodes of the domain.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Branches whose graphs together make up the graph of the field, with
/// multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchSet {
    pub branches: Vec<Branch>,
    /// `slot_branch[node][slot]`: the branch carrying that slot.
    slot_branch: Vec<Vec<usize>>,
    pub tolerance: f64,
}

impl BranchSet {
    /// Branch index owning slot `slot` (canonical order) at `node`.
    pub fn branch_of(&self, node: usize, slot: usize) -> Option<usize> {
        self.slot_branch.get(node).and_then(|s| s.get(slot)).copied()
    }
}

/// Union-find over slots that refuses merges putting two slots of the same
/// node into one component.
struct SlotForest {
    parent: Vec<usize>,
    nodes: Vec<BTreeSet<usize>>,
}

impl SlotForest {
    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut y = x;
        while self.parent[y] != root {
            let next = self.parent[y];
            self.parent[y] = root;
            y = next;
        }
        root
    }

    fn union_if_disjoint(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb || !self.nodes[ra].is_disjoint(&self.nodes[rb]) {
            return;
        }
        // Smaller set joins the larger; the smaller root index wins ties.
        let (big, small) = if (self.nodes[ra].len(), rb) >= (self.nodes[rb].len(), ra) {
            (ra, rb)
        } else {
            (rb, ra)
        };
        let moved = std::mem::take(&mut self.nodes[small]);
        self.nodes[big].extend(moved);
        self.parent[small] = big;
    }
}

/// Splits `f` into single-valued branches.
///
/// Slots at adjacent nodes are linked when a matching pairs them within
/// `d = (lip_bound + 4 dx lip_bound) · dx`: the optimal matching is used if
/// its longest pair is below `d`, otherwise any matching with all pairs
/// below `d`. Linked slots form the branches. Fails if some pair of
/// adjacent nodes admits no such matching, i.e. the values cannot be paired
/// with displacements within `lip_bound`.
pub fn branch_decompose(f: &QField, lip_bound: f64) -> Result<BranchSet> {
    if !(lip_bound >= 0.0 && lip_bound.is_finite()) {
        return Err(invalid(format!("Lipschitz bound must be nonnegative, got {lip_bound}")));
    }
    let (q, dx) = (f.q(), f.dx());
    let tolerance = 4.0 * dx * lip_bound;
    let slack = 1e-9 * (1.0 + lip_bound) + 1e-12;
    let d = (lip_bound + tolerance) * dx + slack * dx;
    let count = f.node_count();
    let mut forest = SlotForest {
        parent: (0..count * q).collect(),
        nodes: (0..count * q).map(|id| BTreeSet::from([id / q])).collect(),
    };
    for (i, j) in f.adjacent_pairs() {
        let (a, b) = (f.sample(i).expect("masked in"), f.sample(j).expect("masked in"));
        let (sigma, _) = optimal_matching(a, b)?;
        let longest = |sigma: &[usize]| {
            sigma
                .iter()
                .enumerate()
                .map(|(s, &t)| (&a.points()[s] - &b.points()[t]).norm())
                .fold(0.0, f64::max)
        };
        let optimal_longest = longest(&sigma);
        let sigma = if optimal_longest < d {
            sigma
        } else {
            bounded_matching(a, b, d).ok_or(Error::LipschitzViolation {
                bound: lip_bound,
                observed: optimal_longest / dx,
                node_a: i,
                node_b: j,
            })?
        };
        for (s, &t) in sigma.iter().enumerate() {
            forest.union_if_disjoint(i * q + s, j * q + t);
        }
    }
    // Collect components in order of their smallest slot id.
    let mut root_to_branch = vec![usize::MAX; count * q];
    let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut slot_branch = vec![Vec::new(); count];
    for node in 0..count {
        if !f.is_masked_in(node) {
            continue;
        }
        for s in 0..q {
            let root = forest.find(node * q + s);
            if root_to_branch[root] == usize::MAX {
                root_to_branch[root] = members.len();
                members.push(Vec::new());
            }
            let b = root_to_branch[root];
            members[b].push((node, s));
            slot_branch[node].push(b);
        }
    }
    let branches = members
        .into_iter()
        .map(|slots| {
            let nodes: Vec<usize> = slots.iter().map(|&(n, _)| n).collect();
            let values: Vec<DVector<f64>> = slots
                .iter()
                .map(|&(n, s)| f.sample(n).expect("masked in").points()[s].clone())
                .collect();
            let mut branch = Branch {
                nodes,
                values,
                lipschitz: 0.0,
            };
            branch.lipschitz = branch_lipschitz(f, &branch);
            branch
        })
        .collect();
    Ok(BranchSet {
        branches,
        slot_branch,
        tolerance,
    })
}

fn branch_lipschitz(f: &QField, b: &Branch) -> f64 {
    let mut lip = 0.0f64;
    for (k, &node) in b.nodes.iter().enumerate() {
        for axis in 0..f.n() {
            if let Some(other) = f.neighbor(node, axis, 1).and_then(|j| b.value_at(j)) {
                lip = lip.max((other - &b.values[k]).norm() / f.dx());
            }
        }
    }
    lip
}

/// Value, Jacobian (`m × n`) and Hessians (one `n × n` matrix per output
/// component) of the branch through one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotJet {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub hessian: Vec<DMatrix<f64>>,
}

/// Difference quotient along `axis` of a quantity known on branch nodes:
/// central where both neighbors exist, one-sided where one does, zero
/// otherwise.
fn difference<T, F>(f: &QField, b: &Branch, node: usize, axis: usize, get: F) -> Option<T>
where
    T: std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
    F: Fn(usize) -> Option<T>,
{
    let fwd = f.neighbor(node, axis, 1).filter(|j| b.value_at(*j).is_some());
    let bwd = f.neighbor(node, axis, -1).filter(|j| b.value_at(*j).is_some());
    let dx = f.dx();
    match (fwd, bwd) {
        (Some(p), Some(m)) => Some((get(p)? - get(m)?) / (2.0 * dx)),
        (Some(p), None) => Some((get(p)? - get(node)?) / dx),
        (None, Some(m)) => Some((get(node)? - get(m)?) / dx),
        (None, None) => None,
    }
}

/// First derivatives at every node of a branch. A column that has no
/// neighbor to difference against (isolated directions at the rim of the
/// ball) is copied from the nearest branch node along another axis that has
/// one, and left zero if there is none.
fn branch_jacobians(f: &QField, b: &Branch) -> Vec<DMatrix<f64>> {
    let (n, m) = (f.n(), f.m());
    let mut cols: Vec<Vec<Option<DVector<f64>>>> = b
        .nodes
        .iter()
        .map(|&node| (0..n).map(|axis| difference(f, b, node, axis, |j| b.value_at(j).cloned())).collect())
        .collect();
    for _ in 0..b.nodes.len() {
        let mut changed = false;
        for k in 0..b.nodes.len() {
            for axis in 0..n {
                if cols[k][axis].is_some() {
                    continue;
                }
                let donor = (0..n)
                    .filter(|&other| other != axis)
                    .flat_map(|other| [-1, 1].map(|s| f.neighbor(b.nodes[k], other, s)))
                    .flatten()
                    .filter_map(|j| b.nodes.binary_search(&j).ok())
                    .find_map(|i| cols[i][axis].clone());
                if donor.is_some() {
                    cols[k][axis] = donor;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    cols.into_iter()
        .map(|c| {
            let mut jac = DMatrix::zeros(m, n);
            for (axis, col) in c.into_iter().enumerate() {
                if let Some(col) = col {
                    jac.set_column(axis, &col);
                }
            }
            jac
        })
        .collect()
}

/// Finite-difference jets of every slot of every masked-in node, computed
/// along the branches of [`branch_decompose`]. Masked-out nodes map to
/// `None`.
pub fn branch_jets(f: &QField, lip_bound: f64) -> Result<Vec<Option<Vec<SlotJet>>>> {
    let set = branch_decompose(f, lip_bound)?;
    let (n, m) = (f.n(), f.m());
    let jacobians: Vec<Vec<DMatrix<f64>>> = set.branches.iter().map(|b| branch_jacobians(f, b)).collect();
    let mut out: Vec<Option<Vec<SlotJet>>> = vec![None; f.node_count()];
    for node in 0..f.node_count() {
        if !f.is_masked_in(node) {
            continue;
        }
        let mut slots = Vec::with_capacity(f.q());
        for s in 0..f.q() {
            let bi = set.branch_of(node, s).expect("every slot has a branch");
            let b = &set.branches[bi];
            let k = b.nodes.binary_search(&node).expect("slot node in branch");
            let jac_at = |j: usize| b.nodes.binary_search(&j).ok().map(|i| jacobians[bi][i].clone());
            let mut hessian = vec![DMatrix::zeros(n, n); m];
            for axis in 0..n {
                if let Some(dj) = difference(f, b, node, axis, jac_at) {
                    // dj[(c, l)] = ∂_axis ∂_l u_c
                    for (c, h) in hessian.iter_mut().enumerate() {
                        for l in 0..n {
                            h[(axis, l)] = dj[(c, l)];
                        }
                    }
                }
            }
            for h in hessian.iter_mut() {
                *h = (&*h + h.transpose()) * 0.5;
            }
            slots.push(SlotJet {
                value: b.values[k].clone(),
                jacobian: jacobians[bi][k].clone(),
                hessian,
            });
        }
        out[node] = Some(slots);
    }
    Ok(out)
}
