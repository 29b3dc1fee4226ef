//! Optimal and bottleneck assignment between `Q`-tuples.

use nalgebra::DVector;

use crate::error::{check_dim, Result};

use super::QValue;

/// Largest size solved by exhaustive branch and bound, which guarantees the
/// lexicographically smallest optimal permutation.
const EXHAUSTIVE_LIMIT: usize = 7;

/// A minimum-cost permutation `σ` (row `i` assigned to column `σ(i)`) for a
/// square cost matrix with nonnegative entries, and its cost.
///
/// Among optimal permutations the lexicographically smallest one is
/// returned for sizes up to 7; larger problems fall back to the Hungarian
/// method, whose optimum is exact but whose tie-breaking is unspecified.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let q = cost.len();
    if q == 0 {
        return (Vec::new(), 0.0);
    }
    if q <= EXHAUSTIVE_LIMIT {
        lexicographic_branch_and_bound(cost)
    } else {
        hungarian(cost)
    }
}

fn lexicographic_branch_and_bound(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    struct Search<'a> {
        cost: &'a [Vec<f64>],
        used: Vec<bool>,
        current: Vec<usize>,
        best: Vec<usize>,
        best_cost: f64,
    }
    impl Search<'_> {
        fn visit(&mut self, row: usize, partial: f64) {
            if partial >= self.best_cost {
                return;
            }
            if row == self.cost.len() {
                self.best_cost = partial;
                self.best.clone_from(&self.current);
                return;
            }
            for col in 0..self.cost.len() {
                if !self.used[col] {
                    self.used[col] = true;
                    self.current.push(col);
                    self.visit(row + 1, partial + self.cost[row][col]);
                    self.current.pop();
                    self.used[col] = false;
                }
            }
        }
    }
    let q = cost.len();
    // The identity is a valid upper bound; a strictly better permutation
    // must beat it, ties keep the lexicographically first one found.
    let identity: f64 = (0..q).map(|i| cost[i][i]).sum();
    let mut s = Search {
        cost,
        used: vec![false; q],
        current: Vec::with_capacity(q),
        best: (0..q).collect(),
        best_cost: f64::INFINITY,
    };
    s.visit(0, 0.0);
    if s.best_cost.is_infinite() {
        return ((0..q).collect(), identity);
    }
    (s.best, s.best_cost)
}

/// Hungarian method with potentials, `O(Q³)`.
fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assignment, total)
}

/// Exhaustive minimum over all `Q!` permutations; a reference oracle.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for col in 0..cost.len() {
            if !used[col] {
                used[col] = true;
                rec(cost, row + 1, used, acc + cost[row][col], best);
                used[col] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    if cost.is_empty() {
        0.0
    } else {
        best
    }
}

fn squared_costs(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| b.iter().map(|y| (x - y).norm_squared()).collect())
        .collect()
}

fn check_shapes(a: &QValue, b: &QValue) -> Result<()> {
    check_dim(a.q(), b.q())?;
    check_dim(a.m(), b.m())
}

/// The optimal matching of `a`'s points to `b`'s: `a.points()[i]` pairs with
/// `b.points()[σ(i)]`. Returns `σ` and the squared matching distance.
pub fn optimal_matching(a: &QValue, b: &QValue) -> Result<(Vec<usize>, f64)> {
    check_shapes(a, b)?;
    Ok(optimal_assignment(&squared_costs(a.points(), b.points())))
}

/// Almgren's metric: `min_σ (Σ_i |a_i - b_σ(i)|²)^{1/2}`.
pub fn metric_g(a: &QValue, b: &QValue) -> Result<f64> {
    Ok(optimal_matching(a, b)?.1.max(0.0).sqrt())
}

/// A permutation `σ` with `max_i |a_i - b_σ(i)| < d`, if one exists.
///
/// Solved as a perfect matching problem on the bipartite graph of pairs at
/// distance below `d` with augmenting paths; neighbors are tried in index
/// order so the result is deterministic.
pub fn bounded_matching(a: &QValue, b: &QValue, d: f64) -> Option<Vec<usize>> {
    if check_shapes(a, b).is_err() {
        return None;
    }
    let q = a.q();
    let allowed: Vec<Vec<usize>> = a
        .points()
        .iter()
        .map(|x| (0..q).filter(|&j| (x - &b.points()[j]).norm() < d).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; q];
    fn augment(i: usize, allowed: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &allowed[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].map_or(true, |k| augment(k, allowed, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    for i in 0..q {
        let mut seen = vec![false; q];
        if !augment(i, &allowed, &mut seen, &mut owner) {
            return None;
        }
    }
    let mut sigma = vec![0usize; q];
    for (j, o) in owner.iter().enumerate() {
        sigma[o.expect("perfect matching covers every column")] = j;
    }
    Some(sigma)
}
