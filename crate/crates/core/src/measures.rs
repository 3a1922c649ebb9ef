//! Finite-support probability measures over vector fields and exact
//! 1-Wasserstein distances between them.
//!
//! The ground cost between atoms is [`sup_distance`] on a shared
//! [`DomainBox`]; the optimal coupling is found exactly with a
//! transportation-simplex solve (Bland's rule, so degenerate instances
//! terminate and ties resolve to the lowest atom index).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{sup_distance, DomainBox, VectorField};

/// Atoms below this weight are pruned at construction.
pub const WEIGHT_PRUNE: f64 = 1e-12;

/// Largest tolerated deviation of a raw weight vector from total mass one.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

/// A finite mixture `sum_i alpha_i * delta_{f_i}` of vector fields.
///
/// A single-atom mixture is a Dirac measure.
#[derive(Debug, Clone)]
pub struct Mixture {
    atoms: Vec<VectorField>,
    weights: Vec<f64>,
}

impl Mixture {
    /// Builds a mixture, pruning atoms of weight below [`WEIGHT_PRUNE`] and
    /// renormalizing the rest.
    pub fn new(atoms: Vec<VectorField>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidWeights("empty atom list".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        for &w in &weights {
            if !w.is_finite() {
                return Err(Error::InvalidWeights(format!("non-finite weight {w}")));
            }
            if w < 0.0 {
                return Err(Error::InvalidWeights(format!("negative weight {w}")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, which differs from 1 by more than {WEIGHT_SUM_TOL}"
            )));
        }
        for a in &atoms[1..] {
            atoms[0].same_dims(a)?;
        }
        let mut kept_atoms = Vec::with_capacity(atoms.len());
        let mut kept_weights = Vec::with_capacity(atoms.len());
        for (a, w) in atoms.into_iter().zip(weights) {
            if w >= WEIGHT_PRUNE {
                kept_atoms.push(a);
                kept_weights.push(w);
            }
        }
        if kept_atoms.is_empty() {
            return Err(Error::InvalidWeights("all atoms pruned".into()));
        }
        let kept_sum: f64 = kept_weights.iter().sum();
        for w in &mut kept_weights {
            *w /= kept_sum;
        }
        Ok(Self {
            atoms: kept_atoms,
            weights: kept_weights,
        })
    }

    /// Unit mass on a single dynamics.
    pub fn dirac(atom: VectorField) -> Self {
        Self {
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[VectorField] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_dirac(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn state_dim(&self) -> usize {
        self.atoms[0].state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.atoms[0].control_dim()
    }

    pub(crate) fn same_dims(&self, other: &Mixture) -> Result<()> {
        self.atoms[0].same_dims(&other.atoms[0])
    }

    /// Largest declared Lipschitz constant across atoms.
    pub fn max_lipschitz(&self) -> Result<f64> {
        let mut best = 0.0f64;
        for a in &self.atoms {
            match a.lipschitz_x() {
                Some(l) => best = best.max(l),
                None => {
                    return Err(Error::MissingLipschitz(format!(
                        "atom '{}' has no declared Lipschitz constant",
                        a.label()
                    )))
                }
            }
        }
        Ok(best)
    }
}

/// A coupling of two finite mixtures: nonnegative matrix whose row sums are
/// the first mixture's weights and whose column sums are the second's.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row_marginals(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.entries[i * self.cols..(i + 1) * self.cols].iter().sum())
            .collect()
    }

    pub fn col_marginals(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.entries[i * self.cols + j]).sum())
            .collect()
    }

    /// Checks the marginal invariants against the given weight vectors.
    pub fn check_marginals(&self, row_weights: &[f64], col_weights: &[f64], tol: f64) -> bool {
        let rm = self.row_marginals();
        let cm = self.col_marginals();
        rm.len() == row_weights.len()
            && cm.len() == col_weights.len()
            && rm.iter().zip(row_weights).all(|(a, b)| (a - b).abs() <= tol)
            && cm.iter().zip(col_weights).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Exact 1-Wasserstein distance between two finite mixtures, with an optimal
/// transport plan attaining it.
///
/// The ground-cost matrix `sup_distance(atom_i, atom_j, box)` is computed
/// once up front; the transportation linear program is then solved exactly.
pub fn wasserstein1(p: &Mixture, q: &Mixture, b: &DomainBox) -> Result<(f64, TransportPlan)> {
    p.same_dims(q)?;
    p.atoms[0].check_box(b)?;
    let m = p.len();
    let n = q.len();
    let cost: Vec<f64> = (0..m * n)
        .into_par_iter()
        .map(|idx| sup_distance(&p.atoms[idx / n], &q.atoms[idx % n], b))
        .collect::<Result<_>>()?;
    let (value, flow) = solve_transport(&p.weights, &q.weights, &cost, n);
    Ok((
        value,
        TransportPlan {
            rows: m,
            cols: n,
            entries: flow,
        },
    ))
}

/// `E_p[|g - f|_inf]`: the Wasserstein-1 distance from `p` to the Dirac
/// measure at `f`, in closed form.
pub fn dirac_target_w1(p: &Mixture, f: &VectorField, b: &DomainBox) -> Result<f64> {
    p.atoms[0].same_dims(f)?;
    let dists: Vec<f64> = p
        .atoms
        .par_iter()
        .map(|a| sup_distance(a, f, b))
        .collect::<Result<_>>()?;
    Ok(p.weights.iter().zip(&dists).map(|(w, d)| w * d).sum())
}

const REDUCED_COST_EPS: f64 = 1e-12;

/// Exact transportation solve by the simplex method on the basis tree.
///
/// `cost` is row-major `m x n`; supplies and demands must carry equal total
/// mass. Entering variables follow Bland's rule (first negative reduced cost
/// in row-major order) and leaving ties break to the lexicographically lowest
/// cell, which makes degenerate instances terminate deterministically.
pub(crate) fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    n: usize,
) -> (f64, Vec<f64>) {
    let m = supply.len();
    debug_assert_eq!(demand.len(), n);
    debug_assert_eq!(cost.len(), m * n);

    let mut flow = vec![0.0f64; m * n];
    let mut basic = vec![false; m * n];

    // Northwest-corner initial basis: a staircase of exactly m + n - 1 cells.
    {
        let mut rs = supply.to_vec();
        let mut rd = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let q = rs[i].min(rd[j]).max(0.0);
            flow[i * n + j] = q;
            basic[i * n + j] = true;
            rs[i] -= q;
            rd[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i < m - 1 && (rs[i] <= rd[j] || j == n - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let node_count = m + n;
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        assert!(
            iterations <= 100_000,
            "transportation simplex failed to terminate"
        );

        // Potentials u_i + v_j = c_ij on the basis tree, rooted at row 0.
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut queue = vec![0usize]; // nodes: 0..m rows, m..m+n cols
        let mut seen = vec![false; node_count];
        seen[0] = true;
        while let Some(node) = queue.pop() {
            if node < m {
                let i = node;
                for j in 0..n {
                    if basic[i * n + j] && !seen[m + j] {
                        v[j] = cost[i * n + j] - u[i];
                        seen[m + j] = true;
                        queue.push(m + j);
                    }
                }
            } else {
                let j = node - m;
                for i in 0..m {
                    if basic[i * n + j] && !seen[i] {
                        u[i] = cost[i * n + j] - v[j];
                        seen[i] = true;
                        queue.push(i);
                    }
                }
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis tree is disconnected");

        // Bland's rule: first cell with negative reduced cost, row-major.
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if !basic[i * n + j] && cost[i * n + j] - u[i] - v[j] < -REDUCED_COST_EPS {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // Unique tree path from row ei to column ej; cells along it alternate
        // signs starting with − next to the entering (+) cell.
        let path = basis_path(&basic, m, n, ei, ej);
        let mut theta = f64::INFINITY;
        for (idx, &(i, j)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                theta = theta.min(flow[i * n + j]);
            }
        }
        let mut leaving = (usize::MAX, usize::MAX);
        for (idx, &(i, j)) in path.iter().enumerate() {
            if idx % 2 == 0 && flow[i * n + j] <= theta + 1e-15 && (i, j) < leaving {
                leaving = (i, j);
            }
        }
        let theta = theta.max(0.0);

        flow[ei * n + ej] += theta;
        for (idx, &(i, j)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                flow[i * n + j] -= theta;
            } else {
                flow[i * n + j] += theta;
            }
        }
        basic[ei * n + ej] = true;
        basic[leaving.0 * n + leaving.1] = false;
        flow[leaving.0 * n + leaving.1] = 0.0;
    }

    let value = flow
        .iter()
        .zip(cost)
        .map(|(f, c)| f * c)
        .sum::<f64>()
        .max(0.0);
    (value, flow)
}

/// Cells of the unique basis-tree path from row `ei` to column `ej`,
/// ordered from the column end back toward the row end.
fn basis_path(basic: &[bool], m: usize, n: usize, ei: usize, ej: usize) -> Vec<(usize, usize)> {
    let node_count = m + n;
    let mut parent_edge = vec![(usize::MAX, usize::MAX); node_count];
    let mut parent = vec![usize::MAX; node_count];
    let mut seen = vec![false; node_count];
    seen[ei] = true;
    let mut queue = std::collections::VecDeque::from([ei]);
    while let Some(node) = queue.pop_front() {
        if node == m + ej {
            break;
        }
        if node < m {
            let i = node;
            for j in 0..n {
                if basic[i * n + j] && !seen[m + j] {
                    seen[m + j] = true;
                    parent[m + j] = node;
                    parent_edge[m + j] = (i, j);
                    queue.push_back(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i * n + j] && !seen[i] {
                    seen[i] = true;
                    parent[i] = node;
                    parent_edge[i] = (i, j);
                    queue.push_back(i);
                }
            }
        }
    }
    debug_assert!(seen[m + ej], "entering column unreachable in basis tree");

    let mut path = Vec::new();
    let mut node = m + ej;
    while node != ei {
        path.push(parent_edge[node]);
        node = parent[node];
    }
    path
}
