//! Per-action transition counts `N_a(x, y)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{BehaviorPolicy, BlockMdp};
use crate::sim::EpisodeBatch;

/// One `n x n` count matrix per action plus cached margins.
///
/// Counts are stored as `f64` so that exact expectations `E[N_a(x, y)]` can be
/// handled by the same estimators as observed integer counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsTensor {
    matrices: Vec<DMatrix<f64>>,
    row_sums: Vec<Vec<f64>>,
    col_sums: Vec<Vec<f64>>,
    total: f64,
}

impl CountsTensor {
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = matrices
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| Error::InvalidArgument("at least one action is required".into()))?;
        for (a, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!("count matrix {a} is not {n}x{n}")));
            }
            if m.iter().any(|&v| v < 0.0 || v.is_nan()) {
                return Err(Error::InvalidArgument(format!("count matrix {a} has a negative entry")));
            }
        }
        let row_sums = matrices.iter().map(|m| m.row_iter().map(|r| r.sum()).collect()).collect();
        let col_sums = matrices.iter().map(|m| m.column_iter().map(|c| c.sum()).collect()).collect();
        let total = matrices.iter().map(|m| m.sum()).sum();
        Ok(Self { matrices, row_sums, col_sums, total })
    }

    pub fn n_contexts(&self) -> usize {
        self.matrices[0].nrows()
    }
    pub fn n_actions(&self) -> usize {
        self.matrices.len()
    }
    #[inline]
    pub fn get(&self, a: usize, x: usize, y: usize) -> f64 {
        self.matrices[a][(x, y)]
    }
    pub fn matrix(&self, a: usize) -> &DMatrix<f64> {
        &self.matrices[a]
    }
    /// `N_a(x) = sum_y N_a(x, y)`.
    pub fn out_degree(&self, a: usize, x: usize) -> f64 {
        self.row_sums[a][x]
    }
    /// `sum_x N_a(x, y)`.
    pub fn in_degree(&self, a: usize, y: usize) -> f64 {
        self.col_sums[a][y]
    }
    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Counts `N_a(x, y) = sum_{t,h} 1[(x_h, a_h, x_{h+1}) = (x, a, y)]`.
pub fn build_counts(batch: &EpisodeBatch, n: usize, n_actions: usize) -> Result<CountsTensor> {
    let mut mats = vec![DMatrix::<f64>::zeros(n, n); n_actions];
    for (t, e) in batch.episodes().iter().enumerate() {
        for (h, &a) in e.actions.iter().enumerate() {
            let (x, y) = (e.contexts[h], e.contexts[h + 1]);
            if x >= n || y >= n || a >= n_actions {
                return Err(Error::OutOfRange(format!(
                    "transition ({x}, {a}, {y}) at episode {t}, step {h} (n = {n}, A = {n_actions})"
                )));
            }
            mats[a][(x, y)] += 1.0;
        }
    }
    CountsTensor::from_matrices(mats)
}

/// `E[N_a(x, y)] = T sum_{h=1}^{H-1} P(x_h = x) pi(a|x) P(y|x,a)`.
pub fn expected_counts(m: &BlockMdp, policy: &BehaviorPolicy, episodes: f64) -> Result<CountsTensor> {
    policy.check_compatible(m)?;
    let n = m.n_contexts();
    let marginals = m.context_marginals(policy, m.horizon() - 1);
    let mut occupancy = vec![0.0; n];
    for d in &marginals {
        for (o, v) in occupancy.iter_mut().zip(d) {
            *o += v;
        }
    }
    let mats = (0..m.n_actions())
        .map(|a| DMatrix::from_fn(n, n, |x, y| episodes * occupancy[x] * policy.prob(x, a) * m.transition(x, a, y)))
        .collect();
    CountsTensor::from_matrices(mats)
}

/// Visits per context over all `H` stages, terminal context included.
pub fn visit_counts(batch: &EpisodeBatch) -> Vec<f64> {
    let mut v = vec![0.0; batch.n_contexts()];
    for e in batch.episodes() {
        for &x in &e.contexts {
            v[x] += 1.0;
        }
    }
    v
}

/// `E[sum_{t,h<=H} 1[x_h = x]]`.
pub fn expected_visits(m: &BlockMdp, policy: &BehaviorPolicy, episodes: f64) -> Vec<f64> {
    let mut v = vec![0.0; m.n_contexts()];
    for d in m.context_marginals(policy, m.horizon()) {
        for (o, p) in v.iter_mut().zip(d) {
            *o += episodes * p;
        }
    }
    v
}

/// Counts restricted to contexts surviving the trimming step.
#[derive(Debug, Clone)]
pub struct Trimmed {
    pub counts: CountsTensor,
    /// `surviving[a]` lists the contexts kept for action `a`, ascending.
    pub surviving: Vec<Vec<usize>>,
}

/// Removes, per action, the `gamma` contexts with the largest `N_a(x)`.
/// Equal visit counts are removed in ascending context order. Rows and
/// columns of removed contexts are zeroed.
pub fn trim(counts: &CountsTensor, gamma: usize) -> Result<Trimmed> {
    let n = counts.n_contexts();
    if gamma >= n {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must be < n = {n}")));
    }
    let mut mats = Vec::with_capacity(counts.n_actions());
    let mut surviving = Vec::with_capacity(counts.n_actions());
    for a in 0..counts.n_actions() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| counts.out_degree(a, y).total_cmp(&counts.out_degree(a, x)).then(x.cmp(&y)));
        let mut keep = vec![true; n];
        for &x in &order[..gamma] {
            keep[x] = false;
        }
        let src = counts.matrix(a);
        mats.push(DMatrix::from_fn(n, n, |x, y| if keep[x] && keep[y] { src[(x, y)] } else { 0.0 }));
        surviving.push((0..n).filter(|&x| keep[x]).collect());
    }
    Ok(Trimmed { counts: CountsTensor::from_matrices(mats)?, surviving })
}
