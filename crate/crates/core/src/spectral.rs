//! Initial spectral clustering.
//!
//! Pipeline: per-action counts, trimming of the most visited contexts,
//! rank-`S` truncation of every trimmed count matrix, horizontal aggregation
//! `[M_1^T .. M_A^T M_1 .. M_A]` and weighted K-medians on the rows.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::counts::{build_counts, trim, CountsTensor};
use crate::error::{Error, Result};
use crate::kmedians::{weighted_kmedians, ClusterAssignment, KMediansConfig};
use crate::sim::EpisodeBatch;

/// Number of high-degree contexts removed per action:
/// `floor(n exp(-r ln r))` with `r = TH / (nA)`, capped at `n - S`.
pub fn trim_count(n: usize, episodes: usize, horizon: usize, n_actions: usize, n_states: usize) -> Result<usize> {
    let r = (episodes * horizon) as f64 / (n * n_actions) as f64;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("TH/(nA) = {r} must be positive")));
    }
    let cap = n.saturating_sub(n_states);
    let raw = n as f64 * (-r * r.ln()).exp();
    Ok(if raw >= cap as f64 { cap } else { raw.floor() as usize })
}

/// Top-`S` singular triplets with a fixed sign convention: the first nonzero
/// entry of every left singular vector is positive.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * &self.v_t
    }
}

pub fn truncated_svd(m: &DMatrix<f64>, rank: usize) -> Result<TruncatedSvd> {
    if rank > m.nrows().min(m.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} exceeds min dimension of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.clone().try_svd(true, true, f64::EPSILON, 10_000).ok_or(Error::SvdFailed)?;
    let (u_full, vt_full) = match (svd.u, svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(Error::SvdFailed),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let keep = &order[..rank];
    let mut u = DMatrix::zeros(m.nrows(), rank);
    let mut v_t = DMatrix::zeros(rank, m.ncols());
    let mut singular_values = Vec::with_capacity(rank);
    for (k, &i) in keep.iter().enumerate() {
        let col = u_full.column(i);
        let flip = col.iter().find(|v| v.abs() > 1e-14).is_some_and(|&v| v < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        u.set_column(k, &(col * sign));
        v_t.set_row(k, &(vt_full.row(i) * sign));
        singular_values.push(svd.singular_values[i]);
    }
    Ok(TruncatedSvd { u, singular_values, v_t })
}

/// Frobenius-optimal rank-`S` approximation.
pub fn rank_s_approx(m: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    Ok(truncated_svd(m, rank)?.reconstruct())
}

/// `[M_1^T .. M_A^T M_1 .. M_A]`, an `n x 2nA` matrix.
pub fn aggregate(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = blocks
        .first()
        .map(|b| b.nrows())
        .ok_or_else(|| Error::InvalidArgument("no blocks to aggregate".into()))?;
    if blocks.iter().any(|b| b.nrows() != n || b.ncols() != n) {
        return Err(Error::DimensionMismatch(format!("all blocks must be {n}x{n}")));
    }
    let a = blocks.len();
    let mut out = DMatrix::zeros(n, 2 * n * a);
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((0, k * n), (n, n)).copy_from(&b.transpose());
        out.view_mut((0, (a + k) * n), (n, n)).copy_from(b);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SpectralConfig {
    pub n_states: usize,
    pub kmedians: KMediansConfig,
    pub seed: u64,
}

impl SpectralConfig {
    pub fn new(n_states: usize, seed: u64) -> Self {
        Self { n_states, kmedians: KMediansConfig::default(), seed }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralOutput {
    pub assignment: ClusterAssignment,
    pub gamma: usize,
    pub objective: f64,
    pub counts: CountsTensor,
    /// Aggregated matrix before row normalization.
    pub aggregated: DMatrix<f64>,
}

/// Builds counts from `batch` and runs the spectral pipeline.
pub fn spectral_clustering(batch: &EpisodeBatch, cfg: &SpectralConfig) -> Result<SpectralOutput> {
    if batch.is_empty() {
        return Err(Error::NoData("spectral clustering needs at least one episode".into()));
    }
    let counts = build_counts(batch, batch.n_contexts(), batch.n_actions())?;
    spectral_from_counts(counts, batch.len(), batch.horizon(), cfg)
}

/// Spectral pipeline on precomputed counts from `episodes` trajectories of length `horizon`.
pub fn spectral_from_counts(
    counts: CountsTensor,
    episodes: usize,
    horizon: usize,
    cfg: &SpectralConfig,
) -> Result<SpectralOutput> {
    let n = counts.n_contexts();
    let s = cfg.n_states;
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("S = {s} must be in [1, n = {n}]")));
    }
    let gamma = trim_count(n, episodes, horizon, counts.n_actions(), s)?;
    let trimmed = trim(&counts, gamma)?;
    let blocks: Vec<DMatrix<f64>> = (0..counts.n_actions())
        .into_par_iter()
        .map(|a| rank_s_approx(trimmed.counts.matrix(a), s))
        .collect::<Result<_>>()?;
    let aggregated = aggregate(&blocks)?;
    let km = weighted_kmedians(&aggregated, s, &cfg.kmedians, cfg.seed)?;
    Ok(SpectralOutput { assignment: km.assignment, gamma, objective: km.objective, counts, aggregated })
}
