//! Iterative likelihood improvement of a decoder estimate and the plug-in
//! estimators of `p` and `q`.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::counts::{build_counts, visit_counts, CountsTensor};
use crate::error::{Error, Result};
use crate::kmedians::ClusterAssignment;
use crate::sim::EpisodeBatch;
use crate::spectral::{spectral_from_counts, SpectralConfig};

/// Probabilities are floored at this value before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// `floor(ln(nA))`.
pub fn default_iterations(n: usize, n_actions: usize) -> usize {
    ((n * n_actions) as f64).ln().floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// Contexts whose label changed.
    pub changed: usize,
    /// `-sum_x L(x, f_l(x))` at the parameters of this iteration.
    pub nll_before: f64,
    /// `-sum_x L(x, f_{l+1}(x))` at the same parameters.
    pub nll_after: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ImproveTrace {
    pub iterations: Vec<IterationStats>,
    pub warnings: Vec<String>,
}

/// Cluster-level aggregates of the counts under a fixed decoder.
struct ClusterCounts {
    /// `out_to[a][x * S + s] = N_a(x, f^{-1}(s))`.
    out_to: Vec<Vec<f64>>,
    /// `in_from[a][x * S + s] = N_a(f^{-1}(s), x)`.
    in_from: Vec<Vec<f64>>,
    /// `between[a][(j, s)] = N_a(f^{-1}(j), f^{-1}(s))`.
    between: Vec<DMatrix<f64>>,
}

impl ClusterCounts {
    fn new(counts: &CountsTensor, labels: &[usize], s_count: usize) -> Self {
        let n = counts.n_contexts();
        let mut out_to = Vec::with_capacity(counts.n_actions());
        let mut in_from = Vec::with_capacity(counts.n_actions());
        let mut between = Vec::with_capacity(counts.n_actions());
        for a in 0..counts.n_actions() {
            let m = counts.matrix(a);
            let mut o = vec![0.0; n * s_count];
            let mut i = vec![0.0; n * s_count];
            let mut b = DMatrix::zeros(s_count, s_count);
            for x in 0..n {
                for y in 0..n {
                    let v = m[(x, y)];
                    if v == 0.0 {
                        continue;
                    }
                    o[x * s_count + labels[y]] += v;
                    i[y * s_count + labels[x]] += v;
                    b[(labels[x], labels[y])] += v;
                }
            }
            out_to.push(o);
            in_from.push(i);
            between.push(b);
        }
        Self { out_to, in_from, between }
    }
}

/// Log-parameters `log p_hat(s | j, a)` and `log p_bwd(s, a | j)`.
struct LogParams {
    /// `fwd[a][(j, s)]`.
    fwd: Vec<DMatrix<f64>>,
    /// `bwd[a][(j, s)]`.
    bwd: Vec<DMatrix<f64>>,
}

fn log_params(cc: &ClusterCounts, s_count: usize, warnings: &mut Vec<String>, iteration: usize) -> LogParams {
    let a_count = cc.between.len();
    let mut fwd = Vec::with_capacity(a_count);
    for (a, b) in cc.between.iter().enumerate() {
        let mut f = DMatrix::zeros(s_count, s_count);
        for j in 0..s_count {
            let total: f64 = b.row(j).sum();
            if total > 0.0 {
                for s in 0..s_count {
                    f[(j, s)] = (b[(j, s)] / total).max(LOG_FLOOR).ln();
                }
            } else {
                warnings.push(format!("iteration {iteration}: no transitions out of cluster {j} under action {a}"));
                f.row_mut(j).fill((1.0 / s_count as f64).ln());
            }
        }
        fwd.push(f);
    }
    let mut bwd = vec![DMatrix::zeros(s_count, s_count); a_count];
    for j in 0..s_count {
        let total: f64 = cc.between.iter().map(|b| b.column(j).sum()).sum();
        for a in 0..a_count {
            for s in 0..s_count {
                bwd[a][(j, s)] = if total > 0.0 {
                    (cc.between[a][(s, j)] / total).max(LOG_FLOOR).ln()
                } else {
                    (1.0 / (s_count * a_count) as f64).ln()
                };
            }
        }
        if total == 0.0 {
            warnings.push(format!("iteration {iteration}: no transitions into cluster {j}"));
        }
    }
    LogParams { fwd, bwd }
}

fn log_likelihood(cc: &ClusterCounts, lp: &LogParams, x: usize, j: usize, s_count: usize) -> f64 {
    let mut total = 0.0;
    for a in 0..lp.fwd.len() {
        let base = x * s_count;
        for s in 0..s_count {
            let o = cc.out_to[a][base + s];
            if o != 0.0 {
                total += o * lp.fwd[a][(j, s)];
            }
            let i = cc.in_from[a][base + s];
            if i != 0.0 {
                total += i * lp.bwd[a][(j, s)];
            }
        }
    }
    total
}

/// Runs `iterations` rounds of likelihood reassignment starting from `init`.
///
/// Ties keep the current label when it is among the maximizers, otherwise the
/// lowest maximizing label wins.
pub fn improve(
    counts: &CountsTensor,
    init: &ClusterAssignment,
    iterations: usize,
) -> Result<(ClusterAssignment, ImproveTrace)> {
    let n = counts.n_contexts();
    let s_count = init.n_states;
    if init.len() != n {
        return Err(Error::DimensionMismatch(format!("decoder has {} labels, counts have n = {n}", init.len())));
    }
    if let Some(&l) = init.labels.iter().find(|&&l| l >= s_count) {
        return Err(Error::OutOfRange(format!("label {l} >= S = {s_count}")));
    }
    let mut labels = init.labels.clone();
    let mut trace = ImproveTrace::default();
    for it in 0..iterations {
        let cc = ClusterCounts::new(counts, &labels, s_count);
        let lp = log_params(&cc, s_count, &mut trace.warnings, it + 1);
        let choices: Vec<(usize, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|x| {
                let scores: Vec<f64> = (0..s_count).map(|j| log_likelihood(&cc, &lp, x, j, s_count)).collect();
                let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let cur = labels[x];
                let pick = if scores[cur] == best { cur } else { scores.iter().position(|&v| v == best).unwrap_or(cur) };
                (pick, scores[cur], scores[pick])
            })
            .collect();
        let mut stats = IterationStats { changed: 0, nll_before: 0.0, nll_after: 0.0 };
        for (x, (pick, before, after)) in choices.into_iter().enumerate() {
            if pick != labels[x] {
                stats.changed += 1;
                labels[x] = pick;
            }
            stats.nll_before -= before;
            stats.nll_after -= after;
        }
        trace.iterations.push(stats);
    }
    Ok((ClusterAssignment { labels, n_states: s_count, zero_row_contexts: init.zero_row_contexts.clone() }, trace))
}

/// Rows that had no data and are therefore all-zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimationFlags {
    /// `(s, a)` with `N_a(f^{-1}(s), X) = 0`.
    pub p_zero_rows: Vec<(usize, usize)>,
    /// States never visited.
    pub q_zero_rows: Vec<usize>,
}

impl EstimationFlags {
    pub fn is_empty(&self) -> bool {
        self.p_zero_rows.is_empty() && self.q_zero_rows.is_empty()
    }
}

/// Which episodes produced the decoder and which produced `(p_hat, q_hat)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSplit {
    pub decoder: Range<usize>,
    pub model: Range<usize>,
}

/// Plug-in estimate `(p_hat, q_hat, f_hat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub decoder: ClusterAssignment,
    /// `p_hat[a][(s, s')]`.
    pub p_hat: Vec<DMatrix<f64>>,
    /// `q_hat[(s, x)]`.
    pub q_hat: DMatrix<f64>,
    /// Empirical law of `x_1`; uniform when no initial contexts were seen.
    pub mu_hat: Vec<f64>,
    pub flags: EstimationFlags,
    pub source_split: Option<SourceSplit>,
}

impl EstimatedModel {
    pub fn n_states(&self) -> usize {
        self.decoder.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.p_hat.len()
    }
    pub fn n_contexts(&self) -> usize {
        self.decoder.len()
    }

    /// Relabels latent states so that estimated label `perm[s]` becomes `s`.
    /// `perm` is the permutation reported by
    /// [`misclassification_count`](crate::metrics::misclassification_count).
    pub fn aligned(&self, perm: &[usize]) -> Self {
        let s_count = self.n_states();
        let mut inv = vec![0; s_count];
        for (s, &t) in perm.iter().enumerate() {
            inv[t] = s;
        }
        let p_hat = self
            .p_hat
            .iter()
            .map(|p| DMatrix::from_fn(s_count, s_count, |s, t| p[(perm[s], perm[t])]))
            .collect();
        let q_hat = DMatrix::from_fn(s_count, self.n_contexts(), |s, x| self.q_hat[(perm[s], x)]);
        let labels = self.decoder.labels.iter().map(|&l| inv[l]).collect();
        let flags = EstimationFlags {
            p_zero_rows: self.flags.p_zero_rows.iter().map(|&(s, a)| (inv[s], a)).collect(),
            q_zero_rows: self.flags.q_zero_rows.iter().map(|&s| inv[s]).collect(),
        };
        Self {
            decoder: ClusterAssignment { labels, n_states: s_count, zero_row_contexts: self.decoder.zero_row_contexts.clone() },
            p_hat,
            q_hat,
            mu_hat: self.mu_hat.clone(),
            flags,
            source_split: self.source_split.clone(),
        }
    }
}

/// Ratio estimators from transition counts, per-context visit counts
/// (all `H` stages) and initial-context counts.
pub fn estimate_from_counts(
    counts: &CountsTensor,
    visits: &[f64],
    initial: &[f64],
    decoder: &ClusterAssignment,
) -> Result<EstimatedModel> {
    let n = counts.n_contexts();
    let s_count = decoder.n_states;
    if decoder.len() != n || visits.len() != n || initial.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "n = {n}, decoder {}, visits {}, initial {}",
            decoder.len(),
            visits.len(),
            initial.len()
        )));
    }
    let labels = &decoder.labels;
    let mut flags = EstimationFlags::default();
    let mut p_hat = Vec::with_capacity(counts.n_actions());
    for a in 0..counts.n_actions() {
        let m = counts.matrix(a);
        let mut b = DMatrix::zeros(s_count, s_count);
        for x in 0..n {
            for y in 0..n {
                b[(labels[x], labels[y])] += m[(x, y)];
            }
        }
        for s in 0..s_count {
            let total: f64 = b.row(s).sum();
            if total > 0.0 {
                b.row_mut(s).scale_mut(1.0 / total);
            } else {
                flags.p_zero_rows.push((s, a));
            }
        }
        p_hat.push(b);
    }
    let mut q_hat = DMatrix::zeros(s_count, n);
    let mut cluster_visits = vec![0.0; s_count];
    for x in 0..n {
        cluster_visits[labels[x]] += visits[x];
    }
    for x in 0..n {
        let s = labels[x];
        if cluster_visits[s] > 0.0 {
            q_hat[(s, x)] = visits[x] / cluster_visits[s];
        }
    }
    for (s, &v) in cluster_visits.iter().enumerate() {
        if v == 0.0 {
            flags.q_zero_rows.push(s);
        }
    }
    let init_total: f64 = initial.iter().sum();
    let mu_hat = if init_total > 0.0 {
        initial.iter().map(|v| v / init_total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    Ok(EstimatedModel { decoder: decoder.clone(), p_hat, q_hat, mu_hat, flags, source_split: None })
}

/// Ratio estimators computed from a batch of episodes.
pub fn estimate_pq(batch: &EpisodeBatch, decoder: &ClusterAssignment) -> Result<EstimatedModel> {
    let counts = build_counts(batch, batch.n_contexts(), batch.n_actions())?;
    let visits = visit_counts(batch);
    let mut initial = vec![0.0; batch.n_contexts()];
    for e in batch.episodes() {
        initial[e.contexts[0]] += 1.0;
    }
    estimate_from_counts(&counts, &visits, &initial, decoder)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub spectral: SpectralConfig,
    /// `None` selects [`default_iterations`].
    pub iterations: Option<usize>,
}

impl PipelineConfig {
    pub fn new(n_states: usize, seed: u64) -> Self {
        Self { spectral: SpectralConfig::new(n_states, seed), iterations: None }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringOutput {
    pub initial: ClusterAssignment,
    pub refined: ClusterAssignment,
    pub trace: ImproveTrace,
}

/// Spectral initialization followed by likelihood improvement on one batch.
pub fn decode(batch: &EpisodeBatch, cfg: &PipelineConfig) -> Result<ClusteringOutput> {
    if batch.is_empty() {
        return Err(Error::NoData("decoding needs at least one episode".into()));
    }
    let counts = build_counts(batch, batch.n_contexts(), batch.n_actions())?;
    let spectral = spectral_from_counts(counts, batch.len(), batch.horizon(), &cfg.spectral)?;
    let iterations = cfg.iterations.unwrap_or_else(|| default_iterations(batch.n_contexts(), batch.n_actions()));
    let (refined, trace) = improve(&spectral.counts, &spectral.assignment, iterations)?;
    Ok(ClusteringOutput { initial: spectral.assignment, refined, trace })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub model: EstimatedModel,
    pub clustering: ClusteringOutput,
}

/// Decodes on episodes `[0, T/2)` and estimates `p`, `q` on `[T/2, T)`.
pub fn full_pipeline(batch: &EpisodeBatch, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let t = batch.len();
    if t < 2 {
        return Err(Error::NoData(format!("full pipeline needs T >= 2 episodes, got {t}")));
    }
    let half = t / 2;
    let (first, second) = batch.split_at(half);
    let clustering = decode(&first, cfg)?;
    let mut model = estimate_pq(&second, &clustering.refined)?;
    model.source_split = Some(SourceSplit { decoder: 0..half, model: half..t });
    Ok(PipelineOutput { model, clustering })
}
