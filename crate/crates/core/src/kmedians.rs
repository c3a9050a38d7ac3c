//! Weighted K-medians on ℓ1-normalized rows.
//!
//! Each nonzero row `M(x, .)` is split into a weight `w_x = ||M(x, .)||_1` and
//! a direction `M~(x, .) = M(x, .) / w_x`. The objective is
//!
//! ```text
//! sum_s sum_{x : f(x) = s} w_x * || M~(x, .) - u_s ||_1
//! ```
//!
//! and is minimized by Lloyd alternation: nearest center in ℓ1, then
//! per-coordinate weighted medians. Both steps never increase the objective.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sim::derive_seed;

/// Rows whose ℓ1 mass is below this fraction of the largest row are treated
/// as zero rows.
pub const ZERO_ROW_RTOL: f64 = 1e-10;

/// Decoder estimate with 0-based labels in `[0, S)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_states: usize,
    /// Contexts whose aggregated row was zero; they carry label 0.
    pub zero_row_contexts: Vec<usize>,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, n_states: usize) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= n_states) {
            return Err(Error::OutOfRange(format!("label {l} >= S = {n_states}")));
        }
        Ok(Self { labels, n_states, zero_row_contexts: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of each cluster in ascending context order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_states];
        for (x, &l) in self.labels.iter().enumerate() {
            out[l].push(x);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct KMediansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMediansConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iterations: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct KMediansResult {
    pub assignment: ClusterAssignment,
    pub objective: f64,
    pub centers: DMatrix<f64>,
    /// Objective after every assignment and every center update of the
    /// winning restart.
    pub trace: Vec<f64>,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    idx.last().map(|&i| values[i]).unwrap_or(0.0)
}

struct Prepared {
    dirs: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Original row ids of `dirs`.
    ids: Vec<usize>,
    zero_rows: Vec<usize>,
}

fn prepare(rows: &DMatrix<f64>) -> Prepared {
    let mass: Vec<f64> = rows.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    let max_mass = mass.iter().cloned().fold(0.0, f64::max);
    let cutoff = max_mass * ZERO_ROW_RTOL;
    let (mut dirs, mut weights, mut ids, mut zero_rows): (Vec<Vec<f64>>, Vec<f64>, Vec<usize>, Vec<usize>) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (x, &w) in mass.iter().enumerate() {
        if w > cutoff && w > 0.0 {
            dirs.push(rows.row(x).iter().map(|v| v / w).collect());
            weights.push(w);
            ids.push(x);
        } else {
            zero_rows.push(x);
        }
    }
    // Canonical order from relabeling-invariant keys, so that seeding and
    // ties do not depend on context ids.
    let keys: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d: &Vec<f64>| {
            let mut k = d.clone();
            k.sort_by(f64::total_cmp);
            k
        })
        .collect();
    let mut order: Vec<usize> = (0..dirs.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b].total_cmp(&weights[a]).then_with(|| {
            keys[a].iter().zip(&keys[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let dirs = order.iter().map(|&i| dirs[i].clone()).collect();
    let weights = order.iter().map(|&i| weights[i]).collect();
    let ids = order.iter().map(|&i| ids[i]).collect();
    Prepared { dirs, weights, ids, zero_rows }
}

fn count_distinct(dirs: &[Vec<f64>], cap: usize) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for d in dirs {
        if !seen.contains(&d) {
            seen.push(d);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

struct Run {
    labels: Vec<usize>,
    centers: Vec<Vec<f64>>,
    objective: f64,
    trace: Vec<f64>,
}

fn nearest(dir: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (s, c) in centers.iter().enumerate() {
        let d = l1(dir, c);
        if d < best.1 {
            best = (s, d);
        }
    }
    best
}

/// D-weighted seeding: first center drawn with probability ∝ `w_x`, later ones
/// ∝ `w_x * dist(x, chosen)`, so duplicates of chosen rows are never drawn.
fn seed_centers(p: &Prepared, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut score: Vec<f64> = p.weights.clone();
    while centers.len() < k {
        let total: f64 = score.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = score.len() - 1;
            for (i, &s) in score.iter().enumerate() {
                if u < s {
                    chosen = i;
                    break;
                }
                u -= s;
            }
            while score[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            break;
        };
        centers.push(p.dirs[pick].clone());
        for (i, sc) in score.iter_mut().enumerate() {
            let d = centers.iter().map(|c| l1(&p.dirs[i], c)).fold(f64::INFINITY, f64::min);
            *sc = p.weights[i] * d;
        }
    }
    centers
}

fn lloyd(p: &Prepared, k: usize, max_iterations: usize, rng: &mut ChaCha8Rng) -> Run {
    let m = p.dirs.len();
    let dim = p.dirs[0].len();
    let mut centers = seed_centers(p, k, rng);
    let mut labels = vec![usize::MAX; m];
    let mut trace = Vec::new();
    for _ in 0..max_iterations {
        let mut changed = false;
        let mut objective = 0.0;
        for i in 0..m {
            let (s, d) = nearest(&p.dirs[i], &centers);
            if labels[i] != s {
                labels[i] = s;
                changed = true;
            }
            objective += p.weights[i] * d;
        }
        trace.push(objective);
        if !changed && trace.len() > 1 {
            break;
        }
        for (s, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..m).filter(|&i| labels[i] == s).collect();
            if members.is_empty() {
                continue;
            }
            let w: Vec<f64> = members.iter().map(|&i| p.weights[i]).collect();
            let mut col = vec![0.0; members.len()];
            for (coord, c) in center.iter_mut().enumerate().take(dim) {
                for (slot, &i) in col.iter_mut().zip(&members) {
                    *slot = p.dirs[i][coord];
                }
                *c = weighted_median(&col, &w);
            }
        }
        let after: f64 = (0..m).map(|i| p.weights[i] * l1(&p.dirs[i], &centers[labels[i]])).sum();
        trace.push(after);
    }
    let objective = (0..m).map(|i| p.weights[i] * l1(&p.dirs[i], &centers[labels[i]])).sum();
    Run { labels, centers, objective, trace }
}

/// Clusters the rows of `rows` into `k` groups; zero rows get label 0.
pub fn weighted_kmedians(rows: &DMatrix<f64>, k: usize, cfg: &KMediansConfig, seed: u64) -> Result<KMediansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let p = prepare(rows);
    let distinct = count_distinct(&p.dirs, k);
    if distinct < k {
        return Err(Error::NotEnoughRows { needed: k, found: distinct });
    }
    let restarts = cfg.restarts.max(1);
    let runs: Vec<Run> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r));
            lloyd(&p, k, cfg.max_iterations.max(1), &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .expect("at least one restart");
    let mut labels = vec![0; rows.nrows()];
    for (i, &x) in p.ids.iter().enumerate() {
        labels[x] = best.labels[i];
    }
    let dim = rows.ncols();
    let centers = DMatrix::from_fn(k, dim, |s, c| best.centers.get(s).map_or(0.0, |v| v[c]));
    Ok(KMediansResult {
        assignment: ClusterAssignment { labels, n_states: k, zero_row_contexts: p.zero_rows },
        objective: best.objective,
        centers,
        trace: best.trace,
    })
}
