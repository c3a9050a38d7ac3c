//! Clustering experiments on the two-cluster family and the reward-free
//! scaling experiment.

use std::time::Instant;

use blockmdp::metrics::misclassification_count;
use blockmdp::model::generate_two_cluster_instance;
use blockmdp::planning::{default_reward_suite, reward_suite_gap};
use blockmdp::rate::{OccupancyMode, RateContext};
use blockmdp::refine::{decode, full_pipeline, PipelineConfig};
use blockmdp::sim::{derive_seed, simulate};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::table::{fmt_f, fmt_opt, log_log_slope, mean_std, Table};
use crate::LabError;

/// Seed of repetition `rep`; shared by every cell so cells differ only in
/// their parameters.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    derive_seed(base, rep as u64)
}

const SIM_STREAM: u64 = 1;
const CLUSTER_STREAM: u64 = 2;
const REWARD_STREAM: u64 = 3;

fn pipeline_config(cfg: &ExperimentConfig, seed: u64) -> PipelineConfig {
    let mut p = PipelineConfig::new(2, derive_seed(seed, CLUSTER_STREAM));
    p.spectral.kmedians.restarts = cfg.restarts;
    p.iterations = cfg.iterations;
    p
}

fn episodes_for(th: usize, horizon: usize) -> usize {
    th.div_ceil(horizon)
}

/// `floor(n (ln n)^u)`.
pub fn th_rule(n: usize, u: u32) -> usize {
    (n as f64 * (n as f64).ln().powi(u as i32)).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub u: Option<u32>,
    pub eps: f64,
    pub th: usize,
    pub episodes: usize,
    /// `min_x I(x; Phi)` of the cell's instance (exp3).
    pub min_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringRow {
    pub cell: usize,
    pub rep: usize,
    pub seed: u64,
    pub error_init: f64,
    pub error_refined: f64,
    /// `ok`, or `not_enough_rows` when spectral initialization found fewer
    /// than S nonzero rows and both errors are those of a single cluster.
    pub status: &'static str,
    /// Wall time of the repetition; kept out of the CSV so reruns are identical.
    pub runtime_ms: u128,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub mean_init: f64,
    pub std_init: f64,
    pub mean_refined: f64,
    pub std_refined: f64,
    pub reps: usize,
}

impl CellSummary {
    pub fn se_init(&self) -> f64 {
        self.std_init / (self.reps as f64).sqrt()
    }
    pub fn se_refined(&self) -> f64 {
        self.std_refined / (self.reps as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringReport {
    pub kind: ExperimentKind,
    pub cells: Vec<Cell>,
    /// Ordered by `(cell, rep)`.
    pub rows: Vec<ClusteringRow>,
    pub horizon: usize,
}

impl ClusteringReport {
    pub fn cell_rows(&self, cell: usize) -> impl Iterator<Item = &ClusteringRow> {
        self.rows.iter().filter(move |r| r.cell == cell)
    }

    pub fn summary(&self, cell: usize) -> CellSummary {
        let init: Vec<f64> = self.cell_rows(cell).map(|r| r.error_init).collect();
        let refined: Vec<f64> = self.cell_rows(cell).map(|r| r.error_refined).collect();
        let (mean_init, std_init) = mean_std(&init);
        let (mean_refined, std_refined) = mean_std(&refined);
        CellSummary { mean_init, std_init, mean_refined, std_refined, reps: init.len() }
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            self.kind.name(),
            vec![
                "kind", "n", "u", "eps", "th", "T", "H", "rep", "seed", "error_init", "error_refined", "std_init",
                "std_refined", "min_rate", "status",
            ],
        );
        let h = self.horizon;
        for (i, c) in self.cells.iter().enumerate() {
            let lead = |kind: &str| {
                vec![
                    kind.to_string(),
                    c.n.to_string(),
                    fmt_opt(c.u),
                    fmt_f(c.eps),
                    c.th.to_string(),
                    c.episodes.to_string(),
                    h.to_string(),
                ]
            };
            for r in self.cell_rows(i) {
                let mut row = lead("row");
                row.extend([
                    r.rep.to_string(),
                    r.seed.to_string(),
                    fmt_f(r.error_init),
                    fmt_f(r.error_refined),
                    String::new(),
                    String::new(),
                    fmt_opt(c.min_rate),
                    r.status.to_string(),
                ]);
                t.push(row);
            }
            let s = self.summary(i);
            let mut row = lead("summary");
            row.extend([
                String::new(),
                String::new(),
                fmt_f(s.mean_init),
                fmt_f(s.mean_refined),
                fmt_f(s.std_init),
                fmt_f(s.std_refined),
                fmt_opt(c.min_rate),
                String::new(),
            ]);
            t.push(row);
        }
        t
    }
}

fn run_clustering(cfg: &ExperimentConfig, cells: Vec<Cell>) -> Result<ClusteringReport, LabError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.reps).map(move |r| (c, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let start = Instant::now();
            let cell = &cells[ci];
            let seed = rep_seed(cfg.seed, rep);
            let (m, pi) = generate_two_cluster_instance(cell.n, cell.eps, cfg.horizon, seed)?;
            let batch = simulate(&m, &pi, cell.episodes, derive_seed(seed, SIM_STREAM))?;
            let err = |labels: &[usize]| misclassification_count(m.decoder(), labels, 2).map(|e| e.rate(cell.n));
            let (error_init, error_refined, status) = match decode(&batch, &pipeline_config(cfg, seed)) {
                Ok(out) => (err(&out.initial.labels)?, err(&out.refined.labels)?, "ok"),
                Err(blockmdp::Error::NotEnoughRows { .. }) => {
                    let e = err(&vec![0; cell.n])?;
                    (e, e, "not_enough_rows")
                }
                Err(e) => return Err(e),
            };
            Ok(ClusteringRow {
                cell: ci,
                rep,
                seed,
                error_init,
                error_refined,
                status,
                runtime_ms: start.elapsed().as_millis(),
            })
        })
        .collect::<Result<Vec<_>, blockmdp::Error>>()?;
    Ok(ClusteringReport { kind: cfg.experiment, cells, rows, horizon: cfg.horizon })
}

fn cell(cfg: &ExperimentConfig, n: usize, u: Option<u32>, eps: f64, th: usize) -> Cell {
    Cell { n, u, eps, th, episodes: episodes_for(th, cfg.horizon), min_rate: None }
}

/// TH scaling with n: `TH = floor(n (ln n)^u)`.
pub fn run_exp1(cfg: &ExperimentConfig) -> Result<ClusteringReport, LabError> {
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &u in &cfg.u {
            for &eps in &cfg.eps {
                cells.push(cell(cfg, n, Some(u), eps, th_rule(n, u)));
            }
        }
    }
    run_clustering(cfg, cells)
}

/// TH grid at fixed n.
pub fn run_exp2(cfg: &ExperimentConfig) -> Result<ClusteringReport, LabError> {
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &eps in &cfg.eps {
            for &th in &cfg.th {
                cells.push(cell(cfg, n, None, eps, th));
            }
        }
    }
    run_clustering(cfg, cells)
}

/// Hardness sweep over `eps`, recording the rate of each instance.
pub fn run_exp3(cfg: &ExperimentConfig) -> Result<ClusteringReport, LabError> {
    let mut cells = Vec::new();
    for &n in &cfg.n {
        let ths = if cfg.th.is_empty() { vec![th_rule(n, 2)] } else { cfg.th.clone() };
        for &eps in &cfg.eps {
            let (m, pi) = generate_two_cluster_instance(n, eps, cfg.horizon, cfg.seed)?;
            let rate = RateContext::new(&m, &pi, OccupancyMode::Alternate)?.rate_all()?.aggregate;
            for &th in &ths {
                let mut c = cell(cfg, n, None, eps, th);
                c.min_rate = Some(rate);
                cells.push(c);
            }
        }
    }
    run_clustering(cfg, cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardFreeRow {
    pub n: usize,
    pub eps: f64,
    pub episodes: usize,
    pub rep: usize,
    pub seed: u64,
    pub error_refined: f64,
    /// Per-stage gap of the suite's random reward.
    pub gap_random: f64,
    /// Largest per-stage gap over the suite.
    pub gap_max: f64,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardFreeReport {
    pub horizon: usize,
    pub rows: Vec<RewardFreeRow>,
}

impl RewardFreeReport {
    fn groups(&self) -> Vec<(usize, f64)> {
        let mut g: Vec<(usize, f64)> = Vec::new();
        for r in &self.rows {
            if !g.iter().any(|&(n, e)| n == r.n && e == r.eps) {
                g.push((r.n, r.eps));
            }
        }
        g
    }

    /// `(T, mean gap_max, std gap_max)` per distinct `T` of the `(n, eps)` group.
    pub fn curve(&self, n: usize, eps: f64) -> Vec<(usize, f64, f64)> {
        let mut ts: Vec<usize> = Vec::new();
        for r in self.rows.iter().filter(|r| r.n == n && r.eps == eps) {
            if !ts.contains(&r.episodes) {
                ts.push(r.episodes);
            }
        }
        ts.into_iter()
            .map(|t| {
                let g: Vec<f64> =
                    self.rows.iter().filter(|r| r.n == n && r.eps == eps && r.episodes == t).map(|r| r.gap_max).collect();
                let (m, s) = mean_std(&g);
                (t, m, s)
            })
            .collect()
    }

    pub fn slope(&self, n: usize, eps: f64) -> f64 {
        let c = self.curve(n, eps);
        let x: Vec<f64> = c.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = c.iter().map(|p| p.1).collect();
        log_log_slope(&x, &y)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            "rewardfree",
            vec![
                "kind", "n", "eps", "T", "H", "rep", "seed", "error_refined", "gap_random", "gap_max", "argmax",
                "std_gap_max", "slope",
            ],
        );
        let h = self.horizon.to_string();
        for (n, eps) in self.groups() {
            for (t_ep, mean, std) in self.curve(n, eps) {
                for r in self.rows.iter().filter(|r| r.n == n && r.eps == eps && r.episodes == t_ep) {
                    t.push(vec![
                        "row".into(),
                        n.to_string(),
                        fmt_f(eps),
                        t_ep.to_string(),
                        h.clone(),
                        r.rep.to_string(),
                        r.seed.to_string(),
                        fmt_f(r.error_refined),
                        fmt_f(r.gap_random),
                        fmt_f(r.gap_max),
                        r.argmax.to_string(),
                        String::new(),
                        String::new(),
                    ]);
                }
                t.push(vec![
                    "summary".into(),
                    n.to_string(),
                    fmt_f(eps),
                    t_ep.to_string(),
                    h.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    fmt_f(mean),
                    String::new(),
                    fmt_f(std),
                    String::new(),
                ]);
            }
            let mut fit = vec![String::new(); 13];
            fit[0] = "fit".into();
            fit[1] = n.to_string();
            fit[2] = fmt_f(eps);
            fit[4] = h.clone();
            fit[12] = fmt_f(self.slope(n, eps));
            t.push(fit);
        }
        t
    }
}

/// Full pipeline on `T` episodes, then the suite gap of the aligned estimate.
pub fn run_rewardfree(cfg: &ExperimentConfig) -> Result<RewardFreeReport, LabError> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for &eps in &cfg.eps {
            for &t in &cfg.episodes {
                for rep in 0..cfg.reps {
                    jobs.push((n, eps, t, rep));
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(n, eps, t, rep)| {
            let seed = rep_seed(cfg.seed, rep);
            let (m, pi) = generate_two_cluster_instance(n, eps, cfg.horizon, seed)?;
            let batch = simulate(&m, &pi, t, derive_seed(seed, SIM_STREAM))?;
            let out = full_pipeline(&batch, &pipeline_config(cfg, seed))?;
            let mc = misclassification_count(m.decoder(), &out.model.decoder.labels, 2)?;
            let est = out.model.aligned(&mc.permutation);
            let suite = default_reward_suite(&m, cfg.horizon, cfg.spikes, derive_seed(seed, REWARD_STREAM));
            let rep_gap = reward_suite_gap(&m, &est, &suite)?;
            Ok(RewardFreeRow {
                n,
                eps,
                episodes: t,
                rep,
                seed,
                error_refined: mc.rate(n),
                gap_random: rep_gap.reports.last().map(|r| r.gap_per_stage).unwrap_or(f64::NAN),
                gap_max: rep_gap.max_gap,
                argmax: rep_gap.argmax,
            })
        })
        .collect::<Result<Vec<_>, blockmdp::Error>>()?;
    Ok(RewardFreeReport { horizon: cfg.horizon, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(kind);
        c.reps = 2;
        c
    }

    #[test]
    fn th_rule_values() {
        assert_eq!(th_rule(100, 0), 100);
        assert_eq!(th_rule(100, 2), 2120);
        assert_eq!(episodes_for(2120, 10), 212);
        assert_eq!(episodes_for(2125, 10), 213);
    }

    #[test]
    fn exp1_smoke_shape() {
        let mut c = smoke(ExperimentKind::Exp1);
        c.n = vec![100];
        c.u = vec![0];
        let t = run_exp1(&c).unwrap().to_table();
        assert_eq!(t.rows_of("row").count(), 2);
        assert_eq!(t.rows_of("summary").count(), 1);
        let status = t.column("status").unwrap();
        assert!(t.rows_of("row").all(|r| r[status] == "not_enough_rows"));
    }

    #[test]
    fn exp2_single_cell_is_reproducible() {
        let mut c = smoke(ExperimentKind::Exp2);
        c.th = vec![500];
        let a = run_exp2(&c).unwrap();
        let csv = a.to_table().to_csv();
        assert!(csv.starts_with("# blockmdp-lab exp2 schema v1\nkind,n,u,eps,th,T,H,"));
        assert_eq!(csv, run_exp2(&c).unwrap().to_table().to_csv());
        assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r.error_init) && (0.0..=1.0).contains(&r.error_refined)));
    }

    #[test]
    fn exp3_records_rate() {
        let mut c = smoke(ExperimentKind::Exp3);
        c.eps = vec![0.0, 0.45];
        c.reps = 1;
        let r = run_exp3(&c).unwrap();
        assert!(r.cells[0].min_rate.unwrap().abs() < 1e-8);
        assert!(r.cells[1].min_rate.unwrap() > 0.1);
    }

    #[test]
    fn rewardfree_smoke() {
        let mut c = smoke(ExperimentKind::Rewardfree);
        c.episodes = vec![400, 800];
        let r = run_rewardfree(&c).unwrap();
        assert_eq!(r.rows.len(), 4);
        let t = r.to_table();
        assert_eq!(t.rows_of("fit").count(), 1);
        assert!(r.rows.iter().all(|row| row.gap_max >= -1e-12 && row.gap_max >= row.gap_random - 1e-15));
    }
}
