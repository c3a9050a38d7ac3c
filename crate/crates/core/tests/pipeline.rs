use blockmdp::metrics::misclassification_count;
use blockmdp::model::generate_two_cluster_instance;
use blockmdp::planning::{default_reward_suite, reward_suite_gap};
use blockmdp::refine::{decode, full_pipeline, PipelineConfig};
use blockmdp::sim::{derive_seed, simulate, EpisodeBatch};
use blockmdp::spectral::{spectral_clustering, SpectralConfig};
use blockmdp::Error;

const N: usize = 100;
const H: usize = 10;
const SEEDS: u64 = 10;

/// `E[min(B, n - B)] / n` for `B ~ Bin(n, 1/2)`: the best-permutation error of
/// uniformly random labels on two balanced clusters.
fn random_level(n: usize) -> f64 {
    let mut log_choose = 0.0f64;
    let mut total = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_choose += ((n - k + 1) as f64 / k as f64).ln();
        }
        total += (log_choose - n as f64 * 2f64.ln()).exp() * k.min(n - k) as f64;
    }
    total / n as f64
}

fn spectral_errors(eps: f64, th: usize) -> Vec<f64> {
    let (m, pi) = generate_two_cluster_instance(N, eps, H, 0).unwrap();
    (0..SEEDS)
        .map(|rep| {
            let batch = simulate(&m, &pi, th.div_ceil(H), derive_seed(rep, 1)).unwrap();
            let out = spectral_clustering(&batch, &SpectralConfig::new(2, derive_seed(rep, 2))).unwrap();
            misclassification_count(m.decoder(), &out.assignment.labels, 2).unwrap().rate(N)
        })
        .collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn log_squared_budget() -> usize {
    let n = N as f64;
    (n * n.ln().powi(2)).floor() as usize
}

#[test]
fn random_level_reference() {
    assert!((random_level(2) - 0.25).abs() < 1e-15);
    assert!((random_level(100) - 0.460_2).abs() < 1e-3);
}

#[test]
fn spectral_beats_chance_at_log_squared_budget() {
    let (mean, se) = mean_se(&spectral_errors(0.2, log_squared_budget()));
    assert!(mean + 3.0 * se < random_level(N), "mean {mean} se {se}");
}

#[test]
fn spectral_small_error_at_twice_log_squared_budget() {
    let (mean, _) = mean_se(&spectral_errors(0.2, 2 * log_squared_budget()));
    assert!(mean <= 0.15, "mean {mean}");
}

#[test]
fn indistinguishable_clusters_give_chance_error() {
    let errors = spectral_errors(0.0, log_squared_budget());
    let (mean, se) = mean_se(&errors);
    assert!((mean - random_level(N)).abs() <= 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn refinement_recovers_well_separated_clusters() {
    let (m, pi) = generate_two_cluster_instance(N, 0.4, H, 0).unwrap();
    let batch = simulate(&m, &pi, 400, 3).unwrap();
    let out = decode(&batch, &PipelineConfig::new(2, 4)).unwrap();
    let init = misclassification_count(m.decoder(), &out.initial.labels, 2).unwrap().count;
    let refined = misclassification_count(m.decoder(), &out.refined.labels, 2).unwrap().count;
    assert!(refined <= init);
    assert_eq!(refined, 0);
}

#[test]
fn empty_batch_is_rejected() {
    let empty = EpisodeBatch::new(N, 2, H, Vec::new()).unwrap();
    assert!(matches!(spectral_clustering(&empty, &SpectralConfig::new(2, 0)), Err(Error::NoData(_))));
    assert!(matches!(decode(&empty, &PipelineConfig::new(2, 0)), Err(Error::NoData(_))));
    assert!(matches!(full_pipeline(&empty, &PipelineConfig::new(2, 0)), Err(Error::NoData(_))));
}

#[test]
fn tiny_budget_reports_missing_rows() {
    let (m, pi) = generate_two_cluster_instance(N, 0.3, H, 0).unwrap();
    let batch = simulate(&m, &pi, 10, 1).unwrap();
    let r = spectral_clustering(&batch, &SpectralConfig::new(2, 0));
    assert!(matches!(r, Err(Error::NotEnoughRows { .. })), "{r:?}");
}

#[test]
fn pipeline_estimate_plans_near_optimally() {
    let (m, pi) = generate_two_cluster_instance(20, 0.4, H, 0).unwrap();
    let batch = simulate(&m, &pi, 2000, 9).unwrap();
    let out = full_pipeline(&batch, &PipelineConfig::new(2, 1)).unwrap();
    let split = out.model.source_split.clone().unwrap();
    assert_eq!((split.decoder, split.model), (0..1000, 1000..2000));
    let mis = misclassification_count(m.decoder(), &out.model.decoder.labels, 2).unwrap();
    assert_eq!(mis.count, 0);
    let est = out.model.aligned(&mis.permutation);
    let suite = default_reward_suite(&m, H, 3, 5);
    let report = reward_suite_gap(&m, &est, &suite).unwrap();
    assert!(report.max_gap >= -1e-9 && report.max_gap < 0.05, "{}", report.max_gap);
}
