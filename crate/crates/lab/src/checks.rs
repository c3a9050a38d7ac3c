//! Self-checking runs that print one PASS/FAIL line per item.

use std::fmt;

use blockmdp::chain::induced_chain_mc0;
use blockmdp::concentration::{bernstein_quantile, bernstein_tail_bound, empirical_tail_curve, BernsteinTerms};
use blockmdp::model::{generate_random_instance, generate_two_cluster_instance, BehaviorPolicy, BlockMdp, RandomInstanceConfig};
use blockmdp::rate::{alternate_model, occupancy, ten_context_example, OccupancyMode, RateContext};
use blockmdp::sim::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::table::{fmt_f, Table};
use crate::LabError;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn add(&mut self, name: &str, pass: bool, detail: String) {
        self.items.push(CheckItem { name: name.to_string(), pass, detail });
    }
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            writeln!(f, "{} {}: {}", if i.pass { "PASS" } else { "FAIL" }, i.name, i.detail)?;
        }
        Ok(())
    }
}

pub const MIXING: [[f64; 2]; 2] = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
pub const UNIFORM: [[f64; 2]; 2] = [[0.5, 0.5], [0.5, 0.5]];

pub const MIXING_OCCUPANCY: f64 = 73567181.0 / 302330880.0;
pub const UNIFORM_OCCUPANCY: f64 = 11.0 / 45.0;
pub const MIXING_RATE: f64 = 0.2127;
pub const MIXING_SCALE: f64 = 0.8023;
pub const OCCUPANCY_TOL: f64 = 1e-12;
pub const ZERO_RATE_TOL: f64 = 1e-8;
pub const UNIFORM_SCALE_TOL: f64 = 1e-4;
pub const MIXING_RATE_REL_TOL: f64 = 0.05;
pub const MIXING_SCALE_TOL: f64 = 0.05;
pub const PROFILE_TOL: f64 = 1e-9;

/// Reference closed form for the uniform-transition profile.
pub fn uniform_profile_formula(c: f64) -> f64 {
    44.0 / 45.0 * ((10.0 - c) * ((10.0 - c) / 9.0).ln() + c * c.ln())
}

/// `m^Psi(s_0, a_0)` for moving context 0 into state 1 with scale `c`.
pub fn moved_occupancy(m: &BlockMdp, pi: &BehaviorPolicy, c: f64) -> Result<f64, LabError> {
    Ok(occupancy(&alternate_model(m, 0, 1, c)?, pi)?.get(0, 0))
}

pub fn run_rate_check(_cfg: &ExperimentConfig) -> Result<CheckReport, LabError> {
    let mut rep = CheckReport::default();

    let (m, pi) = ten_context_example(UNIFORM)?;
    let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate)?;
    let e = ctx.rate(0)?;
    let occ = moved_occupancy(&m, &pi, e.scale)?;
    rep.add(
        "uniform occupancy",
        (occ - UNIFORM_OCCUPANCY).abs() <= OCCUPANCY_TOL,
        format!("m(s1,a1) = {occ:.15}, target 11/45 = {UNIFORM_OCCUPANCY:.15}"),
    );
    rep.add(
        "uniform rate",
        e.value.abs() <= ZERO_RATE_TOL && (e.scale - 1.0).abs() <= UNIFORM_SCALE_TOL,
        format!("I(x1) = {:.3e} at c* = {:.6}", e.value, e.scale),
    );
    let mut worst: f64 = 0.0;
    for c in [0.5, 1.0, 2.0] {
        worst = worst.max((ctx.divergence(0, 1, c)? - uniform_profile_formula(c)).abs());
    }
    rep.add(
        "uniform closed form",
        worst <= PROFILE_TOL,
        format!("max |I(x1;c) - 44/45[...]| over c in {{0.5, 1, 2}} = {worst:.3e}"),
    );

    let (m, pi) = ten_context_example(MIXING)?;
    let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate)?;
    let e = ctx.rate(0)?;
    let occ = moved_occupancy(&m, &pi, e.scale)?;
    rep.add(
        "mixing occupancy",
        (occ - MIXING_OCCUPANCY).abs() <= OCCUPANCY_TOL,
        format!("m(s1,a1) = {occ:.15}, target 73567181/302330880 = {MIXING_OCCUPANCY:.15}"),
    );
    rep.add(
        "mixing rate",
        (e.value - MIXING_RATE).abs() <= MIXING_RATE_REL_TOL * MIXING_RATE && (e.scale - MIXING_SCALE).abs() <= MIXING_SCALE_TOL,
        format!("I(x1) = {:.4} at c* = {:.4}, target {MIXING_RATE} at {MIXING_SCALE}", e.value, e.scale),
    );

    let (m, pi) = generate_two_cluster_instance(10, 0.0, 10, 0)?;
    let r = RateContext::new(&m, &pi, OccupancyMode::Alternate)?.rate_all()?;
    let worst = r.entries.iter().fold(0.0f64, |a, e| a.max(e.value.abs()));
    rep.add("indistinguishable clusters", worst <= ZERO_RATE_TOL, format!("max_x |I(x)| = {worst:.3e}"));
    Ok(rep)
}

/// Tail probabilities at which the bound's quantiles are tested.
pub const TAIL_LEVELS: [f64; 8] = [0.9, 0.7, 0.5, 0.3, 0.2, 0.1, 0.05, 0.01];
/// Allowed excess of the empirical tail over the bound, in standard errors.
pub const TAIL_SE_SLACK: f64 = 3.0;

/// Name, model, behavior policy and test function `phi`.
pub type ConcentrationInstance = (String, BlockMdp, BehaviorPolicy, Vec<f64>);

/// The three instances of the concentration check with their test functions.
pub fn concentration_instances(cfg: &ExperimentConfig) -> Result<Vec<ConcentrationInstance>, LabError> {
    let h = cfg.horizon;
    let mut out = Vec::new();
    let (m, pi) = generate_two_cluster_instance(10, 0.2, h, cfg.seed)?;
    let phi = (0..10).map(|x| if x % 2 == 0 { 1.0 } else { 0.0 }).collect();
    out.push(("two-cluster n=10 eps=0.2".to_string(), m, pi, phi));
    let (m, pi) = generate_two_cluster_instance(20, 0.4, h, cfg.seed)?;
    let phi = (0..20).map(|x| x as f64 / 19.0).collect();
    out.push(("two-cluster n=20 eps=0.4".to_string(), m, pi, phi));
    let (m, pi) = generate_random_instance(&RandomInstanceConfig::new(3, 2, 12, h, 4.0), derive_seed(cfg.seed, 7))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 8));
    let phi = (0..12).map(|_| rng.random::<f64>()).collect();
    out.push(("random S=3 A=2 n=12".to_string(), m, pi, phi));
    Ok(out)
}

/// Empirical tails against the Bernstein bound; the table lists every
/// `(instance, T, rho)` point.
pub fn run_concentration_check(cfg: &ExperimentConfig) -> Result<(CheckReport, Table), LabError> {
    cfg.validate()?;
    let mut rep = CheckReport::default();
    let mut table = Table::new(
        "concentration",
        vec!["instance", "T", "H", "level", "rho", "empirical", "standard_error", "bound", "pass"],
    );
    for (k, (name, m, pi, phi)) in concentration_instances(cfg)?.into_iter().enumerate() {
        let chain = induced_chain_mc0(&m, &pi)?;
        for &t in &cfg.episodes {
            let terms = BernsteinTerms::for_chain(&chain, &phi, t, cfg.horizon)?;
            let rhos = TAIL_LEVELS.iter().map(|&d| bernstein_quantile(&terms, d)).collect::<Result<Vec<_>, _>>()?;
            let seed = derive_seed(cfg.seed, 100 + k as u64);
            let pts = empirical_tail_curve(&chain, &phi, t, cfg.horizon, &rhos, cfg.reps, seed)?;
            let mut all = true;
            let mut worst = f64::NEG_INFINITY;
            for (level, p) in TAIL_LEVELS.iter().zip(&pts) {
                let bound = bernstein_tail_bound(&terms, p.rho)?;
                let ok = p.frequency <= bound + TAIL_SE_SLACK * p.standard_error;
                all &= ok;
                worst = worst.max(p.frequency - bound);
                table.push(vec![
                    (k + 1).to_string(),
                    t.to_string(),
                    cfg.horizon.to_string(),
                    fmt_f(*level),
                    fmt_f(p.rho),
                    fmt_f(p.frequency),
                    fmt_f(p.standard_error),
                    fmt_f(bound),
                    ok.to_string(),
                ]);
            }
            rep.add(&format!("{name} T={t}"), all, format!("max(empirical - bound) = {worst:.4} over 8 rho"));
        }
    }
    Ok((rep, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    #[test]
    fn rate_check_runs() {
        let r = run_rate_check(&ExperimentConfig::defaults(ExperimentKind::Rate)).unwrap();
        assert_eq!(r.items.len(), 6);
        let text = r.to_string();
        assert!(text.lines().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
        assert!(r.items.iter().find(|i| i.name == "mixing occupancy").unwrap().pass);
    }

    #[test]
    fn concentration_small_run() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::Concentration);
        c.reps = 500;
        let (rep, table) = run_concentration_check(&c).unwrap();
        assert_eq!(table.rows.len(), 3 * 8);
        assert_eq!(rep.items.len(), 3);
    }
}
