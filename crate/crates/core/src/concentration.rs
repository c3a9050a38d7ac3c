//! Bernstein-type tail bound for additive functionals of restarted chains,
//! and a Monte-Carlo estimate of the same tail.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{induced_chain_mc0, FiniteChain};
use crate::error::{Error, Result};
use crate::model::{BehaviorPolicy, BlockMdp};
use crate::sim::derive_seed;

/// Variance and deviation proxies with the sample geometry `(T, H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinTerms {
    pub v: f64,
    pub m: f64,
    pub episodes: usize,
    pub horizon: usize,
}

fn variance(law: &[f64], phi: &[f64]) -> f64 {
    let mean: f64 = law.iter().zip(phi).map(|(p, f)| p * f).sum();
    law.iter().zip(phi).map(|(p, f)| p * (f - mean).powi(2)).sum::<f64>().max(0.0)
}

impl BernsteinTerms {
    /// `V = (1 + sqrt(2) eta (2 eta - 1))^2 max_var`, `M = (2 eta - 1) sup_phi`.
    pub fn homogeneous(eta: f64, max_variance: f64, phi_sup: f64, episodes: usize, horizon: usize) -> Result<Self> {
        if !(eta >= 1.0) || max_variance < 0.0 || phi_sup < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "need eta >= 1 and nonnegative proxies, got eta = {eta}, var = {max_variance}, sup = {phi_sup}"
            )));
        }
        let lead = 1.0 + std::f64::consts::SQRT_2 * eta * (2.0 * eta - 1.0);
        Ok(Self { v: lead * lead * max_variance, m: (2.0 * eta - 1.0) * phi_sup, episodes, horizon })
    }

    /// Terms for `phi` on `chain`, with `eta` the larger of the kernel's and
    /// the initial law's regularity, and the variance maximized over `mu` and
    /// every kernel row.
    pub fn for_chain(chain: &FiniteChain, phi: &[f64], episodes: usize, horizon: usize) -> Result<Self> {
        if phi.len() != chain.size() {
            return Err(Error::DimensionMismatch(format!("phi has {} entries, chain has {}", phi.len(), chain.size())));
        }
        let eta = chain.regularity().max(chain.initial_regularity());
        if !eta.is_finite() {
            return Err(Error::InvalidArgument("chain or initial law is not regular (zero entries)".into()));
        }
        let mut var = variance(chain.initial(), phi);
        for row in chain.kernel().row_iter() {
            let r: Vec<f64> = row.iter().copied().collect();
            var = var.max(variance(&r, phi));
        }
        let sup = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Self::homogeneous(eta, var, sup, episodes, horizon)
    }

    fn samples(&self) -> f64 {
        (self.episodes * self.horizon) as f64
    }
}

/// `exp(-rho^2 / (2 T H V + (2/3) M rho))`.
pub fn bernstein_tail_bound(terms: &BernsteinTerms, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} must be >= 0")));
    }
    if rho == 0.0 {
        return Ok(1.0);
    }
    let denom = 2.0 * terms.samples() * terms.v + 2.0 / 3.0 * terms.m * rho;
    Ok(if denom == 0.0 { 0.0 } else { (-rho * rho / denom).exp() })
}

/// The `rho` at which the bound equals `delta`.
pub fn bernstein_quantile(terms: &BernsteinTerms, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be in (0, 1]")));
    }
    let l = (1.0 / delta).ln();
    let b = 2.0 / 3.0 * terms.m * l;
    let c = 2.0 * terms.samples() * terms.v * l;
    Ok(0.5 * (b + (b * b + 4.0 * c).sqrt()))
}

/// Exceedance frequency at one `rho` with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub rho: f64,
    pub frequency: f64,
    pub standard_error: f64,
}

/// Centered sums `sum_{t,h} phi(Z_h^t) - E[phi(Z_h^t)]`, one per repetition.
pub fn centered_sums(
    chain: &FiniteChain,
    phi: &[f64],
    episodes: usize,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if reps == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("reps and horizon must be >= 1".into()));
    }
    if phi.len() != chain.size() {
        return Err(Error::DimensionMismatch(format!("phi has {} entries, chain has {}", phi.len(), chain.size())));
    }
    let expected: f64 = chain
        .marginals(horizon)
        .iter()
        .map(|d| d.iter().zip(phi).map(|(p, f)| p * f).sum::<f64>())
        .sum::<f64>()
        * episodes as f64;
    let start = WeightedIndex::new(chain.initial()).map_err(|e| Error::InvalidModel(e.to_string()))?;
    let rows: Vec<WeightedIndex<f64>> = chain
        .kernel()
        .row_iter()
        .map(|r| WeightedIndex::new(r.iter().copied()).map_err(|e| Error::InvalidModel(e.to_string())))
        .collect::<Result<_>>()?;
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut total = 0.0;
            for _ in 0..episodes {
                let mut z = start.sample(&mut rng);
                total += phi[z];
                for _ in 1..horizon {
                    z = rows[z].sample(&mut rng);
                    total += phi[z];
                }
            }
            total - expected
        })
        .collect())
}

/// Empirical tail `P[S > rho]` on a grid of `rho`, sharing samples across the grid.
pub fn empirical_tail_curve(
    chain: &FiniteChain,
    phi: &[f64],
    episodes: usize,
    horizon: usize,
    rhos: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<TailPoint>> {
    let sums = centered_sums(chain, phi, episodes, horizon, reps, seed)?;
    Ok(rhos
        .iter()
        .map(|&rho| {
            let freq = sums.iter().filter(|&&s| s > rho).count() as f64 / reps as f64;
            TailPoint { rho, frequency: freq, standard_error: (freq * (1.0 - freq) / reps as f64).sqrt() }
        })
        .collect())
}

/// Exceedance frequency of the context-chain sum of `phi` above `rho`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_tail(
    m: &BlockMdp,
    pi: &BehaviorPolicy,
    phi: &[f64],
    episodes: usize,
    horizon: usize,
    rho: f64,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    let chain = induced_chain_mc0(m, pi)?;
    Ok(empirical_tail_curve(&chain, phi, episodes, horizon, &[rho], reps, seed)?[0].frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_two_cluster_instance;
    use approx::assert_relative_eq;

    fn terms(v: f64, m: f64, th: usize) -> BernsteinTerms {
        BernsteinTerms { v, m, episodes: th, horizon: 1 }
    }

    #[test]
    fn bound_examples() {
        assert_eq!(bernstein_tail_bound(&terms(1.0, 1.0, 100), 0.0).unwrap(), 1.0);
        let b = bernstein_tail_bound(&terms(1.0, 1.0, 100), 10.0).unwrap();
        assert_relative_eq!(b, (-100.0f64 / (200.0 + 20.0 / 3.0)).exp(), epsilon = 1e-15);
        assert!((b - 0.6163).abs() < 1e-3);
        assert_relative_eq!(bernstein_tail_bound(&terms(1.0, 0.0, 1), 2.0).unwrap(), (-2.0f64).exp(), epsilon = 1e-15);
        assert!(bernstein_tail_bound(&terms(1.0, 1.0, 1), -1.0).is_err());
    }

    #[test]
    fn quantile_inverts_bound() {
        let t = BernsteinTerms::homogeneous(2.0, 0.25, 1.0, 30, 10).unwrap();
        for delta in [0.9, 0.1, 1e-4] {
            let rho = bernstein_quantile(&t, delta).unwrap();
            assert_relative_eq!(bernstein_tail_bound(&t, rho).unwrap(), delta, max_relative = 1e-12);
        }
    }

    #[test]
    fn homogeneous_constants() {
        let t = BernsteinTerms::homogeneous(1.0, 0.5, 2.0, 1, 1).unwrap();
        assert_relative_eq!(t.v, (1.0 + std::f64::consts::SQRT_2).powi(2) * 0.5, epsilon = 1e-15);
        assert_eq!(t.m, 2.0);
    }

    #[test]
    fn zero_function_never_exceeds() {
        let (m, pi) = generate_two_cluster_instance(6, 0.2, 5, 0).unwrap();
        assert_eq!(empirical_tail(&m, &pi, &[0.0; 6], 10, 5, 0.1, 200, 1).unwrap(), 0.0);
    }

    #[test]
    fn huge_rho_never_exceeded() {
        let (m, pi) = generate_two_cluster_instance(6, 0.2, 5, 0).unwrap();
        let mut phi = vec![0.0; 6];
        phi[2] = 1.0;
        assert_eq!(empirical_tail(&m, &pi, &phi, 10, 5, 1e6, 200, 1).unwrap(), 0.0);
    }

    #[test]
    fn cluster_indicator_respects_bound() {
        let (m, pi) = generate_two_cluster_instance(10, 0.2, 10, 0).unwrap();
        let chain = induced_chain_mc0(&m, &pi).unwrap();
        let phi: Vec<f64> = (0..10).map(|x| if x % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let t = BernsteinTerms::for_chain(&chain, &phi, 20, 10).unwrap();
        let rho = bernstein_quantile(&t, 0.1).unwrap();
        let pts = empirical_tail_curve(&chain, &phi, 20, 10, &[rho], 10_000, 5).unwrap();
        assert!(pts[0].frequency <= 0.1);
    }

    #[test]
    fn centered_sums_average_near_zero() {
        let (m, pi) = generate_two_cluster_instance(10, 0.2, 10, 0).unwrap();
        let chain = induced_chain_mc0(&m, &pi).unwrap();
        let phi: Vec<f64> = (0..10).map(|x| x as f64).collect();
        let s = centered_sums(&chain, &phi, 5, 10, 4000, 2).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        assert!(mean.abs() < 4.0 * sd / (s.len() as f64).sqrt());
    }
}
