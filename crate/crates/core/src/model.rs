//! Block MDP domain types, regularity diagnostics and instance generators.
//!
//! A Block MDP is described by a small latent MDP (`S` states, `A` actions,
//! kernels `p(s'|s,a)`) together with a decoding function `f` mapping each of
//! the `n` observed contexts to its latent state and per-state emission
//! distributions `q(.|s)` supported on `f^{-1}(s)`. The one-step context
//! kernel factorizes as
//!
//! ```text
//! P(y | x, a) = q(y | f(y)) * p(f(y) | f(x), a)
//! ```
//!
//! All ids are 0-based in memory.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) const PROB_TOL: f64 = 1e-12;

fn check_distribution(values: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut sum = 0.0;
    for v in values {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(Error::InvalidModel(format!("{what}: entry {v} outside [0, 1]")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Latent dynamics: one row-stochastic `S x S` matrix per action.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    kernels: Vec<DMatrix<f64>>,
}

impl LatentModel {
    /// `kernels[a][(s, s')] = p(s' | s, a)`.
    pub fn new(kernels: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::InvalidModel("at least one action is required".into()))?;
        let s = first.nrows();
        if s == 0 {
            return Err(Error::InvalidModel("at least one latent state is required".into()));
        }
        for (a, k) in kernels.iter().enumerate() {
            if k.nrows() != s || k.ncols() != s {
                return Err(Error::DimensionMismatch(format!(
                    "kernel of action {a} is {}x{}, expected {s}x{s}",
                    k.nrows(),
                    k.ncols()
                )));
            }
            for row in 0..s {
                check_distribution(k.row(row).iter().copied(), &format!("p(.|{row},{a})"))?;
            }
        }
        Ok(Self { kernels })
    }

    pub fn n_states(&self) -> usize {
        self.kernels[0].nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.kernels.len()
    }

    /// `p(s_next | s, a)`.
    #[inline]
    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.kernels[a][(s, s_next)]
    }

    pub fn kernel(&self, a: usize) -> &DMatrix<f64> {
        &self.kernels[a]
    }

    pub fn kernels(&self) -> &[DMatrix<f64>] {
        &self.kernels
    }
}

/// A finite-horizon episodic Block MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMdp {
    latent: LatentModel,
    decoder: Vec<usize>,
    emission: DMatrix<f64>,
    initial: Vec<f64>,
    horizon: usize,
    clusters: Vec<Vec<usize>>,
}

impl BlockMdp {
    /// Builds a validated model.
    ///
    /// `decoder[x]` is the latent state of context `x`, `emission[(s, x)]` is
    /// `q(x | s)` and `initial[x]` is `mu(x)`.
    pub fn new(
        latent: LatentModel,
        decoder: Vec<usize>,
        emission: DMatrix<f64>,
        initial: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let m = Self::from_parts_unchecked(latent, decoder, emission, initial, horizon)?;
        m.validate()?;
        Ok(m)
    }

    /// Assembles a model checking only dimensions. Cluster surjectivity and
    /// stochasticity are left unchecked, which lets diagnostics such as
    /// [`check_regularity`] see degenerate instances.
    pub fn from_parts_unchecked(
        latent: LatentModel,
        decoder: Vec<usize>,
        emission: DMatrix<f64>,
        initial: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let s = latent.n_states();
        let n = decoder.len();
        if emission.nrows() != s || emission.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "emission matrix is {}x{}, expected {s}x{n}",
                emission.nrows(),
                emission.ncols()
            )));
        }
        if initial.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial distribution has length {}, expected {n}",
                initial.len()
            )));
        }
        if let Some(&bad) = decoder.iter().find(|&&l| l >= s) {
            return Err(Error::OutOfRange(format!("latent label {bad} >= S = {s}")));
        }
        let mut clusters = vec![Vec::new(); s];
        for (x, &l) in decoder.iter().enumerate() {
            clusters[l].push(x);
        }
        Ok(Self { latent, decoder, emission, initial, horizon, clusters })
    }

    fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidModel(format!("horizon {} < 2", self.horizon)));
        }
        for (s, members) in self.clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidModel(format!("latent state {s} has no context")));
            }
            check_distribution(self.emission.row(s).iter().copied(), &format!("q(.|{s})"))?;
            for x in 0..self.n_contexts() {
                if self.decoder[x] != s && self.emission[(s, x)] != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "q({x}|{s}) > 0 but f({x}) = {}",
                        self.decoder[x]
                    )));
                }
            }
        }
        check_distribution(self.initial.iter().copied(), "mu")
    }

    pub fn latent(&self) -> &LatentModel {
        &self.latent
    }
    pub fn n_contexts(&self) -> usize {
        self.decoder.len()
    }
    pub fn n_states(&self) -> usize {
        self.latent.n_states()
    }
    pub fn n_actions(&self) -> usize {
        self.latent.n_actions()
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn decoder(&self) -> &[usize] {
        &self.decoder
    }
    #[inline]
    pub fn state_of(&self, x: usize) -> usize {
        self.decoder[x]
    }
    /// `q(x | s)`.
    #[inline]
    pub fn q(&self, s: usize, x: usize) -> f64 {
        self.emission[(s, x)]
    }
    /// `q(x | f(x))`.
    #[inline]
    pub fn own_emission(&self, x: usize) -> f64 {
        self.emission[(self.decoder[x], x)]
    }
    pub fn emission(&self) -> &DMatrix<f64> {
        &self.emission
    }
    /// `p(s_next | s, a)`.
    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.latent.prob(s, a, s_next)
    }
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
    /// Contexts decoded to latent state `s`, in ascending order.
    pub fn cluster(&self, s: usize) -> &[usize] {
        &self.clusters[s]
    }
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// `P(y | x, a) = q(y | f(y)) p(f(y) | f(x), a)`.
    #[inline]
    pub fn transition(&self, x: usize, a: usize, y: usize) -> f64 {
        let sy = self.decoder[y];
        self.emission[(sy, y)] * self.latent.prob(self.decoder[x], a, sy)
    }

    /// Dense `n x n` context kernel for action `a`.
    pub fn context_kernel(&self, a: usize) -> DMatrix<f64> {
        let n = self.n_contexts();
        DMatrix::from_fn(n, n, |x, y| self.transition(x, a, y))
    }

    /// Same dynamics with a different episode length.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidArgument(format!("horizon {horizon} < 2")));
        }
        let mut m = self.clone();
        m.horizon = horizon;
        Ok(m)
    }

    /// Law of `x_h` for `h = 1..=len`, propagated exactly through the
    /// factorized kernel. Entry `h - 1` is the distribution of `x_h`.
    pub fn context_marginals(&self, policy: &BehaviorPolicy, len: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut d = self.initial.clone();
        for h in 0..len {
            if h + 1 < len {
                let next = self.step_distribution(policy, &d);
                out.push(std::mem::replace(&mut d, next));
            } else {
                out.push(std::mem::take(&mut d));
            }
        }
        out
    }

    /// One step of `d -> d P_0` with `P_0(y|x) = sum_a pi(a|x) P(y|x,a)`.
    pub fn step_distribution(&self, policy: &BehaviorPolicy, d: &[f64]) -> Vec<f64> {
        let s_count = self.n_states();
        let mut latent_mass = vec![0.0; s_count];
        for (x, &dx) in d.iter().enumerate() {
            if dx == 0.0 {
                continue;
            }
            let s = self.decoder[x];
            for a in 0..self.n_actions() {
                let w = dx * policy.prob(x, a);
                if w == 0.0 {
                    continue;
                }
                for (s2, mass) in latent_mass.iter_mut().enumerate() {
                    *mass += w * self.latent.prob(s, a, s2);
                }
            }
        }
        (0..self.n_contexts())
            .map(|y| {
                let sy = self.decoder[y];
                self.emission[(sy, y)] * latent_mass[sy]
            })
            .collect()
    }
}

/// Stationary behavior policy `pi(a | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    probs: DMatrix<f64>,
}

impl BehaviorPolicy {
    /// `probs[(x, a)] = pi(a | x)`.
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.ncols() == 0 {
            return Err(Error::InvalidModel("policy needs at least one action".into()));
        }
        for x in 0..probs.nrows() {
            check_distribution(probs.row(x).iter().copied(), &format!("pi(.|{x})"))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_contexts: usize, n_actions: usize) -> Self {
        Self { probs: DMatrix::from_element(n_contexts, n_actions, 1.0 / n_actions as f64) }
    }

    #[inline]
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[(x, a)]
    }
    pub fn n_contexts(&self) -> usize {
        self.probs.nrows()
    }
    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub(crate) fn check_compatible(&self, m: &BlockMdp) -> Result<()> {
        if self.n_contexts() != m.n_contexts() || self.n_actions() != m.n_actions() {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, model has n = {}, A = {}",
                self.n_contexts(),
                self.n_actions(),
                m.n_contexts(),
                m.n_actions()
            )));
        }
        Ok(())
    }
}

/// Max-ratio quantities of the η-regularity assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    /// `max |f^{-1}(s1)| / |f^{-1}(s2)|`.
    pub eta_cluster: f64,
    /// Max of the row ratio `p(s2|s1,a)/p(s3|s1,a)` and the column ratio `p(s1|s2,a)/p(s1|s3,a)`.
    pub eta_p: f64,
    /// Max within-cluster emission ratio.
    pub eta_q: f64,
    /// `max pi(a1|x) / pi(a2|y)`.
    pub eta_pi: f64,
    pub eta: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn max_min_ratio(values: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi, mut any) = (f64::INFINITY, f64::NEG_INFINITY, false);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        any = true;
    }
    if !any {
        return f64::INFINITY;
    }
    ratio(hi, lo)
}

/// Evaluates the four ratio families exactly; zero denominators give `+inf`.
pub fn check_regularity(m: &BlockMdp, policy: &BehaviorPolicy, eta: f64) -> RegularityReport {
    let s_count = m.n_states();
    let eta_cluster = max_min_ratio(m.clusters().iter().map(|c| c.len() as f64));

    let mut eta_p: f64 = 1.0;
    for a in 0..m.n_actions() {
        for s in 0..s_count {
            eta_p = eta_p.max(max_min_ratio((0..s_count).map(|t| m.p(s, a, t))));
            eta_p = eta_p.max(max_min_ratio((0..s_count).map(|t| m.p(t, a, s))));
        }
    }

    let mut eta_q: f64 = 1.0;
    for s in 0..s_count {
        if m.cluster(s).is_empty() {
            eta_q = f64::INFINITY;
            continue;
        }
        eta_q = eta_q.max(max_min_ratio(m.cluster(s).iter().map(|&x| m.q(s, x))));
    }

    let eta_pi = max_min_ratio(policy.matrix().iter().copied()).max(1.0);
    let eta_cluster = eta_cluster.max(1.0);
    let all = eta_cluster.max(eta_p).max(eta_q).max(eta_pi);
    RegularityReport {
        eta_cluster,
        eta_p,
        eta_q,
        eta_pi,
        eta: all,
        threshold: eta,
        satisfied: all <= eta,
    }
}

/// Two clusters, two actions: `P_1 = [[1/2-e, 1/2+e], [1/2+e, 1/2-e]]`,
/// `P_2` uniform, uniform emissions, initial distribution and policy.
///
/// Contexts alternate between the clusters: contexts `0, 2, 4, ...` belong to
/// latent state 0 and `1, 3, 5, ...` to latent state 1. The instance is fully
/// determined by `(n, epsilon, horizon)`; `seed` is accepted for interface
/// uniformity with [`generate_random_instance`].
pub fn generate_two_cluster_instance(
    n: usize,
    epsilon: f64,
    horizon: usize,
    _seed: u64,
) -> Result<(BlockMdp, BehaviorPolicy)> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("n = {n} must be even and >= 4")));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} outside [0, 0.5)")));
    }
    let p1 = DMatrix::from_row_slice(
        2,
        2,
        &[0.5 - epsilon, 0.5 + epsilon, 0.5 + epsilon, 0.5 - epsilon],
    );
    let p2 = DMatrix::from_element(2, 2, 0.5);
    let latent = LatentModel::new(vec![p1, p2])?;
    let decoder: Vec<usize> = (0..n).map(|x| x % 2).collect();
    let half = 2.0 / n as f64;
    let emission = DMatrix::from_fn(2, n, |s, x| if x % 2 == s { half } else { 0.0 });
    let initial = vec![1.0 / n as f64; n];
    let m = BlockMdp::new(latent, decoder, emission, initial, horizon)?;
    Ok((m, BehaviorPolicy::uniform(n, 2)))
}

/// Parameters for [`generate_random_instance`].
#[derive(Debug, Clone)]
pub struct RandomInstanceConfig {
    pub states: usize,
    pub actions: usize,
    pub contexts: usize,
    pub horizon: usize,
    pub eta_target: f64,
    pub max_attempts: usize,
}

impl RandomInstanceConfig {
    pub fn new(states: usize, actions: usize, contexts: usize, horizon: usize, eta_target: f64) -> Self {
        Self { states, actions, contexts, horizon, eta_target, max_attempts: 1000 }
    }
}

fn perturbed_simplex(rng: &mut ChaCha8Rng, len: usize, amplitude: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| 1.0 + amplitude * rng.random_range(-1.0..=1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Random η-regular instance with uniform initial distribution and policy.
///
/// Context `x` belongs to latent state `x mod S`, so cluster sizes differ by at
/// most one. Kernel rows and emissions are symmetric perturbations of the
/// uniform distribution; a draw is kept only if [`check_regularity`] passes at
/// `eta_target`.
pub fn generate_random_instance(
    cfg: &RandomInstanceConfig,
    seed: u64,
) -> Result<(BlockMdp, BehaviorPolicy)> {
    let (s_count, a_count, n) = (cfg.states, cfg.actions, cfg.contexts);
    if s_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "S = {s_count}: at least two latent states are needed for a block structure"
        )));
    }
    if a_count == 0 {
        return Err(Error::InvalidArgument("A must be >= 1".into()));
    }
    if n < s_count {
        return Err(Error::InvalidArgument(format!("n = {n} < S = {s_count}")));
    }
    if cfg.horizon < 2 {
        return Err(Error::InvalidArgument(format!("horizon {} < 2", cfg.horizon)));
    }
    if cfg.eta_target.is_nan() || cfg.eta_target < 1.0 {
        return Err(Error::InvalidArgument(format!("eta_target = {} < 1", cfg.eta_target)));
    }
    // Entry ratios stay below ((1+a)/(1-a))^2 including normalization, so the
    // square root keeps every draw within the target.
    let root = cfg.eta_target.sqrt();
    let amplitude = 0.9 * (root - 1.0) / (root + 1.0);
    let decoder: Vec<usize> = (0..n).map(|x| x % s_count).collect();
    let policy = BehaviorPolicy::uniform(n, a_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..cfg.max_attempts {
        let kernels: Vec<DMatrix<f64>> = (0..a_count)
            .map(|_| {
                let mut k = DMatrix::zeros(s_count, s_count);
                for s in 0..s_count {
                    for (t, v) in perturbed_simplex(&mut rng, s_count, amplitude).into_iter().enumerate() {
                        k[(s, t)] = v;
                    }
                }
                k
            })
            .collect();
        let mut emission = DMatrix::zeros(s_count, n);
        for s in 0..s_count {
            let members: Vec<usize> = (s..n).step_by(s_count).collect();
            for (x, v) in members.iter().zip(perturbed_simplex(&mut rng, members.len(), amplitude)) {
                emission[(s, *x)] = v;
            }
        }
        let latent = match LatentModel::new(kernels) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let m = match BlockMdp::new(
            latent,
            decoder.clone(),
            emission,
            vec![1.0 / n as f64; n],
            cfg.horizon,
        ) {
            Ok(m) => m,
            Err(Error::InvalidModel(_)) => continue,
            Err(e) => return Err(e),
        };
        if check_regularity(&m, &policy, cfg.eta_target).satisfied {
            return Ok((m, policy));
        }
    }
    Err(Error::RegularityNotReached { eta: cfg.eta_target, attempts: cfg.max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cluster_instance_matches_definition() {
        let (m, pi) = generate_two_cluster_instance(4, 0.2, 10, 0).unwrap();
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.n_actions(), 2);
        assert!((m.p(0, 0, 0) - 0.3).abs() < 1e-15);
        assert!((m.p(0, 0, 1) - 0.7).abs() < 1e-15);
        for s in 0..2 {
            for t in 0..2 {
                assert_eq!(m.p(s, 1, t), 0.5);
            }
        }
        assert_eq!(m.cluster(0), &[0, 2]);
        assert_eq!(m.q(0, 0), 0.5);
        assert_eq!(m.q(0, 2), 0.5);
        assert_eq!(pi.prob(3, 1), 0.5);
    }

    #[test]
    fn two_cluster_even_split() {
        let (m, _) = generate_two_cluster_instance(10, 0.1, 5, 0).unwrap();
        assert_eq!(m.cluster(0).len(), 5);
        assert_eq!(m.cluster(1).len(), 5);
    }

    #[test]
    fn two_cluster_rejects_bad_arguments() {
        assert!(generate_two_cluster_instance(5, 0.2, 10, 0).is_err());
        assert!(generate_two_cluster_instance(2, 0.2, 10, 0).is_err());
        assert!(generate_two_cluster_instance(4, 0.5, 10, 0).is_err());
        assert!(generate_two_cluster_instance(4, -0.1, 10, 0).is_err());
    }

    #[test]
    fn regularity_of_two_cluster_instance() {
        let (m, pi) = generate_two_cluster_instance(4, 0.2, 10, 0).unwrap();
        let r = check_regularity(&m, &pi, 3.0);
        assert!((r.eta_p - 0.7 / 0.3).abs() < 1e-12);
        assert_eq!(r.eta_q, 1.0);
        assert_eq!(r.eta_pi, 1.0);
        assert_eq!(r.eta_cluster, 1.0);
        assert!(r.satisfied);
        assert!(!check_regularity(&m, &pi, 2.0).satisfied);
    }

    #[test]
    fn regularity_uniform_is_one() {
        let (m, pi) = generate_two_cluster_instance(6, 0.0, 3, 0).unwrap();
        let r = check_regularity(&m, &pi, 1.0);
        assert_eq!(r.eta, 1.0);
        assert!(r.satisfied);
    }

    #[test]
    fn regularity_empty_cluster_is_infinite() {
        let latent = LatentModel::new(vec![DMatrix::from_element(2, 2, 0.5)]).unwrap();
        let emission = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        let m = BlockMdp::from_parts_unchecked(latent, vec![0, 0], emission, vec![0.5, 0.5], 3).unwrap();
        let r = check_regularity(&m, &BehaviorPolicy::uniform(2, 1), 1e9);
        assert!(r.eta_cluster.is_infinite());
        assert!(!r.satisfied);
    }

    #[test]
    fn validated_constructor_rejects_empty_cluster() {
        let latent = LatentModel::new(vec![DMatrix::from_element(2, 2, 0.5)]).unwrap();
        let emission = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        assert!(BlockMdp::new(latent, vec![0, 0], emission, vec![0.5, 0.5], 3).is_err());
    }

    #[test]
    fn rejects_emission_off_support() {
        let latent = LatentModel::new(vec![DMatrix::from_element(2, 2, 0.5)]).unwrap();
        let emission = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        assert!(BlockMdp::new(latent, vec![0, 1], emission, vec![0.5, 0.5], 3).is_err());
    }

    #[test]
    fn random_instance_is_regular() {
        let cfg = RandomInstanceConfig::new(2, 2, 10, 5, 3.0);
        let (m, pi) = generate_random_instance(&cfg, 7).unwrap();
        assert!(check_regularity(&m, &pi, 3.0).satisfied);
    }

    #[test]
    fn random_instance_equal_split() {
        let cfg = RandomInstanceConfig::new(3, 2, 9, 5, 2.0);
        let (m, _) = generate_random_instance(&cfg, 1).unwrap();
        for s in 0..3 {
            assert_eq!(m.cluster(s).len(), 3);
        }
    }

    #[test]
    fn random_instance_rejects_single_state() {
        let cfg = RandomInstanceConfig::new(1, 2, 9, 5, 2.0);
        assert!(matches!(generate_random_instance(&cfg, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn random_instance_gives_up_when_unreachable() {
        // 3 vs 2 contexts: cluster ratio 1.5 can never meet eta = 1.2.
        let mut cfg = RandomInstanceConfig::new(2, 2, 5, 5, 1.2);
        cfg.max_attempts = 20;
        assert!(matches!(
            generate_random_instance(&cfg, 1),
            Err(Error::RegularityNotReached { attempts: 20, .. })
        ));
    }

    #[test]
    fn marginals_propagate_to_uniform() {
        let (m, pi) = generate_two_cluster_instance(6, 0.2, 4, 0).unwrap();
        for d in m.context_marginals(&pi, 4) {
            let total: f64 = d.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for v in d {
                assert!((v - 1.0 / 6.0).abs() < 1e-12);
            }
        }
    }
}
