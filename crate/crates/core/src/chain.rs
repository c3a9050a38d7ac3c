//! Markov chains induced by a Block MDP under the behavior policy, their
//! stationary laws and mixing properties.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{BehaviorPolicy, BlockMdp, PROB_TOL};

/// Iteration cap for [`stationary_distribution`].
pub const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// Homogeneous chain on `0..size` with kernel `kernel[(z, z')] = P(z'|z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    kernel: DMatrix<f64>,
    initial: Vec<f64>,
}

impl FiniteChain {
    pub fn new(kernel: DMatrix<f64>, initial: Vec<f64>) -> Result<Self> {
        let k = kernel.nrows();
        if kernel.ncols() != k || initial.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "kernel is {}x{}, initial has {} entries",
                kernel.nrows(),
                kernel.ncols(),
                initial.len()
            )));
        }
        for (z, row) in kernel.row_iter().enumerate() {
            if row.iter().any(|&v| v < 0.0) || (row.sum() - 1.0).abs() > PROB_TOL * k as f64 {
                return Err(Error::InvalidModel(format!("kernel row {z} is not a probability vector")));
            }
        }
        if initial.iter().any(|&v| v < 0.0) || (initial.iter().sum::<f64>() - 1.0).abs() > PROB_TOL * k as f64 {
            return Err(Error::InvalidModel("initial law is not a probability vector".into()));
        }
        Ok(Self { kernel, initial })
    }

    pub fn size(&self) -> usize {
        self.initial.len()
    }
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `nu P`.
    pub fn step(&self, nu: &[f64]) -> Vec<f64> {
        let k = self.size();
        let mut out = vec![0.0; k];
        for (z, &w) in nu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.kernel.row(z).iter()) {
                *o += w * p;
            }
        }
        out
    }

    /// Law of `Z_h`, i.e. `mu P^{h-1}`, for `h = 1..=len`.
    pub fn marginals(&self, len: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        let mut cur = self.initial.clone();
        for h in 0..len {
            if h > 0 {
                cur = self.step(&cur);
            }
            out.push(cur.clone());
        }
        out
    }

    /// Smallest `eta` such that the chain is `eta`-regular: every ratio of two
    /// entries sharing a row or a column is at most `eta`.
    pub fn regularity(&self) -> f64 {
        let ratio = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi == 0.0 {
                1.0
            } else if lo == 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        };
        let rows = self.kernel.row_iter().map(|r| ratio(&mut r.iter().copied())).fold(1.0, f64::max);
        let cols = self.kernel.column_iter().map(|c| ratio(&mut c.iter().copied())).fold(1.0, f64::max);
        rows.max(cols)
    }

    /// `max_{z, z'} mu(z) / mu(z')`.
    pub fn initial_regularity(&self) -> f64 {
        distribution_ratio(&self.initial)
    }
}

pub(crate) fn distribution_ratio(p: &[f64]) -> f64 {
    let hi = p.iter().cloned().fold(0.0, f64::max);
    let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Context chain: `P_0(y|x) = sum_a pi(a|x) P(y|x,a)` started from `mu`.
pub fn induced_chain_mc0(m: &BlockMdp, pi: &BehaviorPolicy) -> Result<FiniteChain> {
    pi.check_compatible(m)?;
    let n = m.n_contexts();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..m.n_actions() {
        let ka = m.context_kernel(a);
        for x in 0..n {
            let w = pi.prob(x, a);
            for y in 0..n {
                k[(x, y)] += w * ka[(x, y)];
            }
        }
    }
    FiniteChain::new(k, m.initial().to_vec())
}

/// Index of the pair `(a, x)` in [`induced_chain_mc1`].
pub fn mc1_index(n: usize, a: usize, x: usize) -> usize {
    a * n + x
}

/// Chain of (action, next context): `P_1((b,y)|(a,x)) = pi(b|x) P(y|x,b)`,
/// started from `mu_1(a,x) = sum_y mu(y) pi(a|y) P(x|y,a)`.
pub fn induced_chain_mc1(m: &BlockMdp, pi: &BehaviorPolicy) -> Result<FiniteChain> {
    pi.check_compatible(m)?;
    let (n, na) = (m.n_contexts(), m.n_actions());
    let kernels: Vec<DMatrix<f64>> = (0..na).map(|a| m.context_kernel(a)).collect();
    let size = n * na;
    let mut k = DMatrix::zeros(size, size);
    for a in 0..na {
        for x in 0..n {
            let row = mc1_index(n, a, x);
            for b in 0..na {
                let w = pi.prob(x, b);
                for y in 0..n {
                    k[(row, mc1_index(n, b, y))] = w * kernels[b][(x, y)];
                }
            }
        }
    }
    let mu = m.initial();
    let mut init = vec![0.0; size];
    for a in 0..na {
        for y in 0..n {
            let w = mu[y] * pi.prob(y, a);
            if w == 0.0 {
                continue;
            }
            for x in 0..n {
                init[mc1_index(n, a, x)] += w * kernels[a][(y, x)];
            }
        }
    }
    FiniteChain::new(k, init)
}

/// Index of the triple `(x, a, x')` in the MC2 chains.
pub fn mc2_index(n: usize, na: usize, x: usize, a: usize, x2: usize) -> usize {
    (x * na + a) * n + x2
}

/// Which half of the trajectory an MC2 chain follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// `Z_h = (x_{2h-1}, a_{2h-1}, x_{2h})`.
    Odd,
    /// `Z_h = (x_{2h}, a_{2h}, x_{2h+1})`.
    Even,
}

fn mc2_odd_initial(m: &BlockMdp, pi: &BehaviorPolicy, kernels: &[DMatrix<f64>], start: &[f64]) -> Vec<f64> {
    let (n, na) = (m.n_contexts(), m.n_actions());
    let mut init = vec![0.0; n * n * na];
    for x in 0..n {
        for a in 0..na {
            let w = start[x] * pi.prob(x, a);
            for x2 in 0..n {
                init[mc2_index(n, na, x, a, x2)] = w * kernels[a][(x, x2)];
            }
        }
    }
    init
}

/// One-step triple chain `P_2((y,b,y')|(x,a,x')) = 1[y = x'] pi(b|y) P(y'|y,b)`
/// started from `mu(x) pi(a|x) P(x'|x,a)`. The state space has `n^2 A` points,
/// so this is meant for small instances.
pub fn induced_chain_mc2(m: &BlockMdp, pi: &BehaviorPolicy) -> Result<FiniteChain> {
    pi.check_compatible(m)?;
    let (n, na) = (m.n_contexts(), m.n_actions());
    let kernels: Vec<DMatrix<f64>> = (0..na).map(|a| m.context_kernel(a)).collect();
    let size = n * n * na;
    let mut k = DMatrix::zeros(size, size);
    for x in 0..n {
        for a in 0..na {
            for x2 in 0..n {
                let row = mc2_index(n, na, x, a, x2);
                for b in 0..na {
                    let w = pi.prob(x2, b);
                    for y2 in 0..n {
                        k[(row, mc2_index(n, na, x2, b, y2))] = w * kernels[b][(x2, y2)];
                    }
                }
            }
        }
    }
    let init = mc2_odd_initial(m, pi, &kernels, m.initial());
    FiniteChain::new(k, init)
}

/// Two-step triple chain with kernel `P_2^2`, started from the odd or even law.
pub fn induced_chain_mc2_two_step(m: &BlockMdp, pi: &BehaviorPolicy, parity: Parity) -> Result<FiniteChain> {
    let one = induced_chain_mc2(m, pi)?;
    let k2 = one.kernel() * one.kernel();
    let init = match parity {
        Parity::Odd => one.initial().to_vec(),
        Parity::Even => {
            let kernels: Vec<DMatrix<f64>> = (0..m.n_actions()).map(|a| m.context_kernel(a)).collect();
            let mc0 = induced_chain_mc0(m, pi)?;
            let second = mc0.step(m.initial());
            mc2_odd_initial(m, pi, &kernels, &second)
        }
    };
    FiniteChain::new(k2, init)
}

/// Power iteration from the uniform law until `||nu P - nu||_1 <= tol`.
pub fn stationary_distribution(chain: &FiniteChain, tol: f64) -> Result<Vec<f64>> {
    let k = chain.size();
    let mut nu = vec![1.0 / k as f64; k];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_POWER_ITERATIONS {
        let next = chain.step(&nu);
        residual = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        nu = next;
        if residual <= tol {
            let s: f64 = nu.iter().sum();
            nu.iter_mut().for_each(|v| *v /= s);
            return Ok(nu);
        }
    }
    Err(Error::NotConverged { iterations: MAX_POWER_ITERATIONS, residual })
}

/// `1 - min_{x,y} sum_z min(P(z|x), P(z|y))`.
pub fn dobrushin_coefficient(p: &DMatrix<f64>) -> f64 {
    let k = p.nrows();
    let mut overlap = 1.0f64;
    for x in 0..k {
        for y in (x + 1)..k {
            let s: f64 = (0..p.ncols()).map(|z| p[(x, z)].min(p[(y, z)])).sum();
            overlap = overlap.min(s);
        }
    }
    (1.0 - overlap).clamp(0.0, 1.0)
}

/// Upper bounds on the mixing times of the induced chains at `eps = 1/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingBounds {
    pub mc0: f64,
    pub mc1: f64,
    /// Shared by the odd and even two-step triple chains.
    pub mc2: f64,
}

pub fn mixing_time_upper_bound(eta: f64) -> Result<MixingBounds> {
    if !(eta >= 1.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be >= 1")));
    }
    let e2 = eta * eta;
    Ok(MixingBounds { mc0: 2.0 * e2, mc1: 2.0 * e2, mc2: e2 + 1.0 })
}

/// `eta^2 ln(1/eps)`.
pub fn tmix_upper_bound(eta: f64, eps: f64) -> Result<f64> {
    if !(eta >= 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("need eta >= 1 and eps in (0, 1), got {eta}, {eps}")));
    }
    Ok(eta * eta * (1.0 / eps).ln())
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// First `h >= 1` with `d_TV(mu P^h, nu) <= eps`, or `None` within `max_h`.
pub fn empirical_mixing_time(chain: &FiniteChain, stationary: &[f64], eps: f64, max_h: usize) -> Option<usize> {
    let mut cur = chain.initial().to_vec();
    for h in 1..=max_h {
        cur = chain.step(&cur);
        if tv_distance(&cur, stationary) <= eps {
            return Some(h);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_random_instance, generate_two_cluster_instance, LatentModel, RandomInstanceConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain(rows: &[f64], k: usize) -> FiniteChain {
        FiniteChain::new(DMatrix::from_row_slice(k, k, rows), vec![1.0 / k as f64; k]).unwrap()
    }

    #[test]
    fn uniform_two_context_chain() {
        let u = DMatrix::from_element(2, 2, 0.5);
        let latent = LatentModel::new(vec![u.clone(), u]).unwrap();
        let m = BlockMdp::new(latent, vec![0, 1], DMatrix::identity(2, 2), vec![0.5, 0.5], 3).unwrap();
        let c = induced_chain_mc0(&m, &BehaviorPolicy::uniform(2, 2)).unwrap();
        assert_relative_eq!(c.kernel().clone(), DMatrix::from_element(2, 2, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn two_cluster_mc0_by_hand() {
        let (m, pi) = generate_two_cluster_instance(4, 0.2, 5, 0).unwrap();
        let c = induced_chain_mc0(&m, &pi).unwrap();
        // P_0(y|x) = q(y|f(y)) * (p_1 + p_2)/2 with q = 1/2.
        for x in 0..4 {
            for y in 0..4 {
                let same = x % 2 == y % 2;
                let lat = if same { (0.3 + 0.5) / 2.0 } else { (0.7 + 0.5) / 2.0 };
                assert_relative_eq!(c.kernel()[(x, y)], 0.5 * lat, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cycle_is_permutation() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = BlockMdp::new(LatentModel::new(vec![k.clone()]).unwrap(), vec![0, 1], DMatrix::identity(2, 2), vec![1.0, 0.0], 4)
            .unwrap();
        let c = induced_chain_mc0(&m, &BehaviorPolicy::uniform(2, 1)).unwrap();
        assert_eq!(c.kernel(), &k);
    }

    #[test]
    fn periodic_chain_does_not_converge() {
        let c = chain(&[0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0], 3);
        assert!(matches!(stationary_distribution(&c, 1e-12), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn stationary_examples() {
        let nu = stationary_distribution(&chain(&[0.5, 0.5, 0.5, 0.5], 2), 1e-12).unwrap();
        assert_relative_eq!(nu[0], 0.5, epsilon = 1e-12);
        let nu = stationary_distribution(&chain(&[7.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0, 7.0 / 12.0], 2), 1e-12).unwrap();
        assert_relative_eq!(nu[1], 0.5, epsilon = 1e-10);
        let nu = stationary_distribution(&chain(&[0.9, 0.1, 0.5, 0.5], 2), 1e-12).unwrap();
        assert_relative_eq!(nu[0], 5.0 / 6.0, epsilon = 1e-10);
        assert_relative_eq!(nu[1], 1.0 / 6.0, epsilon = 1e-10);
    }

    #[test]
    fn dobrushin_examples() {
        assert_relative_eq!(dobrushin_coefficient(&DMatrix::from_element(3, 3, 1.0 / 3.0)), 0.0, epsilon = 1e-15);
        let p = DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert_relative_eq!(dobrushin_coefficient(&p), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(dobrushin_coefficient(&DMatrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn mixing_bound_formulas() {
        let b = mixing_time_upper_bound(1.0).unwrap();
        assert_eq!((b.mc0, b.mc1, b.mc2), (2.0, 2.0, 2.0));
        assert_relative_eq!(tmix_upper_bound(1.0, 0.25).unwrap(), 4f64.ln(), epsilon = 1e-15);
        let b = mixing_time_upper_bound(2.0).unwrap();
        assert_eq!((b.mc0, b.mc1, b.mc2), (8.0, 8.0, 5.0));
        assert!(mixing_time_upper_bound(0.5).is_err());
    }

    #[test]
    fn two_cluster_mixes_within_bound() {
        let (m, pi) = generate_two_cluster_instance(20, 0.2, 10, 0).unwrap();
        let eta = crate::model::check_regularity(&m, &pi, 1.0).eta;
        let c = induced_chain_mc0(&m, &pi).unwrap();
        let nu = stationary_distribution(&c, 1e-12).unwrap();
        let h = mixing_time_upper_bound(eta).unwrap().mc0.ceil() as usize;
        let mut d = c.initial().to_vec();
        for _ in 0..h {
            d = c.step(&d);
        }
        assert!(tv_distance(&d, &nu) <= 0.25);
        assert!(empirical_mixing_time(&c, &nu, 0.25, h).is_some());
    }

    #[test]
    fn mc1_stationary_matches_mc0() {
        let cfg = RandomInstanceConfig::new(2, 2, 6, 5, 3.0);
        let (m, pi) = generate_random_instance(&cfg, 7).unwrap();
        let nu0 = stationary_distribution(&induced_chain_mc0(&m, &pi).unwrap(), 1e-13).unwrap();
        let nu1 = stationary_distribution(&induced_chain_mc1(&m, &pi).unwrap(), 1e-13).unwrap();
        for a in 0..2 {
            for x in 0..6 {
                let expect: f64 = (0..6).map(|y| nu0[y] * pi.prob(y, a) * m.transition(y, a, x)).sum();
                assert_relative_eq!(nu1[mc1_index(6, a, x)], expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mc2_chains_are_stochastic_and_share_stationary_law() {
        let cfg = RandomInstanceConfig::new(2, 2, 4, 5, 3.0);
        let (m, pi) = generate_random_instance(&cfg, 3).unwrap();
        let odd = induced_chain_mc2_two_step(&m, &pi, Parity::Odd).unwrap();
        let even = induced_chain_mc2_two_step(&m, &pi, Parity::Even).unwrap();
        assert_eq!(odd.size(), 32);
        assert_eq!(odd.kernel(), even.kernel());
        let a = stationary_distribution(&odd, 1e-13).unwrap();
        let one = induced_chain_mc2(&m, &pi).unwrap();
        let b = stationary_distribution(&one, 1e-13).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
        // the even law is the law of (x_2, a_2, x_3), the one-step chain's second marginal
        let second = &one.marginals(2)[1];
        for (u, v) in even.initial().iter().zip(second) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    fn stochastic(k: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(0.05f64..1.0, k * k).prop_map(move |v| {
            let mut m = DMatrix::from_row_slice(k, k, &v);
            for mut r in m.row_iter_mut() {
                let s = r.sum();
                r /= s;
            }
            m
        })
    }

    proptest! {
        #[test]
        fn dobrushin_is_submultiplicative(p in stochastic(4), q in stochastic(4)) {
            let pq = &p * &q;
            prop_assert!(dobrushin_coefficient(&pq) <= dobrushin_coefficient(&p) * dobrushin_coefficient(&q) + 1e-12);
        }

        #[test]
        fn powers_stay_within_entry_range(p in stochastic(4), h in 1usize..6) {
            let lo = p.min();
            let hi = p.max();
            let mut ph = p.clone();
            for _ in 1..h {
                ph = &ph * &p;
            }
            prop_assert!(ph.min() >= lo - 1e-12);
            prop_assert!(ph.max() <= hi + 1e-12);
        }
    }
}
