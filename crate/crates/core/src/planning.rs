//! Finite-horizon planning on a Block MDP or an estimated model, exact policy
//! evaluation and reward-specific performance gaps.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::BlockMdp;
use crate::refine::EstimatedModel;

/// Non-stationary reward `r_h(x, a)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFunction {
    /// `stages[h][(x, a)]`, `h = 0..H`.
    stages: Vec<DMatrix<f64>>,
}

impl RewardFunction {
    pub fn new(stages: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = stages.first().ok_or_else(|| Error::InvalidArgument("reward needs H >= 1 stages".into()))?;
        let (n, a) = first.shape();
        for (h, m) in stages.iter().enumerate() {
            if m.shape() != (n, a) {
                return Err(Error::DimensionMismatch(format!("stage {h} is {:?}, expected {n}x{a}", m.shape())));
            }
            if m.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::OutOfRange(format!("stage {h} has a reward outside [0, 1]")));
            }
        }
        Ok(Self { stages })
    }

    pub fn constant(horizon: usize, n: usize, n_actions: usize, value: f64) -> Result<Self> {
        Self::new(vec![DMatrix::from_element(n, n_actions, value); horizon])
    }

    /// Draws every entry uniformly from `[0, 1]`.
    pub fn random(horizon: usize, n: usize, n_actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stages = (0..horizon).map(|_| DMatrix::from_fn(n, n_actions, |_, _| rng.random::<f64>())).collect();
        Self { stages }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
    pub fn n_contexts(&self) -> usize {
        self.stages[0].nrows()
    }
    pub fn n_actions(&self) -> usize {
        self.stages[0].ncols()
    }
    /// `r_h(x, a)` with `h` 0-based.
    #[inline]
    pub fn get(&self, h: usize, x: usize, a: usize) -> f64 {
        self.stages[h][(x, a)]
    }
    pub fn stages(&self) -> &[DMatrix<f64>] {
        &self.stages
    }
}

/// Deterministic Markov policy `a = pi_h(x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanPolicy {
    actions: Vec<Vec<usize>>,
    n_actions: usize,
}

impl PlanPolicy {
    pub fn new(actions: Vec<Vec<usize>>, n_actions: usize) -> Result<Self> {
        let n = actions.first().map(|r| r.len()).ok_or_else(|| Error::InvalidArgument("empty policy".into()))?;
        for (h, row) in actions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!("stage {h} has {} contexts, expected {n}", row.len())));
            }
            if let Some(&a) = row.iter().find(|&&a| a >= n_actions) {
                return Err(Error::OutOfRange(format!("action {a} >= A = {n_actions} at stage {h}")));
            }
        }
        Ok(Self { actions, n_actions })
    }
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
    pub fn n_contexts(&self) -> usize {
        self.actions[0].len()
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    #[inline]
    pub fn action(&self, h: usize, x: usize) -> usize {
        self.actions[h][x]
    }
    pub fn table(&self) -> &[Vec<usize>] {
        &self.actions
    }
}

/// What the planner needs from a model: the block factorization.
pub trait PlanningModel {
    fn n_contexts(&self) -> usize;
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn state_of(&self, x: usize) -> usize;
    /// `q(x | s)`.
    fn emission(&self, s: usize, x: usize) -> f64;
    /// `p(s' | s, a)`.
    fn latent(&self, s: usize, a: usize, s_next: usize) -> f64;
    fn initial(&self, x: usize) -> f64;
}

impl PlanningModel for BlockMdp {
    fn n_contexts(&self) -> usize {
        BlockMdp::n_contexts(self)
    }
    fn n_states(&self) -> usize {
        BlockMdp::n_states(self)
    }
    fn n_actions(&self) -> usize {
        BlockMdp::n_actions(self)
    }
    fn state_of(&self, x: usize) -> usize {
        BlockMdp::state_of(self, x)
    }
    fn emission(&self, s: usize, x: usize) -> f64 {
        self.q(s, x)
    }
    fn latent(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.p(s, a, s_next)
    }
    fn initial(&self, x: usize) -> f64 {
        self.initial()[x]
    }
}

/// An estimated model with rows that had no data replaced by uniform laws.
#[derive(Debug, Clone)]
pub struct PlanView {
    decoder: Vec<usize>,
    p: Vec<DMatrix<f64>>,
    q: DMatrix<f64>,
    mu: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PlanView {
    pub fn new(est: &EstimatedModel) -> Self {
        let s_count = est.n_states();
        let mut warnings = Vec::new();
        let mut p = est.p_hat.clone();
        for &(s, a) in &est.flags.p_zero_rows {
            warnings.push(format!("p_hat({s}, {a}) had no data; using a uniform row"));
            p[a].row_mut(s).fill(1.0 / s_count as f64);
        }
        let mut q = est.q_hat.clone();
        let members = est.decoder.members();
        for &s in &est.flags.q_zero_rows {
            let size = members[s].len();
            warnings.push(format!("q_hat(.|{s}) had no data; using a uniform law over {size} contexts"));
            for &x in &members[s] {
                q[(s, x)] = 1.0 / size as f64;
            }
        }
        Self { decoder: est.decoder.labels.clone(), p, q, mu: est.mu_hat.clone(), warnings }
    }
}

impl PlanningModel for PlanView {
    fn n_contexts(&self) -> usize {
        self.decoder.len()
    }
    fn n_states(&self) -> usize {
        self.q.nrows()
    }
    fn n_actions(&self) -> usize {
        self.p.len()
    }
    fn state_of(&self, x: usize) -> usize {
        self.decoder[x]
    }
    fn emission(&self, s: usize, x: usize) -> f64 {
        self.q[(s, x)]
    }
    fn latent(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.p[a][(s, s_next)]
    }
    fn initial(&self, x: usize) -> f64 {
        self.mu[x]
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub policy: PlanPolicy,
    /// `sum_x mu(x) V_1(x)`.
    pub value: f64,
    /// `values[h][x] = V_{h+1}(x)` with `h` 0-based.
    pub values: Vec<Vec<f64>>,
}

fn check_reward<M: PlanningModel + ?Sized>(m: &M, r: &RewardFunction) -> Result<()> {
    if r.n_contexts() != m.n_contexts() || r.n_actions() != m.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "reward is {}x{}, model has n = {}, A = {}",
            r.n_contexts(),
            r.n_actions(),
            m.n_contexts(),
            m.n_actions()
        )));
    }
    Ok(())
}

fn argmax_lowest(q: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, v) in q.enumerate() {
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

/// Backward induction over `H = r.horizon()` stages through the block
/// factorization. Ties go to the lowest action.
pub fn plan<M: PlanningModel + ?Sized>(m: &M, r: &RewardFunction) -> Result<PlanOutput> {
    check_reward(m, r)?;
    let (n, ns, na, h_len) = (m.n_contexts(), m.n_states(), m.n_actions(), r.horizon());
    let mut next = vec![0.0; n];
    let mut actions = vec![vec![0; n]; h_len];
    let mut values = vec![Vec::new(); h_len];
    for h in (0..h_len).rev() {
        let mut w = vec![0.0; ns];
        for (y, &v) in next.iter().enumerate() {
            let s = m.state_of(y);
            w[s] += m.emission(s, y) * v;
        }
        let lam: Vec<f64> = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| (0..ns).map(|t| m.latent(s, a, t) * w[t]).sum())
            .collect();
        let mut cur = vec![0.0; n];
        for x in 0..n {
            let s = m.state_of(x);
            let (a, v) = argmax_lowest((0..na).map(|a| r.get(h, x, a) + lam[s * na + a]));
            actions[h][x] = a;
            cur[x] = v;
        }
        values[h] = cur.clone();
        next = cur;
    }
    let value = (0..n).map(|x| m.initial(x) * next[x]).sum();
    Ok(PlanOutput { policy: PlanPolicy { actions, n_actions: na }, value, values })
}

/// Backward induction on the dense `n x n` kernels `P(y|x,a)`.
pub fn plan_dense(m: &BlockMdp, r: &RewardFunction) -> Result<PlanOutput> {
    check_reward(m, r)?;
    let (n, na, h_len) = (m.n_contexts(), m.n_actions(), r.horizon());
    let kernels: Vec<DMatrix<f64>> = (0..na).map(|a| m.context_kernel(a)).collect();
    let mut next = vec![0.0; n];
    let mut actions = vec![vec![0; n]; h_len];
    let mut values = vec![Vec::new(); h_len];
    for h in (0..h_len).rev() {
        let mut cur = vec![0.0; n];
        for x in 0..n {
            let (a, v) = argmax_lowest(
                (0..na).map(|a| r.get(h, x, a) + (0..n).map(|y| kernels[a][(x, y)] * next[y]).sum::<f64>()),
            );
            actions[h][x] = a;
            cur[x] = v;
        }
        values[h] = cur.clone();
        next = cur;
    }
    let value = (0..n).map(|x| m.initial()[x] * next[x]).sum();
    Ok(PlanOutput { policy: PlanPolicy { actions, n_actions: na }, value, values })
}

/// `E[sum_h r_h(x_h, pi_h(x_h))]` by exact forward propagation.
pub fn evaluate<M: PlanningModel + ?Sized>(m: &M, policy: &PlanPolicy, r: &RewardFunction) -> Result<f64> {
    check_reward(m, r)?;
    if policy.horizon() != r.horizon() || policy.n_contexts() != m.n_contexts() {
        return Err(Error::DimensionMismatch(format!(
            "policy covers {} stages and {} contexts, reward {} stages",
            policy.horizon(),
            policy.n_contexts(),
            r.horizon()
        )));
    }
    let (n, ns) = (m.n_contexts(), m.n_states());
    let mut d: Vec<f64> = (0..n).map(|x| m.initial(x)).collect();
    let mut value = 0.0;
    for h in 0..r.horizon() {
        let mut mass = vec![0.0; ns];
        for (x, &dx) in d.iter().enumerate() {
            if dx == 0.0 {
                continue;
            }
            let a = policy.action(h, x);
            value += dx * r.get(h, x, a);
            let s = m.state_of(x);
            for (t, mt) in mass.iter_mut().enumerate() {
                *mt += dx * m.latent(s, a, t);
            }
        }
        if h + 1 < r.horizon() {
            d = (0..n)
                .map(|y| {
                    let s = m.state_of(y);
                    m.emission(s, y) * mass[s]
                })
                .collect();
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueReport {
    pub v_star: f64,
    pub v_pi: f64,
    /// `(V* - V^pi) / H`.
    pub gap_per_stage: f64,
}

/// Plans on `est`, evaluates the plan on `truth`, and compares with the
/// optimal value of `truth`.
pub fn reward_specific_gap(truth: &BlockMdp, est: &EstimatedModel, r: &RewardFunction) -> Result<ValueReport> {
    if est.n_contexts() != truth.n_contexts() {
        return Err(Error::DimensionMismatch(format!(
            "estimate covers {} contexts, model has {}",
            est.n_contexts(),
            truth.n_contexts()
        )));
    }
    gap_for_view(truth, &PlanView::new(est), r)
}

fn gap_for_view<M: PlanningModel + ?Sized>(truth: &BlockMdp, view: &M, r: &RewardFunction) -> Result<ValueReport> {
    let star = plan(truth, r)?;
    let hat = plan(view, r)?;
    let v_pi = evaluate(truth, &hat.policy, r)?;
    Ok(ValueReport { v_star: star.value, v_pi, gap_per_stage: (star.value - v_pi) / r.horizon() as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub reports: Vec<ValueReport>,
    /// Largest per-stage gap over the suite.
    pub max_gap: f64,
    /// Index of the reward attaining `max_gap`, lowest on ties.
    pub argmax: usize,
}

pub fn reward_suite_gap(truth: &BlockMdp, est: &EstimatedModel, suite: &[RewardFunction]) -> Result<SuiteReport> {
    if suite.is_empty() {
        return Err(Error::InvalidArgument("reward suite is empty".into()));
    }
    let view = PlanView::new(est);
    let reports: Vec<ValueReport> = suite.par_iter().map(|r| gap_for_view(truth, &view, r)).collect::<Result<_>>()?;
    let (argmax, max_gap) = reports
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, r)| if r.gap_per_stage > b.1 { (k, r.gap_per_stage) } else { b });
    Ok(SuiteReport { reports, max_gap, argmax })
}

/// Indicator of latent state `s` under `decoder`, for every stage and action.
pub fn cluster_indicator(decoder: &[usize], s: usize, horizon: usize, n_actions: usize) -> RewardFunction {
    let stage = DMatrix::from_fn(decoder.len(), n_actions, |x, _| if decoder[x] == s { 1.0 } else { 0.0 });
    RewardFunction { stages: vec![stage; horizon] }
}

/// Reward 1 at context `x`, 0 elsewhere.
pub fn context_spike(n: usize, x: usize, horizon: usize, n_actions: usize) -> RewardFunction {
    let stage = DMatrix::from_fn(n, n_actions, |y, _| if y == x { 1.0 } else { 0.0 });
    RewardFunction { stages: vec![stage; horizon] }
}

/// Per-cluster indicators, `spikes` context spikes on a random subset and one
/// uniform random reward.
pub fn default_reward_suite(truth: &BlockMdp, horizon: usize, spikes: usize, seed: u64) -> Vec<RewardFunction> {
    let (n, na) = (truth.n_contexts(), truth.n_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite: Vec<RewardFunction> =
        (0..truth.n_states()).map(|s| cluster_indicator(truth.decoder(), s, horizon, na)).collect();
    let mut picked = sample(&mut rng, n, spikes.min(n)).into_vec();
    picked.sort_unstable();
    suite.extend(picked.into_iter().map(|x| context_spike(n, x, horizon, na)));
    suite.push(RewardFunction::random(horizon, n, na, rng.random()));
    suite
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::{expected_counts, expected_visits};
    use crate::kmedians::ClusterAssignment;
    use crate::model::{generate_two_cluster_instance, BehaviorPolicy, LatentModel};
    use crate::refine::estimate_from_counts;
    use approx::assert_relative_eq;

    fn exact_estimate(m: &BlockMdp, pi: &BehaviorPolicy) -> EstimatedModel {
        let counts = expected_counts(m, pi, 100.0).unwrap();
        let visits = expected_visits(m, pi, 100.0);
        let init: Vec<f64> = m.initial().iter().map(|v| v * 100.0).collect();
        let dec = ClusterAssignment::new(m.decoder().to_vec(), m.n_states()).unwrap();
        estimate_from_counts(&counts, &visits, &init, &dec).unwrap()
    }

    #[test]
    fn one_step_is_greedy() {
        let (m, _) = generate_two_cluster_instance(4, 0.2, 2, 0).unwrap();
        let r = RewardFunction::new(vec![DMatrix::from_row_slice(4, 2, &[0.1, 0.9, 0.5, 0.2, 0.3, 0.3, 1.0, 0.0])]).unwrap();
        let out = plan(&m, &r).unwrap();
        assert_eq!(out.policy.table()[0], vec![1, 0, 0, 0]);
        assert_relative_eq!(out.value, 0.25 * (0.9 + 0.5 + 0.3 + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn constant_reward() {
        let (m, _) = generate_two_cluster_instance(6, 0.2, 4, 0).unwrap();
        let r = RewardFunction::constant(4, 6, 2, 1.0).unwrap();
        let out = plan(&m, &r).unwrap();
        assert_relative_eq!(out.value, 4.0, epsilon = 1e-12);
        let any = PlanPolicy::new(vec![vec![1; 6]; 4], 2).unwrap();
        let half = RewardFunction::constant(4, 6, 2, 0.5).unwrap();
        assert_relative_eq!(evaluate(&m, &any, &half).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cycle_hand_value() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = BlockMdp::new(LatentModel::new(vec![k]).unwrap(), vec![0, 1], DMatrix::identity(2, 2), vec![0.7, 0.3], 2)
            .unwrap();
        let stage1 = DMatrix::zeros(2, 1);
        let stage2 = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let r = RewardFunction::new(vec![stage1, stage2]).unwrap();
        let pol = PlanPolicy::new(vec![vec![0, 0]; 2], 1).unwrap();
        // x_2 = context 1 iff x_1 = context 0
        assert_relative_eq!(evaluate(&m, &pol, &r).unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn plan_value_matches_evaluation() {
        let (m, _) = generate_two_cluster_instance(8, 0.2, 5, 0).unwrap();
        let r = RewardFunction::random(5, 8, 2, 3);
        let out = plan(&m, &r).unwrap();
        assert_relative_eq!(evaluate(&m, &out.policy, &r).unwrap(), out.value, epsilon = 1e-9);
        for (h, vals) in out.values.iter().enumerate() {
            assert!(vals.iter().all(|&v| (0.0..=(5 - h) as f64 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn dense_planner_agrees() {
        let (m, _) = generate_two_cluster_instance(8, 0.3, 4, 0).unwrap();
        let r = RewardFunction::random(4, 8, 2, 9);
        let (a, b) = (plan(&m, &r).unwrap(), plan_dense(&m, &r).unwrap());
        assert_relative_eq!(a.value, b.value, epsilon = 1e-9);
    }

    #[test]
    fn exact_estimate_has_no_gap() {
        let (m, pi) = generate_two_cluster_instance(10, 0.2, 6, 0).unwrap();
        let est = exact_estimate(&m, &pi);
        let r = RewardFunction::random(6, 10, 2, 1);
        assert!(reward_specific_gap(&m, &est, &r).unwrap().gap_per_stage.abs() <= 1e-9);
        let suite = default_reward_suite(&m, 6, 3, 2);
        assert_eq!(suite.len(), 2 + 3 + 1);
        assert!(reward_suite_gap(&m, &est, &suite).unwrap().max_gap.abs() <= 1e-9);
        assert!(reward_suite_gap(&m, &est, &[]).is_err());
    }

    #[test]
    fn suite_of_one_equals_single_gap() {
        let (m, pi) = generate_two_cluster_instance(10, 0.2, 6, 0).unwrap();
        let mut est = exact_estimate(&m, &pi);
        est.p_hat[0] = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.4, 0.6]);
        let r = cluster_indicator(m.decoder(), 0, 6, 2);
        let single = reward_specific_gap(&m, &est, &r).unwrap();
        let suite = reward_suite_gap(&m, &est, std::slice::from_ref(&r)).unwrap();
        assert_eq!(suite.max_gap, single.gap_per_stage);
        assert!(single.gap_per_stage > 0.0);
    }

    #[test]
    fn flagged_rows_become_uniform() {
        let (m, pi) = generate_two_cluster_instance(6, 0.2, 4, 0).unwrap();
        let mut est = exact_estimate(&m, &pi);
        est.p_hat[1].row_mut(0).fill(0.0);
        est.flags.p_zero_rows.push((0, 1));
        let view = PlanView::new(&est);
        assert_eq!(view.warnings.len(), 1);
        assert_eq!(view.latent(0, 1, 1), 0.5);
    }

    #[test]
    fn corrupted_emission_shows_in_suite() {
        let (m, pi) = generate_two_cluster_instance(10, 0.2, 6, 0).unwrap();
        let mut est = exact_estimate(&m, &pi);
        // cluster 0 emission becomes a point mass on context 0
        for x in 0..10 {
            est.q_hat[(0, x)] = if x == 0 { 1.0 } else { 0.0 };
        }
        let suite = default_reward_suite(&m, 6, 10, 4);
        let unaffected = reward_specific_gap(&m, &est, &cluster_indicator(m.decoder(), 1, 6, 2)).unwrap();
        let s = reward_suite_gap(&m, &est, &suite).unwrap();
        assert!(s.max_gap > unaffected.gap_per_stage);
    }
}
