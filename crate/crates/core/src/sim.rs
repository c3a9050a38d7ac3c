//! Episodic trajectory simulation.
//!
//! Every episode draws from its own ChaCha8 stream seeded with
//! [`derive_seed`]`(seed, t)`, so a batch does not depend on how episodes are
//! scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BehaviorPolicy, BlockMdp};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of substream `stream` from a master seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// One trajectory `(x_1, a_1, ..., x_{H-1}, a_{H-1}, x_H)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub contexts: Vec<usize>,
    pub actions: Vec<usize>,
}

/// `T` trajectories of a common horizon `H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeBatch {
    n_contexts: usize,
    n_actions: usize,
    horizon: usize,
    episodes: Vec<Episode>,
}

impl EpisodeBatch {
    pub fn new(n_contexts: usize, n_actions: usize, horizon: usize, episodes: Vec<Episode>) -> Result<Self> {
        for (t, e) in episodes.iter().enumerate() {
            if e.contexts.len() != horizon || e.actions.len() + 1 != horizon {
                return Err(Error::InvalidArgument(format!(
                    "episode {t} has {} contexts and {} actions, horizon is {horizon}",
                    e.contexts.len(),
                    e.actions.len()
                )));
            }
            if let Some(&x) = e.contexts.iter().find(|&&x| x >= n_contexts) {
                return Err(Error::OutOfRange(format!("context {x} in episode {t} (n = {n_contexts})")));
            }
            if let Some(&a) = e.actions.iter().find(|&&a| a >= n_actions) {
                return Err(Error::OutOfRange(format!("action {a} in episode {t} (A = {n_actions})")));
            }
        }
        Ok(Self { n_contexts, n_actions, horizon, episodes })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn len(&self) -> usize {
        self.episodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    /// Episodes `[0, k)` and `[k, T)`.
    pub fn split_at(&self, k: usize) -> (EpisodeBatch, EpisodeBatch) {
        let k = k.min(self.len());
        let head = self.episodes[..k].to_vec();
        let tail = self.episodes[k..].to_vec();
        (
            Self { episodes: head, ..self.shallow() },
            Self { episodes: tail, ..self.shallow() },
        )
    }

    fn shallow(&self) -> Self {
        Self { n_contexts: self.n_contexts, n_actions: self.n_actions, horizon: self.horizon, episodes: Vec::new() }
    }

    /// Applies a context relabeling `x -> perm[x]` to every trajectory.
    pub fn permute_contexts(&self, perm: &[usize]) -> Self {
        let episodes = self
            .episodes
            .iter()
            .map(|e| Episode {
                contexts: e.contexts.iter().map(|&x| perm[x]).collect(),
                actions: e.actions.clone(),
            })
            .collect();
        Self { episodes, ..self.shallow() }
    }
}

struct Samplers {
    initial: WeightedIndex<f64>,
    policy: Vec<WeightedIndex<f64>>,
    latent: Vec<Vec<WeightedIndex<f64>>>,
    emission: Vec<WeightedIndex<f64>>,
}

fn weighted(w: impl IntoIterator<Item = f64>, what: &str) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w).map_err(|e| Error::InvalidModel(format!("{what}: {e}")))
}

impl Samplers {
    fn new(m: &BlockMdp, policy: &BehaviorPolicy) -> Result<Self> {
        let initial = weighted(m.initial().iter().copied(), "mu")?;
        let policy = (0..m.n_contexts())
            .map(|x| weighted((0..m.n_actions()).map(|a| policy.prob(x, a)), "pi"))
            .collect::<Result<_>>()?;
        let latent = (0..m.n_states())
            .map(|s| {
                (0..m.n_actions())
                    .map(|a| weighted((0..m.n_states()).map(|t| m.p(s, a, t)), "p"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let emission = (0..m.n_states())
            .map(|s| weighted(m.cluster(s).iter().map(|&x| m.q(s, x)), "q"))
            .collect::<Result<_>>()?;
        Ok(Self { initial, policy, latent, emission })
    }

    fn episode(&self, m: &BlockMdp, horizon: usize, rng: &mut ChaCha8Rng) -> Episode {
        let mut contexts = Vec::with_capacity(horizon);
        let mut actions = Vec::with_capacity(horizon - 1);
        let mut x = self.initial.sample(rng);
        contexts.push(x);
        for _ in 1..horizon {
            let a = self.policy[x].sample(rng);
            let s_next = self.latent[m.state_of(x)][a].sample(rng);
            x = m.cluster(s_next)[self.emission[s_next].sample(rng)];
            actions.push(a);
            contexts.push(x);
        }
        Episode { contexts, actions }
    }
}

/// Draws `episodes` independent trajectories of length `m.horizon()`.
pub fn simulate(m: &BlockMdp, policy: &BehaviorPolicy, episodes: usize, seed: u64) -> Result<EpisodeBatch> {
    simulate_with_horizon(m, policy, episodes, m.horizon(), seed)
}

/// As [`simulate`] with an explicit horizon.
pub fn simulate_with_horizon(
    m: &BlockMdp,
    policy: &BehaviorPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeBatch> {
    policy.check_compatible(m)?;
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let samplers = Samplers::new(m, policy)?;
    let eps: Vec<Episode> = (0..episodes as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t));
            samplers.episode(m, horizon, &mut rng)
        })
        .collect();
    Ok(EpisodeBatch { n_contexts: m.n_contexts(), n_actions: m.n_actions(), horizon, episodes: eps })
}
