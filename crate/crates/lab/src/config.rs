use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Exp3,
    Rate,
    Concentration,
    Rewardfree,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exp1 => "exp1",
            Self::Exp2 => "exp2",
            Self::Exp3 => "exp3",
            Self::Rate => "rate",
            Self::Concentration => "concentration",
            Self::Rewardfree => "rewardfree",
        }
    }
}

/// Parameters of one experiment. Grids that do not apply to an experiment
/// are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Context counts.
    pub n: Vec<usize>,
    /// Exponents `u` of `TH = floor(n (ln n)^u)` (exp1).
    pub u: Vec<u32>,
    /// Sample budgets `TH` (exp2, exp3). Empty in exp3 means `floor(n (ln n)^2)`.
    pub th: Vec<usize>,
    pub eps: Vec<f64>,
    /// Episode counts `T` (rewardfree).
    pub episodes: Vec<usize>,
    /// Episode length; a budget `TH` becomes `T = ceil(TH / H)` episodes.
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Likelihood-improvement rounds, `None` for `floor(ln(nA))`.
    pub iterations: Option<usize>,
    /// Context spikes in the reward suite (rewardfree).
    pub spikes: usize,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: kind,
            n: vec![100],
            u: vec![0, 1, 2],
            th: Vec::new(),
            eps: vec![0.2],
            episodes: Vec::new(),
            horizon: 10,
            reps: 10,
            seed: 0,
            restarts: 10,
            iterations: None,
            spikes: 5,
        };
        match kind {
            ExperimentKind::Exp1 => c.n = vec![100, 150, 200, 250, 300],
            ExperimentKind::Exp2 => c.th = (1..=10).map(|k| 500 * k).collect(),
            ExperimentKind::Exp3 => c.eps = (0..10).map(|k| k as f64 / 20.0).collect(),
            ExperimentKind::Rate => {}
            ExperimentKind::Concentration => {
                c.episodes = vec![20];
                c.reps = 10_000;
            }
            ExperimentKind::Rewardfree => {
                c.eps = vec![0.45];
                c.episodes = vec![400, 800, 1600, 3200];
            }
        }
        c
    }

    /// Defaults, overridden by the fields present in a JSON object.
    pub fn from_json(kind: ExperimentKind, text: &str) -> Result<Self, LabError> {
        let mut base = serde_json::to_value(Self::defaults(kind))?;
        let overlay: serde_json::Value = serde_json::from_str(text)?;
        let obj = overlay.as_object().ok_or_else(|| LabError::Config("config file must hold a JSON object".into()))?;
        for (k, v) in obj {
            if k == "experiment" && v.as_str() != Some(kind.name()) {
                return Err(LabError::Config(format!("config is for {v}, not {}", kind.name())));
            }
            if base.get(k).is_none() {
                return Err(LabError::Config(format!("unknown config field '{k}'")));
            }
            base[k] = v.clone();
        }
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(kind: ExperimentKind, path: &Path) -> Result<Self, LabError> {
        Self::from_json(kind, &std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        if self.reps == 0 {
            return bad("reps must be >= 1");
        }
        if self.horizon < 2 {
            return bad("horizon must be >= 2");
        }
        match self.experiment {
            ExperimentKind::Exp1 if self.n.is_empty() || self.u.is_empty() || self.eps.is_empty() => {
                bad("exp1 needs non-empty n, u and eps grids")
            }
            ExperimentKind::Exp2 if self.n.is_empty() || self.th.is_empty() || self.eps.is_empty() => {
                bad("exp2 needs non-empty n, th and eps grids")
            }
            ExperimentKind::Exp3 if self.n.is_empty() || self.eps.is_empty() => bad("exp3 needs non-empty n and eps grids"),
            ExperimentKind::Concentration if self.episodes.is_empty() => bad("concentration needs an episodes grid"),
            ExperimentKind::Rewardfree if self.n.is_empty() || self.eps.is_empty() || self.episodes.is_empty() => {
                bad("rewardfree needs non-empty n, eps and episodes grids")
            }
            _ => Ok(()),
        }
    }
}
