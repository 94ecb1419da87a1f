use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dfm::{CemConfig, NoiseSchedule};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::mdp::{ObjectiveId, DEFAULT_CAPACITY};
use crate::moq::{EnsembleShape, EpsilonSchedule, ObjectiveSpec};
use crate::pda::{MixSchedule, DEFAULT_ALPHA};
use crate::qnet::{Activation, OptimizerKind, DEFAULT_SYNC_PERIOD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    SimOnly,
    RealOnly,
    Progressive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub trunk: Vec<usize>,
    pub head: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub sync_period: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            trunk: vec![64],
            head: vec![64],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-3,
            sync_period: DEFAULT_SYNC_PERIOD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub warmup: usize,
    pub batch_size: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            warmup: 256,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Gradient steps on simulated data before any real traffic.
    pub cold_start_steps: usize,
    /// Online steps; each takes one environment request (unless the data
    /// mode is simulation-only) and one gradient step.
    pub steps: usize,
    pub epsilon: EpsilonSchedule,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            cold_start_steps: 2_000,
            steps: 10_000,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_steps: 5_000,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdaConfig {
    /// Logged production requests used for the position table and as the
    /// session pool for cold-start simulation.
    pub log_sessions: usize,
    pub sim_episodes: usize,
    pub alpha: f64,
    pub mix: MixSchedule,
}

impl Default for PdaConfig {
    fn default() -> Self {
        Self {
            log_sessions: 2_000,
            sim_episodes: 2_000,
            alpha: DEFAULT_ALPHA,
            mix: MixSchedule::with_thresholds([500, 2_000, 5_000, 10_000]).expect("valid"),
        }
    }
}

/// How candidate fusion weights are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessKind {
    /// Mean preference-weighted return of the greedy fused policy.
    Rollout { episodes: usize },
    /// AUC of the fused gain against one objective's labels on a
    /// random-action evaluation set.
    Auc {
        target: ObjectiveId,
        episodes: usize,
    },
    /// Weighted sum of per-objective AUCs on the same kind of set.
    WeightedAuc {
        tasks: BTreeMap<ObjectiveId, f64>,
        episodes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemSettings {
    pub population: usize,
    pub elites: usize,
    pub generations: usize,
    /// Defaults to the equal starting weights.
    pub init_mu: Option<Vec<f64>>,
    pub init_sigma2: Option<Vec<f64>>,
    pub noise: NoiseSchedule,
    pub project_nonnegative: bool,
    pub fitness: FitnessKind,
}

impl Default for CemSettings {
    fn default() -> Self {
        Self {
            population: 24,
            elites: 4,
            generations: 8,
            init_mu: None,
            init_sigma2: None,
            noise: NoiseSchedule::default(),
            project_nonnegative: true,
            fitness: FitnessKind::Auc {
                target: ObjectiveId::new("click"),
                episodes: 300,
            },
        }
    }
}

impl CemSettings {
    pub fn search(&self, k: usize) -> CemConfig {
        CemConfig {
            population: self.population,
            elites: self.elites,
            generations: self.generations,
            init_mu: self.init_mu.clone().unwrap_or_else(|| vec![1.0; k]),
            init_sigma2: self.init_sigma2.clone().unwrap_or_else(|| vec![1.0; k]),
            noise: self.noise,
            project_nonnegative: self.project_nonnegative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Random-action episodes for the per-objective AUC columns.
    pub auc_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 1_000,
            auc_episodes: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub use_cem: bool,
    pub data_mode: DataMode,
    /// When set, train one network on `Σ w_i r_i` with these weights
    /// instead of the per-objective ensemble.
    pub fused_reward: Option<BTreeMap<ObjectiveId, f64>>,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_cem: true,
            data_mode: DataMode::Progressive,
            fused_reward: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub label: String,
    pub objectives: Vec<ObjectiveSpec>,
    pub gamma: f64,
    /// Business value of each objective's return; scores rollouts and the
    /// combined metric.
    pub preference: BTreeMap<ObjectiveId, f64>,
    pub network: NetworkConfig,
    pub replay: ReplayConfig,
    pub training: TrainingConfig,
    pub pda: PdaConfig,
    pub cem: CemSettings,
    pub eval: EvalConfig,
    pub env: EnvConfig,
    pub ablation: AblationFlags,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            label: "MODRL-TA".into(),
            objectives: ObjectiveSpec::defaults(),
            gamma: 0.999,
            preference: [
                (ObjectiveId::new("click"), 1.0),
                (ObjectiveId::new("order"), 3.0),
            ]
            .into(),
            network: NetworkConfig::default(),
            replay: ReplayConfig::default(),
            training: TrainingConfig::default(),
            pda: PdaConfig::default(),
            cem: CemSettings::default(),
            eval: EvalConfig::default(),
            env: EnvConfig::default(),
            ablation: AblationFlags::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn shape(&self) -> EnsembleShape {
        EnsembleShape {
            state_dim: self.env.state_dim(),
            actions: self.env.positions,
            trunk: self.network.trunk.clone(),
            head: self.network.head.clone(),
            activation: self.network.activation,
        }
    }

    pub fn objective_ids(&self) -> Vec<ObjectiveId> {
        self.objectives.iter().map(|o| o.id.clone()).collect()
    }

    /// Preference weights in objective order.
    pub fn preference_vector(&self) -> Vec<f64> {
        self.objectives
            .iter()
            .map(|o| self.preference.get(&o.id).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.objectives.is_empty() {
            return bad("no objectives".into());
        }
        let ids = self.objective_ids();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return bad(format!("duplicate objective `{id}`"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        for id in self.preference.keys() {
            if !ids.contains(id) {
                return bad(format!("preference names unknown objective `{id}`"));
            }
        }
        if self
            .preference
            .values()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return bad("preference weights must be finite and ≥ 0".into());
        }
        let n = &self.network;
        if n.trunk.is_empty() || n.trunk.contains(&0) || n.head.contains(&0) {
            return bad("network widths must be positive with at least one trunk layer".into());
        }
        if !(n.learning_rate > 0.0 && n.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate {} must be positive",
                n.learning_rate
            ));
        }
        if n.sync_period == 0 {
            return bad("sync_period must be positive".into());
        }
        let r = &self.replay;
        if r.capacity == 0 || r.warmup == 0 || r.batch_size == 0 || r.warmup > r.capacity {
            return bad("replay needs 0 < warmup ≤ capacity and a positive batch size".into());
        }
        let e = &self.training.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return bad("epsilon values must lie in [0, 1]".into());
        }
        if self.pda.log_sessions == 0 && self.ablation.data_mode != DataMode::RealOnly {
            return bad("simulation needs at least one logged session".into());
        }
        if !(self.pda.alpha > 0.0) {
            return bad("smoothing alpha must be positive".into());
        }
        MixSchedule::new(self.pda.mix.stages().to_vec())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.cem
            .search(ids.len())
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("cem: {e}")))?;
        if self.cem.search(ids.len()).init_mu.len() != ids.len() {
            return bad("cem init_mu must have one entry per objective".into());
        }
        match &self.cem.fitness {
            FitnessKind::Rollout { episodes }
            | FitnessKind::Auc { episodes, .. }
            | FitnessKind::WeightedAuc { episodes, .. }
                if *episodes == 0 =>
            {
                return bad("fitness needs at least one episode".into())
            }
            FitnessKind::Auc { target, .. } if !ids.contains(target) => {
                return bad(format!("AUC target `{target}` is not an objective"))
            }
            FitnessKind::WeightedAuc { tasks, .. }
                if tasks.is_empty() || tasks.keys().any(|t| !ids.contains(t)) =>
            {
                return bad("weighted AUC tasks must name objectives".into())
            }
            _ => {}
        }
        if self.eval.episodes == 0 {
            return bad("evaluation needs at least one episode".into());
        }
        if let Some(w) = &self.ablation.fused_reward {
            if w.is_empty()
                || w.keys().any(|k| !ids.contains(k))
                || w.values().any(|v| !(*v >= 0.0))
            {
                return bad("fused_reward weights must be non-negative and name objectives".into());
            }
        }
        self.env.validate()
    }
}
