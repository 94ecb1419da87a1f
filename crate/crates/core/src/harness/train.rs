use std::collections::BTreeMap;

use crate::dfm::{fused_action, WeightVector};
use crate::error::{Result, Stage, StageExt};
use crate::mdp::{ActionIndex, ObjectiveId, ReplayBuffer, StateVector, Transition};
use crate::moq::{fused_reward_baseline, QEnsemble, QModel};
use crate::qnet::{Activation, Mlp, Optimizer, QNetwork};
use crate::rng::SeededRng;

use super::config::ExperimentConfig;

/// The model being trained: the per-objective ensemble, or a single
/// network on scalarized rewards.
#[derive(Debug, Clone)]
pub enum Learner {
    Ensemble(QEnsemble),
    Fused {
        net: QNetwork,
        opt: Optimizer,
        weights: BTreeMap<ObjectiveId, f64>,
    },
}

impl Learner {
    pub fn new(cfg: &ExperimentConfig, rng: &mut SeededRng) -> Result<Self> {
        let shape = cfg.shape();
        match &cfg.ablation.fused_reward {
            None => Ok(Learner::Ensemble(QEnsemble::new(
                cfg.objectives.clone(),
                shape,
                cfg.network.sync_period,
                cfg.network.optimizer,
                rng,
            )?)),
            Some(weights) => {
                let mut sizes = vec![shape.state_dim];
                sizes.extend(&shape.trunk);
                sizes.extend(&shape.head);
                sizes.push(shape.actions);
                let eval = Mlp::new(&sizes, shape.activation, Activation::Identity, rng)?;
                let opt = Optimizer::new(cfg.network.optimizer, &eval);
                Ok(Learner::Fused {
                    net: QNetwork::new(eval, cfg.network.sync_period)?,
                    opt,
                    weights: weights.clone(),
                })
            }
        }
    }

    /// One gradient step; returns the (total) loss.
    pub fn train(&mut self, batch: &[&Transition], gamma: f64, lr: f64) -> Result<f64> {
        match self {
            Learner::Ensemble(ens) => Ok(ens.train_step(batch, gamma, lr)?.total),
            Learner::Fused { net, opt, weights } => {
                let fused = fused_reward_baseline(batch, weights)?;
                let samples: Vec<_> = fused.iter().map(|f| f.sample()).collect();
                net.train_on(&samples, gamma, lr, opt)
            }
        }
    }

    /// Weights the learner acts with before any search: one per Q-row.
    pub fn default_weights(&self) -> WeightVector {
        WeightVector::uniform(self.objective_ids().len()).expect("at least one row")
    }

    pub fn is_fused(&self) -> bool {
        matches!(self, Learner::Fused { .. })
    }
}

impl QModel for Learner {
    fn objective_ids(&self) -> Vec<ObjectiveId> {
        match self {
            Learner::Ensemble(e) => e.objective_ids(),
            Learner::Fused { net, .. } => net.objective_ids(),
        }
    }

    fn actions(&self) -> usize {
        match self {
            Learner::Ensemble(e) => QModel::actions(e),
            Learner::Fused { net, .. } => QModel::actions(net),
        }
    }

    fn q_rows(&self, s: &StateVector) -> Result<Vec<Vec<f64>>> {
        match self {
            Learner::Ensemble(e) => e.q_rows(s),
            Learner::Fused { net, .. } => net.q_rows(s),
        }
    }
}

/// Uniform action with probability `epsilon`, else the greedy fused one.
pub fn act_fused_epsilon(
    model: &(impl QModel + ?Sized),
    w: &WeightVector,
    s: &StateVector,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<ActionIndex> {
    let actions = model.actions();
    if epsilon > 0.0 && rng.uniform() < epsilon {
        return ActionIndex::new(rng.index(actions), actions);
    }
    fused_action(model, s, w)
}

/// Gradient steps on a single buffer, used for the simulated cold start.
pub(crate) fn train_from_buffer(
    learner: &mut Learner,
    buffer: &ReplayBuffer,
    steps: usize,
    cfg: &ExperimentConfig,
    rng: &mut SeededRng,
) -> Result<()> {
    for _ in 0..steps {
        let batch = buffer
            .sample(cfg.replay.batch_size, rng)
            .stage(Stage::Training)?;
        learner
            .train(&batch, cfg.gamma, cfg.network.learning_rate)
            .stage(Stage::Training)?;
    }
    Ok(())
}
