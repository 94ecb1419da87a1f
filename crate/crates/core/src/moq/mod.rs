//! Multi-objective Q-learning: one Q-head per objective over a shared trunk.
//!
//! Every head sees the same trunk features. A train step computes each
//! head's TD loss against its own target network, sums the trunk gradient
//! contributions of all heads (the gradient of `L_total = Σ L^i`), and
//! updates head parameters independently.

mod checkpoint;

pub use checkpoint::{load_ensemble, save_ensemble};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionIndex, ObjectiveId, Reward, Sample, StateVector, Transition};
use crate::qnet::{self, argmax, Activation, Mlp, Optimizer, OptimizerKind, QNetwork};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardEvent {
    Click,
    Order,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub id: ObjectiveId,
    pub reward_event: RewardEvent,
}

impl ObjectiveSpec {
    pub fn new(id: &str, reward_event: RewardEvent) -> Self {
        Self {
            id: ObjectiveId::new(id),
            reward_event,
        }
    }

    pub fn click() -> Self {
        Self::new("click", RewardEvent::Click)
    }

    pub fn order() -> Self {
        Self::new("order", RewardEvent::Order)
    }

    /// The default pair: clicks then orders.
    pub fn defaults() -> Vec<Self> {
        vec![Self::click(), Self::order()]
    }
}

/// What the user did on a request. An order implies a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeedbackEvent {
    clicked: bool,
    ordered: bool,
    page_view: bool,
}

impl FeedbackEvent {
    pub fn new(clicked: bool, ordered: bool) -> Result<Self> {
        if ordered && !clicked {
            return Err(Error::InvalidArgument("an order requires a click".into()));
        }
        Ok(Self {
            clicked,
            ordered,
            page_view: true,
        })
    }

    pub fn page_view_only() -> Self {
        Self {
            clicked: false,
            ordered: false,
            page_view: true,
        }
    }

    pub fn clicked(self) -> bool {
        self.clicked
    }

    pub fn ordered(self) -> bool {
        self.ordered
    }

    pub fn page_view(self) -> bool {
        self.page_view
    }

    /// Event-wise OR, e.g. to aggregate item events into a request event.
    pub fn merge(self, other: Self) -> Self {
        Self {
            clicked: self.clicked || other.clicked,
            ordered: self.ordered || other.ordered,
            page_view: self.page_view || other.page_view,
        }
    }

    /// All well-formed events: page view, click, click + order.
    pub fn all() -> [FeedbackEvent; 3] {
        [
            Self::page_view_only(),
            Self {
                clicked: true,
                ordered: false,
                page_view: true,
            },
            Self {
                clicked: true,
                ordered: true,
                page_view: true,
            },
        ]
    }
}

/// `+1` if the objective's event occurred, `-1` for a bare page view.
pub fn reward(spec: &ObjectiveSpec, ev: FeedbackEvent) -> Reward {
    let hit = match spec.reward_event {
        RewardEvent::Click => ev.clicked,
        RewardEvent::Order => ev.ordered,
    };
    if hit {
        Reward::Hit
    } else {
        Reward::Miss
    }
}

/// Per-objective rewards for one event.
pub fn rewards_for(
    objectives: &[ObjectiveSpec],
    ev: FeedbackEvent,
) -> BTreeMap<ObjectiveId, Reward> {
    objectives
        .iter()
        .map(|o| (o.id.clone(), reward(o, ev)))
        .collect()
}

/// Anything that maps a state to one Q-row per objective.
pub trait QModel {
    fn objective_ids(&self) -> Vec<ObjectiveId>;
    fn actions(&self) -> usize;
    fn q_rows(&self, s: &StateVector) -> Result<Vec<Vec<f64>>>;
}

impl QModel for QNetwork {
    fn objective_ids(&self) -> Vec<ObjectiveId> {
        vec![ObjectiveId::new("fused")]
    }

    fn actions(&self) -> usize {
        self.eval().output_dim()
    }

    fn q_rows(&self, s: &StateVector) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.q_values(s)?])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleShape {
    pub state_dim: usize,
    pub actions: usize,
    /// Hidden widths of the shared trunk (at least one layer).
    pub trunk: Vec<usize>,
    /// Hidden widths of each head before the output layer.
    pub head: Vec<usize>,
    pub activation: Activation,
}

impl EnsembleShape {
    /// Two hidden layers of 64 units, the first one shared.
    pub fn new(state_dim: usize, actions: usize) -> Self {
        Self {
            state_dim,
            actions,
            trunk: vec![64],
            head: vec![64],
            activation: Activation::Relu,
        }
    }

    fn trunk_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.state_dim];
        s.extend(&self.trunk);
        s
    }

    fn head_sizes(&self) -> Vec<usize> {
        let mut s = vec![*self.trunk.last().expect("validated")];
        s.extend(&self.head);
        s.push(self.actions);
        s
    }

    fn validate(&self) -> Result<()> {
        if self.trunk.is_empty() {
            return Err(Error::InvalidArgument(
                "trunk needs at least one shared layer".into(),
            ));
        }
        if self.state_dim == 0
            || self.actions == 0
            || self.trunk.contains(&0)
            || self.head.contains(&0)
        {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which parameters a train step may change.
#[derive(Debug, Clone, Default)]
pub struct TrainMask {
    pub freeze_trunk: bool,
    /// `None` trains every head.
    pub heads: Option<Vec<ObjectiveId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<(ObjectiveId, f64)>,
    pub total: f64,
    pub synced: bool,
}

/// Losses and gradients of every head plus the summed trunk gradient.
#[derive(Debug, Clone)]
pub struct EnsembleGrads {
    pub losses: Vec<f64>,
    pub trunk: Mlp,
    pub heads: Vec<Mlp>,
}

#[derive(Debug, Clone)]
pub struct QEnsemble {
    objectives: Vec<ObjectiveSpec>,
    shape: EnsembleShape,
    trunk: Mlp,
    trunk_target: Mlp,
    heads: Vec<QNetwork>,
    sync_period: usize,
    steps_since_sync: usize,
    optimizer: OptimizerKind,
    trunk_opt: Optimizer,
    head_opts: Vec<Optimizer>,
}

impl QEnsemble {
    pub fn new(
        objectives: Vec<ObjectiveSpec>,
        shape: EnsembleShape,
        sync_period: usize,
        optimizer: OptimizerKind,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        shape.validate()?;
        if objectives.is_empty() {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one objective".into(),
            ));
        }
        for (i, o) in objectives.iter().enumerate() {
            if objectives[..i].iter().any(|p| p.id == o.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate objective `{}`",
                    o.id
                )));
            }
        }
        if sync_period == 0 {
            return Err(Error::InvalidArgument(
                "sync period must be positive".into(),
            ));
        }
        let trunk = Mlp::new(
            &shape.trunk_sizes(),
            shape.activation,
            shape.activation,
            rng,
        )?;
        let mut heads = Vec::with_capacity(objectives.len());
        for _ in &objectives {
            let head = Mlp::new(
                &shape.head_sizes(),
                shape.activation,
                Activation::Identity,
                rng,
            )?;
            heads.push(QNetwork::new(head, sync_period)?);
        }
        let trunk_opt = Optimizer::new(optimizer, &trunk);
        let head_opts = heads
            .iter()
            .map(|h| Optimizer::new(optimizer, h.eval()))
            .collect();
        Ok(Self {
            objectives,
            trunk_target: trunk.clone(),
            trunk,
            heads,
            shape,
            sync_period,
            steps_since_sync: 0,
            optimizer,
            trunk_opt,
            head_opts,
        })
    }

    /// All parameters zero, so every Q-value is zero.
    pub fn zeros(
        objectives: Vec<ObjectiveSpec>,
        shape: EnsembleShape,
        sync_period: usize,
        optimizer: OptimizerKind,
    ) -> Result<Self> {
        let mut ens = Self::new(
            objectives,
            shape,
            sync_period,
            optimizer,
            &mut SeededRng::new(0, 0),
        )?;
        ens.trunk.scale(0.0);
        ens.trunk_target.scale(0.0);
        for h in &mut ens.heads {
            h.eval_mut().scale(0.0);
            h.sync_target();
        }
        Ok(ens)
    }

    pub(crate) fn from_parts(
        objectives: Vec<ObjectiveSpec>,
        shape: EnsembleShape,
        trunk: Mlp,
        trunk_target: Mlp,
        heads: Vec<QNetwork>,
        sync_period: usize,
        steps_since_sync: usize,
        optimizer: OptimizerKind,
    ) -> Result<Self> {
        shape.validate()?;
        let ts = shape.trunk_sizes();
        let hs = shape.head_sizes();
        if trunk.sizes() != ts || trunk_target.sizes() != ts {
            return Err(Error::Checkpoint("trunk shape mismatch".into()));
        }
        if heads.len() != objectives.len() || heads.iter().any(|h| h.eval().sizes() != hs) {
            return Err(Error::Checkpoint("head shape mismatch".into()));
        }
        if steps_since_sync >= sync_period {
            return Err(Error::Checkpoint("bad sync counter".into()));
        }
        let trunk_opt = Optimizer::new(optimizer, &trunk);
        let head_opts = heads
            .iter()
            .map(|h| Optimizer::new(optimizer, h.eval()))
            .collect();
        Ok(Self {
            objectives,
            shape,
            trunk,
            trunk_target,
            heads,
            sync_period,
            steps_since_sync,
            optimizer,
            trunk_opt,
            head_opts,
        })
    }

    pub fn objectives(&self) -> &[ObjectiveSpec] {
        &self.objectives
    }

    pub fn shape(&self) -> &EnsembleShape {
        &self.shape
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn trunk_target(&self) -> &Mlp {
        &self.trunk_target
    }

    pub fn heads(&self) -> &[QNetwork] {
        &self.heads
    }

    pub fn head_mut(&mut self, i: usize) -> &mut QNetwork {
        &mut self.heads[i]
    }

    pub fn sync_period(&self) -> usize {
        self.sync_period
    }

    pub fn steps_since_sync(&self) -> usize {
        self.steps_since_sync
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        self.optimizer
    }

    pub fn index_of(&self, id: &ObjectiveId) -> Result<usize> {
        self.objectives
            .iter()
            .position(|o| &o.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective `{id}`")))
    }

    /// Adds a head for a new objective. Existing parameters are untouched.
    pub fn add_objective(&mut self, spec: ObjectiveSpec, rng: &mut SeededRng) -> Result<()> {
        if self.objectives.iter().any(|o| o.id == spec.id) {
            return Err(Error::InvalidArgument(format!(
                "duplicate objective `{}`",
                spec.id
            )));
        }
        let head = Mlp::new(
            &self.shape.head_sizes(),
            self.shape.activation,
            Activation::Identity,
            rng,
        )?;
        self.head_opts.push(Optimizer::new(self.optimizer, &head));
        self.heads.push(QNetwork::new(head, self.sync_period)?);
        self.objectives.push(spec);
        Ok(())
    }

    /// Per-objective Q-rows from the evaluation parameters, in objective order.
    pub fn q_values(&self, s: &StateVector) -> Result<Vec<Vec<f64>>> {
        let features = self.trunk.forward(s.values())?;
        self.heads
            .iter()
            .map(|h| h.eval().forward(&features))
            .collect()
    }

    pub fn q_values_map(&self, s: &StateVector) -> Result<BTreeMap<ObjectiveId, Vec<f64>>> {
        Ok(self
            .objectives
            .iter()
            .map(|o| o.id.clone())
            .zip(self.q_values(s)?)
            .collect())
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        let ids: Vec<ObjectiveId> = self.objectives.iter().map(|o| o.id.clone()).collect();
        for t in batch {
            if t.state.dim() != self.shape.state_dim {
                return Err(Error::Dimension {
                    what: "state",
                    expected: self.shape.state_dim,
                    got: t.state.dim(),
                });
            }
            if t.action.position() >= self.shape.actions {
                return Err(Error::InvalidArgument(format!(
                    "action {} out of range",
                    t.action.position()
                )));
            }
            for id in &ids {
                if !t.rewards.contains_key(id) {
                    return Err(Error::ObjectiveMismatch {
                        expected: ids.iter().map(|o| o.to_string()).collect(),
                        got: t.rewards.keys().map(|o| o.to_string()).collect(),
                    });
                }
            }
        }
        Ok(())
    }

    /// TD targets per head (outer index = objective), from the target trunk
    /// and each head's target network.
    pub fn td_targets(&self, batch: &[&Transition], gamma: f64) -> Result<Vec<Vec<f64>>> {
        qnet::check_gamma(gamma)?;
        self.check_batch(batch)?;
        let mut out = vec![Vec::with_capacity(batch.len()); self.heads.len()];
        for t in batch {
            let next = if t.terminal {
                None
            } else {
                Some(self.trunk_target.forward(t.next_state.values())?)
            };
            for (i, (o, h)) in self.objectives.iter().zip(&self.heads).enumerate() {
                let r = t.rewards[&o.id].value();
                let y = match &next {
                    None => r,
                    Some(f) => {
                        let q = h.target().forward(f)?;
                        r + gamma * q[argmax(&q)]
                    }
                };
                out[i].push(y);
            }
        }
        Ok(out)
    }

    /// Mean squared TD loss of each head and the gradients of `Σ L^i`.
    pub fn loss_and_grad(
        &self,
        batch: &[&Transition],
        targets: &[Vec<f64>],
    ) -> Result<EnsembleGrads> {
        self.check_batch(batch)?;
        if targets.len() != self.heads.len() || targets.iter().any(|t| t.len() != batch.len()) {
            return Err(Error::Dimension {
                what: "ensemble TD targets",
                expected: self.heads.len() * batch.len(),
                got: targets.iter().map(Vec::len).sum(),
            });
        }
        let mut grads = EnsembleGrads {
            losses: vec![0.0; self.heads.len()],
            trunk: self.trunk.zeros_like(),
            heads: self.heads.iter().map(|h| h.eval().zeros_like()).collect(),
        };
        if batch.is_empty() {
            return Ok(grads);
        }
        let n = batch.len() as f64;
        let mut d_out = vec![0.0; self.shape.actions];
        let mut d_features = vec![0.0; *self.shape.trunk.last().expect("validated")];
        for (b, t) in batch.iter().enumerate() {
            let trunk_cache = self.trunk.forward_cached(t.state.values())?;
            d_features.fill(0.0);
            for (i, h) in self.heads.iter().enumerate() {
                let cache = h.eval().forward_cached(trunk_cache.output())?;
                let a = t.action.position();
                let err = cache.output()[a] - targets[i][b];
                if !err.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        objective: self.objectives[i].id.to_string(),
                        index: b,
                    });
                }
                grads.losses[i] += err * err / n;
                d_out.fill(0.0);
                d_out[a] = 2.0 * err / n;
                let d_in = h.eval().backward(&cache, &d_out, &mut grads.heads[i]);
                for (acc, d) in d_features.iter_mut().zip(d_in) {
                    *acc += d;
                }
            }
            self.trunk
                .backward(&trunk_cache, &d_features, &mut grads.trunk);
        }
        Ok(grads)
    }

    /// Sum of per-head losses for fixed targets.
    pub fn total_loss(&self, batch: &[&Transition], targets: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for (b, t) in batch.iter().enumerate() {
            let q = self.q_values(&t.state)?;
            for (i, row) in q.iter().enumerate() {
                let err = row[t.action.position()] - targets[i][b];
                total += err * err / batch.len() as f64;
            }
        }
        Ok(total)
    }

    pub fn train_step(
        &mut self,
        batch: &[&Transition],
        gamma: f64,
        lr: f64,
    ) -> Result<TrainReport> {
        self.train_step_masked(batch, gamma, lr, &TrainMask::default())
    }

    /// One joint update. Masked-out heads and a frozen trunk are left
    /// bit-for-bit unchanged; every head's sync counter still advances.
    pub fn train_step_masked(
        &mut self,
        batch: &[&Transition],
        gamma: f64,
        lr: f64,
        mask: &TrainMask,
    ) -> Result<TrainReport> {
        if !(lr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {lr} must be non-negative"
            )));
        }
        let active: Vec<bool> = self
            .objectives
            .iter()
            .map(|o| mask.heads.as_ref().is_none_or(|h| h.contains(&o.id)))
            .collect();
        let mut targets = self.td_targets(batch, gamma)?;
        // Inactive heads contribute nothing: make their error zero.
        for (i, on) in active.iter().enumerate() {
            if !on {
                for (b, t) in batch.iter().enumerate() {
                    let q = self.heads[i]
                        .eval()
                        .forward(&self.trunk.forward(t.state.values())?)?;
                    targets[i][b] = q[t.action.position()];
                }
            }
        }
        let grads = self.loss_and_grad(batch, &targets)?;
        for (i, on) in active.iter().enumerate() {
            if *on {
                self.heads[i].apply_update_with(&mut self.head_opts[i], &grads.heads[i], lr);
            }
        }
        if !mask.freeze_trunk {
            self.trunk_opt.step(&mut self.trunk, &grads.trunk, lr);
        }
        let synced = self.advance_sync();
        let losses: Vec<(ObjectiveId, f64)> = self
            .objectives
            .iter()
            .zip(&active)
            .zip(&grads.losses)
            .filter(|((_, on), _)| **on)
            .map(|((o, _), l)| (o.id.clone(), *l))
            .collect();
        let total = losses.iter().map(|(_, l)| l).sum();
        Ok(TrainReport {
            losses,
            total,
            synced,
        })
    }

    fn advance_sync(&mut self) -> bool {
        self.steps_since_sync += 1;
        if self.steps_since_sync >= self.sync_period {
            self.trunk_target.copy_from(&self.trunk);
            for h in &mut self.heads {
                h.sync_target();
            }
            self.steps_since_sync = 0;
            true
        } else {
            false
        }
    }
}

impl QModel for QEnsemble {
    fn objective_ids(&self) -> Vec<ObjectiveId> {
        self.objectives.iter().map(|o| o.id.clone()).collect()
    }

    fn actions(&self) -> usize {
        self.shape.actions
    }

    fn q_rows(&self, s: &StateVector) -> Result<Vec<Vec<f64>>> {
        self.q_values(s)
    }
}

/// With probability `epsilon` a uniform position, otherwise the greedy one
/// for `objective` (lowest index on ties).
pub fn act_epsilon_greedy(
    ens: &QEnsemble,
    objective: &ObjectiveId,
    s: &StateVector,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<ActionIndex> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    let i = ens.index_of(objective)?;
    let actions = ens.shape.actions;
    if epsilon > 0.0 && rng.uniform() < epsilon {
        return ActionIndex::new(rng.index(actions), actions);
    }
    let q = ens.q_values(s)?;
    ActionIndex::new(argmax(&q[i]), actions)
}

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_steps: 10_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// A transition with its objectives collapsed into one weighted reward.
#[derive(Debug, Clone, Copy)]
pub struct FusedTransition<'a> {
    pub transition: &'a Transition,
    pub reward: f64,
}

impl<'a> FusedTransition<'a> {
    pub fn sample(&self) -> Sample<'a> {
        let t = self.transition;
        Sample {
            state: t.state.values(),
            action: t.action.position(),
            reward: self.reward,
            next_state: t.next_state.values(),
            terminal: t.terminal,
        }
    }
}

/// Scalarizes rewards as `Σ_i w_i · r_i` for a single-network baseline.
pub fn fused_reward_baseline<'a>(
    batch: &[&'a Transition],
    weights: &BTreeMap<ObjectiveId, f64>,
) -> Result<Vec<FusedTransition<'a>>> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("fusion weights are empty".into()));
    }
    if let Some((id, w)) = weights
        .iter()
        .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "fusion weight for `{id}` is {w}"
        )));
    }
    batch
        .iter()
        .map(|t| {
            let mut reward = 0.0;
            for (id, w) in weights {
                let r = t.reward(id).ok_or_else(|| {
                    Error::InvalidArgument(format!("transition lacks objective `{id}`"))
                })?;
                reward += w * r.value();
            }
            Ok(FusedTransition {
                transition: t,
                reward,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
