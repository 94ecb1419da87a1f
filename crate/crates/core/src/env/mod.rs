//! Synthetic position-biased search sessions.
//!
//! A session is one user request with a ranked list of items, the last of
//! which is a new item whose display position the agent controls. Every
//! step the agent places the new item, the rest are re-placed by original
//! rank, and each shown item is clicked with probability
//! `base_pctr · bias[position]`; a clicked item is ordered with
//! probability `base_pcvr`. Rewards are request-level: the click objective
//! scores any click on the page, the order objective any order.
//!
//! The observed state holds noisy model predictions of the items' rates
//! rather than the true rates.

mod logging;
mod oracle;

pub use logging::ProductionLog;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionIndex, FeatureGroup, SliceLayout, Source, StateVector, Transition};
use crate::moq::{rewards_for, FeedbackEvent, ObjectiveSpec};
use crate::pda::{resolve_conflicts, AllocationItem, AllocationRequest, ItemId};
use crate::rng::{streams, SeededRng};

/// Click multiplier per position, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionBias(Vec<f64>);

impl PositionBias {
    pub fn new(bias: Vec<f64>) -> Result<Self> {
        if bias.is_empty() {
            return Err(Error::InvalidArgument("position bias is empty".into()));
        }
        if let Some(p) = bias.iter().position(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "bias[{p}] = {} outside (0, 1]",
                bias[p]
            )));
        }
        Ok(Self(bias))
    }

    /// `decay^p` for `p` in `[0, positions)`.
    pub fn geometric(positions: usize, decay: f64) -> Result<Self> {
        Self::new((0..positions).map(|p| decay.powi(p as i32)).collect())
    }

    pub fn get(&self, p: usize) -> f64 {
        self.0[p]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimItem {
    pub item_id: ItemId,
    pub base_pctr: f64,
    pub base_pcvr: f64,
    pub original_rank: usize,
    pub is_new: bool,
}

/// Closed interval for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn check_rate(&self, what: &str) -> Result<()> {
        if self.lo > 0.0 && self.lo <= self.hi && self.hi <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "{what} range [{}, {}] must lie in (0, 1]",
                self.lo, self.hi
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Display positions `L`; also the action count.
    pub positions: usize,
    /// Steps per session `T`.
    pub horizon: usize,
    /// Geometric position-bias decay, ignored when `bias` is set.
    pub bias_decay: f64,
    pub bias: Option<Vec<f64>>,
    pub item_pctr: Range,
    pub item_pcvr: Range,
    pub new_pctr: Range,
    pub new_pcvr: Range,
    /// Log-normal noise on predicted rates of ranked and new items.
    pub prediction_noise: f64,
    pub new_prediction_noise: f64,
    pub user_dim: usize,
    pub query_dim: usize,
    pub history_dim: usize,
    /// Context width; must hold two predictions per position.
    pub context_dim: usize,
    /// Include the item-list context features.
    pub request_dimension: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::with_positions(10)
    }
}

impl EnvConfig {
    pub fn with_positions(positions: usize) -> Self {
        Self {
            positions,
            horizon: 5,
            bias_decay: 0.7,
            bias: None,
            item_pctr: Range::new(0.1, 0.4),
            item_pcvr: Range::new(0.01, 0.05),
            new_pctr: Range::new(0.05, 0.2),
            new_pcvr: Range::new(0.5, 0.9),
            prediction_noise: 0.2,
            new_prediction_noise: 0.5,
            user_dim: 2,
            query_dim: 2,
            history_dim: 3,
            context_dim: 2 * positions,
            request_dimension: true,
        }
    }

    pub fn layout(&self) -> SliceLayout {
        SliceLayout::from_lengths([
            self.user_dim,
            self.query_dim,
            self.history_dim,
            self.context_dim,
            2,
            3,
        ])
    }

    pub fn state_dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn position_bias(&self) -> Result<PositionBias> {
        match &self.bias {
            Some(b) if b.len() != self.positions => Err(Error::InvalidConfig(format!(
                "bias has {} entries for {} positions",
                b.len(),
                self.positions
            ))),
            Some(b) => PositionBias::new(b.clone()),
            None => PositionBias::geometric(self.positions, self.bias_decay),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions < 2 {
            return Err(Error::InvalidConfig("need at least two positions".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.context_dim < 2 * self.positions {
            return Err(Error::InvalidConfig(format!(
                "context_dim {} cannot hold {} positions",
                self.context_dim, self.positions
            )));
        }
        for (r, what) in [
            (self.item_pctr, "item pctr"),
            (self.item_pcvr, "item pcvr"),
            (self.new_pctr, "new pctr"),
            (self.new_pcvr, "new pcvr"),
        ] {
            r.check_rate(what)?;
        }
        if !(self.prediction_noise >= 0.0 && self.new_prediction_noise >= 0.0) {
            return Err(Error::InvalidConfig("prediction noise must be ≥ 0".into()));
        }
        self.position_bias()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// One session's items, what the agent sees, and the running counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    items: Vec<SimItem>,
    /// Predicted (pCTR, pCVR) per item, as shown in the state.
    predicted: Vec<(f64, f64)>,
    target: usize,
    shown: Vec<Option<ItemId>>,
    step: usize,
    horizon: usize,
    clicks: u32,
    orders: u32,
    observation: StateVector,
}

impl SessionState {
    /// Items in original-rank order.
    pub fn items(&self) -> &[SimItem] {
        &self.items
    }

    pub fn target(&self) -> &SimItem {
        &self.items[self.target]
    }

    pub fn predicted(&self) -> &[(f64, f64)] {
        &self.predicted
    }

    /// Slot → item currently displayed.
    pub fn shown(&self) -> &[Option<ItemId>] {
        &self.shown
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn clicks(&self) -> u32 {
        self.clicks
    }

    pub fn orders(&self) -> u32 {
        self.orders
    }

    pub fn is_terminal(&self) -> bool {
        self.step >= self.horizon
    }

    pub fn observation(&self) -> &StateVector {
        &self.observation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemFeedback {
    pub item_id: ItemId,
    pub position: usize,
    pub event: FeedbackEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVector,
    /// Per shown item, in item order.
    pub items: Vec<ItemFeedback>,
    /// Request-level event: any click, any order.
    pub event: FeedbackEvent,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    bias: PositionBias,
    layout: Arc<SliceLayout>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            bias: config.position_bias()?,
            layout: Arc::new(config.layout()),
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn bias(&self) -> &PositionBias {
        &self.bias
    }

    pub fn layout(&self) -> &Arc<SliceLayout> {
        &self.layout
    }

    pub fn positions(&self) -> usize {
        self.config.positions
    }

    /// Draws a session from `seed`: `L − 1` ranked items sorted by pCTR,
    /// then the new item last.
    pub fn reset(&self, seed: u64) -> Result<(SessionState, StateVector)> {
        let c = &self.config;
        let mut rng = SeededRng::new(seed, streams::ENV);
        let mut regular: Vec<(f64, f64)> = (0..c.positions - 1)
            .map(|_| {
                let p = rng.uniform_in(c.item_pctr.lo, c.item_pctr.hi);
                (p, rng.uniform_in(c.item_pcvr.lo, c.item_pcvr.hi))
            })
            .collect();
        regular.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut items: Vec<SimItem> = regular
            .into_iter()
            .enumerate()
            .map(|(r, (p, v))| SimItem {
                item_id: r,
                base_pctr: p,
                base_pcvr: v,
                original_rank: r,
                is_new: false,
            })
            .collect();
        items.push(SimItem {
            item_id: c.positions - 1,
            base_pctr: rng.uniform_in(c.new_pctr.lo, c.new_pctr.hi),
            base_pcvr: rng.uniform_in(c.new_pcvr.lo, c.new_pcvr.hi),
            original_rank: c.positions - 1,
            is_new: true,
        });
        self.session_with_rng(items, &mut rng)
    }

    /// A session over given items (at most `L`, ranks `0..n`, exactly one
    /// new item). Feature noise is drawn from `seed`.
    pub fn session_from_items(
        &self,
        items: Vec<SimItem>,
        seed: u64,
    ) -> Result<(SessionState, StateVector)> {
        self.session_with_rng(items, &mut SeededRng::new(seed, streams::ENV))
    }

    fn session_with_rng(
        &self,
        mut items: Vec<SimItem>,
        rng: &mut SeededRng,
    ) -> Result<(SessionState, StateVector)> {
        let c = &self.config;
        if items.is_empty() || items.len() > c.positions {
            return Err(Error::InvalidArgument(format!(
                "{} items for {} positions",
                items.len(),
                c.positions
            )));
        }
        items.sort_by_key(|i| i.original_rank);
        for (r, it) in items.iter().enumerate() {
            if it.original_rank != r {
                return Err(Error::InvalidArgument("item ranks must be 0..n".into()));
            }
            if !(it.base_pctr > 0.0
                && it.base_pctr <= 1.0
                && it.base_pcvr > 0.0
                && it.base_pcvr <= 1.0)
            {
                return Err(Error::InvalidArgument(format!(
                    "item {} has rates outside (0, 1]",
                    it.item_id
                )));
            }
        }
        let news: Vec<usize> = (0..items.len()).filter(|&i| items[i].is_new).collect();
        let [target] = news[..] else {
            return Err(Error::InvalidArgument(
                "a session needs exactly one new item".into(),
            ));
        };
        let mut obs = StateVector::zeros(self.layout.clone());
        let normals = |n: usize, rng: &mut SeededRng| {
            (0..n).map(|_| rng.standard_normal()).collect::<Vec<_>>()
        };
        obs.set_group(FeatureGroup::UserProfile, &normals(c.user_dim, rng))?;
        obs.set_group(FeatureGroup::Query, &normals(c.query_dim, rng))?;
        let history: Vec<f64> = (0..c.history_dim).map(|_| rng.uniform()).collect();
        obs.set_group(FeatureGroup::History, &history)?;
        let predicted: Vec<(f64, f64)> = items
            .iter()
            .map(|it| {
                let sigma = if it.is_new {
                    c.new_prediction_noise
                } else {
                    c.prediction_noise
                };
                let mut noisy = |v: f64| {
                    let z = rng.standard_normal();
                    (v * (sigma * z - 0.5 * sigma * sigma).exp()).clamp(1e-4, 1.0)
                };
                let p = noisy(it.base_pctr);
                (p, noisy(it.base_pcvr))
            })
            .collect();
        if c.request_dimension {
            let ctx: Vec<f64> = predicted.iter().flat_map(|&(p, v)| [p, v]).collect();
            obs.set_group(FeatureGroup::Context, &ctx)?;
        }
        let (tp, tv) = predicted[target];
        obs.set_group(FeatureGroup::NewItemHistory, &[tp, tv])?;
        obs.set_feedback_totals(0, 0, 0, c.horizon)?;
        let mut shown = vec![None; c.positions];
        for (r, it) in items.iter().enumerate() {
            shown[r] = Some(it.item_id);
        }
        let session = SessionState {
            items,
            predicted,
            target,
            shown,
            step: 0,
            horizon: c.horizon,
            clicks: 0,
            orders: 0,
            observation: obs.clone(),
        };
        Ok((session, obs))
    }

    /// Slot → item index with the new item requested at `action`.
    pub fn placement(
        &self,
        session: &SessionState,
        action: ActionIndex,
    ) -> Result<Vec<Option<usize>>> {
        if action.position() >= self.positions() {
            return Err(Error::InvalidArgument(format!(
                "action {} outside the page",
                action.position()
            )));
        }
        let items = (0..session.items.len())
            .map(|r| AllocationItem {
                item_id: r,
                original_rank: r,
                pctr: session.items[r].base_pctr,
                requested: (r == session.target).then_some(action.position()),
            })
            .collect();
        resolve_conflicts(&AllocationRequest::new(items, self.positions())?)
    }

    /// True click probability of each item (item order) under `action`.
    pub fn click_probabilities(
        &self,
        session: &SessionState,
        action: ActionIndex,
    ) -> Result<Vec<(usize, f64)>> {
        let slots = self.placement(session, action)?;
        let mut out = vec![(0, 0.0); session.items.len()];
        for (q, s) in slots.iter().enumerate() {
            if let Some(i) = *s {
                out[i] = (q, session.items[i].base_pctr * self.bias.get(q));
            }
        }
        Ok(out)
    }

    /// One request. Draws two uniforms per item in item order regardless of
    /// the action, so runs sharing `rng` face the same randomness.
    pub fn step(
        &self,
        session: &mut SessionState,
        action: ActionIndex,
        rng: &mut SeededRng,
    ) -> Result<StepOutcome> {
        if session.is_terminal() {
            return Err(Error::EpisodeOver);
        }
        let probs = self.click_probabilities(session, action)?;
        let mut items = Vec::with_capacity(probs.len());
        let mut event = FeedbackEvent::page_view_only();
        let mut shown = vec![None; self.positions()];
        for (i, &(q, p)) in probs.iter().enumerate() {
            let (u_click, u_order) = (rng.uniform(), rng.uniform());
            let clicked = u_click < p;
            let ordered = clicked && u_order < session.items[i].base_pcvr;
            let ev = FeedbackEvent::new(clicked, ordered)?;
            event = event.merge(ev);
            shown[q] = Some(session.items[i].item_id);
            items.push(ItemFeedback {
                item_id: session.items[i].item_id,
                position: q,
                event: ev,
            });
        }
        session.shown = shown;
        session.step += 1;
        session.clicks += u32::from(event.clicked());
        session.orders += u32::from(event.ordered());
        session.observation.set_feedback_totals(
            session.clicks,
            session.orders,
            session.step,
            session.horizon,
        )?;
        Ok(StepOutcome {
            next_state: session.observation.clone(),
            items,
            event,
            terminal: session.is_terminal(),
        })
    }

    /// `(P(any click), P(any order))` for one request under `action`.
    pub fn event_probabilities(
        &self,
        session: &SessionState,
        action: ActionIndex,
    ) -> Result<(f64, f64)> {
        let probs = self.click_probabilities(session, action)?;
        let mut no_click = 1.0;
        let mut no_order = 1.0;
        for (i, &(_, p)) in probs.iter().enumerate() {
            no_click *= 1.0 - p;
            no_order *= 1.0 - p * session.items[i].base_pcvr;
        }
        Ok((1.0 - no_click, 1.0 - no_order))
    }

    /// Expected per-objective reward of one request under `action`.
    pub fn expected_rewards(
        &self,
        session: &SessionState,
        action: ActionIndex,
    ) -> Result<(f64, f64)> {
        let (c, o) = self.event_probabilities(session, action)?;
        Ok((2.0 * c - 1.0, 2.0 * o - 1.0))
    }
}

/// Packages one step as a transition tagged as real traffic.
pub fn to_transition(
    objectives: &[ObjectiveSpec],
    state: StateVector,
    action: ActionIndex,
    outcome: &StepOutcome,
) -> Transition {
    Transition {
        state,
        action,
        rewards: rewards_for(objectives, outcome.event),
        next_state: outcome.next_state.clone(),
        terminal: outcome.terminal,
        source: Source::Real,
    }
}
