//! MDP domain types: states, actions, transitions and returns.
//!
//! A state is a fixed-width feature vector split into six named feature
//! groups. An action is a display position for the item being allocated.
//! Rewards follow the click/order convention: `+1` when the objective's event
//! happened on the request, `-1` for a page view without it.

mod replay;
pub mod translog;

pub use replay::{ReplayBuffer, DEFAULT_CAPACITY};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paper-scale state width.
pub const PAPER_STATE_DIM: usize = 222;
/// Paper-scale action space.
pub const PAPER_ACTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    UserProfile,
    Query,
    History,
    Context,
    NewItemHistory,
    Feedback,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::UserProfile,
        FeatureGroup::Query,
        FeatureGroup::History,
        FeatureGroup::Context,
        FeatureGroup::NewItemHistory,
        FeatureGroup::Feedback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::UserProfile => "user_profile",
            FeatureGroup::Query => "query",
            FeatureGroup::History => "history",
            FeatureGroup::Context => "context",
            FeatureGroup::NewItemHistory => "new_item_history",
            FeatureGroup::Feedback => "feedback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub group: FeatureGroup,
    pub offset: usize,
    pub len: usize,
}

/// Ordered, contiguous partition of `[0, D)` into the six feature groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceLayout {
    slices: Vec<Slice>,
    dim: usize,
}

impl SliceLayout {
    /// Builds a layout from per-group lengths, in [`FeatureGroup::ALL`] order.
    pub fn from_lengths(lengths: [usize; 6]) -> Self {
        let mut offset = 0;
        let slices = FeatureGroup::ALL
            .iter()
            .zip(lengths)
            .map(|(&group, len)| {
                let s = Slice { group, offset, len };
                offset += len;
                s
            })
            .collect();
        Self {
            slices,
            dim: offset,
        }
    }

    /// Validates an explicit slice list: every group exactly once, offsets
    /// contiguous from zero.
    pub fn from_slices(slices: Vec<Slice>) -> Result<Self> {
        let mut seen = Vec::with_capacity(6);
        let mut cursor = 0;
        for s in &slices {
            if s.offset != cursor {
                return Err(Error::InvalidArgument(format!(
                    "slice `{}` starts at {} but previous slice ends at {}",
                    s.group.name(),
                    s.offset,
                    cursor
                )));
            }
            if seen.contains(&s.group) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate slice `{}`",
                    s.group.name()
                )));
            }
            seen.push(s.group);
            cursor += s.len;
        }
        if seen.len() != FeatureGroup::ALL.len() {
            return Err(Error::InvalidArgument(
                "layout must cover all six feature groups".into(),
            ));
        }
        Ok(Self {
            slices,
            dim: cursor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn slice(&self, group: FeatureGroup) -> Slice {
        *self
            .slices
            .iter()
            .find(|s| s.group == group)
            .expect("layout covers every group")
    }
}

/// Fixed-width real feature vector over a [`SliceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
    layout: Arc<SliceLayout>,
}

impl StateVector {
    pub fn new(values: Vec<f64>, layout: Arc<SliceLayout>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::Dimension {
                what: "state vector",
                expected: layout.dim(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state feature {i}")));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Arc<SliceLayout>) -> Self {
        Self {
            values: vec![0.0; layout.dim()],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn layout(&self) -> &Arc<SliceLayout> {
        &self.layout
    }

    pub fn group(&self, group: FeatureGroup) -> &[f64] {
        let s = self.layout.slice(group);
        &self.values[s.offset..s.offset + s.len]
    }

    /// Overwrites one feature group. Values must be finite and fit the slice.
    pub fn set_group(&mut self, group: FeatureGroup, values: &[f64]) -> Result<()> {
        let s = self.layout.slice(group);
        if values.len() > s.len {
            return Err(Error::Dimension {
                what: group.name(),
                expected: s.len,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("slice `{}`", group.name())));
        }
        let dst = &mut self.values[s.offset..s.offset + s.len];
        dst[..values.len()].copy_from_slice(values);
        dst[values.len()..].fill(0.0);
        Ok(())
    }

    /// Writes the feedback-totals convention shared by the environment and
    /// the cold-start simulator: `[clicks/T, orders/T, step/T]`.
    pub fn set_feedback_totals(
        &mut self,
        clicks: u32,
        orders: u32,
        step: usize,
        horizon: usize,
    ) -> Result<()> {
        let t = horizon.max(1) as f64;
        let totals = [clicks as f64 / t, orders as f64 / t, step as f64 / t];
        let len = self.layout.slice(FeatureGroup::Feedback).len;
        self.set_group(FeatureGroup::Feedback, &totals[..len.min(3)])
    }
}

/// A display position in `[0, A)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionIndex {
    position: usize,
    size: usize,
}

impl ActionIndex {
    pub fn new(position: usize, size: usize) -> Result<Self> {
        if position >= size {
            return Err(Error::InvalidArgument(format!(
                "action {position} outside [0, {size})"
            )));
        }
        Ok(Self { position, size })
    }

    pub fn position(self) -> usize {
        self.position
    }

    pub fn size(self) -> usize {
        self.size
    }
}

/// Objective identifier, e.g. `click` or `order`. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveId(Arc<str>);

impl ObjectiveId {
    pub fn new(id: &str) -> Self {
        Self(Arc::from(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectiveId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Per-objective reward; only the two click/order outcomes exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reward {
    /// The objective's event happened (`+1`).
    Hit,
    /// Page view only (`-1`).
    Miss,
}

impl Reward {
    pub fn value(self) -> f64 {
        match self {
            Reward::Hit => 1.0,
            Reward::Miss => -1.0,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Reward::Hit)
        } else if v == -1.0 {
            Ok(Reward::Miss)
        } else {
            Err(Error::InvalidArgument(format!(
                "reward {v} outside {{-1, +1}}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Simulated,
    Real,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Simulated => "simulated",
            Source::Real => "real",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: ActionIndex,
    pub rewards: BTreeMap<ObjectiveId, Reward>,
    pub next_state: StateVector,
    pub terminal: bool,
    pub source: Source,
}

impl Transition {
    pub fn reward(&self, objective: &ObjectiveId) -> Option<Reward> {
        self.rewards.get(objective).copied()
    }

    /// Borrowed single-objective view used by the Q-learning code.
    pub fn sample(&self, objective: &ObjectiveId) -> Option<Sample<'_>> {
        let r = self.reward(objective)?;
        Some(Sample {
            state: self.state.values(),
            action: self.action.position(),
            reward: r.value(),
            next_state: self.next_state.values(),
            terminal: self.terminal,
        })
    }

    pub(crate) fn check_objectives(&self, objectives: &[ObjectiveId]) -> Result<()> {
        let matches = self.rewards.len() == objectives.len()
            && objectives.iter().all(|o| self.rewards.contains_key(o));
        if matches {
            Ok(())
        } else {
            Err(Error::ObjectiveMismatch {
                expected: objectives.iter().map(|o| o.to_string()).collect(),
                got: self.rewards.keys().map(|o| o.to_string()).collect(),
            })
        }
    }
}

/// One TD sample with a scalar reward. Scalarized (fused) rewards use this
/// type directly; they never enter a [`Transition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_state: &'a [f64],
    pub terminal: bool,
}

/// `Σ_t γ^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1]"
        )));
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for (t, &r) in rewards.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("reward at step {t}")));
        }
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}
