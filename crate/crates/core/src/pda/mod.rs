//! Progressive data augmentation: cold-start transitions simulated from
//! logged sessions, blended with real traffic on a schedule.
//!
//! A logged session shows items at their original ranks with the pCTR the
//! production model predicted for that slot. Simulation moves the target
//! item to a random position, re-places the others with
//! [`resolve_conflicts`], rescales every moved item's pCTR with
//! [`adjust_pctr`] and samples clicks and orders from the result.

mod alloc;
mod table;

pub use alloc::{resolve_conflicts, AllocationItem, AllocationRequest, ItemId};
pub use table::{adjust_pctr, build_table, PositionCtrTable, DEFAULT_ALPHA};

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionIndex, ReplayBuffer, Source, StateVector, Transition};
use crate::moq::{rewards_for, FeedbackEvent, ObjectiveSpec};
use crate::rng::{streams, SeededRng};

/// One item as logged: where it was shown and what was predicted there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedItem {
    pub item_id: ItemId,
    pub logged_position: usize,
    pub pctr: f64,
    pub pcvr: f64,
}

/// A logged request. Items are in logged-position order, which is also
/// their original rank; `target` indexes the item whose slot is the action.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSession {
    pub state: StateVector,
    pub items: Vec<LoggedItem>,
    pub target: usize,
}

impl LoggedSession {
    fn validate(&self, positions: usize) -> Result<()> {
        if self.items.is_empty() || self.items.len() > positions || self.target >= self.items.len()
        {
            return Err(Error::InvalidArgument(
                "logged session has an invalid item list".into(),
            ));
        }
        for (r, it) in self.items.iter().enumerate() {
            if it.logged_position != r {
                return Err(Error::InvalidArgument(
                    "logged items must occupy slots 0..n in order".into(),
                ));
            }
            if !(it.pctr > 0.0 && it.pctr <= 1.0) || !(0.0..=1.0).contains(&it.pcvr) {
                return Err(Error::InvalidArgument(format!(
                    "item {} has rates outside (0, 1]",
                    it.item_id
                )));
            }
        }
        Ok(())
    }
}

/// A simulated page: slot contents and adjusted rates per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PageOutcome {
    /// Index into the session's items per slot.
    pub slots: Vec<Option<usize>>,
    /// Adjusted pCTR per slot, 0 for empty slots.
    pub pctr: Vec<f64>,
    pub clicked: Vec<bool>,
    pub ordered: Vec<bool>,
    pub event: FeedbackEvent,
}

/// Moves the target to `action`, rescales pCTRs and samples feedback.
/// Two uniforms are drawn per item in item order whatever happens, so runs
/// sharing a seed see the same random numbers.
pub fn simulate_page(
    session: &LoggedSession,
    table: &PositionCtrTable,
    action: ActionIndex,
    rng: &mut SeededRng,
) -> Result<PageOutcome> {
    let positions = table.len();
    session.validate(positions)?;
    if action.position() >= positions {
        return Err(Error::InvalidArgument(format!(
            "action {} outside the page",
            action.position()
        )));
    }
    let items = session
        .items
        .iter()
        .enumerate()
        .map(|(r, it)| AllocationItem {
            item_id: r,
            original_rank: r,
            pctr: it.pctr,
            requested: (r == session.target).then_some(action.position()),
        })
        .collect();
    let slots = resolve_conflicts(&AllocationRequest::new(items, positions)?)?;
    let mut slot_of = vec![0; session.items.len()];
    for (q, s) in slots.iter().enumerate() {
        if let Some(i) = s {
            slot_of[*i] = q;
        }
    }
    let mut pctr = vec![0.0; positions];
    let mut clicked = vec![false; positions];
    let mut ordered = vec![false; positions];
    let mut event = FeedbackEvent::page_view_only();
    for (i, it) in session.items.iter().enumerate() {
        let (u_click, u_order) = (rng.uniform(), rng.uniform());
        let q = slot_of[i];
        let p = adjust_pctr(it.pctr, it.logged_position, q, table)?;
        pctr[q] = p;
        clicked[q] = u_click < p;
        ordered[q] = clicked[q] && u_order < it.pcvr;
        event = event.merge(FeedbackEvent::new(clicked[q], ordered[q])?);
    }
    Ok(PageOutcome {
        slots,
        pctr,
        clicked,
        ordered,
        event,
    })
}

/// Settings for cold-start simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub objectives: Vec<ObjectiveSpec>,
    /// Steps per episode.
    pub horizon: usize,
}

/// Random-action episodes over logged sessions. Each episode picks a
/// session uniformly, then for `horizon` steps chooses a uniform action,
/// simulates the page and advances the feedback totals. Episodes run on
/// their own random streams derived from `rng`, in parallel.
pub fn simulate_transitions(
    pool: &[LoggedSession],
    table: &PositionCtrTable,
    cfg: &SimulationConfig,
    rng: &mut SeededRng,
    episodes: usize,
) -> Result<Vec<Transition>> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("session pool is empty".into()));
    }
    if cfg.horizon == 0 || episodes == 0 {
        return Ok(Vec::new());
    }
    for s in pool {
        s.validate(table.len())?;
    }
    let seed = rng.next_seed();
    let per_episode: Vec<Vec<Transition>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = SeededRng::new(seed, (streams::SIMULATION << 32) | e as u64);
            simulate_episode(pool, table, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(per_episode.into_iter().flatten().collect())
}

fn simulate_episode(
    pool: &[LoggedSession],
    table: &PositionCtrTable,
    cfg: &SimulationConfig,
    rng: &mut SeededRng,
) -> Result<Vec<Transition>> {
    let session = &pool[rng.index(pool.len())];
    let positions = table.len();
    let mut state = session.state.clone();
    state.set_feedback_totals(0, 0, 0, cfg.horizon)?;
    let (mut clicks, mut orders) = (0u32, 0u32);
    let mut out = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let action = ActionIndex::new(rng.index(positions), positions)?;
        let page = simulate_page(session, table, action, rng)?;
        clicks += u32::from(page.event.clicked());
        orders += u32::from(page.event.ordered());
        let mut next = state.clone();
        next.set_feedback_totals(clicks, orders, t + 1, cfg.horizon)?;
        out.push(Transition {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            rewards: rewards_for(&cfg.objectives, page.event),
            next_state: next,
            terminal: t + 1 == cfg.horizon,
            source: Source::Simulated,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixStage {
    /// Real transitions required before this stage applies.
    pub min_real: usize,
    pub real_fraction: f64,
}

/// Real-data fraction as a step function of the real buffer's size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixSchedule {
    stages: Vec<MixStage>,
}

impl MixSchedule {
    /// Stages must start at fraction 0 from 0 transitions, grow in both
    /// threshold and fraction, and end at 1.
    pub fn new(stages: Vec<MixStage>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("mix schedule: {m}")));
        let (Some(first), Some(last)) = (stages.first(), stages.last()) else {
            return bad("no stages");
        };
        if first.real_fraction != 0.0 || first.min_real != 0 {
            return bad("first stage must be 0% real from 0 transitions");
        }
        if last.real_fraction != 1.0 {
            return bad("last stage must be 100% real");
        }
        for w in stages.windows(2) {
            if w[1].real_fraction < w[0].real_fraction || w[1].min_real < w[0].min_real {
                return bad("stages must be non-decreasing");
            }
        }
        if stages
            .iter()
            .any(|s| !(0.0..=1.0).contains(&s.real_fraction))
        {
            return bad("fractions must lie in [0, 1]");
        }
        Ok(Self { stages })
    }

    /// 0% → 10% → 30% → 60% → 100% real at the given thresholds.
    pub fn with_thresholds(thresholds: [usize; 4]) -> Result<Self> {
        let fractions = [0.1, 0.3, 0.6, 1.0];
        let mut stages = vec![MixStage {
            min_real: 0,
            real_fraction: 0.0,
        }];
        stages.extend(
            thresholds
                .iter()
                .zip(fractions)
                .map(|(&min_real, real_fraction)| MixStage {
                    min_real,
                    real_fraction,
                }),
        );
        Self::new(stages)
    }

    pub fn stages(&self) -> &[MixStage] {
        &self.stages
    }

    pub fn fraction(&self, real_len: usize) -> f64 {
        self.stages
            .iter()
            .rev()
            .find(|s| s.min_real <= real_len)
            .map_or(0.0, |s| s.real_fraction)
    }
}

impl Default for MixSchedule {
    fn default() -> Self {
        Self::with_thresholds([500, 2_000, 5_000, 10_000]).expect("valid default")
    }
}

/// `⌊f · batch⌋` real transitions; a tiny epsilon guards products such as
/// `0.29 · 100` that land just below an integer.
pub fn real_count(fraction: f64, batch: usize) -> usize {
    ((fraction * batch as f64) + 1e-9).floor() as usize
}

/// A batch with exactly [`real_count`] real transitions (listed first)
/// and the rest simulated, each drawn uniformly with replacement.
pub fn mix_batch<'a>(
    sim: &'a ReplayBuffer,
    real: &'a ReplayBuffer,
    schedule: &MixSchedule,
    batch: usize,
    rng: &mut SeededRng,
) -> Result<Vec<&'a Transition>> {
    let n_real = real_count(schedule.fraction(real.len()), batch);
    let n_sim = batch - n_real;
    if n_real > 0 && real.is_empty() {
        return Err(Error::NotReady {
            size: 0,
            required: 1,
        });
    }
    if n_sim > 0 && sim.is_empty() {
        return Err(Error::InvalidArgument("simulated buffer is empty".into()));
    }
    let mut out = Vec::with_capacity(batch);
    if n_real > 0 {
        out.extend(real.sample_unchecked(n_real, rng));
    }
    if n_sim > 0 {
        out.extend(sim.sample_unchecked(n_sim, rng));
    }
    Ok(out)
}

/// One line of an offline click log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub position: usize,
    pub clicked: bool,
    pub ordered: bool,
    pub item_id: ItemId,
    pub pctr: f64,
}

pub fn write_click_log<W: Write>(w: W, records: &[ClickRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<click log>", e))?;
    Ok(())
}

pub fn read_click_log<R: Read>(r: R) -> Result<Vec<ClickRecord>> {
    let mut out = Vec::new();
    for (i, rec) in csv::Reader::from_reader(r)
        .deserialize::<ClickRecord>()
        .enumerate()
    {
        let rec = rec?;
        if rec.ordered && !rec.clicked {
            return Err(Error::Parse {
                line: i + 2,
                msg: "order without click".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// `(position, clicked)` pairs for [`build_table`].
pub fn impressions(records: &[ClickRecord]) -> Vec<(usize, bool)> {
    records.iter().map(|r| (r.position, r.clicked)).collect()
}
