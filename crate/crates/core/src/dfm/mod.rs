//! Decision fusion: combine per-objective Q-rows into one gain
//! `Σ_i w_i · q_i(s, a)` and search the weights with the cross-entropy
//! method.

mod auc;
mod cem;
mod io;

pub use auc::cal_auc;
pub use cem::{
    optimize, optimize_par, CemConfig, CemDistribution, CemOutcome, FitnessSample,
    GenerationRecord, NoiseSchedule, WeightVector,
};
pub use io::{read_history_csv, write_history_csv, WeightsManifest};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mdp::{ActionIndex, ObjectiveId, StateVector};
use crate::moq::QModel;
use crate::qnet::argmax;

fn check_rows(q: &[Vec<f64>], w: &WeightVector) -> Result<usize> {
    if q.len() != w.len() {
        return Err(Error::Dimension {
            what: "fusion weights",
            expected: q.len(),
            got: w.len(),
        });
    }
    let actions = q.first().map_or(0, Vec::len);
    if q.iter().any(|row| row.len() != actions) {
        return Err(Error::InvalidArgument("Q-rows differ in length".into()));
    }
    Ok(actions)
}

/// `Σ_i w_i · q_i[a]`.
pub fn gain(q: &[Vec<f64>], a: ActionIndex, w: &WeightVector) -> Result<f64> {
    let actions = check_rows(q, w)?;
    if a.position() >= actions {
        return Err(Error::InvalidArgument(format!(
            "action {} out of range",
            a.position()
        )));
    }
    Ok(q.iter()
        .zip(w.as_slice())
        .map(|(row, wi)| wi * row[a.position()])
        .sum())
}

/// Gain for every action.
pub fn gains(q: &[Vec<f64>], w: &WeightVector) -> Result<Vec<f64>> {
    let actions = check_rows(q, w)?;
    let mut out = vec![0.0; actions];
    for (row, wi) in q.iter().zip(w.as_slice()) {
        for (g, v) in out.iter_mut().zip(row) {
            *g += wi * v;
        }
    }
    Ok(out)
}

/// Greedy fused action, lowest index on ties.
pub fn fused_action(
    model: &(impl QModel + ?Sized),
    s: &StateVector,
    w: &WeightVector,
) -> Result<ActionIndex> {
    let g = gains(&model.q_rows(s)?, w)?;
    ActionIndex::new(argmax(&g), g.len())
}

/// One held-out example: a state, the action taken and whether each
/// objective's event happened.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalExample {
    pub state: StateVector,
    pub action: ActionIndex,
    pub labels: BTreeMap<ObjectiveId, bool>,
}

/// Q-values at the taken action for every example, computed once so each
/// candidate weight vector costs only a dot product per example.
#[derive(Debug, Clone)]
pub struct GainTable {
    objectives: Vec<ObjectiveId>,
    q_taken: Vec<Vec<f64>>,
    labels: BTreeMap<ObjectiveId, Vec<bool>>,
}

impl GainTable {
    pub fn build(model: &(impl QModel + ?Sized), eval_set: &[EvalExample]) -> Result<Self> {
        let objectives = model.objective_ids();
        let mut labels: BTreeMap<ObjectiveId, Vec<bool>> = BTreeMap::new();
        let mut q_taken = Vec::with_capacity(eval_set.len());
        for ex in eval_set {
            let rows = model.q_rows(&ex.state)?;
            let a = ex.action.position();
            if a >= model.actions() {
                return Err(Error::InvalidArgument(format!("action {a} out of range")));
            }
            q_taken.push(rows.iter().map(|r| r[a]).collect());
            for (id, l) in &ex.labels {
                labels.entry(id.clone()).or_default().push(*l);
            }
        }
        if labels.values().any(|v| v.len() != eval_set.len()) {
            return Err(Error::InvalidArgument(
                "examples carry different label sets".into(),
            ));
        }
        Ok(Self {
            objectives,
            q_taken,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.q_taken.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_taken.is_empty()
    }

    pub fn scores(&self, w: &WeightVector) -> Result<Vec<f64>> {
        if w.len() != self.objectives.len() {
            return Err(Error::Dimension {
                what: "fusion weights",
                expected: self.objectives.len(),
                got: w.len(),
            });
        }
        Ok(self
            .q_taken
            .iter()
            .map(|q| q.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// AUC of the fused gain against one objective's labels.
    pub fn auc(&self, target: &ObjectiveId, w: &WeightVector) -> Result<f64> {
        let labels = self
            .labels
            .get(target)
            .ok_or_else(|| Error::InvalidArgument(format!("no labels for `{target}`")))?;
        cal_auc(labels, &self.scores(w)?)
    }

    /// `Σ_t c_t · AUC_t` over several target tasks.
    pub fn weighted_auc(
        &self,
        tasks: &BTreeMap<ObjectiveId, f64>,
        w: &WeightVector,
    ) -> Result<f64> {
        if tasks.is_empty() {
            return Err(Error::InvalidArgument("no AUC tasks given".into()));
        }
        let scores = self.scores(w)?;
        let mut total = 0.0;
        for (id, c) in tasks {
            let labels = self
                .labels
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("no labels for `{id}`")))?;
            total += c * cal_auc(labels, &scores)?;
        }
        Ok(total)
    }
}

/// AUC of `gain(s, a)` under `w` against `target`'s labels.
pub fn auc_fitness(
    model: &(impl QModel + ?Sized),
    eval_set: &[EvalExample],
    target: &ObjectiveId,
    w: &WeightVector,
) -> Result<f64> {
    GainTable::build(model, eval_set)?.auc(target, w)
}
