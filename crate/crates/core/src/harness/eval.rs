use rayon::prelude::*;

use crate::dfm::{fused_action, EvalExample, GainTable, WeightVector};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::mdp::{ActionIndex, ObjectiveId};
use crate::moq::{reward, ObjectiveSpec, QModel};
use crate::rng::{streams, SeededRng};

/// Mean undiscounted per-objective return over evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReturns {
    pub objectives: Vec<ObjectiveId>,
    pub mean: Vec<f64>,
    pub episodes: usize,
}

impl PolicyReturns {
    pub fn get(&self, id: &ObjectiveId) -> Option<f64> {
        self.objectives
            .iter()
            .position(|o| o == id)
            .map(|i| self.mean[i])
    }

    /// `Σ_i pref_i · mean_i`.
    pub fn combined(&self, preference: &[f64]) -> f64 {
        self.mean.iter().zip(preference).map(|(m, p)| m * p).sum()
    }
}

/// One evaluation episode: the actions taken and the per-objective return.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub actions: Vec<ActionIndex>,
    pub returns: Vec<f64>,
}

/// Runs an episode on session `seed`, choosing actions with `policy`.
/// Step outcomes come from the `(seed, EVAL)` stream, so two policies on
/// the same seed face the same random numbers.
pub fn run_episode<P>(
    env: &Env,
    objectives: &[ObjectiveSpec],
    seed: u64,
    mut policy: P,
) -> Result<EpisodeTrace>
where
    P: FnMut(&crate::mdp::StateVector) -> Result<ActionIndex>,
{
    let (mut session, mut obs) = env.reset(seed)?;
    let mut rng = SeededRng::new(seed, streams::EVAL);
    let mut returns = vec![0.0; objectives.len()];
    let mut actions = Vec::with_capacity(session.horizon());
    while !session.is_terminal() {
        let a = policy(&obs)?;
        let out = env.step(&mut session, a, &mut rng)?;
        for (r, o) in returns.iter_mut().zip(objectives) {
            *r += reward(o, out.event).value();
        }
        actions.push(a);
        obs = out.next_state;
    }
    Ok(EpisodeTrace {
        seed,
        actions,
        returns,
    })
}

/// Greedy fused-policy traces on sessions `first_seed..first_seed + episodes`.
pub fn evaluate_traces(
    model: &(impl QModel + Sync + ?Sized),
    weights: &WeightVector,
    env: &Env,
    objectives: &[ObjectiveSpec],
    episodes: usize,
    first_seed: u64,
) -> Result<Vec<EpisodeTrace>> {
    (0..episodes as u64)
        .into_par_iter()
        .map(|e| {
            run_episode(env, objectives, first_seed.wrapping_add(e), |s| {
                fused_action(model, s, weights)
            })
        })
        .collect()
}

/// Mean returns of the greedy fused policy `argmax_a Σ_i w_i q_i(s, a)`.
pub fn evaluate_policy(
    model: &(impl QModel + Sync + ?Sized),
    weights: &WeightVector,
    env: &Env,
    objectives: &[ObjectiveSpec],
    episodes: usize,
    first_seed: u64,
) -> Result<PolicyReturns> {
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let traces = evaluate_traces(model, weights, env, objectives, episodes, first_seed)?;
    let mut mean = vec![0.0; objectives.len()];
    for t in &traces {
        for (m, r) in mean.iter_mut().zip(&t.returns) {
            *m += r;
        }
    }
    mean.iter_mut().for_each(|m| *m /= episodes as f64);
    Ok(PolicyReturns {
        objectives: objectives.iter().map(|o| o.id.clone()).collect(),
        mean,
        episodes,
    })
}

/// Uniform-random-action examples with per-objective event labels.
pub fn collect_eval_set(
    env: &Env,
    objectives: &[ObjectiveSpec],
    episodes: usize,
    first_seed: u64,
) -> Result<Vec<EvalExample>> {
    let mut out = Vec::with_capacity(episodes * env.config().horizon);
    for e in 0..episodes as u64 {
        let seed = first_seed.wrapping_add(e);
        let (mut session, mut obs) = env.reset(seed)?;
        let mut rng = SeededRng::new(seed, streams::EVAL);
        let mut pick = SeededRng::new(seed, streams::EXPLORE);
        while !session.is_terminal() {
            let a = ActionIndex::new(pick.index(env.positions()), env.positions())?;
            let step = env.step(&mut session, a, &mut rng)?;
            out.push(EvalExample {
                state: obs,
                action: a,
                labels: objectives
                    .iter()
                    .map(|o| (o.id.clone(), reward(o, step.event).value() > 0.0))
                    .collect(),
            });
            obs = step.next_state;
        }
    }
    Ok(out)
}

/// AUC of the fused gain against each objective's labels; `None` where the
/// labels hold a single class.
pub fn auc_per_objective(
    model: &(impl QModel + ?Sized),
    weights: &WeightVector,
    eval_set: &[EvalExample],
    objectives: &[ObjectiveSpec],
) -> Result<Vec<Option<f64>>> {
    let table = GainTable::build(model, eval_set)?;
    objectives
        .iter()
        .map(|o| match table.auc(&o.id, weights) {
            Ok(a) => Ok(Some(a)),
            Err(Error::SingleClass) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}
