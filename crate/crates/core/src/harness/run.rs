use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dfm::{optimize_par, CemOutcome, GainTable, WeightVector};
use crate::env::{to_transition, Env, ProductionLog, SessionState};
use crate::error::{Error, Result, Stage, StageExt};
use crate::mdp::{ObjectiveId, ReplayBuffer, StateVector, Transition};
use crate::moq::{ObjectiveSpec, RewardEvent};
use crate::pda::{
    build_table, impressions, mix_batch, simulate_transitions, PositionCtrTable, SimulationConfig,
};
use crate::rng::{streams, SeededRng};

use super::config::{DataMode, ExperimentConfig, FitnessKind};
use super::eval::{auc_per_objective, collect_eval_set, evaluate_policy, PolicyReturns};
use super::train::{act_fused_epsilon, train_from_buffer, Learner};

/// One evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub label: String,
    pub seed: u64,
    /// Mean per-episode click-objective return.
    pub ctr_reward: f64,
    /// Mean per-episode order-objective return.
    pub cvr_reward: f64,
    /// Preference-weighted sum of the per-objective returns.
    pub combined: f64,
    pub auc_click: Option<f64>,
    pub auc_order: Option<f64>,
    /// Fusion weights used for evaluation, `;`-separated.
    pub weights: String,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    /// Equality on everything but timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            wall_clock_s: 0.0,
            ..self.clone()
        } == Self {
            wall_clock_s: 0.0,
            ..other.clone()
        }
    }
}

/// Logged production traffic and the position table built from it.
#[derive(Debug, Clone)]
pub struct LoggedData {
    pub log: ProductionLog,
    pub table: PositionCtrTable,
}

/// Everything a run produces besides the metrics line.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRow,
    pub learner: Learner,
    pub weights: WeightVector,
    pub cem: Option<CemOutcome>,
    pub simulated: Vec<Transition>,
    pub real: Vec<Transition>,
    pub data: LoggedData,
}

pub fn make_env(cfg: &ExperimentConfig) -> Result<Env> {
    Env::new(cfg.env.clone())
}

/// Logs production traffic and estimates the per-position CTR table.
pub fn log_traffic(cfg: &ExperimentConfig, env: &Env) -> Result<LoggedData> {
    let first = SeededRng::new(cfg.seed, streams::LOGGING).next_seed();
    let log = env.production_log(first, cfg.pda.log_sessions)?;
    let table = build_table(&impressions(&log.clicks), env.positions(), cfg.pda.alpha)?;
    Ok(LoggedData { log, table })
}

/// Random-action cold-start transitions built from the logged sessions.
pub fn simulate(cfg: &ExperimentConfig, data: &LoggedData) -> Result<Vec<Transition>> {
    if cfg.ablation.data_mode == DataMode::RealOnly || data.log.sessions.is_empty() {
        return Ok(Vec::new());
    }
    let sim_cfg = SimulationConfig {
        objectives: cfg.objectives.clone(),
        horizon: cfg.env.horizon,
    };
    let mut rng = SeededRng::new(cfg.seed, streams::SIMULATION);
    simulate_transitions(
        &data.log.sessions,
        &data.table,
        &sim_cfg,
        &mut rng,
        cfg.pda.sim_episodes,
    )
}

/// Trained learner plus the real transitions it collected.
#[derive(Debug, Clone)]
pub struct Trained {
    pub learner: Learner,
    pub real: Vec<Transition>,
}

fn buffer_of(cfg: &ExperimentConfig, transitions: &[Transition]) -> Result<ReplayBuffer> {
    let warmup = cfg.replay.warmup.min(transitions.len()).max(1);
    let mut buf = ReplayBuffer::new(
        cfg.replay.capacity.max(transitions.len()),
        warmup,
        cfg.objective_ids(),
    )?;
    for t in transitions {
        buf.push(t.clone())?;
    }
    Ok(buf)
}

/// Cold start on simulated data, then online training under the data mode.
///
/// Online steps interact with the environment through an ε-greedy policy
/// on the equal-weight fused gain, except in simulation-only mode where
/// every step is a gradient step on simulated data.
pub fn train(cfg: &ExperimentConfig, env: &Env, simulated: &[Transition]) -> Result<Trained> {
    let mut init = SeededRng::new(cfg.seed, streams::INIT);
    let mut learner = Learner::new(cfg, &mut init)?;
    let mut replay_rng = SeededRng::new(cfg.seed, streams::REPLAY);
    let mode = cfg.ablation.data_mode;
    let sim = buffer_of(cfg, simulated)?;
    if mode != DataMode::RealOnly && !sim.is_empty() {
        train_from_buffer(
            &mut learner,
            &sim,
            cfg.training.cold_start_steps,
            cfg,
            &mut replay_rng,
        )?;
    }
    if mode == DataMode::SimOnly {
        if !sim.is_empty() {
            train_from_buffer(&mut learner, &sim, cfg.training.steps, cfg, &mut replay_rng)?;
        }
        return Ok(Trained {
            learner,
            real: Vec::new(),
        });
    }

    let mut real = ReplayBuffer::new(cfg.replay.capacity, cfg.replay.warmup, cfg.objective_ids())?;
    let mut sessions = SeededRng::new(cfg.seed, streams::SESSIONS);
    let mut steps = SeededRng::new(cfg.seed, streams::STEPS);
    let mut explore = SeededRng::new(cfg.seed, streams::EXPLORE);
    let behaviour = learner.default_weights();
    let mut log = Vec::with_capacity(cfg.training.steps);
    let mut current: Option<(SessionState, StateVector)> = None;
    let (gamma, lr) = (cfg.gamma, cfg.network.learning_rate);

    for step in 0..cfg.training.steps {
        let (mut session, obs) = match current.take() {
            Some(c) => c,
            None => env.reset(sessions.next_seed()).stage(Stage::Training)?,
        };
        let eps = cfg.training.epsilon.value(step);
        let action = act_fused_epsilon(&learner, &behaviour, &obs, eps, &mut explore)
            .stage(Stage::Training)?;
        let outcome = env
            .step(&mut session, action, &mut steps)
            .stage(Stage::Training)?;
        let t = to_transition(&cfg.objectives, obs, action, &outcome);
        real.push(t.clone()).stage(Stage::Training)?;
        log.push(t);
        if !outcome.terminal {
            current = Some((session, outcome.next_state));
        }

        let batch = match mode {
            DataMode::Progressive if !sim.is_empty() => Some(
                mix_batch(
                    &sim,
                    &real,
                    &cfg.pda.mix,
                    cfg.replay.batch_size,
                    &mut replay_rng,
                )
                .stage(Stage::Training)?,
            ),
            _ if real.is_ready() => Some(
                real.sample(cfg.replay.batch_size, &mut replay_rng)
                    .stage(Stage::Training)?,
            ),
            _ => None,
        };
        if let Some(batch) = batch {
            learner.train(&batch, gamma, lr).stage(Stage::Training)?;
        }
    }
    Ok(Trained { learner, real: log })
}

fn preference_score(cfg: &ExperimentConfig, r: &PolicyReturns) -> f64 {
    r.combined(&cfg.preference_vector())
}

/// CEM search over fusion weights. `None` when the ablation disables it or
/// the learner has a single Q-row.
pub fn search_weights(
    cfg: &ExperimentConfig,
    env: &Env,
    learner: &Learner,
) -> Result<Option<CemOutcome>> {
    if !cfg.ablation.use_cem || learner.is_fused() {
        return Ok(None);
    }
    let search = cfg.cem.search(cfg.objectives.len());
    let mut seeds = SeededRng::new(cfg.seed, streams::FITNESS);
    let first = seeds.next_seed();
    let mut rng = SeededRng::new(cfg.seed, streams::CEM);
    let outcome = match &cfg.cem.fitness {
        FitnessKind::Rollout { episodes } => optimize_par(
            |w| {
                Ok(preference_score(
                    cfg,
                    &evaluate_policy(learner, w, env, &cfg.objectives, *episodes, first)?,
                ))
            },
            &search,
            &mut rng,
        )?,
        FitnessKind::Auc { target, episodes } => {
            let set = collect_eval_set(env, &cfg.objectives, *episodes, first)?;
            let table = GainTable::build(learner, &set)?;
            optimize_par(|w| table.auc(target, w), &search, &mut rng)?
        }
        FitnessKind::WeightedAuc { tasks, episodes } => {
            let set = collect_eval_set(env, &cfg.objectives, *episodes, first)?;
            let table = GainTable::build(learner, &set)?;
            optimize_par(|w| table.weighted_auc(tasks, w), &search, &mut rng)?
        }
    };
    Ok(Some(outcome))
}

fn objective_with(objectives: &[ObjectiveSpec], ev: RewardEvent) -> Option<usize> {
    objectives.iter().position(|o| o.reward_event == ev)
}

/// Evaluation rollouts and AUC columns for a learner and weight vector.
/// Session seeds depend only on `cfg.seed`, so every ablation row faces
/// the same sessions and step randomness.
pub fn evaluate(
    cfg: &ExperimentConfig,
    env: &Env,
    learner: &Learner,
    weights: &WeightVector,
) -> Result<(PolicyReturns, Vec<Option<f64>>)> {
    let mut seeds = SeededRng::new(cfg.seed, streams::EVAL);
    let rollout_seed = seeds.next_seed();
    let auc_seed = seeds.next_seed();
    let returns = evaluate_policy(
        learner,
        weights,
        env,
        &cfg.objectives,
        cfg.eval.episodes,
        rollout_seed,
    )?;
    let aucs = if cfg.eval.auc_episodes == 0 {
        vec![None; cfg.objectives.len()]
    } else {
        let set = collect_eval_set(env, &cfg.objectives, cfg.eval.auc_episodes, auc_seed)?;
        auc_per_objective(learner, weights, &set, &cfg.objectives)?
    };
    Ok((returns, aucs))
}

pub fn metrics_row(
    cfg: &ExperimentConfig,
    returns: &PolicyReturns,
    aucs: &[Option<f64>],
    weights: &WeightVector,
    wall_clock_s: f64,
) -> Result<MetricsRow> {
    let click = objective_with(&cfg.objectives, RewardEvent::Click);
    let order = objective_with(&cfg.objectives, RewardEvent::Order);
    let row = MetricsRow {
        run_id: format!("{}-{}", cfg.label, cfg.seed),
        label: cfg.label.clone(),
        seed: cfg.seed,
        ctr_reward: click.map_or(0.0, |i| returns.mean[i]),
        cvr_reward: order.map_or(0.0, |i| returns.mean[i]),
        combined: preference_score(cfg, returns),
        auc_click: click.and_then(|i| aucs[i]),
        auc_order: order.and_then(|i| aucs[i]),
        weights: weights
            .as_slice()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        wall_clock_s,
    };
    if !(row.ctr_reward.is_finite() && row.cvr_reward.is_finite() && row.combined.is_finite()) {
        return Err(Error::NonFinite("evaluation returns".into()));
    }
    Ok(row)
}

/// Weights the learner is evaluated with: the best CEM sample if a search
/// ran, else equal weights.
pub fn final_weights(learner: &Learner, cem: Option<&CemOutcome>) -> WeightVector {
    cem.map_or_else(|| learner.default_weights(), |c| c.best.weights.clone())
}

/// Everything after logging and simulation, for a single configuration.
pub(crate) fn finish_run(
    cfg: &ExperimentConfig,
    env: &Env,
    data: LoggedData,
    simulated: Vec<Transition>,
    trained: Trained,
    started: Instant,
) -> Result<RunOutput> {
    let cem = search_weights(cfg, env, &trained.learner).stage(Stage::Fusion)?;
    let weights = final_weights(&trained.learner, cem.as_ref());
    let (returns, aucs) =
        evaluate(cfg, env, &trained.learner, &weights).stage(Stage::Evaluation)?;
    let metrics = metrics_row(
        cfg,
        &returns,
        &aucs,
        &weights,
        started.elapsed().as_secs_f64(),
    )
    .stage(Stage::Evaluation)?;
    Ok(RunOutput {
        metrics,
        learner: trained.learner,
        weights,
        cem,
        simulated,
        real: trained.real,
        data,
    })
}

/// Runs the whole pipeline: logging, cold-start simulation, training,
/// weight search and evaluation. Errors carry the stage they came from.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let started = Instant::now();
    cfg.validate().stage(Stage::Config)?;
    let env = make_env(cfg).stage(Stage::Config)?;
    let data = log_traffic(cfg, &env).stage(Stage::Logging)?;
    let simulated = simulate(cfg, &data).stage(Stage::Simulation)?;
    let trained = train(cfg, &env, &simulated).stage(Stage::Training)?;
    finish_run(cfg, &env, data, simulated, trained, started)
}

/// Median combined score per label, in first-appearance order.
pub fn median_combined(rows: &[MetricsRow]) -> Vec<(String, f64)> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    labels
        .into_iter()
        .map(|l| {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.label == l)
                .map(|r| r.combined)
                .collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let m = if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            };
            (l.to_string(), m)
        })
        .collect()
}

/// Labels of the five ablation rows, in table order.
pub const ABLATION_LABELS: [&str; 5] = [
    "MORL-FR",
    "MODRL-TA w 100% Simulated Data",
    "MODRL-TA w 100% Real Data",
    "MODRL-TA w/o CEM",
    "MODRL-TA",
];

/// Scalarization weights of the single-network baseline: a fixed, hand-set
/// trade-off that is not tuned to the evaluation preference.
pub fn baseline_fused_weights() -> BTreeMap<ObjectiveId, f64> {
    [
        (ObjectiveId::new("click"), 1.0),
        (ObjectiveId::new("order"), 0.2),
    ]
    .into()
}

/// The five configurations of the ablation table, derived from `base`.
pub fn ablation_configs(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    ABLATION_LABELS
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let mut c = base.clone();
            c.label = (*label).into();
            let a = &mut c.ablation;
            a.fused_reward = None;
            a.use_cem = true;
            a.data_mode = DataMode::Progressive;
            match i {
                0 => {
                    let ids = base.objective_ids();
                    a.fused_reward = Some(
                        baseline_fused_weights()
                            .into_iter()
                            .filter(|(k, _)| ids.contains(k))
                            .collect(),
                    );
                    a.use_cem = false;
                }
                1 => a.data_mode = DataMode::SimOnly,
                2 => a.data_mode = DataMode::RealOnly,
                3 => a.use_cem = false,
                _ => {}
            }
            c
        })
        .collect()
}

/// Runs all ablation rows on one seed. See [`ablation_rows`].
pub fn ablation_matrix(base: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    ablation_rows(base, &[0, 1, 2, 3, 4])
}

/// Training settings of a row: everything except the label and whether a
/// weight search follows.
fn training_key(c: &ExperimentConfig) -> ExperimentConfig {
    let mut k = c.clone();
    k.label.clear();
    k.ablation.use_cem = false;
    k
}

/// Runs the selected ablation rows (indices into [`ABLATION_LABELS`]) on
/// one seed. Rows with identical training settings share one trained
/// learner, and independent trainings run in parallel. Each row equals
/// what [`run_experiment`] returns for its configuration, apart from
/// wall-clock time.
pub fn ablation_rows(base: &ExperimentConfig, rows: &[usize]) -> Result<Vec<RunOutput>> {
    use rayon::prelude::*;
    let all = ablation_configs(base);
    let configs: Vec<&ExperimentConfig> = rows
        .iter()
        .map(|&i| {
            all.get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("no ablation row {i}")))
        })
        .collect::<Result<_>>()
        .stage(Stage::Config)?;
    for c in &configs {
        c.validate().stage(Stage::Config)?;
    }
    let env = make_env(base).stage(Stage::Config)?;
    let started = Instant::now();
    let data = log_traffic(base, &env).stage(Stage::Logging)?;

    let mut keys: Vec<ExperimentConfig> = Vec::new();
    let slot: Vec<usize> = configs
        .iter()
        .map(|c| {
            let k = training_key(c);
            keys.iter().position(|x| *x == k).unwrap_or_else(|| {
                keys.push(k);
                keys.len() - 1
            })
        })
        .collect();
    let trained: Vec<(Vec<Transition>, Trained)> = keys
        .par_iter()
        .map(|c| {
            let sim = simulate(c, &data).stage(Stage::Simulation)?;
            let t = train(c, &env, &sim).stage(Stage::Training)?;
            Ok((sim, t))
        })
        .collect::<Result<_>>()?;
    let training_time = started.elapsed();

    configs
        .par_iter()
        .zip(slot)
        .map(|(c, k)| {
            let (sim, t) = trained[k].clone();
            let start = Instant::now()
                .checked_sub(training_time)
                .unwrap_or_else(Instant::now);
            finish_run(c, &env, data.clone(), sim, t, start)
        })
        .collect()
}
