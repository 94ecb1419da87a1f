//! Run artifacts on disk. Every writer has a matching reader that returns
//! values equal to what was written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dfm::{read_history_csv, write_history_csv, GenerationRecord, WeightsManifest};
use crate::error::{Error, Result};
use crate::mdp::translog::{read_log, write_log};
use crate::mdp::Transition;
use crate::moq::{load_ensemble, save_ensemble};
use crate::pda::{read_click_log, write_click_log, ClickRecord, PositionCtrTable};
use crate::qnet::{load_qnetwork, save_qnetwork, Optimizer};

use super::config::ExperimentConfig;
use super::run::{MetricsRow, RunOutput};
use super::train::Learner;

pub const CONFIG: &str = "config.toml";
pub const CTR_TABLE: &str = "ctr_table.csv";
pub const CLICK_LOG: &str = "click_log.csv";
pub const SIM_TRANSITIONS: &str = "sim_transitions.log";
pub const REAL_TRANSITIONS: &str = "real_transitions.log";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const CEM_HISTORY: &str = "cem_history.csv";
pub const WEIGHTS: &str = "weights.json";
pub const METRICS: &str = "metrics.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text = cfg.to_toml_string()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_table(path: &Path, table: &PositionCtrTable) -> Result<()> {
    let mut w = create(path)?;
    table.write_csv(&mut w)?;
    finish(w, path)
}

pub fn read_table(path: &Path) -> Result<PositionCtrTable> {
    PositionCtrTable::read_csv(open(path)?)
}

pub fn write_clicks(path: &Path, clicks: &[ClickRecord]) -> Result<()> {
    let mut w = create(path)?;
    write_click_log(&mut w, clicks)?;
    finish(w, path)
}

pub fn read_clicks(path: &Path) -> Result<Vec<ClickRecord>> {
    read_click_log(open(path)?)
}

pub fn write_history(path: &Path, history: &[GenerationRecord]) -> Result<()> {
    let mut w = create(path)?;
    write_history_csv(&mut w, history)?;
    finish(w, path)
}

pub fn read_history(path: &Path) -> Result<Vec<GenerationRecord>> {
    read_history_csv(open(path)?)
}

pub fn write_transitions(
    path: &Path,
    cfg: &ExperimentConfig,
    transitions: &[Transition],
) -> Result<()> {
    let mut w = create(path)?;
    write_log(
        &mut w,
        &cfg.objective_ids(),
        cfg.env.state_dim(),
        transitions,
    )?;
    finish(w, path)
}

pub fn read_transitions(path: &Path, cfg: &ExperimentConfig) -> Result<Vec<Transition>> {
    let layout = std::sync::Arc::new(cfg.env.layout());
    let (header, transitions) = read_log(open(path)?, &layout, cfg.env.positions)?;
    if header.objectives != cfg.objective_ids() {
        return Err(Error::ObjectiveMismatch {
            expected: cfg.objective_ids().iter().map(|o| o.to_string()).collect(),
            got: header.objectives.iter().map(|o| o.to_string()).collect(),
        });
    }
    Ok(transitions)
}

pub fn write_learner(path: &Path, learner: &Learner) -> Result<()> {
    let mut w = create(path)?;
    match learner {
        Learner::Ensemble(e) => save_ensemble(&mut w, e)?,
        Learner::Fused { net, .. } => save_qnetwork(&mut w, net)?,
    }
    finish(w, path)
}

/// Loads a learner of the kind `cfg` describes. Optimizer state restarts.
pub fn read_learner(path: &Path, cfg: &ExperimentConfig) -> Result<Learner> {
    let shape = cfg.shape();
    match &cfg.ablation.fused_reward {
        None => Ok(Learner::Ensemble(load_ensemble(open(path)?, &shape)?)),
        Some(weights) => {
            let mut sizes = vec![shape.state_dim];
            sizes.extend(&shape.trunk);
            sizes.extend(&shape.head);
            sizes.push(shape.actions);
            let net = load_qnetwork(open(path)?, &sizes)?;
            let opt = Optimizer::new(cfg.network.optimizer, net.eval());
            Ok(Learner::Fused {
                net,
                opt,
                weights: weights.clone(),
            })
        }
    }
}

pub fn write_weights(path: &Path, manifest: &WeightsManifest) -> Result<()> {
    let mut w = create(path)?;
    manifest.save(&mut w)?;
    finish(w, path)
}

pub fn read_weights(path: &Path) -> Result<WeightsManifest> {
    WeightsManifest::load(open(path)?)
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(path)?);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for r in csv::Reader::from_reader(open(path)?).deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Human-readable metrics table.
pub fn summary(rows: &[MetricsRow]) -> String {
    let fmt_auc = |a: Option<f64>| a.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!(
        "{:<32} {:>6} {:>10} {:>10} {:>10} {:>9} {:>9}  weights\n",
        "label", "seed", "ctr", "cvr", "combined", "auc_clk", "auc_ord"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<32} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>9} {:>9}  {}\n",
            r.label,
            r.seed,
            r.ctr_reward,
            r.cvr_reward,
            r.combined,
            fmt_auc(r.auc_click),
            fmt_auc(r.auc_order),
            r.weights
        ));
    }
    s
}

/// Writes every artifact of a run into `dir` and returns the paths.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, run: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = |name: &str| dir.join(name);
    let mut written = Vec::new();

    write_config(&p(CONFIG), cfg)?;
    written.push(p(CONFIG));
    write_table(&p(CTR_TABLE), &run.data.table)?;
    written.push(p(CTR_TABLE));
    write_clicks(&p(CLICK_LOG), &run.data.log.clicks)?;
    written.push(p(CLICK_LOG));
    write_transitions(&p(SIM_TRANSITIONS), cfg, &run.simulated)?;
    written.push(p(SIM_TRANSITIONS));
    write_transitions(&p(REAL_TRANSITIONS), cfg, &run.real)?;
    written.push(p(REAL_TRANSITIONS));
    write_learner(&p(CHECKPOINT), &run.learner)?;
    written.push(p(CHECKPOINT));
    if let Some(cem) = &run.cem {
        write_history(&p(CEM_HISTORY), &cem.history)?;
        written.push(p(CEM_HISTORY));
    }
    write_weights(&p(WEIGHTS), &weights_manifest(cfg, run))?;
    written.push(p(WEIGHTS));
    write_metrics(&p(METRICS), std::slice::from_ref(&run.metrics))?;
    written.push(p(METRICS));
    Ok(written)
}

pub fn weights_manifest(cfg: &ExperimentConfig, run: &RunOutput) -> WeightsManifest {
    let (score, fitness) = match &run.cem {
        Some(c) => (c.best.score, format!("{:?}", cfg.cem.fitness)),
        None => (run.metrics.combined, "none".to_string()),
    };
    WeightsManifest {
        objectives: crate::moq::QModel::objective_ids(&run.learner),
        weights: run.weights.clone(),
        score,
        fitness,
    }
}
