//! Ensemble checkpoints: a manifest of objectives and shapes followed by
//! the trunk, its target copy and one eval/target pair per head.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EnsembleShape, ObjectiveSpec, QEnsemble};
use crate::error::{Error, Result};
use crate::qnet::{Mlp, OptimizerKind, QNetwork};

const FORMAT: &str = "modrl-ensemble";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeadFile {
    objective: ObjectiveSpec,
    eval: Mlp,
    target: Mlp,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format: String,
    version: u32,
    shape: EnsembleShape,
    sync_period: usize,
    steps_since_sync: usize,
    optimizer: OptimizerKind,
    trunk: Mlp,
    trunk_target: Mlp,
    heads: Vec<HeadFile>,
}

pub fn save_ensemble<W: Write>(w: W, ens: &QEnsemble) -> Result<()> {
    let file = EnsembleFile {
        format: FORMAT.into(),
        version: VERSION,
        shape: ens.shape.clone(),
        sync_period: ens.sync_period,
        steps_since_sync: ens.steps_since_sync,
        optimizer: ens.optimizer,
        trunk: ens.trunk.clone(),
        trunk_target: ens.trunk_target.clone(),
        heads: ens
            .objectives
            .iter()
            .zip(&ens.heads)
            .map(|(o, h)| HeadFile {
                objective: o.clone(),
                eval: h.eval().clone(),
                target: h.target().clone(),
            })
            .collect(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

fn revalidate(m: Mlp) -> Result<Mlp> {
    Mlp::from_layers(m.layers().to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Loads an ensemble. `expected` must match the stored shape exactly.
/// Optimizer moments are not stored and restart from zero.
pub fn load_ensemble<R: Read>(r: R, expected: &EnsembleShape) -> Result<QEnsemble> {
    let file: EnsembleFile = serde_json::from_reader(r)?;
    if file.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "expected `{FORMAT}`, found `{}`",
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {}",
            file.version
        )));
    }
    if &file.shape != expected {
        return Err(Error::Checkpoint(format!(
            "shape mismatch: file has {:?}, expected {:?}",
            file.shape, expected
        )));
    }
    let mut objectives = Vec::with_capacity(file.heads.len());
    let mut heads = Vec::with_capacity(file.heads.len());
    for h in file.heads {
        objectives.push(h.objective);
        heads.push(
            QNetwork::from_parts(
                revalidate(h.eval)?,
                revalidate(h.target)?,
                0,
                file.sync_period,
            )
            .map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    QEnsemble::from_parts(
        objectives,
        file.shape,
        revalidate(file.trunk)?,
        revalidate(file.trunk_target)?,
        heads,
        file.sync_period,
        file.steps_since_sync,
        file.optimizer,
    )
}
