//! JSON parameter checkpoints. Each file carries a format tag and version,
//! then per-layer shapes followed by row-major values. Loading checks the
//! recorded shapes against the shapes the caller expects.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Mlp, QNetwork};
use crate::error::{Error, Result};

const MLP_FORMAT: &str = "modrl-mlp";
const QNET_FORMAT: &str = "modrl-qnetwork";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MlpFile {
    format: String,
    version: u32,
    params: Mlp,
}

#[derive(Serialize, Deserialize)]
struct QNetworkFile {
    format: String,
    version: u32,
    sync_period: usize,
    steps_since_sync: usize,
    eval: Mlp,
    target: Mlp,
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Checkpoint(format!(
            "expected `{expected}`, found `{format}`"
        )));
    }
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    Ok(())
}

/// Re-validates deserialized parameters and compares layer sizes.
fn validate(params: Mlp, expected_sizes: &[usize]) -> Result<Mlp> {
    let params =
        Mlp::from_layers(params.layers().to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if params.sizes() != expected_sizes {
        return Err(Error::Checkpoint(format!(
            "shape mismatch: file has {:?}, expected {:?}",
            params.sizes(),
            expected_sizes
        )));
    }
    Ok(params)
}

pub fn save_mlp<W: Write>(w: W, params: &Mlp) -> Result<()> {
    let file = MlpFile {
        format: MLP_FORMAT.into(),
        version: VERSION,
        params: params.clone(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn load_mlp<R: Read>(r: R, expected_sizes: &[usize]) -> Result<Mlp> {
    let file: MlpFile = serde_json::from_reader(r)?;
    check_header(&file.format, file.version, MLP_FORMAT)?;
    validate(file.params, expected_sizes)
}

pub fn save_qnetwork<W: Write>(w: W, net: &QNetwork) -> Result<()> {
    let file = QNetworkFile {
        format: QNET_FORMAT.into(),
        version: VERSION,
        sync_period: net.sync_period(),
        steps_since_sync: net.steps_since_sync(),
        eval: net.eval().clone(),
        target: net.target().clone(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn load_qnetwork<R: Read>(r: R, expected_sizes: &[usize]) -> Result<QNetwork> {
    let file: QNetworkFile = serde_json::from_reader(r)?;
    check_header(&file.format, file.version, QNET_FORMAT)?;
    let eval = validate(file.eval, expected_sizes)?;
    let target = validate(file.target, expected_sizes)?;
    QNetwork::from_parts(eval, target, file.steps_since_sync, file.sync_period)
}
