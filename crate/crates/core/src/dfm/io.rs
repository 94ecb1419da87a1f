//! CEM history as CSV (`generation, mu_0.., sigma2_0.., best_score,
//! mean_score, best_ever`) and the best-weights manifest as JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{GenerationRecord, WeightVector};
use crate::error::{Error, Result};
use crate::mdp::ObjectiveId;

pub fn write_history_csv<W: Write>(w: W, history: &[GenerationRecord]) -> Result<()> {
    let k = history.first().map_or(0, |h| h.mu.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["generation".to_string()];
    header.extend((0..k).map(|i| format!("mu_{i}")));
    header.extend((0..k).map(|i| format!("sigma2_{i}")));
    header.extend(["best_score", "mean_score", "best_ever"].map(String::from));
    out.write_record(&header)?;
    for h in history {
        let mut row = vec![h.generation.to_string()];
        row.extend(h.mu.iter().chain(&h.sigma2).map(f64::to_string));
        row.extend([h.best_score, h.mean_score, h.best_ever].map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<cem history>", e))?;
    Ok(())
}

pub fn read_history_csv<R: Read>(r: R) -> Result<Vec<GenerationRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let width = rdr.headers()?.len();
    if width < 4 || (width - 4) % 2 != 0 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected history width {width}"),
        });
    }
    let k = (width - 4) / 2;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|e| Error::Parse {
                line: i + 2,
                msg: format!("column {j}: {e}"),
            })
        };
        let generation = rec[0].parse().map_err(|e| Error::Parse {
            line: i + 2,
            msg: format!("generation: {e}"),
        })?;
        out.push(GenerationRecord {
            generation,
            mu: (1..=k).map(num).collect::<Result<_>>()?,
            sigma2: (k + 1..=2 * k).map(num).collect::<Result<_>>()?,
            best_score: num(2 * k + 1)?,
            mean_score: num(2 * k + 2)?,
            best_ever: num(2 * k + 3)?,
        });
    }
    Ok(out)
}

/// Best weights found by a search, consumed by later stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsManifest {
    pub objectives: Vec<ObjectiveId>,
    pub weights: WeightVector,
    pub score: f64,
    pub fitness: String,
}

impl WeightsManifest {
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let m: Self = serde_json::from_reader(r)?;
        let m = Self {
            weights: WeightVector::new(m.weights.as_slice().to_vec())?,
            ..m
        };
        if m.weights.len() != m.objectives.len() {
            return Err(Error::Dimension {
                what: "manifest weights",
                expected: m.objectives.len(),
                got: m.weights.len(),
            });
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfm::{optimize, CemConfig};
    use crate::rng::SeededRng;

    #[test]
    fn history_round_trip() {
        let mut cfg = CemConfig::new(2);
        cfg.generations = 5;
        let out = optimize(
            |w| Ok(-w.as_slice()[0].powi(2)),
            &cfg,
            &mut SeededRng::new(1, 0),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &out.history).unwrap();
        assert_eq!(read_history_csv(buf.as_slice()).unwrap(), out.history);
    }

    #[test]
    fn manifest_round_trip() {
        let m = WeightsManifest {
            objectives: vec!["click".into(), "order".into()],
            weights: WeightVector::new(vec![0.25, 1.5]).unwrap(),
            score: 0.1 + 0.2,
            fitness: "rollout".into(),
        };
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(WeightsManifest::load(buf.as_slice()).unwrap(), m);
        let bad = String::from_utf8(buf).unwrap().replace("1.5", "1.5, 2.0");
        assert!(WeightsManifest::load(bad.as_bytes()).is_err());
    }
}
