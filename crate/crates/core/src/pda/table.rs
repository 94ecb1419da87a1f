use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical click-through rate per display position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionCtrTable {
    ctr: Vec<f64>,
    impressions: Vec<u64>,
}

/// Smoothing pseudo-count used when none is given.
pub const DEFAULT_ALPHA: f64 = 1.0;

impl PositionCtrTable {
    /// A table from known rates, each in `(0, 1]`.
    pub fn from_ctr(ctr: Vec<f64>) -> Result<Self> {
        if ctr.is_empty() {
            return Err(Error::InvalidArgument("position table is empty".into()));
        }
        if let Some(p) = ctr.iter().position(|c| !(*c > 0.0 && *c <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "ctr[{p}] = {} outside (0, 1]",
                ctr[p]
            )));
        }
        let impressions = vec![0; ctr.len()];
        Ok(Self { ctr, impressions })
    }

    pub fn len(&self) -> usize {
        self.ctr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ctr.is_empty()
    }

    pub fn ctr(&self, p: usize) -> Result<f64> {
        self.ctr.get(p).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("position {p} outside [0, {})", self.len()))
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.ctr
    }

    pub fn impressions(&self, p: usize) -> u64 {
        self.impressions.get(p).copied().unwrap_or(0)
    }

    /// No impressions were logged here; the entry is the smoothing prior.
    pub fn is_low_confidence(&self, p: usize) -> bool {
        self.impressions(p) == 0
    }

    /// Columns `position,ctr,impressions`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (position, (&ctr, &impressions)) in self.ctr.iter().zip(&self.impressions).enumerate() {
            out.serialize(TableRow {
                position,
                ctr,
                impressions,
            })?;
        }
        out.flush().map_err(|e| Error::io("<ctr table>", e))?;
        Ok(())
    }

    /// Reads [`write_csv`](Self::write_csv) output; a missing
    /// `impressions` column reads as zero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows: Vec<TableRow> = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            rows.push(row?);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.position != i {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!("expected position {i}, found {}", row.position),
                });
            }
        }
        let mut table = Self::from_ctr(rows.iter().map(|r| r.ctr).collect())?;
        table.impressions = rows.iter().map(|r| r.impressions).collect();
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    position: usize,
    ctr: f64,
    #[serde(default)]
    impressions: u64,
}

/// `ctr[p] = (clicks_p + α) / (impressions_p + 2α)` over positions `[0, L)`.
pub fn build_table(
    logs: &[(usize, bool)],
    positions: usize,
    alpha: f64,
) -> Result<PositionCtrTable> {
    if logs.is_empty() {
        return Err(Error::InvalidArgument("click log is empty".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing {alpha} must be ≥ 0"
        )));
    }
    let mut clicks = vec![0u64; positions];
    let mut impressions = vec![0u64; positions];
    for (i, &(p, clicked)) in logs.iter().enumerate() {
        if p >= positions {
            return Err(Error::InvalidArgument(format!(
                "log record {i}: position {p} outside [0, {positions})"
            )));
        }
        impressions[p] += 1;
        clicks[p] += u64::from(clicked);
    }
    let ctr: Vec<f64> = clicks
        .iter()
        .zip(&impressions)
        .map(|(&c, &n)| (c as f64 + alpha) / (n as f64 + 2.0 * alpha))
        .collect();
    if let Some(p) = ctr.iter().position(|c| !(*c > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "position {p} has no clicks; a positive smoothing count is required"
        )));
    }
    Ok(PositionCtrTable { ctr, impressions })
}

/// Rescales a pCTR observed at position `from` to position `to` by the
/// ratio of position CTRs, clamped to at most 1.
pub fn adjust_pctr(pctr: f64, from: usize, to: usize, table: &PositionCtrTable) -> Result<f64> {
    if !(pctr > 0.0 && pctr <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "pCTR {pctr} outside (0, 1]"
        )));
    }
    let (cj, ci) = (table.ctr(from)?, table.ctr(to)?);
    if from == to {
        return Ok(pctr);
    }
    Ok((pctr * (ci / cj)).min(1.0))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn direct_ratio_without_smoothing() {
        let mut logs = vec![(0, true); 5];
        logs.extend(vec![(0, false); 5]);
        let t = build_table(&logs, 1, 0.0).unwrap();
        assert_eq!(t.ctr(0).unwrap(), 0.5);
    }

    #[test]
    fn smoothing_keeps_entries_positive() {
        let t = build_table(&[(0, false), (1, false), (1, false)], 3, 1.0).unwrap();
        assert!(t.as_slice().iter().all(|c| *c > 0.0));
        assert_eq!(t.ctr(2).unwrap(), 0.5);
        assert!(t.is_low_confidence(2));
        assert!(!t.is_low_confidence(1));
        assert!(build_table(&[(0, false)], 1, 0.0).is_err());
    }

    #[test]
    fn build_errors() {
        assert!(build_table(&[], 3, 1.0).is_err());
        assert!(build_table(&[(3, true)], 3, 1.0).is_err());
        assert!(build_table(&[(0, true)], 3, -1.0).is_err());
    }

    #[test]
    fn adjust_examples() {
        let t = PositionCtrTable::from_ctr(vec![0.2, 0.1, 0.4]).unwrap();
        assert_eq!(adjust_pctr(0.37, 1, 1, &t).unwrap(), 0.37);
        assert!((adjust_pctr(0.1, 1, 0, &t).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(adjust_pctr(0.8, 0, 2, &t).unwrap(), 1.0);
        assert!(adjust_pctr(0.0, 0, 1, &t).is_err());
        assert!(adjust_pctr(0.5, 0, 3, &t).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let t = PositionCtrTable::from_ctr(vec![0.3, 0.1 + 0.2, 1e-7]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("position,ctr,impressions\n"));
        assert_eq!(PositionCtrTable::read_csv(buf.as_slice()).unwrap(), t);

        let built = build_table(&[(0, true), (0, false), (2, true)], 3, 1.0).unwrap();
        let mut buf = Vec::new();
        built.write_csv(&mut buf).unwrap();
        assert_eq!(PositionCtrTable::read_csv(buf.as_slice()).unwrap(), built);

        let legacy = "position,ctr\n0,0.5\n1,0.25\n";
        let t = PositionCtrTable::read_csv(legacy.as_bytes()).unwrap();
        assert_eq!(t.as_slice(), &[0.5, 0.25]);
        assert!(t.is_low_confidence(1));
    }

    fn decreasing_table() -> impl Strategy<Value = PositionCtrTable> {
        prop::collection::vec(0.05f64..1.0, 2..12).prop_map(|mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            v.dedup();
            PositionCtrTable::from_ctr(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn identity_is_exact(pctr in 1e-9f64..=1.0, t in decreasing_table(), p in 0usize..12) {
            let p = p % t.len();
            prop_assert_eq!(adjust_pctr(pctr, p, p, &t).unwrap(), pctr);
        }

        #[test]
        fn earlier_never_lowers(pctr in 1e-9f64..=1.0, t in decreasing_table(), a in 0usize..12, b in 0usize..12) {
            let (to, from) = (a.min(b) % t.len(), a.max(b) % t.len());
            let (to, from) = (to.min(from), to.max(from));
            let out = adjust_pctr(pctr, from, to, &t).unwrap();
            prop_assert!(out >= pctr);
            prop_assert!(out > 0.0 && out <= 1.0);
        }
    }
}
