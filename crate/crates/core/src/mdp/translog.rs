//! Line-delimited transition log.
//!
//! ```text
//! #transitions v1 objectives=click,order dim=32
//! <source>\t<state, comma-separated>\t<action>\t<rewards, comma-separated>\t<next state>\t<terminal>
//! ```
//!
//! `source` is `simulated` or `real`, rewards are `1`/`-1` in the header's
//! objective order and `terminal` is `0`/`1`. Floats are written with Rust's
//! shortest round-trip formatting, so parse(serialize(x)) == x for finite
//! values. Blank lines and other `#` lines are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{ActionIndex, ObjectiveId, Reward, SliceLayout, Source, StateVector, Transition};
use crate::error::{Error, Result};

const MAGIC: &str = "#transitions v1";

pub fn write_header<W: Write>(
    w: &mut W,
    objectives: &[ObjectiveId],
    dim: usize,
) -> std::io::Result<()> {
    let ids: Vec<&str> = objectives.iter().map(|o| o.as_str()).collect();
    writeln!(w, "{MAGIC} objectives={} dim={dim}", ids.join(","))
}

fn join(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    parts.join(",")
}

pub fn format_line(t: &Transition, objectives: &[ObjectiveId]) -> Result<String> {
    t.check_objectives(objectives)?;
    let rewards: Vec<&str> = objectives
        .iter()
        .map(|o| match t.rewards[o] {
            Reward::Hit => "1",
            Reward::Miss => "-1",
        })
        .collect();
    Ok(format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        t.source.as_str(),
        join(t.state.values()),
        t.action.position(),
        rewards.join(","),
        join(t.next_state.values()),
        u8::from(t.terminal)
    ))
}

/// Writes a header and one line per transition.
pub fn write_log<'a, W, I>(
    w: &mut W,
    objectives: &[ObjectiveId],
    dim: usize,
    transitions: I,
) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Transition>,
{
    let io = |e| Error::io("<transition log>", e);
    write_header(w, objectives, dim).map_err(io)?;
    for t in transitions {
        writeln!(w, "{}", format_line(t, objectives)?).map_err(io)?;
    }
    Ok(())
}

/// Header metadata of a transition log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub objectives: Vec<ObjectiveId>,
    pub dim: usize,
}

fn parse_header(line: &str, lineno: usize) -> Result<LogHeader> {
    let err = |msg: &str| Error::Parse {
        line: lineno,
        msg: msg.to_string(),
    };
    let rest = line
        .strip_prefix(MAGIC)
        .ok_or_else(|| err("missing `#transitions v1` header"))?;
    let mut objectives = None;
    let mut dim = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("objectives=") {
            objectives = Some(
                v.split(',')
                    .filter(|s| !s.is_empty())
                    .map(ObjectiveId::new)
                    .collect(),
            );
        } else if let Some(v) = field.strip_prefix("dim=") {
            dim = Some(v.parse().map_err(|_| err("bad dim"))?);
        } else {
            return Err(err(&format!("unknown header field `{field}`")));
        }
    }
    Ok(LogHeader {
        objectives: objectives.ok_or_else(|| err("header lacks objectives"))?,
        dim: dim.ok_or_else(|| err("header lacks dim"))?,
    })
}

fn parse_floats(field: &str, lineno: usize) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad number `{s}`"),
            })
        })
        .collect()
}

/// Parses one record line against a known header and layout.
pub fn parse_line(
    line: &str,
    lineno: usize,
    header: &LogHeader,
    layout: &Arc<SliceLayout>,
    actions: usize,
) -> Result<Transition> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(err(format!(
            "expected 6 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let source = match fields[0] {
        "simulated" => Source::Simulated,
        "real" => Source::Real,
        other => return Err(err(format!("unknown source `{other}`"))),
    };
    let state = StateVector::new(parse_floats(fields[1], lineno)?, layout.clone())
        .map_err(|e| err(e.to_string()))?;
    let position: usize = fields[2]
        .parse()
        .map_err(|_| err(format!("bad action `{}`", fields[2])))?;
    let action = ActionIndex::new(position, actions).map_err(|e| err(e.to_string()))?;
    let reward_values = parse_floats(fields[3], lineno)?;
    if reward_values.len() != header.objectives.len() {
        return Err(err(format!(
            "expected {} rewards, found {}",
            header.objectives.len(),
            reward_values.len()
        )));
    }
    let mut rewards = BTreeMap::new();
    for (id, v) in header.objectives.iter().zip(reward_values) {
        rewards.insert(
            id.clone(),
            Reward::from_value(v).map_err(|e| err(e.to_string()))?,
        );
    }
    let next_state = StateVector::new(parse_floats(fields[4], lineno)?, layout.clone())
        .map_err(|e| err(e.to_string()))?;
    let terminal = match fields[5] {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("bad terminal flag `{other}`"))),
    };
    Ok(Transition {
        state,
        action,
        rewards,
        next_state,
        terminal,
        source,
    })
}

/// Reads a whole log. The header must come first and match `layout`'s width.
pub fn read_log<R: BufRead>(
    reader: R,
    layout: &Arc<SliceLayout>,
    actions: usize,
) -> Result<(LogHeader, Vec<Transition>)> {
    let mut header = None;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<transition log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h = parse_header(line.trim_end(), lineno)?;
            if h.dim != layout.dim() {
                return Err(Error::Dimension {
                    what: "transition log state",
                    expected: layout.dim(),
                    got: h.dim,
                });
            }
            header = Some(h);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let h = header.as_ref().expect("header parsed");
        out.push(parse_line(
            line.trim_end_matches(['\r', '\n']),
            lineno,
            h,
            layout,
            actions,
        )?);
    }
    let header = header.ok_or(Error::Parse {
        line: 0,
        msg: "empty transition log".into(),
    })?;
    Ok((header, out))
}
