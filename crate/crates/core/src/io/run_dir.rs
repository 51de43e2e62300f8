//! Run directories.
//!
//! ```text
//! provenance.toml                      resolved spec + run facts
//! stats.csv                            per interval and rank flow counters
//! messages.csv                         nonzero particle message counts
//! flows/interval_0000_rank_0000.lbfm   basis flows
//! ```
//!
//! Writing the same dataset twice gives identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::{ConfigError, ExperimentSpec, Provenance};
use super::{lbfm, FormatError};
use crate::extract::{FlowMapDataset, FlowStats, MessageLog};

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{file}: {message}")]
    Inconsistent { file: String, message: String },
}

pub fn flow_path(dir: &Path, interval: usize, rank: usize) -> PathBuf {
    dir.join("flows").join(format!("interval_{interval:04}_rank_{rank:04}.lbfm"))
}

fn io(e: std::io::Error) -> RunDirError {
    RunDirError::Format(FormatError::Io(e))
}

/// The [`ExperimentSpec`] a run directory records for `dataset`.
pub fn run_spec(spec: &ExperimentSpec, dataset: &FlowMapDataset) -> ExperimentSpec {
    let provenance = Provenance {
        strategy: dataset.config.strategy,
        stage_time: dataset.stage_time,
        ranks: dataset.rank_count(),
        intervals: dataset.interval_count() as u64,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut out = spec.for_run(&dataset.config, provenance);
    out.output_dir = None;
    out
}

pub fn write_run_dir(dir: &Path, spec: &ExperimentSpec, dataset: &FlowMapDataset) -> Result<(), RunDirError> {
    let flows = dir.join("flows");
    if flows.exists() {
        std::fs::remove_dir_all(&flows).map_err(io)?;
    }
    std::fs::create_dir_all(&flows).map_err(io)?;
    std::fs::write(dir.join("provenance.toml"), run_spec(spec, dataset).to_toml()).map_err(io)?;

    let mut stats = String::from("interval,rank,seeded,stored,discarded,terminated_boundary,exited_domain\n");
    for (k, sets) in dataset.sets.iter().enumerate() {
        for set in sets {
            let s = set.stats;
            let _ = writeln!(
                stats,
                "{k},{},{},{},{},{},{}",
                set.rank, s.seeded, s.stored, s.discarded, s.terminated_boundary, s.exited_domain
            );
            lbfm::write_basis_flows(set, &flow_path(dir, k, set.rank))?;
        }
    }
    std::fs::write(dir.join("stats.csv"), stats).map_err(io)?;

    let m = &dataset.messages;
    let mut msgs = String::from("kind,index,sender,receiver,count\n");
    for (kind, rows) in [("transfer", &m.transfers), ("return", &m.returns)] {
        for (i, row) in rows.iter().enumerate() {
            for (j, count) in row.iter().enumerate().filter(|(_, c)| **c > 0) {
                let _ = writeln!(msgs, "{kind},{i},{},{},{count}", j / m.ranks, j % m.ranks);
            }
        }
    }
    std::fs::write(dir.join("messages.csv"), msgs).map_err(io)?;
    Ok(())
}

fn csv_rows(dir: &Path, name: &str, width: usize) -> Result<Vec<Vec<u64>>, RunDirError> {
    let text = std::fs::read_to_string(dir.join(name)).map_err(io)?;
    let bad = |line: usize, message: &str| RunDirError::Inconsistent { file: name.into(), message: format!("line {line}: {message}") };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != width {
            return Err(bad(n + 1, "wrong column count"));
        }
        let start = usize::from(name == "messages.csv");
        let mut row = Vec::with_capacity(width);
        if start == 1 {
            row.push(match cols[0] {
                "transfer" => 0,
                "return" => 1,
                _ => return Err(bad(n + 1, "unknown message kind")),
            });
        }
        for c in &cols[start..] {
            row.push(c.parse().map_err(|_| bad(n + 1, "not an integer"))?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Loads a run directory written by [`write_run_dir`].
pub fn read_run_dir(dir: &Path) -> Result<(ExperimentSpec, FlowMapDataset), RunDirError> {
    let text = std::fs::read_to_string(dir.join("provenance.toml")).map_err(io)?;
    let spec = ExperimentSpec::from_toml(&text)?;
    let prov = spec.provenance.clone().ok_or_else(|| RunDirError::Inconsistent {
        file: "provenance.toml".into(),
        message: "missing [provenance]".into(),
    })?;
    let config = spec.base_config(prov.strategy);
    let intervals = prov.intervals as usize;
    let ranks = prov.ranks;
    let mut sets = Vec::with_capacity(intervals);
    for k in 0..intervals {
        let mut row = Vec::with_capacity(ranks);
        for r in 0..ranks {
            row.push(lbfm::read_basis_flows(&flow_path(dir, k, r))?);
        }
        sets.push(row);
    }
    for s in csv_rows(dir, "stats.csv", 7)? {
        let (k, r) = (s[0] as usize, s[1] as usize);
        let set = sets.get_mut(k).and_then(|v| v.get_mut(r)).ok_or_else(|| RunDirError::Inconsistent {
            file: "stats.csv".into(),
            message: format!("no flows for interval {k} rank {r}"),
        })?;
        set.stats = FlowStats {
            seeded: s[2] as usize,
            stored: s[3] as usize,
            discarded: s[4] as usize,
            terminated_boundary: s[5] as usize,
            exited_domain: s[6] as usize,
        };
    }
    let mut messages = MessageLog::new(ranks, config.total_cycles as usize, intervals);
    for m in csv_rows(dir, "messages.csv", 5)? {
        let target = if m[0] == 0 { &mut messages.transfers } else { &mut messages.returns };
        let (i, s, r) = (m[1] as usize, m[2] as usize, m[3] as usize);
        if s >= ranks || r >= ranks {
            return Err(RunDirError::Inconsistent { file: "messages.csv".into(), message: format!("rank out of range in {m:?}") });
        }
        let slot = target.get_mut(i).ok_or_else(|| RunDirError::Inconsistent {
            file: "messages.csv".into(),
            message: format!("index {i} out of range"),
        })?;
        slot[s * ranks + r] = m[4];
    }
    Ok((spec, FlowMapDataset { config, stage_time: prov.stage_time, sets, messages }))
}
