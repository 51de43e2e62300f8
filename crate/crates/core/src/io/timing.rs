//! Per-rank, per-cycle wall-time capture.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::extract::Strategy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Advect,
    Manage,
    Communicate,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Advect => "advect",
            Phase::Manage => "manage",
            Phase::Communicate => "communicate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingRecord {
    pub rank: usize,
    pub cycle: u64,
    pub phase: Phase,
    pub wall_seconds: f64,
    /// Last cycle of an interval (finalization and storage happen there).
    pub write_cycle: bool,
}

/// Mean per-cycle time: all phases of a (rank, cycle) summed, averaged over
/// the non-write cycles of every rank.
pub fn mean_cycle_seconds(records: &[TimingRecord]) -> Option<f64> {
    use std::collections::BTreeMap;
    let mut per: BTreeMap<(usize, u64), f64> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.write_cycle) {
        *per.entry((r.rank, r.cycle)).or_default() += r.wall_seconds;
    }
    if per.is_empty() {
        return None;
    }
    Some(per.values().sum::<f64>() / per.len() as f64)
}

/// Timing CSV: `strategy,repetition,rank,cycle,phase,wall_seconds,write_cycle`.
pub fn timing_csv(rows: &[(Strategy, usize, TimingRecord)]) -> String {
    let mut out = String::from("strategy,repetition,rank,cycle,phase,wall_seconds,write_cycle\n");
    for (s, rep, r) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9},{}",
            s.as_str(),
            rep,
            r.rank,
            r.cycle,
            r.phase.as_str(),
            r.wall_seconds,
            u8::from(r.write_cycle)
        );
    }
    out
}

pub fn write_timing_csv(path: &Path, rows: &[(Strategy, usize, TimingRecord)]) -> Result<(), FormatError> {
    std::fs::write(path, timing_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_cycles_are_excluded_from_the_mean() {
        let rec = |rank, cycle, phase, s, w| TimingRecord { rank, cycle, phase, wall_seconds: s, write_cycle: w };
        let rows = vec![
            rec(0, 0, Phase::Advect, 1.0, false),
            rec(0, 0, Phase::Manage, 1.0, false),
            rec(1, 0, Phase::Advect, 4.0, false),
            rec(0, 1, Phase::Advect, 100.0, true),
        ];
        assert_eq!(mean_cycle_seconds(&rows), Some(3.0));
        assert_eq!(mean_cycle_seconds(&rows[3..]), None);
    }
}
