//! In situ extraction of basis flows over simulated ranks.
//!
//! Every interval, each rank seeds particles uniformly in its block and
//! advects them one cycle at a time. Two strategies decide what happens when
//! a particle would leave its block:
//!
//! * [`Strategy::Exchange`] hands the particle to the new owner through a
//!   mailbox (visible to the receiver at the start of the next cycle) and
//!   returns every particle to its origin rank at the write cycle.
//! * [`Strategy::Bto`] terminates and discards it. Ranks never communicate.
//!
//! Particles leaving the global domain are discarded by both strategies.

mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{finalize_bto, finalize_exchange, ExecOptions, ExtractionRun, Outbox, RankState};

use crate::advect::StepError;
use crate::domain::{BlockDecomposition, DecompositionSpec, DomainError, Reduction};
use crate::fields::{FieldError, FieldSpec, StageTime, TimeField};
use crate::geom::Point;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exchange,
    Bto,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Exchange => "exchange",
            Strategy::Bto => "bto",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Strategy::Exchange => 0,
            Strategy::Bto => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Strategy::Exchange),
            1 => Some(Strategy::Bto),
            _ => None,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exchange" => Ok(Strategy::Exchange),
            "bto" => Ok(Strategy::Bto),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    pub field: FieldSpec,
    pub decomposition: DecompositionSpec,
    /// Cycles per flow map.
    pub interval: u64,
    pub reduction: Reduction,
    pub total_cycles: u64,
    pub strategy: Strategy,
    /// Reserved; extraction is deterministic.
    #[serde(default)]
    pub rng_seed: u64,
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.interval == 0 {
            return Err(ExtractError::InvalidConfig("interval must be at least 1".into()));
        }
        if self.total_cycles == 0 || !self.total_cycles.is_multiple_of(self.interval) {
            return Err(ExtractError::InvalidConfig(format!(
                "interval {} does not divide total_cycles {}",
                self.interval, self.total_cycles
            )));
        }
        if self.reduction.0 == 0 {
            return Err(ExtractError::InvalidConfig("reduction must be 1:X with X >= 1".into()));
        }
        if !(self.field.cycle_dt > 0.0) {
            return Err(ExtractError::InvalidConfig("cycle_dt must be positive".into()));
        }
        Ok(())
    }

    pub fn interval_count(&self) -> u64 {
        self.total_cycles / self.interval
    }

    pub fn total_time(&self) -> f64 {
        self.total_cycles as f64 * self.field.cycle_dt
    }

    /// Same config with every field default filled in.
    pub fn resolved(&self) -> Result<ExtractionConfig, ExtractError> {
        let mut out = self.clone();
        out.field = self.field.resolved(self.total_time())?;
        Ok(out)
    }

    pub fn build_field(&self) -> Result<TimeField, ExtractError> {
        Ok(self.field.resolved(self.total_time())?.build()?)
    }

    pub fn build_decomposition(&self, field: &TimeField) -> Result<BlockDecomposition, ExtractError> {
        Ok(self.decomposition.build(field.domain())?)
    }
}

/// One stored trajectory: where a particle started and ended in an interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisFlow {
    pub id: u64,
    pub seed: Point,
    pub end: Point,
    pub valid: bool,
    pub origin_rank: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowStats {
    pub seeded: usize,
    pub stored: usize,
    pub discarded: usize,
    /// Discards caused by leaving the owning block (BTO only).
    pub terminated_boundary: usize,
    /// Discards caused by leaving the global domain.
    pub exited_domain: usize,
}

impl FlowStats {
    pub fn is_balanced(&self) -> bool {
        self.stored + self.discarded == self.seeded && self.terminated_boundary + self.exited_domain == self.discarded
    }
}

/// Basis flows of one rank for one interval, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFlowSet {
    pub interval_index: u32,
    pub t_start: f64,
    pub t_end: f64,
    pub rank: usize,
    pub dims: usize,
    pub strategy: Strategy,
    pub flows: Vec<BasisFlow>,
    pub stats: FlowStats,
}

/// Particle transfers per cycle and per-interval return rounds, as dense
/// `sender * ranks + receiver` matrices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageLog {
    pub ranks: usize,
    pub transfers: Vec<Vec<u64>>,
    pub returns: Vec<Vec<u64>>,
}

impl MessageLog {
    pub fn new(ranks: usize, cycles: usize, intervals: usize) -> Self {
        MessageLog { ranks, transfers: vec![vec![0; ranks * ranks]; cycles], returns: vec![vec![0; ranks * ranks]; intervals] }
    }

    pub fn total(&self) -> u64 {
        self.transfers.iter().chain(&self.returns).flatten().sum()
    }

    pub fn transfers_in_cycle(&self, cycle: usize) -> u64 {
        self.transfers[cycle].iter().sum()
    }

    pub fn returns_in_interval(&self, interval: usize) -> u64 {
        self.returns[interval].iter().sum()
    }
}

/// Everything one extraction run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMapDataset {
    /// Resolved config.
    pub config: ExtractionConfig,
    pub stage_time: StageTime,
    /// `sets[interval][rank]`
    pub sets: Vec<Vec<BasisFlowSet>>,
    pub messages: MessageLog,
}

impl FlowMapDataset {
    pub fn dims(&self) -> usize {
        self.config.decomposition.global_dims.len()
    }

    pub fn interval_count(&self) -> usize {
        self.sets.len()
    }

    pub fn rank_count(&self) -> usize {
        self.messages.ranks
    }

    pub fn decomposition(&self) -> Result<BlockDecomposition, ExtractError> {
        let domain = self.config.field.domain()?;
        Ok(self.config.decomposition.build(&domain)?)
    }

    pub fn total_stats(&self) -> FlowStats {
        let mut t = FlowStats::default();
        for s in self.sets.iter().flatten() {
            t.seeded += s.stats.seeded;
            t.stored += s.stats.stored;
            t.discarded += s.stats.discarded;
            t.terminated_boundary += s.stats.terminated_boundary;
            t.exited_domain += s.stats.exited_domain;
        }
        t
    }

    /// Discarded over seeded, pooled over all intervals and ranks.
    pub fn discarded_fraction(&self) -> f64 {
        let t = self.total_stats();
        t.discarded as f64 / t.seeded.max(1) as f64
    }

    /// Block-boundary terminations over seeded. Unlike domain exits, these
    /// are lost only to BTO.
    pub fn terminated_fraction(&self) -> f64 {
        let t = self.total_stats();
        t.terminated_boundary as f64 / t.seeded.max(1) as f64
    }
}

/// Runs an extraction with the worker count from `LBTO_THREADS` (unset: one
/// worker per rank; `0`: sequential).
pub fn run_extraction(config: &ExtractionConfig) -> Result<FlowMapDataset, ExtractError> {
    Ok(engine::run(config, &ExecOptions::from_env())?.dataset)
}

pub fn run_extraction_with(config: &ExtractionConfig, opts: &ExecOptions) -> Result<ExtractionRun, ExtractError> {
    engine::run(config, opts)
}
