//! Experiment files (TOML).
//!
//! ```toml
//! strategies = ["exchange", "bto"]
//!
//! [field]
//! kind = "abc"
//! cycle_dt = 0.01
//!
//! [decomposition]
//! global_dims = [32, 32, 32]
//! rank_layout = [2, 2, 2]
//!
//! [extraction]
//! interval = 10
//! total_cycles = 100
//! reduction = 8
//! ```
//!
//! Relative paths are taken from the experiment file's directory. The output
//! directory defaults to `runs/<file stem>` next to the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DecompositionSpec, Reduction};
use crate::extract::{ExtractError, ExtractionConfig, Strategy};
use crate::fields::{FieldKind, FieldSpec, StageTime};
use crate::reconstruct::Mode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, field `{field}`: {message}")]
    ParseError { line: usize, field: String, message: String },
    #[error("invalid experiment: {0}")]
    ValidationError(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSection {
    pub interval: u64,
    pub total_cycles: u64,
    pub reduction: Reduction,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSection {
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Discard,
    Accuracy,
    Timing,
    Bounds,
}

fn all_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Discard, MetricKind::Accuracy, MetricKind::Timing, MetricKind::Bounds]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "all_metrics")]
    pub select: Vec<MetricKind>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { select: all_metrics() }
    }
}

/// Intervals and reductions swept by `metrics`. Empty lists mean the
/// `[extraction]` values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub intervals: Vec<u64>,
    #[serde(default)]
    pub reductions: Vec<Reduction>,
}

fn five() -> usize {
    5
}

fn four() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "five")]
    pub repetitions: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { repetitions: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// Pathline seeds per axis, placed at cell centers of an even split.
    #[serde(default = "four")]
    pub seeds_per_axis: usize,
}

impl Default for TruthSection {
    fn default() -> Self {
        TruthSection { seeds_per_axis: 4 }
    }
}

/// Facts about a finished run, recorded next to its resolved spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub strategy: Strategy,
    pub stage_time: StageTime,
    pub ranks: usize,
    pub intervals: u64,
    pub version: String,
}

fn both_strategies() -> Vec<Strategy> {
    vec![Strategy::Exchange, Strategy::Bto]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "both_strategies")]
    pub strategies: Vec<Strategy>,
    pub field: FieldSpec,
    pub decomposition: DecompositionSpec,
    pub extraction: ExtractionSection,
    #[serde(default)]
    pub reconstruction: ReconstructionSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub truth: TruthSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn field_name(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    let Some(span) = err.span() else {
        return String::new();
    };
    let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    line.split('=').next().unwrap_or("").trim().trim_matches(['[', ']']).to_string()
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::ParseError {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            field: field_name(text, &e),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment spec serializes")
    }

    pub fn dims(&self) -> usize {
        self.decomposition.global_dims.len()
    }

    pub fn intervals(&self) -> Vec<u64> {
        if self.sweep.intervals.is_empty() {
            vec![self.extraction.interval]
        } else {
            self.sweep.intervals.clone()
        }
    }

    pub fn reductions(&self) -> Vec<Reduction> {
        if self.sweep.reductions.is_empty() {
            vec![self.extraction.reduction]
        } else {
            self.sweep.reductions.clone()
        }
    }

    pub fn wants(&self, m: MetricKind) -> bool {
        self.metrics.select.contains(&m)
    }

    pub fn extraction_config(&self, strategy: Strategy, interval: u64, reduction: Reduction) -> ExtractionConfig {
        ExtractionConfig {
            field: self.field.clone(),
            decomposition: self.decomposition.clone(),
            interval,
            reduction,
            total_cycles: self.extraction.total_cycles,
            strategy,
            rng_seed: self.extraction.rng_seed,
        }
    }

    pub fn base_config(&self, strategy: Strategy) -> ExtractionConfig {
        self.extraction_config(strategy, self.extraction.interval, self.extraction.reduction)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::ValidationError(m));
        if self.strategies.is_empty() {
            return invalid("strategies must not be empty".into());
        }
        let d = self.dims();
        if self.decomposition.rank_layout.len() != d {
            return invalid("decomposition.global_dims and rank_layout differ in length".into());
        }
        if self.field.kind == FieldKind::Gridded {
            match &self.field.path {
                Some(p) if p.is_dir() => {}
                Some(p) => return invalid(format!("field.path {} does not exist", p.display())),
                None => return invalid("gridded field needs field.path".into()),
            }
        }
        for interval in self.intervals() {
            for reduction in self.reductions() {
                let cfg = self.extraction_config(Strategy::Exchange, interval, reduction);
                cfg.validate().or_else(|e| invalid(e.to_string()))?;
            }
        }
        let cfg = self.base_config(Strategy::Exchange).resolved().map_err(|e| ConfigError::ValidationError(e.to_string()))?;
        let domain = cfg.field.domain().map_err(|e| ConfigError::ValidationError(e.to_string()))?;
        if domain.dims != d {
            return invalid(format!("field is {}D but the decomposition is {d}D", domain.dims));
        }
        cfg.decomposition.build(&domain).map_err(|e| ConfigError::ValidationError(e.to_string()))?;
        if self.bench.repetitions == 0 {
            return invalid("bench.repetitions must be at least 1".into());
        }
        if self.truth.seeds_per_axis == 0 {
            return invalid("truth.seeds_per_axis must be at least 1".into());
        }
        Ok(())
    }

    /// Same spec with field defaults filled in.
    pub fn resolved(&self) -> Result<ExperimentSpec, ExtractError> {
        let mut out = self.clone();
        out.field = self.base_config(Strategy::Exchange).resolved()?.field;
        Ok(out)
    }

    /// Spec recorded in a run directory: resolved, one strategy, provenance
    /// attached.
    pub fn for_run(&self, config: &ExtractionConfig, provenance: Provenance) -> ExperimentSpec {
        let mut out = self.clone();
        out.strategies = vec![config.strategy];
        out.field = config.field.clone();
        out.extraction = ExtractionSection {
            interval: config.interval,
            total_cycles: config.total_cycles,
            reduction: config.reduction,
            rng_seed: config.rng_seed,
        };
        out.sweep = SweepSection::default();
        out.provenance = Some(provenance);
        out
    }
}

/// Reads, resolves relative paths and validates an experiment file.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut spec = ExperimentSpec::from_toml(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(p) = &spec.field.path {
        if p.is_relative() {
            spec.field.path = Some(base.join(p));
        }
    }
    let out = match &spec.output_dir {
        Some(p) if p.is_relative() => base.join(p),
        Some(p) => p.clone(),
        None => base.join("runs").join(path.file_stem().unwrap_or_default()),
    };
    spec.output_dir = Some(out);
    spec.validate()?;
    Ok(spec)
}
