//! Flow-map and pathline error measures.

use thiserror::Error;

use crate::advect::{integrate, StepError};
use crate::extract::FlowMapDataset;
use crate::fields::{FieldError, TimeField};
use crate::geom::{distance, Point};
use crate::reconstruct::{Mode, Pathline, PathlineStatus, ReconstructError, Reconstructor};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("position lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to compare")]
    Empty,
    #[error("cell side must be positive, got {0}")]
    NonpositiveCell(f64),
    #[error("pathlines share no samples")]
    NoCommonSamples,
    #[error("datasets are not comparable: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Mean Euclidean distance between index-aligned positions.
pub fn total_avg_l2(a: &[Point], b: &[Point]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(a.iter().zip(b).map(|(x, y)| distance(x, y)).sum::<f64>() / a.len() as f64)
}

/// `(C - L) / C * 100`. Negative when the error exceeds a cell.
pub fn accuracy_pct(l: f64, c: f64) -> Result<f64, MetricsError> {
    if !(c > 0.0) {
        return Err(MetricsError::NonpositiveCell(c));
    }
    Ok((c - l) / c * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalError {
    pub interval: usize,
    pub mean_l2: f64,
    pub max_l2: f64,
    pub compared: usize,
    /// Reference seeds the candidate could not reconstruct.
    pub excluded: usize,
}

/// Greatest and average of the per-interval maxima.
pub fn max_l2_stats(intervals: &[IntervalError]) -> Result<(f64, f64), MetricsError> {
    if intervals.is_empty() {
        return Err(MetricsError::Empty);
    }
    let greatest = intervals.iter().map(|i| i.max_l2).fold(f64::NEG_INFINITY, f64::max);
    let avg = intervals.iter().map(|i| i.max_l2).sum::<f64>() / intervals.len() as f64;
    Ok((greatest, avg))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    /// Mean over intervals of the per-interval mean error.
    pub total_avg_l2: f64,
    /// Mean over every compared seed of every interval.
    pub pooled_avg_l2: f64,
    pub greatest_max_l2: f64,
    pub avg_max_l2: f64,
    pub accuracy_pct: f64,
    pub cell_side: f64,
    pub intervals: Vec<IntervalError>,
    pub excluded_count: usize,
}

impl AccuracyReport {
    pub fn from_intervals(intervals: Vec<IntervalError>, cell_side: f64) -> Result<Self, MetricsError> {
        let used: Vec<&IntervalError> = intervals.iter().filter(|i| i.compared > 0).collect();
        if used.is_empty() {
            return Err(MetricsError::Empty);
        }
        let total_avg_l2 = used.iter().map(|i| i.mean_l2).sum::<f64>() / used.len() as f64;
        let compared: usize = used.iter().map(|i| i.compared).sum();
        let pooled_avg_l2 = used.iter().map(|i| i.mean_l2 * i.compared as f64).sum::<f64>() / compared as f64;
        let maxima: Vec<IntervalError> = used.iter().map(|i| **i).collect();
        let (greatest_max_l2, avg_max_l2) = max_l2_stats(&maxima)?;
        Ok(AccuracyReport {
            total_avg_l2,
            pooled_avg_l2,
            greatest_max_l2,
            avg_max_l2,
            accuracy_pct: accuracy_pct(total_avg_l2, cell_side)?,
            cell_side,
            excluded_count: intervals.iter().map(|i| i.excluded).sum(),
            intervals,
        })
    }
}

/// Reconstruction error at one reference seed; `None` when the candidate
/// could not reconstruct it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedError {
    pub seed: Point,
    pub l2: Option<f64>,
}

/// Reconstructs `candidate` at every seed stored in `reference` (normally
/// the Exchange run of the same configuration) and measures the distance to
/// the reference ends. One list per interval.
pub fn seed_errors(reference: &FlowMapDataset, candidate: &FlowMapDataset, mode: Mode) -> Result<Vec<Vec<SeedError>>, MetricsError> {
    if reference.interval_count() != candidate.interval_count()
        || reference.config.decomposition != candidate.config.decomposition
        || reference.config.interval != candidate.config.interval
    {
        return Err(MetricsError::Incompatible("interval or decomposition differs".into()));
    }
    let mut rec = Reconstructor::new(candidate, mode)?;
    let mut out = Vec::with_capacity(reference.interval_count());
    for k in 0..reference.interval_count() {
        let flows: Vec<_> = reference.sets[k].iter().flat_map(|s| s.flows.iter().filter(|f| f.valid)).collect();
        let seeds: Vec<Point> = flows.iter().map(|f| f.seed).collect();
        let got = rec.reconstruct_flowmap(&seeds, k)?;
        out.push(flows.iter().zip(&got.ends).map(|(f, e)| SeedError { seed: f.seed, l2: e.map(|e| distance(&e, &f.end)) }).collect());
    }
    Ok(out)
}

pub fn interval_error(interval: usize, errors: &[SeedError]) -> IntervalError {
    let errs: Vec<f64> = errors.iter().filter_map(|e| e.l2).collect();
    let mean = if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 };
    let max = errs.iter().copied().fold(0.0, f64::max);
    IntervalError { interval, mean_l2: mean, max_l2: max, compared: errs.len(), excluded: errors.len() - errs.len() }
}

/// Accuracy of `candidate` against `reference`; see [`seed_errors`].
pub fn compare_flowmaps(reference: &FlowMapDataset, candidate: &FlowMapDataset, mode: Mode) -> Result<AccuracyReport, MetricsError> {
    let per = seed_errors(reference, candidate, mode)?;
    let intervals = per.iter().enumerate().map(|(k, e)| interval_error(k, e)).collect();
    AccuracyReport::from_intervals(intervals, reference.decomposition().map_err(ReconstructError::from)?.cell_side())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathlineError {
    pub mean_l2: f64,
    /// Samples in the compared common prefix.
    pub common_samples: usize,
}

/// Mean distance over the common prefix of two pathlines sampled at the
/// same times.
pub fn pathline_error(interp: &Pathline, truth: &Pathline) -> Result<PathlineError, MetricsError> {
    let n = interp
        .samples
        .iter()
        .zip(&truth.samples)
        .take_while(|(a, b)| (a.0 - b.0).abs() <= 1e-9 * a.0.abs().max(1.0))
        .count();
    if n == 0 {
        return Err(MetricsError::NoCommonSamples);
    }
    let sum: f64 = interp.samples[..n].iter().zip(&truth.samples[..n]).map(|(a, b)| distance(&a.1, &b.1)).sum();
    Ok(PathlineError { mean_l2: sum / n as f64, common_samples: n })
}

/// Reference pathline: RK4 over the whole domain at every cycle, no
/// decomposition and no resets, sampled every `interval` cycles for
/// `intervals` intervals from cycle `start_cycle`.
pub fn ground_truth_pathline(
    field: &mut TimeField,
    seed: &Point,
    start_cycle: u64,
    interval: u64,
    intervals: usize,
) -> Result<Pathline, MetricsError> {
    let dt = field.cycle_dt();
    let mut line = Pathline { seed: *seed, samples: Vec::new(), status: PathlineStatus::Complete };
    if !field.domain().contains(seed) {
        line.status = PathlineStatus::TruncatedOutOfDomain;
        return Ok(line);
    }
    line.samples.push((start_cycle as f64 * dt, *seed));
    let mut x = *seed;
    for k in 0..intervals as u64 {
        let first = start_cycle + k * interval;
        match integrate(field, &x, first, interval) {
            Ok(y) => {
                line.samples.push(((first + interval) as f64 * dt, y));
                x = y;
            }
            Err(StepError::StageOutOfRegion { .. }) => {
                line.status = PathlineStatus::TruncatedOutOfDomain;
                break;
            }
            Err(StepError::Field(e)) => return Err(e.into()),
        }
    }
    Ok(line)
}
