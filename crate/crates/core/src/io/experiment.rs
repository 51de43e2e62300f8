//! End-to-end pipelines behind the command-line tool.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::{ConfigError, ExperimentSpec, MetricKind};
use super::lsfd::{write_scalar_field, ScalarField};
use super::report::{bounds_csv, emit_metrics, BoundsRow, MetricsRow};
use super::run_dir::{read_run_dir, write_run_dir, RunDirError};
use super::timing::{mean_cycle_seconds, write_timing_csv, TimingRecord};
use super::FormatError;
use crate::advect::{integrate, StepError};
use crate::bounds::{convergence_order, split_by_face_distance, BoundReport, BoundsError};
use crate::domain::Reduction;
use crate::extract::{run_extraction_with, ExecOptions, ExtractError, ExtractionConfig, FlowMapDataset, Strategy};
use crate::fields::{FieldError, TimeField};
use crate::ftle::{compute_ftle, FtleError};
use crate::geom::{distance, Aabb, Point, ORIGIN};
use crate::metrics::{
    ground_truth_pathline, interval_error, pathline_error, seed_errors, AccuracyReport, MetricsError,
};
use crate::reconstruct::{fill_holes, seed_lattice, Mode, Pathline, ReconstructError, Reconstructor};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    RunDir(#[from] RunDirError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Ftle(#[from] FtleError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentError {
    /// Bad input from the user rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
            || matches!(self, ExperimentError::Extract(ExtractError::InvalidConfig(_)))
            || matches!(self, ExperimentError::Invalid(_))
    }
}

fn io_err(e: std::io::Error) -> ExperimentError {
    ExperimentError::Format(FormatError::Io(e))
}

pub fn run_dir_path(spec: &ExperimentSpec, strategy: Strategy) -> PathBuf {
    spec.output_dir().join(strategy.as_str())
}

/// Runs every listed strategy on the base config and writes one run
/// directory each.
pub fn extract(spec: &ExperimentSpec, opts: &ExecOptions) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    for &s in &spec.strategies {
        let dataset = run_extraction_with(&spec.base_config(s), opts)?.dataset;
        let dir = run_dir_path(spec, s);
        write_run_dir(&dir, spec, &dataset)?;
        out.push(dir);
    }
    Ok(out)
}

/// Reads the run directory of `strategy` if it was written for this spec,
/// otherwise extracts and writes it.
pub fn load_or_extract(spec: &ExperimentSpec, strategy: Strategy, opts: &ExecOptions) -> Result<FlowMapDataset, ExperimentError> {
    let dir = run_dir_path(spec, strategy);
    let want = spec.base_config(strategy).resolved()?;
    if dir.join("provenance.toml").is_file() {
        if let Ok((_, dataset)) = read_run_dir(&dir) {
            if dataset.config == want {
                return Ok(dataset);
            }
        }
    }
    let dataset = run_extraction_with(&spec.base_config(strategy), opts)?.dataset;
    write_run_dir(&dir, spec, &dataset)?;
    Ok(dataset)
}

/// Pathline seeds: centers of an even `n`-per-axis split of the domain.
pub fn pathline_seeds(domain: &Aabb, n: usize) -> Vec<Point> {
    let d = domain.dims;
    let counts: [usize; 3] = std::array::from_fn(|a| if a < d { n } else { 1 });
    let mut out = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let idx = [i, j, k];
                let mut x = ORIGIN;
                for a in 0..d {
                    x[a] = domain.lo[a] + domain.extent(a) * (idx[a] as f64 + 0.5) / n as f64;
                }
                out.push(x);
            }
        }
    }
    out
}

/// Deterministic low-discrepancy points (Halton, bases 2, 3, 5) inside the
/// domain shrunk by `inset` of its extent on every side.
pub fn query_points(domain: &Aabb, count: usize, inset: f64) -> Vec<Point> {
    fn radical_inverse(mut i: usize, base: usize) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    (1..=count)
        .map(|i| {
            let mut x = ORIGIN;
            for (a, base) in [2, 3, 5].into_iter().enumerate().take(domain.dims) {
                let u = inset + (1.0 - 2.0 * inset) * radical_inverse(i, base);
                x[a] = domain.lo[a] + domain.extent(a) * u;
            }
            x
        })
        .collect()
}

fn pathlines_csv(rows: &[(usize, &Pathline)]) -> String {
    let mut out = String::from("seed,sample,t,x,y,z,status\n");
    for (i, line) in rows {
        for (j, (t, p)) in line.samples.iter().enumerate() {
            let _ = writeln!(out, "{i},{j},{t},{},{},{},{:?}", p[0], p[1], p[2], line.status);
        }
    }
    out
}

fn truth_lines(spec: &ExperimentSpec, seeds: &[Point]) -> Result<Vec<Pathline>, ExperimentError> {
    let cfg = spec.base_config(Strategy::Exchange).resolved()?;
    let mut field = cfg.build_field()?;
    let intervals = cfg.interval_count() as usize;
    seeds.iter().map(|s| Ok(ground_truth_pathline(&mut field, s, 0, cfg.interval, intervals)?)).collect()
}

/// The field domain of a spec.
pub fn spec_domain(spec: &ExperimentSpec) -> Result<Aabb, ExperimentError> {
    Ok(spec.base_config(Strategy::Exchange).resolved()?.field.domain()?)
}

/// Ground-truth pathlines from the pathline seeds, sampled at interval
/// boundaries. Writes `truth_pathlines.csv`.
pub fn truth(spec: &ExperimentSpec) -> Result<PathBuf, ExperimentError> {
    let seeds = pathline_seeds(&spec_domain(spec)?, spec.truth.seeds_per_axis);
    let lines = truth_lines(spec, &seeds)?;
    let out = spec.output_dir();
    std::fs::create_dir_all(&out).map_err(io_err)?;
    let path = out.join("truth_pathlines.csv");
    let rows: Vec<(usize, &Pathline)> = lines.iter().enumerate().collect();
    std::fs::write(&path, pathlines_csv(&rows)).map_err(io_err)?;
    Ok(path)
}

/// Mean pathline error of one strategy against the ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PathlineSummary {
    pub strategy: Strategy,
    pub mean_l2: f64,
    pub complete: usize,
    pub pathlines: usize,
}

/// Stitches pathlines from each strategy's basis flows, writes them with
/// their per-seed error against the ground truth.
pub fn reconstruct(spec: &ExperimentSpec, mode: Mode, opts: &ExecOptions) -> Result<Vec<PathlineSummary>, ExperimentError> {
    let seeds = pathline_seeds(&spec_domain(spec)?, spec.truth.seeds_per_axis);
    let truth = truth_lines(spec, &seeds)?;
    let out = spec.output_dir();
    let mut summaries = Vec::new();
    for &s in &spec.strategies {
        let dataset = load_or_extract(spec, s, opts)?;
        let mut rec = Reconstructor::new(&dataset, mode)?;
        let n = dataset.interval_count();
        let lines = seeds.iter().map(|x| rec.trace_pathline(x, 0, n)).collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<(usize, &Pathline)> = lines.iter().enumerate().collect();
        let stem = format!("{}_{}", s.as_str(), mode.as_str());
        std::fs::write(out.join(format!("pathlines_{stem}.csv")), pathlines_csv(&rows)).map_err(io_err)?;
        let mut errs = String::from("seed,common_samples,mean_l2,status\n");
        let mut total = 0.0;
        let mut counted = 0;
        for (i, (line, t)) in lines.iter().zip(&truth).enumerate() {
            if let Ok(e) = pathline_error(line, t) {
                let _ = writeln!(errs, "{i},{},{},{:?}", e.common_samples, e.mean_l2, line.status);
                total += e.mean_l2;
                counted += 1;
            }
        }
        std::fs::write(out.join(format!("pathline_errors_{stem}.csv")), errs).map_err(io_err)?;
        summaries.push(PathlineSummary {
            strategy: s,
            mean_l2: if counted > 0 { total / counted as f64 } else { 0.0 },
            complete: lines.iter().filter(|l| l.status == crate::reconstruct::PathlineStatus::Complete).count(),
            pathlines: lines.len(),
        });
    }
    Ok(summaries)
}

/// FTLE of interval `interval` on the whole-domain seed lattice (holes
/// filled), one `LSFD` file per strategy.
pub fn ftle(spec: &ExperimentSpec, interval: usize, opts: &ExecOptions) -> Result<Vec<(PathBuf, usize)>, ExperimentError> {
    let mut out = Vec::new();
    for &s in &spec.strategies {
        let dataset = load_or_extract(spec, s, opts)?;
        let field = ftle_field(&dataset, interval)?;
        let path = spec.output_dir().join(format!("ftle_{}_interval_{interval:04}.lsfd", s.as_str()));
        write_scalar_field(&path, &field.0)?;
        out.push((path, field.1));
    }
    Ok(out)
}

/// FTLE scalar field of one interval and its degenerate-node count.
pub fn ftle_field(dataset: &FlowMapDataset, interval: usize) -> Result<(ScalarField, usize), ExperimentError> {
    let lattice = seed_lattice(dataset, interval)?;
    let filled = fill_holes(&lattice.map)?;
    let t = dataset.config.interval as f64 * dataset.config.field.cycle_dt;
    let d = dataset.dims();
    let f = compute_ftle(&filled.values, filled.dims, d, lattice.spacing, t)?;
    Ok((ScalarField { dims: d, node_counts: f.dims, spacing: lattice.spacing, origin: lattice.origin, values: f.values }, f.degenerate))
}

/// Per-interval flow maps of the field from `queries`, integrated over the
/// whole domain. `None` where a particle leaves the domain.
pub fn truth_flowmap(field: &mut TimeField, queries: &[Point], start_cycle: u64, cycles: u64) -> Result<Vec<Option<Point>>, ExperimentError> {
    queries
        .iter()
        .map(|q| match integrate(field, q, start_cycle, cycles) {
            Ok(p) => Ok(Some(p)),
            Err(StepError::StageOutOfRegion { .. }) => Ok(None),
            Err(StepError::Field(e)) => Err(e.into()),
        })
        .collect()
}

/// Mean distance between reconstructed and true ends over queries where
/// both exist, and the number of such queries.
pub fn query_error(dataset: &FlowMapDataset, mode: Mode, interval: usize, queries: &[Point], truth: &[Option<Point>]) -> Result<(f64, usize), ExperimentError> {
    let mut rec = Reconstructor::new(dataset, mode)?;
    let got = rec.reconstruct_flowmap(queries, interval)?;
    let errs: Vec<f64> = got.ends.iter().zip(truth).filter_map(|(g, t)| Some(distance(&(*g)?, &(*t)?))).collect();
    if errs.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    Ok((errs.iter().sum::<f64>() / errs.len() as f64, errs.len()))
}

/// Seed spacing at a reduction: the widest lattice step.
pub fn seed_spacing(dataset: &FlowMapDataset) -> Result<f64, ExperimentError> {
    let decomp = dataset.decomposition()?;
    let s = dataset.config.reduction.stride(decomp.dims()) as f64;
    Ok(decomp.spacing()[..decomp.dims()].iter().fold(0.0f64, |m, h| m.max(h * s)))
}

/// `(seed spacing, error)` pairs for the first interval of Exchange runs at
/// each reduction, measured against integrated truth at `queries`.
pub fn convergence_study(
    spec: &ExperimentSpec,
    interval: u64,
    reductions: &[Reduction],
    queries: &[Point],
    mode: Mode,
    opts: &ExecOptions,
) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let base = spec.extraction_config(Strategy::Exchange, interval, Reduction(1)).resolved()?;
    let mut field = base.build_field()?;
    let truth = truth_flowmap(&mut field, queries, 0, interval)?;
    let mut out = Vec::new();
    for &r in reductions {
        // Keep the resolved field: an ABC period defaults to the total time.
        let cfg = ExtractionConfig { reduction: r, total_cycles: interval, ..base.clone() };
        let dataset = run_extraction_with(&cfg, opts)?.dataset;
        let (err, _) = query_error(&dataset, mode, 0, queries, &truth)?;
        out.push((seed_spacing(&dataset)?, err));
    }
    Ok(out)
}

/// Result of the `metrics` pipeline.
#[derive(Clone, Debug)]
pub struct MetricsOutcome {
    pub rows: Vec<MetricsRow>,
    pub bounds: Vec<BoundsRow>,
    pub reports: Vec<AccuracyReport>,
    pub metrics_path: PathBuf,
}

fn speed_max(spec: &ExperimentSpec) -> Result<f64, ExperimentError> {
    let cfg = spec.base_config(Strategy::Exchange).resolved()?;
    let field = cfg.build_field()?;
    Ok(field.max_speed(0..cfg.total_cycles, 16)?)
}

fn timed_opts(spec: &ExperimentSpec, opts: &ExecOptions) -> ExecOptions {
    let mut o = opts.clone();
    o.record_timing = spec.wants(MetricKind::Timing);
    o
}

/// Sweeps intervals x reductions, running both strategies for each and
/// comparing the reconstructed BTO flow map with the Exchange one. Writes
/// `metrics.csv` and, when selected, `bounds.csv`.
pub fn metrics(spec: &ExperimentSpec, opts: &ExecOptions) -> Result<MetricsOutcome, ExperimentError> {
    let mode = spec.reconstruction.mode;
    let topts = timed_opts(spec, opts);
    let vmax = if spec.wants(MetricKind::Bounds) { speed_max(spec)? } else { 0.0 };
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    let mut reports = Vec::new();
    for interval in spec.intervals() {
        for reduction in spec.reductions() {
            let ex = run_extraction_with(&spec.extraction_config(Strategy::Exchange, interval, reduction), &topts)?;
            let bto = run_extraction_with(&spec.extraction_config(Strategy::Bto, interval, reduction), &topts)?;
            let mut row = MetricsRow::new(interval, reduction, Strategy::Bto, bto.dataset.rank_count());
            if spec.wants(MetricKind::Timing) {
                row.bto_s = mean_cycle_seconds(&bto.timings);
                row.exchange_s = mean_cycle_seconds(&ex.timings);
                if let (Some(b), Some(e)) = (row.bto_s, row.exchange_s) {
                    row.speedup = (b > 0.0).then(|| e / b);
                }
            }
            if spec.wants(MetricKind::Discard) {
                row.discarded_pct = Some(100.0 * bto.dataset.terminated_fraction());
            }
            let needs_errors = spec.wants(MetricKind::Accuracy) || spec.wants(MetricKind::Bounds);
            let per = if needs_errors { seed_errors(&ex.dataset, &bto.dataset, mode)? } else { Vec::new() };
            if spec.wants(MetricKind::Accuracy) {
                let intervals = per.iter().enumerate().map(|(k, e)| interval_error(k, e)).collect();
                let report = AccuracyReport::from_intervals(intervals, ex.dataset.decomposition()?.cell_side())?;
                row.greatest_max_l2 = Some(report.greatest_max_l2);
                row.avg_max_l2 = Some(report.avg_max_l2);
                row.total_avg_l2 = Some(report.total_avg_l2);
                row.accuracy_pct = Some(report.accuracy_pct);
                reports.push(report);
            }
            if spec.wants(MetricKind::Bounds) {
                let hx = seed_spacing(&bto.dataset)?;
                let ht = interval as f64 * bto.dataset.config.field.cycle_dt;
                let samples: Vec<(Point, f64)> = per.iter().flatten().filter_map(|e| Some((e.seed, e.l2?))).collect();
                let decomp = bto.dataset.decomposition()?;
                bounds.push(BoundsRow {
                    interval,
                    reduction,
                    report: BoundReport::new(hx, ht, vmax),
                    bands: split_by_face_distance(&decomp, &samples, ht * vmax),
                });
            }
            rows.push(row);
        }
    }
    let out = spec.output_dir();
    std::fs::create_dir_all(&out).map_err(io_err)?;
    let metrics_path = out.join("metrics.csv");
    emit_metrics(&rows, &metrics_path)?;
    if spec.wants(MetricKind::Bounds) {
        if spec.reductions().len() >= 3 {
            let reductions = spec.reductions();
            let domain = spec_domain(spec)?;
            let queries = query_points(&domain, 512, 0.1);
            for interval in spec.intervals() {
                let pairs = convergence_study(spec, interval, &reductions, &queries, mode, opts)?;
                let (h, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                let order = convergence_order(&h, &e)?;
                for b in bounds.iter_mut().filter(|b| b.interval == interval) {
                    b.report.measured_order = Some(order);
                }
            }
        }
        std::fs::write(out.join("bounds.csv"), bounds_csv(&bounds)).map_err(io_err)?;
    }
    Ok(MetricsOutcome { rows, bounds, reports, metrics_path })
}

/// Result of the `bench` pipeline.
#[derive(Clone, Debug)]
pub struct BenchOutcome {
    /// Mean per-cycle seconds (write cycles excluded) per repetition.
    pub exchange_s: Vec<f64>,
    pub bto_s: Vec<f64>,
    pub timing_path: PathBuf,
    pub summary_path: PathBuf,
}

impl BenchOutcome {
    pub fn bto_faster_count(&self) -> usize {
        self.exchange_s.iter().zip(&self.bto_s).filter(|(e, b)| b <= e).count()
    }
}

/// Times both strategies on the base config, `bench.repetitions` times
/// each, interleaved. Writes `timing.csv` (every row) and `bench.csv`.
pub fn bench(spec: &ExperimentSpec, opts: &ExecOptions) -> Result<BenchOutcome, ExperimentError> {
    let opts = opts.clone().timed();
    let mut rows: Vec<(Strategy, usize, TimingRecord)> = Vec::new();
    let mut exchange_s = Vec::new();
    let mut bto_s = Vec::new();
    let mut ranks = 0;
    for rep in 0..spec.bench.repetitions {
        for s in [Strategy::Exchange, Strategy::Bto] {
            let run = run_extraction_with(&spec.base_config(s), &opts)?;
            ranks = run.dataset.rank_count();
            let mean = mean_cycle_seconds(&run.timings).ok_or_else(|| ExperimentError::Invalid("no non-write cycles to time".into()))?;
            match s {
                Strategy::Exchange => exchange_s.push(mean),
                Strategy::Bto => bto_s.push(mean),
            }
            rows.extend(run.timings.into_iter().map(|t| (s, rep, t)));
        }
    }
    let out = spec.output_dir();
    std::fs::create_dir_all(&out).map_err(io_err)?;
    let timing_path = out.join("timing.csv");
    write_timing_csv(&timing_path, &rows)?;
    let summary: Vec<MetricsRow> = exchange_s
        .iter()
        .zip(&bto_s)
        .map(|(e, b)| {
            let mut row = MetricsRow::new(spec.extraction.interval, spec.extraction.reduction, Strategy::Bto, ranks);
            row.exchange_s = Some(*e);
            row.bto_s = Some(*b);
            row.speedup = (*b > 0.0).then(|| e / b);
            row
        })
        .collect();
    let summary_path = out.join("bench.csv");
    emit_metrics(&summary, &summary_path)?;
    Ok(BenchOutcome { exchange_s, bto_s, timing_path, summary_path })
}

/// Accuracy of run `candidate` reconstructed at the seeds of run
/// `reference`.
pub fn compare(reference: &Path, candidate: &Path, mode: Mode) -> Result<(MetricsRow, AccuracyReport), ExperimentError> {
    let (_, a) = read_run_dir(reference)?;
    let (_, b) = read_run_dir(candidate)?;
    let per = seed_errors(&a, &b, mode)?;
    let intervals = per.iter().enumerate().map(|(k, e)| interval_error(k, e)).collect();
    let report = AccuracyReport::from_intervals(intervals, a.decomposition()?.cell_side())?;
    let mut row = MetricsRow::new(b.config.interval, b.config.reduction, b.config.strategy, b.rank_count());
    row.discarded_pct = Some(100.0 * b.terminated_fraction());
    row.greatest_max_l2 = Some(report.greatest_max_l2);
    row.avg_max_l2 = Some(report.avg_max_l2);
    row.total_avg_l2 = Some(report.total_avg_l2);
    row.accuracy_pct = Some(report.accuracy_pct);
    Ok((row, report))
}
