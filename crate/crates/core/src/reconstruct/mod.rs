//! Post hoc reconstruction from stored basis flows.
//!
//! A query at interval `k` uses the flows of the rank owning the query point
//! and of every adjacent rank (faces, edges and corners). Two interpolants are
//! available over those flows:
//!
//! * [`Mode::Delaunay`]: a Delaunay triangulation of the stored seeds.
//! * [`Mode::GridFill`]: the seed lattice with discarded seeds filled along
//!   lattice axes, split into a fixed simplex template.
//!
//! Both interpolate end positions barycentrically. Pathlines are stitched
//! from consecutive intervals.

pub mod delaunay;
pub mod lattice;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delaunay::{triangulate, Location, Triangulation};
pub use lattice::{fill_holes, FilledLattice, LatticeMap, NodeFlag};

use crate::domain::BlockDecomposition;
use crate::extract::{ExtractError, FlowMapDataset};
use crate::geom::Point;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("points are affinely dependent")]
    DegenerateInput,
    #[error("lattice has no known node to fill from")]
    UnfillableHole,
    #[error("interval {0} is not in the dataset")]
    NoSuchInterval(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Delaunay,
    #[default]
    GridFill,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Delaunay => "delaunay",
            Mode::GridFill => "gridfill",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delaunay" => Ok(Mode::Delaunay),
            "gridfill" => Ok(Mode::GridFill),
            other => Err(format!("unknown reconstruction mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathlineStatus {
    Complete,
    TruncatedOutOfHull,
    TruncatedOutOfDomain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pathline {
    pub seed: Point,
    /// `(time, position)` at interval boundaries, starting with the seed.
    pub samples: Vec<(f64, Point)>,
    pub status: PathlineStatus,
}

impl Pathline {
    pub fn end(&self) -> Point {
        self.samples.last().map_or(self.seed, |s| s.1)
    }
}

/// Interpolated ends for a list of query seeds. `None` marks seeds outside
/// the loaded neighborhood's hull.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMapReconstruction {
    pub ends: Vec<Option<Point>>,
    pub outside: usize,
}

/// Filled-lattice node counts over every neighborhood built so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FillStats {
    pub known: usize,
    pub synthetic: usize,
    pub fallback: usize,
}

enum Interpolant {
    Delaunay { tri: Triangulation, ends: Vec<Point> },
    Grid { offset: [usize; 3], lattice: FilledLattice },
    Empty,
}

/// Builds and caches one interpolant per (interval, loaded rank set).
pub struct Reconstructor<'a> {
    dataset: &'a FlowMapDataset,
    decomp: BlockDecomposition,
    mode: Mode,
    stride: usize,
    cache: HashMap<(usize, Vec<usize>), Arc<Interpolant>>,
    fill: FillStats,
}

impl<'a> Reconstructor<'a> {
    pub fn new(dataset: &'a FlowMapDataset, mode: Mode) -> Result<Self, ReconstructError> {
        let decomp = dataset.decomposition()?;
        let stride = dataset.config.reduction.stride(decomp.dims());
        Ok(Reconstructor { dataset, decomp, mode, stride, cache: HashMap::new(), fill: FillStats::default() })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn decomposition(&self) -> &BlockDecomposition {
        &self.decomp
    }

    pub fn fill_stats(&self) -> FillStats {
        self.fill
    }

    fn interpolant(&mut self, interval: usize, owner: usize) -> Result<Arc<Interpolant>, ReconstructError> {
        let ranks = self.decomp.neighborhood(owner);
        let key = (interval, ranks);
        if let Some(i) = self.cache.get(&key) {
            return Ok(i.clone());
        }
        let built = Arc::new(match self.mode {
            Mode::Delaunay => self.build_delaunay(interval, &key.1)?,
            Mode::GridFill => self.build_grid(interval, &key.1)?,
        });
        self.cache.insert(key, built.clone());
        Ok(built)
    }

    fn build_delaunay(&self, interval: usize, ranks: &[usize]) -> Result<Interpolant, ReconstructError> {
        let mut seeds = Vec::new();
        let mut ends = Vec::new();
        for &r in ranks {
            for f in self.dataset.sets[interval][r].flows.iter().filter(|f| f.valid) {
                seeds.push(f.seed);
                ends.push(f.end);
            }
        }
        match triangulate(&seeds, self.decomp.dims()) {
            Ok(tri) => Ok(Interpolant::Delaunay { tri, ends }),
            Err(ReconstructError::DegenerateInput) => Ok(Interpolant::Empty),
            Err(e) => Err(e),
        }
    }

    fn build_grid(&mut self, interval: usize, ranks: &[usize]) -> Result<Interpolant, ReconstructError> {
        let d = self.decomp.dims();
        let s = self.stride;
        let mut start = [usize::MAX; 3];
        let mut end = [0usize; 3];
        for &r in ranks {
            let range = self.decomp.node_range(r);
            for a in 0..d {
                start[a] = start[a].min(range[a].start);
                end[a] = end[a].max(range[a].end);
            }
        }
        let mut offset = [0usize; 3];
        let mut dims = [1usize; 3];
        for a in 0..d {
            offset[a] = start[a].div_ceil(s);
            let last = (end[a] - 1) / s;
            if last < offset[a] {
                return Ok(Interpolant::Empty);
            }
            dims[a] = last - offset[a] + 1;
        }
        let mut map = LatticeMap::new(dims);
        let spacing = self.decomp.spacing();
        let lo = self.decomp.domain().lo;
        for &r in ranks {
            for f in self.dataset.sets[interval][r].flows.iter().filter(|f| f.valid) {
                let mut k = [0usize; 3];
                for a in 0..d {
                    let node = ((f.seed[a] - lo[a]) / spacing[a]).round() as usize;
                    if !node.is_multiple_of(s) {
                        return Err(ReconstructError::InvalidInput(format!("seed {:?} is not on the 1:{} lattice", f.seed, s)));
                    }
                    k[a] = node / s - offset[a];
                }
                let idx = map.index(k);
                map.values[idx] = Some(f.end);
            }
        }
        let lattice = match fill_holes(&map) {
            Ok(l) => l,
            Err(ReconstructError::UnfillableHole) => return Ok(Interpolant::Empty),
            Err(e) => return Err(e),
        };
        self.fill.known += lattice.count(NodeFlag::Known);
        self.fill.synthetic += lattice.count(NodeFlag::Synthetic);
        self.fill.fallback += lattice.count(NodeFlag::Fallback);
        Ok(Interpolant::Grid { offset, lattice })
    }

    /// End position of `x` over interval `interval`, or `None` outside the
    /// domain or the loaded hull.
    pub fn interpolate_end(&mut self, interval: usize, x: &Point) -> Result<Option<Point>, ReconstructError> {
        if interval >= self.dataset.sets.len() {
            return Err(ReconstructError::NoSuchInterval(interval));
        }
        let Some(owner) = self.decomp.owner_of(x) else {
            return Ok(None);
        };
        let interp = self.interpolant(interval, owner)?;
        Ok(match &*interp {
            Interpolant::Empty => None,
            Interpolant::Delaunay { tri, ends } => tri.interpolate(x, ends),
            Interpolant::Grid { offset, lattice } => {
                let d = self.decomp.dims();
                let spacing = self.decomp.spacing();
                let lo = self.decomp.domain().lo;
                let mut u = [0.0; 3];
                for a in 0..d {
                    u[a] = (x[a] - lo[a]) / (spacing[a] * self.stride as f64) - offset[a] as f64;
                }
                lattice.interpolate(u, d)
            }
        })
    }

    /// Stitches a pathline over intervals `start_interval..end_interval`.
    pub fn trace_pathline(&mut self, seed: &Point, start_interval: usize, end_interval: usize) -> Result<Pathline, ReconstructError> {
        let n = self.dataset.sets.len();
        if start_interval >= n || end_interval > n || start_interval > end_interval {
            return Err(ReconstructError::NoSuchInterval(end_interval.max(start_interval)));
        }
        let domain = *self.decomp.domain();
        let mut line = Pathline { seed: *seed, samples: Vec::new(), status: PathlineStatus::Complete };
        if !domain.contains(seed) {
            line.status = PathlineStatus::TruncatedOutOfDomain;
            return Ok(line);
        }
        line.samples.push((self.dataset.sets[start_interval][0].t_start, *seed));
        let mut x = *seed;
        for k in start_interval..end_interval {
            match self.interpolate_end(k, &x)? {
                None => {
                    line.status = PathlineStatus::TruncatedOutOfHull;
                    break;
                }
                Some(y) if !domain.contains(&y) => {
                    line.status = PathlineStatus::TruncatedOutOfDomain;
                    break;
                }
                Some(y) => {
                    line.samples.push((self.dataset.sets[k][0].t_end, y));
                    x = y;
                }
            }
        }
        Ok(line)
    }

    pub fn reconstruct_flowmap(&mut self, seeds: &[Point], interval: usize) -> Result<FlowMapReconstruction, ReconstructError> {
        let mut ends = Vec::with_capacity(seeds.len());
        for s in seeds {
            ends.push(self.interpolate_end(interval, s)?);
        }
        let outside = ends.iter().filter(|e| e.is_none()).count();
        Ok(FlowMapReconstruction { ends, outside })
    }
}

/// Flow-map ends of one interval on the whole-domain seed lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedLattice {
    pub stride: usize,
    pub origin: Point,
    pub spacing: Point,
    pub map: LatticeMap,
}

impl SeedLattice {
    /// Global grid node of lattice node `k`.
    pub fn grid_node(&self, k: [usize; 3]) -> [usize; 3] {
        k.map(|c| c * self.stride)
    }
}

/// Collects every stored flow of `interval` onto the global seed lattice.
/// Discarded seeds stay `None`.
pub fn seed_lattice(dataset: &FlowMapDataset, interval: usize) -> Result<SeedLattice, ReconstructError> {
    let sets = dataset.sets.get(interval).ok_or(ReconstructError::NoSuchInterval(interval))?;
    let decomp = dataset.decomposition()?;
    let d = decomp.dims();
    let s = dataset.config.reduction.stride(d);
    let g = decomp.global_dims();
    let mut dims = [1usize; 3];
    let mut spacing = [0.0; 3];
    let step = decomp.spacing();
    for a in 0..d {
        dims[a] = (g[a] - 1) / s + 1;
        spacing[a] = step[a] * s as f64;
    }
    let origin = decomp.domain().lo;
    let mut map = LatticeMap::new(dims);
    for f in sets.iter().flat_map(|set| set.flows.iter().filter(|f| f.valid)) {
        let mut k = [0usize; 3];
        for a in 0..d {
            let node = ((f.seed[a] - origin[a]) / step[a]).round() as usize;
            if !node.is_multiple_of(s) || node / s >= dims[a] {
                return Err(ReconstructError::InvalidInput(format!("seed {:?} is not on the 1:{} lattice", f.seed, s)));
            }
            k[a] = node / s;
        }
        let idx = map.index(k);
        map.values[idx] = Some(f.end);
    }
    Ok(SeedLattice { stride: s, origin, spacing, map })
}

pub fn trace_pathline(
    dataset: &FlowMapDataset,
    seed: &Point,
    start_interval: usize,
    end_interval: usize,
    mode: Mode,
) -> Result<Pathline, ReconstructError> {
    Reconstructor::new(dataset, mode)?.trace_pathline(seed, start_interval, end_interval)
}

/// Interpolates the flow map of `dataset` at `reference_seeds` (normally the
/// seeds stored by an Exchange run of the same configuration).
pub fn reconstruct_flowmap(
    dataset: &FlowMapDataset,
    reference_seeds: &[Point],
    interval: usize,
    mode: Mode,
) -> Result<FlowMapReconstruction, ReconstructError> {
    Reconstructor::new(dataset, mode)?.reconstruct_flowmap(reference_seeds, interval)
}
