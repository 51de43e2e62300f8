//! Domain decomposition over a uniform grid and uniform seed placement.
//!
//! Grid node `i` of an axis with `n` points sits at `lo + i (hi - lo) / (n - 1)`.
//! An axis split into blocks assigns consecutive node ranges `[s, e)` (sizes
//! as equal as possible, remainder to the low blocks) and gives the block the
//! slab `[lo + s/n * extent, lo + e/n * extent)`, closed at the global upper
//! face. Those slab faces never coincide with a grid node, and each slab
//! holds exactly the nodes of its range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Point, ORIGIN};

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("rank {0} holds no seeds")]
    EmptyBlock(usize),
    #[error("rank {rank} out of range ({ranks} ranks)")]
    NoSuchRank { rank: usize, ranks: usize },
    #[error("reduction must be at least 1")]
    InvalidReduction,
}

/// Data reduction `1:X` (one seed for every X grid points).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reduction(pub u32);

impl Reduction {
    /// Smallest per-axis stride `s` with `s^d >= X`.
    pub fn stride(self, dims: usize) -> usize {
        let x = self.0.max(1) as u64;
        let mut s = 1u64;
        while s.pow(dims as u32) < x {
            s += 1;
        }
        s as usize
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1:{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    /// Grid points per axis.
    pub global_dims: Vec<usize>,
    /// Blocks per axis.
    pub rank_layout: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockDecomposition {
    domain: Aabb,
    global_dims: [usize; 3],
    layout: [usize; 3],
    /// Per axis, `layout + 1` node offsets: block `b` owns nodes `[starts[b], starts[b+1])`.
    starts: [Vec<usize>; 3],
}

/// Seeds of one rank for one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSet {
    pub positions: Vec<Point>,
    pub reduction: Reduction,
    pub owner_rank: usize,
    pub stride: usize,
}

pub fn decompose(domain: &Aabb, global_dims: &[usize], rank_layout: &[usize]) -> Result<BlockDecomposition, DomainError> {
    let d = domain.dims;
    if !domain.is_valid() {
        return Err(DomainError::InvalidLayout("domain must satisfy lo < hi".into()));
    }
    if global_dims.len() != d || rank_layout.len() != d {
        return Err(DomainError::InvalidLayout(format!("expected {d} entries for global_dims and rank_layout")));
    }
    let mut dims = [1usize; 3];
    let mut layout = [1usize; 3];
    let mut starts: [Vec<usize>; 3] = [vec![0, 1], vec![0, 1], vec![0, 1]];
    for a in 0..d {
        let (n, k) = (global_dims[a], rank_layout[a]);
        if n < 2 {
            return Err(DomainError::InvalidLayout(format!("axis {a} needs at least 2 grid points")));
        }
        if k == 0 || k > n {
            return Err(DomainError::InvalidLayout(format!("axis {a}: {k} blocks for {n} grid points")));
        }
        dims[a] = n;
        layout[a] = k;
        let (base, rem) = (n / k, n % k);
        let mut s = vec![0usize];
        for b in 0..k {
            let size = base + usize::from(b < rem);
            s.push(s[b] + size);
        }
        starts[a] = s;
    }
    Ok(BlockDecomposition { domain: *domain, global_dims: dims, layout, starts })
}

/// The half-open slab a rank owns; `contains(x)` equals
/// `owner_of(x) == Some(rank)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OwnedRegion {
    lo: Point,
    hi: Point,
    closed: [bool; 3],
    dims: usize,
}

impl OwnedRegion {
    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dims).all(|a| x[a] >= self.lo[a] && (x[a] < self.hi[a] || (self.closed[a] && x[a] <= self.hi[a])))
    }
}

impl DecompositionSpec {
    pub fn build(&self, domain: &Aabb) -> Result<BlockDecomposition, DomainError> {
        decompose(domain, &self.global_dims, &self.rank_layout)
    }
}

impl BlockDecomposition {
    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn dims(&self) -> usize {
        self.domain.dims
    }

    pub fn global_dims(&self) -> [usize; 3] {
        self.global_dims
    }

    pub fn layout(&self) -> [usize; 3] {
        self.layout
    }

    pub fn rank_count(&self) -> usize {
        self.layout.iter().product()
    }

    /// Grid spacing per axis.
    pub fn spacing(&self) -> Point {
        let mut h = ORIGIN;
        for (a, h) in h.iter_mut().enumerate().take(self.dims()) {
            *h = self.domain.extent(a) / (self.global_dims[a] - 1) as f64;
        }
        h
    }

    /// Cell side used by the accuracy metric: the smallest spacing.
    pub fn cell_side(&self) -> f64 {
        let h = self.spacing();
        h[..self.dims()].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn node_position(&self, idx: [usize; 3]) -> Point {
        let mut x = ORIGIN;
        for a in 0..self.dims() {
            let n = self.global_dims[a];
            x[a] = if idx[a] + 1 == n {
                self.domain.hi[a]
            } else {
                self.domain.lo[a] + self.domain.extent(a) * (idx[a] as f64 / (n - 1) as f64)
            };
        }
        x
    }

    pub fn block_coords(&self, rank: usize) -> [usize; 3] {
        let [lx, ly, _] = self.layout;
        [rank % lx, (rank / lx) % ly, rank / (lx * ly)]
    }

    pub fn rank_of(&self, coords: [usize; 3]) -> usize {
        coords[0] + self.layout[0] * (coords[1] + self.layout[1] * coords[2])
    }

    fn face_position(&self, axis: usize, block: usize) -> f64 {
        let n = self.global_dims[axis];
        let s = self.starts[axis][block];
        if s == n {
            return self.domain.hi[axis];
        }
        self.domain.lo[axis] + self.domain.extent(axis) * (s as f64 / n as f64)
    }

    /// The block's box. Its upper faces are open except on the global boundary.
    pub fn block_box(&self, rank: usize) -> Aabb {
        let c = self.block_coords(rank);
        let mut b = Aabb::new(ORIGIN, ORIGIN, self.dims());
        for a in 0..self.dims() {
            b.lo[a] = self.face_position(a, c[a]);
            b.hi[a] = self.face_position(a, c[a] + 1);
        }
        b
    }

    /// Global node index range owned by `rank` on each axis.
    pub fn node_range(&self, rank: usize) -> [std::ops::Range<usize>; 3] {
        let c = self.block_coords(rank);
        std::array::from_fn(|a| self.starts[a][c[a]]..self.starts[a][c[a] + 1])
    }

    fn axis_block(&self, axis: usize, x: f64) -> Option<usize> {
        let (lo, hi) = (self.domain.lo[axis], self.domain.hi[axis]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        let k = self.layout[axis];
        // Upper block owns a shared face.
        let mut b = 0;
        while b + 1 < k && x >= self.face_position(axis, b + 1) {
            b += 1;
        }
        Some(b)
    }

    /// Membership test for the points `rank` owns.
    pub fn owned_region(&self, rank: usize) -> OwnedRegion {
        let c = self.block_coords(rank);
        let b = self.block_box(rank);
        OwnedRegion {
            lo: b.lo,
            hi: b.hi,
            closed: std::array::from_fn(|a| a < self.dims() && c[a] + 1 == self.layout[a]),
            dims: self.dims(),
        }
    }

    /// The rank owning `x`, or `None` outside the global domain.
    pub fn owner_of(&self, x: &Point) -> Option<usize> {
        let mut c = [0usize; 3];
        for (a, c) in c.iter_mut().enumerate().take(self.dims()) {
            *c = self.axis_block(a, x[a])?;
        }
        Some(self.rank_of(c))
    }

    /// `rank` and every rank sharing a face, edge or corner with it, sorted.
    pub fn neighborhood(&self, rank: usize) -> Vec<usize> {
        let c = self.block_coords(rank);
        let range = |a: usize| c[a].saturating_sub(1)..=(c[a] + 1).min(self.layout[a] - 1);
        let mut out = Vec::new();
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    out.push(self.rank_of([i, j, k]));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Positions of the internal faces along `axis`.
    pub fn internal_faces(&self, axis: usize) -> Vec<f64> {
        (1..self.layout[axis]).map(|b| self.face_position(axis, b)).collect()
    }

    /// Distance from `x` to the nearest internal face, or infinity when the
    /// decomposition has none.
    pub fn internal_face_distance(&self, x: &Point) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.dims() {
            for f in self.internal_faces(a) {
                best = best.min((x[a] - f).abs());
            }
        }
        best
    }

    /// Seeds on every `stride`-th global grid node inside the rank's block.
    /// The lattice is anchored at global node 0, so the union over ranks is
    /// one uniform lattice.
    pub fn seed_uniform(&self, rank: usize, reduction: Reduction) -> Result<SeedSet, DomainError> {
        if rank >= self.rank_count() {
            return Err(DomainError::NoSuchRank { rank, ranks: self.rank_count() });
        }
        if reduction.0 == 0 {
            return Err(DomainError::InvalidReduction);
        }
        let d = self.dims();
        let stride = reduction.stride(d);
        let ranges = self.node_range(rank);
        let axis_nodes: [Vec<usize>; 3] = std::array::from_fn(|a| {
            if a < d {
                ranges[a].clone().filter(|i| i % stride == 0).collect()
            } else {
                vec![0]
            }
        });
        let mut positions = Vec::with_capacity(axis_nodes.iter().map(Vec::len).product());
        for &k in &axis_nodes[2] {
            for &j in &axis_nodes[1] {
                for &i in &axis_nodes[0] {
                    positions.push(self.node_position([i, j, k]));
                }
            }
        }
        if positions.is_empty() {
            return Err(DomainError::EmptyBlock(rank));
        }
        Ok(SeedSet { positions, reduction, owner_rank: rank, stride })
    }
}
