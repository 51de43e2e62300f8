//! Seed-lattice flow maps: hole filling along lattice axes and piecewise
//! linear interpolation over a fixed simplex template.

use std::collections::VecDeque;

use super::ReconstructError;
use crate::geom::{Point, ORIGIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeFlag {
    Known,
    /// Filled by axis interpolation between known nodes.
    Synthetic,
    /// No known pair on any axis; copied from the nearest known node.
    Fallback,
}

/// Values on a dense lattice, x fastest. Axes of size 1 are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeMap {
    pub dims: [usize; 3],
    pub values: Vec<Option<Point>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilledLattice {
    pub dims: [usize; 3],
    pub values: Vec<Point>,
    pub flags: Vec<NodeFlag>,
}

impl LatticeMap {
    pub fn new(dims: [usize; 3]) -> Self {
        LatticeMap { dims, values: vec![None; dims.iter().product()] }
    }

    pub fn index(&self, k: [usize; 3]) -> usize {
        k[0] + self.dims[0] * (k[1] + self.dims[1] * k[2])
    }
}

fn coords(dims: [usize; 3], idx: usize) -> [usize; 3] {
    [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])]
}

/// Fills every missing node from the originally known ones: linear
/// interpolation between the nearest known nodes below and above it along
/// each axis, averaged over the axes that have both. Nodes with no such pair
/// copy the nearest known node (breadth-first over lattice neighbors).
pub fn fill_holes(map: &LatticeMap) -> Result<FilledLattice, ReconstructError> {
    let dims = map.dims;
    let n = map.values.len();
    if n != dims.iter().product::<usize>() {
        return Err(ReconstructError::InvalidInput("lattice size does not match its dims".into()));
    }
    if map.values.iter().all(Option::is_none) {
        return Err(ReconstructError::UnfillableHole);
    }
    let stride = [1, dims[0], dims[0] * dims[1]];
    let mut values = vec![ORIGIN; n];
    let mut flags = vec![NodeFlag::Known; n];
    let mut pending = Vec::new();
    for idx in 0..n {
        if let Some(v) = map.values[idx] {
            values[idx] = v;
            continue;
        }
        let k = coords(dims, idx);
        let mut sum = ORIGIN;
        let mut axes = 0;
        for a in 0..3 {
            let below = (0..k[a]).rev().find_map(|m| map.values[idx - (k[a] - m) * stride[a]].map(|v| (m, v)));
            let above = (k[a] + 1..dims[a]).find_map(|m| map.values[idx + (m - k[a]) * stride[a]].map(|v| (m, v)));
            if let (Some((m0, v0)), Some((m1, v1))) = (below, above) {
                let t = (k[a] - m0) as f64 / (m1 - m0) as f64;
                for c in 0..3 {
                    sum[c] += v0[c] + t * (v1[c] - v0[c]);
                }
                axes += 1;
            }
        }
        if axes > 0 {
            values[idx] = sum.map(|s| s / axes as f64);
            flags[idx] = NodeFlag::Synthetic;
        } else {
            pending.push(idx);
        }
    }
    if !pending.is_empty() {
        // Multi-source BFS from known nodes gives each node its nearest one.
        let mut source = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for idx in 0..n {
            if map.values[idx].is_some() {
                source[idx] = idx;
                queue.push_back(idx);
            }
        }
        while let Some(idx) = queue.pop_front() {
            let k = coords(dims, idx);
            for a in 0..3 {
                let mut next = Vec::with_capacity(2);
                if k[a] > 0 {
                    next.push(idx - stride[a]);
                }
                if k[a] + 1 < dims[a] {
                    next.push(idx + stride[a]);
                }
                for m in next {
                    if source[m] == usize::MAX {
                        source[m] = source[idx];
                        queue.push_back(m);
                    }
                }
            }
        }
        for idx in pending {
            values[idx] = values[source[idx]];
            flags[idx] = NodeFlag::Fallback;
        }
    }
    Ok(FilledLattice { dims, values, flags })
}

fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        r
    } else {
        u
    }
}

impl FilledLattice {
    pub fn count(&self, flag: NodeFlag) -> usize {
        self.flags.iter().filter(|f| **f == flag).count()
    }

    fn flat(&self, k: [usize; 3]) -> usize {
        let k = [0, 1, 2].map(|a| k[a].min(self.dims[a] - 1));
        k[0] + self.dims[0] * (k[1] + self.dims[1] * k[2])
    }

    /// Piecewise-linear value at lattice coordinate `u` (node `k` sits at
    /// `u = k`). `None` outside `[0, dims - 1]` on any axis. Cells are split
    /// into 2 triangles (2D) or 5 tetrahedra with alternating orientation
    /// (3D), so node queries return the node value exactly. A query that
    /// gives weight to a [`NodeFlag::Fallback`] node is treated as outside.
    pub fn interpolate(&self, u: [f64; 3], dims: usize) -> Option<Point> {
        let mut cell = [0usize; 3];
        let mut f = [0.0; 3];
        for a in 0..dims {
            let x = snap(u[a]);
            let top = (self.dims[a] - 1) as f64;
            if !(0.0..=top).contains(&x) {
                return None;
            }
            let c = (x.floor() as usize).min(self.dims[a].saturating_sub(2));
            cell[a] = c;
            f[a] = x - c as f64;
        }
        let mut out = ORIGIN;
        let mut unsupported = false;
        let mut add = |w: f64, corner: [usize; 3]| {
            if w != 0.0 {
                let idx = self.flat([cell[0] + corner[0], cell[1] + corner[1], cell[2] + corner[2]]);
                unsupported |= self.flags[idx] == NodeFlag::Fallback;
                let v = &self.values[idx];
                for c in 0..3 {
                    out[c] += w * v[c];
                }
            }
        };
        if dims == 2 {
            if f[0] >= f[1] {
                add(1.0 - f[0], [0, 0, 0]);
                add(f[0] - f[1], [1, 0, 0]);
                add(f[1], [1, 1, 0]);
            } else {
                add(1.0 - f[1], [0, 0, 0]);
                add(f[1] - f[0], [0, 1, 0]);
                add(f[0], [1, 1, 0]);
            }
            return (!unsupported).then_some(out);
        }
        // Odd cells are mirrored in x so shared faces use the same diagonal.
        let mirror = (cell[0] + cell[1] + cell[2]) % 2 == 1;
        let g = [if mirror { 1.0 - f[0] } else { f[0] }, f[1], f[2]];
        let corner = |b: [usize; 3]| if mirror { [1 - b[0], b[1], b[2]] } else { b };
        for base in [[0, 0, 0], [1, 1, 0], [1, 0, 1], [0, 1, 1]] {
            let h: [f64; 3] = std::array::from_fn(|a| if base[a] == 0 { g[a] } else { 1.0 - g[a] });
            let s = h[0] + h[1] + h[2];
            if s <= 1.0 {
                add(1.0 - s, corner(base));
                for a in 0..3 {
                    let mut b = base;
                    b[a] = 1 - b[a];
                    add(h[a], corner(b));
                }
                return (!unsupported).then_some(out);
            }
        }
        let wd = (g[0] + g[1] + g[2] - 1.0) / 2.0;
        add(g[0] - wd, corner([1, 0, 0]));
        add(g[1] - wd, corner([0, 1, 0]));
        add(g[2] - wd, corner([0, 0, 1]));
        add(wd, corner([1, 1, 1]));
        (!unsupported).then_some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(vals: &[Option<f64>]) -> LatticeMap {
        LatticeMap { dims: [vals.len(), 1, 1], values: vals.iter().map(|v| v.map(|x| [x, 0.0, 0.0])).collect() }
    }

    #[test]
    fn fills_the_middle_of_a_triple() {
        let filled = fill_holes(&line(&[Some(10.0), None, Some(30.0)])).unwrap();
        assert_eq!(filled.values[1][0], 20.0);
        assert_eq!(filled.flags[1], NodeFlag::Synthetic);
        assert_eq!(filled.interpolate([0.5, 0.0, 0.0], 2).unwrap()[0], 15.0);
    }

    #[test]
    fn complete_lattice_is_unchanged() {
        let map = line(&[Some(1.0), Some(-2.0), Some(4.0)]);
        let filled = fill_holes(&map).unwrap();
        assert_eq!(filled.values, map.values.iter().map(|v| v.unwrap()).collect::<Vec<_>>());
        assert_eq!(filled.count(NodeFlag::Known), 3);
    }

    #[test]
    fn unbounded_hole_falls_back_to_nearest() {
        let filled = fill_holes(&line(&[Some(1.0), Some(2.0), None, None])).unwrap();
        assert_eq!(filled.values[3][0], 2.0);
        assert_eq!(filled.count(NodeFlag::Fallback), 2);
        assert!(filled.interpolate([1.0, 0.0, 0.0], 2).is_some());
        assert!(filled.interpolate([1.5, 0.0, 0.0], 2).is_none());
        assert!(matches!(fill_holes(&line(&[None, None])), Err(ReconstructError::UnfillableHole)));
    }

    fn lattice3(n: usize, f: impl Fn([f64; 3]) -> Point) -> FilledLattice {
        let dims = [n; 3];
        let values: Vec<Point> = (0..n * n * n).map(|i| f(coords(dims, i).map(|c| c as f64))).collect();
        FilledLattice { dims, flags: vec![NodeFlag::Known; values.len()], values }
    }

    #[test]
    fn tetrahedral_template_is_affine_exact_and_continuous() {
        let affine = |u: [f64; 3]| [1.0 + 2.0 * u[0] - u[1], 0.5 * u[2], u[0] + u[1] + u[2]];
        let lat = lattice3(4, affine);
        let mut rng = 12345u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 * 3.0
        };
        for _ in 0..500 {
            let u = [next(), next(), next()];
            let got = lat.interpolate(u, 3).unwrap();
            let want = affine(u);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-12);
            }
        }
        // A nonlinear map must still agree from both sides of a cell face.
        let quad = lattice3(4, |u| [u[0] * u[1], u[1] * u[2], u[2] * u[0]]);
        for &(y, z) in &[(0.3, 0.8), (1.7, 2.2), (0.9, 0.1)] {
            let a = quad.interpolate([1.0 - 1e-13, y, z], 3).unwrap();
            let b = quad.interpolate([1.0 + 1e-13, y, z], 3).unwrap();
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn node_queries_are_exact() {
        let lat = lattice3(3, |u| [u[0].sin(), u[1].exp(), u[2] * 0.1]);
        for idx in 0..27 {
            let k = coords([3; 3], idx).map(|c| c as f64);
            assert_eq!(lat.interpolate(k, 3).unwrap(), lat.values[idx]);
        }
        assert!(lat.interpolate([2.5, 0.0, 0.0], 3).is_none());
    }
}
