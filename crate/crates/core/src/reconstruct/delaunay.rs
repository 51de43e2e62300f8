//! Incremental Bowyer–Watson triangulation in 2D and 3D.
//!
//! Coordinates are normalized to the unit box (uniform scale) before any
//! predicate is evaluated. The hull is closed by a symbolic vertex at
//! infinity rather than a finite super-simplex. Ties on the circumsphere
//! count as outside, so cospherical lattice points are handled by whichever
//! simplex contains the new point. Cavity faces that would give a flat or
//! inverted simplex pull the simplex across them into the cavity.

use std::collections::HashMap;

use super::ReconstructError;
use crate::geom::{Point, ORIGIN};

pub const EPS_GEOM: f64 = 1e-10;
pub const EPS_BARY: f64 = 1e-9;
pub const EPS_VOL: f64 = 1e-12;
const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Triangulation {
    dims: usize,
    points: Vec<Point>,
    norm: Vec<Point>,
    origin: Point,
    scale: f64,
    simplices: Vec<[usize; 4]>,
    adjacency: Vec<[usize; 4]>,
    /// Exact vertex lookup: coordinate bits to (vertex, an incident simplex).
    vertices: HashMap<[u64; 3], (usize, usize)>,
}

/// Result of a point query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location {
    Inside { simplex: usize, vertices: [usize; 4], weights: [f64; 4] },
    Outside,
}

fn factorial(d: usize) -> f64 {
    if d == 2 {
        2.0
    } else {
        6.0
    }
}

fn det3(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// Signed volume times d! of the simplex `v[0..=d]`.
fn orient(d: usize, v: [&Point; 4]) -> f64 {
    let a = v[0];
    if d == 2 {
        (v[1][0] - a[0]) * (v[2][1] - a[1]) - (v[1][1] - a[1]) * (v[2][0] - a[0])
    } else {
        let r = |p: &Point| [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
        det3(&r(v[1]), &r(v[2]), &r(v[3]))
    }
}

/// Lifted in-sphere determinant divided by the product of its row norms.
/// Positive when `p` is inside the circumsphere of the positively oriented
/// simplex `v`.
fn in_sphere(d: usize, v: [&Point; 4], p: &Point) -> f64 {
    let mut rows = [[0.0; 4]; 4];
    let mut norms = 1.0;
    for i in 0..=d {
        let mut sq = 0.0;
        for a in 0..d {
            rows[i][a] = v[i][a] - p[a];
            sq += rows[i][a] * rows[i][a];
        }
        rows[i][d] = sq;
        norms *= (sq + sq * sq).sqrt();
    }
    if norms == 0.0 {
        return 0.0;
    }
    let det = if d == 2 {
        det3(&[rows[0][0], rows[0][1], rows[0][2]], &[rows[1][0], rows[1][1], rows[1][2]], &[rows[2][0], rows[2][1], rows[2][2]])
    } else {
        let minor = |skip: usize| {
            let mut m = [[0.0; 3]; 3];
            for (r, row) in rows.iter().skip(1).take(3).enumerate() {
                let mut c = 0;
                for (k, v) in row.iter().enumerate() {
                    if k != skip {
                        m[r][c] = *v;
                        c += 1;
                    }
                }
            }
            det3(&m[0], &m[1], &m[2])
        };
        let mut det = 0.0;
        for k in 0..4 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * rows[0][k] * minor(k);
        }
        // With this orientation convention the 3D lifted determinant is
        // negative for inside points.
        -det
    };
    det / norms
}

impl Triangulation {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    /// Vertex indices of simplex `s` (only the first `dims + 1` are used).
    pub fn simplex(&self, s: usize) -> [usize; 4] {
        self.simplices[s]
    }

    pub fn simplices(&self) -> impl Iterator<Item = &[usize]> + '_ {
        let k = self.dims + 1;
        self.simplices.iter().map(move |s| &s[..k])
    }

    /// Neighbor across the face opposite local vertex `i`, if any.
    pub fn neighbor(&self, s: usize, i: usize) -> Option<usize> {
        let n = self.adjacency[s][i];
        (n != NONE).then_some(n)
    }

    fn normalize(&self, x: &Point) -> Point {
        let mut out = ORIGIN;
        for a in 0..self.dims {
            out[a] = (x[a] - self.origin[a]) / self.scale;
        }
        out
    }

    fn weights(&self, s: usize, p: &Point) -> [f64; 4] {
        let d = self.dims;
        let v = self.simplices[s];
        let pts = |i: usize| &self.norm[v[i]];
        let all = [pts(0), pts(1), pts(2), if d == 3 { pts(3) } else { pts(0) }];
        let total = orient(d, all);
        let mut w = [0.0; 4];
        for i in 0..=d {
            let mut q = all;
            q[i] = p;
            w[i] = orient(d, q) / total;
        }
        w
    }

    /// Containing simplex and barycentric weights of `x`, or `Outside` when
    /// `x` is outside the convex hull.
    pub fn locate(&self, x: &Point) -> Location {
        if self.simplices.is_empty() {
            return Location::Outside;
        }
        if let Some(&(v, s)) = self.vertices.get(&x.map(f64::to_bits)) {
            let mut weights = [0.0; 4];
            let vertices = self.simplices[s];
            weights[(0..=self.dims).find(|&i| vertices[i] == v).unwrap_or(0)] = 1.0;
            return Location::Inside { simplex: s, vertices, weights };
        }
        let p = self.normalize(x);
        let found = match walk(self.dims, &self.norm, &self.simplices, &self.adjacency, |_| false, &p, 0) {
            Walk::Found(s) => Some(s),
            Walk::Outside(_) | Walk::Lost => self.scan(&p),
        };
        let Some(s) = found else {
            return Location::Outside;
        };
        let mut w = self.weights(s, &p);
        if let Some(i) = (0..=self.dims).find(|&i| w[i] > 1.0 - 1e-12) {
            w = [0.0; 4];
            w[i] = 1.0;
        }
        Location::Inside { simplex: s, vertices: self.simplices[s], weights: w }
    }

    fn scan(&self, p: &Point) -> Option<usize> {
        // Cheap reject: outside the normalized bounding box.
        if (0..self.dims).any(|a| p[a] < -EPS_BARY || p[a] > 1.0 + EPS_BARY) {
            return None;
        }
        (0..self.simplices.len()).find(|&s| self.weights(s, p)[..=self.dims].iter().all(|w| *w >= -EPS_BARY))
    }

    /// Barycentric combination of `values` (indexed like the input points)
    /// at `x`.
    pub fn interpolate(&self, x: &Point, values: &[Point]) -> Option<Point> {
        match self.locate(x) {
            Location::Outside => None,
            Location::Inside { vertices, weights, .. } => {
                let mut out = ORIGIN;
                for i in 0..=self.dims {
                    if weights[i] == 0.0 {
                        continue;
                    }
                    let v = &values[vertices[i]];
                    for (o, c) in out.iter_mut().zip(v) {
                        *o += weights[i] * c;
                    }
                }
                Some(out)
            }
        }
    }
}

enum Walk {
    Found(usize),
    /// Crossed a hull face into the given infinite simplex (or `NONE`).
    Outside(usize),
    Lost,
}

/// Visibility walk toward `p` over finite simplices, stepping across the face
/// with the most negative barycentric weight.
fn walk(d: usize, norm: &[Point], simplices: &[[usize; 4]], adjacency: &[[usize; 4]], infinite: impl Fn(usize) -> bool, p: &Point, start: usize) -> Walk {
    let mut s = start;
    let cap = 4 * simplices.len() + 64;
    for _ in 0..cap {
        let v = simplices[s];
        let all = [&norm[v[0]], &norm[v[1]], &norm[v[2]], &norm[v[d.min(3)]]];
        let total = orient(d, all);
        let mut worst = (0.0, NONE);
        for i in 0..=d {
            let mut q = all;
            q[i] = p;
            let w = orient(d, q) / total;
            if w < worst.0 {
                worst = (w, i);
            }
        }
        if worst.1 == NONE || worst.0 >= -1e-12 {
            return Walk::Found(s);
        }
        let next = adjacency[s][worst.1];
        if next == NONE || infinite(next) {
            return Walk::Outside(next);
        }
        s = next;
    }
    Walk::Lost
}

/// Orientation determinant divided by the product of its edge-row norms.
fn orient_normalized(d: usize, v: [&Point; 4]) -> f64 {
    let a = v[0];
    let mut norms = 1.0;
    for q in &v[1..=d] {
        norms *= (0..d).map(|k| (q[k] - a[k]).powi(2)).sum::<f64>().sqrt();
    }
    if norms == 0.0 {
        0.0
    } else {
        orient(d, v) / norms
    }
}

/// Incremental construction with one symbolic vertex at infinity (index
/// `inf`). An infinite simplex is stored so that replacing the infinite
/// vertex by a point gives a positive orientation exactly when the point is
/// beyond its hull face.
struct Builder {
    d: usize,
    inf: usize,
    norm: Vec<Point>,
    interior: Point,
    simplices: Vec<[usize; 4]>,
    adjacency: Vec<[usize; 4]>,
    alive: Vec<bool>,
    free: Vec<usize>,
    mark: Vec<u32>,
    stamp: u32,
    last: usize,
}

impl Builder {
    fn is_inf(&self, s: usize) -> bool {
        self.simplices[s][..=self.d].contains(&self.inf)
    }

    /// Vertex points of `s`, with the infinite vertex replaced by `sub`.
    fn verts_with<'a>(&'a self, s: usize, sub: &'a Point) -> [&'a Point; 4] {
        let v = self.simplices[s];
        let pick = |i: usize| if v[i] == self.inf { sub } else { &self.norm[v[i]] };
        [pick(0), pick(1), pick(2), pick(self.d.min(3))]
    }

    fn alloc(&mut self, verts: [usize; 4], adj: [usize; 4]) -> usize {
        if let Some(s) = self.free.pop() {
            self.simplices[s] = verts;
            self.adjacency[s] = adj;
            self.alive[s] = true;
            s
        } else {
            self.simplices.push(verts);
            self.adjacency.push(adj);
            self.alive.push(true);
            self.mark.push(0);
            self.simplices.len() - 1
        }
    }

    /// Pairs up matching faces among `ids` (faces already linked are kept).
    fn link(&mut self, ids: &[usize]) {
        let d = self.d;
        let mut open: HashMap<[usize; 3], (usize, usize)> = HashMap::with_capacity(ids.len() * d);
        for &s in ids {
            let verts = self.simplices[s];
            for j in 0..=d {
                if self.adjacency[s][j] != NONE {
                    continue;
                }
                let mut key = [NONE; 3];
                let mut m = 0;
                for (l, &v) in verts[..=d].iter().enumerate() {
                    if l != j {
                        key[m] = v;
                        m += 1;
                    }
                }
                key[..d].sort_unstable();
                if let Some((other, oj)) = open.remove(&key) {
                    self.adjacency[s][j] = other;
                    self.adjacency[other][oj] = s;
                } else {
                    open.insert(key, (s, j));
                }
            }
        }
    }

    fn in_conflict(&self, s: usize, p: &Point) -> bool {
        let d = self.d;
        if !self.is_inf(s) {
            return in_sphere(d, self.verts_with(s, p), p) > EPS_GEOM;
        }
        let side = orient_normalized(d, self.verts_with(s, p));
        if side > EPS_GEOM {
            return true;
        }
        if side < -EPS_GEOM {
            return false;
        }
        // On the hull plane: in conflict when inside the circumsphere of the
        // finite simplex behind the face.
        let k = (0..=d).find(|&i| self.simplices[s][i] == self.inf).unwrap_or(0);
        let behind = self.adjacency[s][k];
        behind != NONE && in_sphere(d, self.verts_with(behind, p), p) > EPS_GEOM
    }

    fn locate(&self, p: &Point) -> Option<usize> {
        match walk(self.d, &self.norm, &self.simplices, &self.adjacency, |s| self.is_inf(s), p, self.last) {
            Walk::Found(s) => Some(s),
            Walk::Outside(s) if s != NONE => Some(s),
            _ => {
                // Exhaustive fallback: a finite simplex containing p, else an
                // infinite one whose face p is strictly beyond.
                let live = (0..self.simplices.len()).filter(|&s| self.alive[s]);
                live.clone()
                    .filter(|&s| !self.is_inf(s))
                    .find(|&s| {
                        let all = self.verts_with(s, p);
                        let total = orient(self.d, all);
                        (0..=self.d).all(|i| {
                            let mut q = all;
                            q[i] = p;
                            orient(self.d, q) / total >= -EPS_BARY
                        })
                    })
                    .or_else(|| live.filter(|&s| self.is_inf(s)).find(|&s| orient_normalized(self.d, self.verts_with(s, p)) > EPS_GEOM))
            }
        }
    }

    /// Validity of the simplex `verts` that would be created: finite ones
    /// must have positive volume, infinite ones must keep the interior
    /// strictly behind their face.
    fn valid_new(&self, verts: [usize; 4], p: &Point) -> bool {
        let d = self.d;
        let pick = |v: usize| if v == self.inf { &self.interior } else if v == NONE { p } else { &self.norm[v] };
        let pts = [pick(verts[0]), pick(verts[1]), pick(verts[2]), pick(verts[d.min(3)])];
        if verts[..=d].contains(&self.inf) {
            orient_normalized(d, pts) < -EPS_GEOM
        } else {
            orient(d, pts) > EPS_VOL * factorial(d)
        }
    }

    fn insert(&mut self, pi: usize) -> Result<(), ReconstructError> {
        let d = self.d;
        let p = self.norm[pi];
        let start = self.locate(&p).ok_or(ReconstructError::DegenerateInput)?;
        if !self.is_inf(start) {
            let v0 = self.simplices[start];
            if v0[..=d].iter().any(|&v| crate::geom::distance(&self.norm[v], &p) < 1e-14) {
                return Ok(());
            }
        }
        self.stamp += 1;
        let stamp = self.stamp;
        let mut cavity = vec![start];
        self.mark[start] = stamp;
        let mut k = 0;
        while k < cavity.len() {
            let c = cavity[k];
            k += 1;
            for i in 0..=d {
                let n = self.adjacency[c][i];
                if n != NONE && self.mark[n] != stamp && self.in_conflict(n, &p) {
                    self.mark[n] = stamp;
                    cavity.push(n);
                }
            }
        }
        // Boundary faces; any face that would give a flat or inverted simplex
        // pulls its outside neighbor into the cavity.
        let faces = loop {
            let mut faces = Vec::new();
            let mut grown = false;
            for ci in 0..cavity.len() {
                let c = cavity[ci];
                for i in 0..=d {
                    let n = self.adjacency[c][i];
                    if n != NONE && self.mark[n] == stamp {
                        continue;
                    }
                    let mut verts = self.simplices[c];
                    verts[i] = NONE;
                    if !self.valid_new(verts, &p) {
                        if n == NONE {
                            return Err(ReconstructError::DegenerateInput);
                        }
                        self.mark[n] = stamp;
                        cavity.push(n);
                        grown = true;
                        continue;
                    }
                    faces.push((c, i, n));
                }
            }
            if !grown {
                break faces;
            }
        };
        let back: Vec<usize> = faces
            .iter()
            .map(|&(c, _, n)| if n == NONE { NONE } else { (0..=d).find(|&j| self.adjacency[n][j] == c).unwrap_or(NONE) })
            .collect();
        let created: Vec<([usize; 4], usize, usize)> = faces
            .iter()
            .map(|&(c, i, n)| {
                let mut verts = self.simplices[c];
                verts[i] = pi;
                (verts, i, n)
            })
            .collect();
        for &c in &cavity {
            self.alive[c] = false;
            self.free.push(c);
        }
        let mut ids = Vec::with_capacity(created.len());
        for &(verts, i, n) in &created {
            let mut adj = [NONE; 4];
            adj[i] = n;
            ids.push(self.alloc(verts, adj));
        }
        for (k, &(_, _, n)) in created.iter().enumerate() {
            if n != NONE && back[k] != NONE {
                self.adjacency[n][back[k]] = ids[k];
            }
        }
        self.link(&ids);
        if let Some(&s) = ids.iter().find(|&&s| !self.is_inf(s)) {
            self.last = s;
        }
        Ok(())
    }
}

/// Delaunay triangulation of `points` (2D uses the first two coordinates).
pub fn triangulate(points: &[Point], dims: usize) -> Result<Triangulation, ReconstructError> {
    if !(2..=3).contains(&dims) {
        return Err(ReconstructError::InvalidInput(format!("triangulation dims {dims}")));
    }
    if points.len() < dims + 1 {
        return Err(ReconstructError::DegenerateInput);
    }
    let mut origin = points[0];
    let mut hi = points[0];
    for p in points {
        for a in 0..dims {
            origin[a] = origin[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let scale = (0..dims).map(|a| hi[a] - origin[a]).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(ReconstructError::DegenerateInput);
    }
    let n = points.len();
    let mut norm: Vec<Point> = points
        .iter()
        .map(|x| {
            let mut q = ORIGIN;
            for a in 0..dims {
                q[a] = (x[a] - origin[a]) / scale;
            }
            q
        })
        .collect();

    // Initial simplex: greedily maximize spread.
    let dist2 = |a: &Point, b: &Point| (0..dims).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
    let mut init = vec![0usize];
    let far = (0..n).max_by(|&i, &j| dist2(&norm[i], &norm[0]).total_cmp(&dist2(&norm[j], &norm[0]))).unwrap_or(0);
    init.push(far);
    while init.len() <= dims {
        let measure = |i: usize| {
            let mut v = [&norm[init[0]]; 4];
            for (k, &j) in init.iter().enumerate() {
                v[k] = &norm[j];
            }
            v[init.len()] = &norm[i];
            if init.len() == dims {
                orient_normalized(dims, v).abs()
            } else {
                // Distance from the line through the first two (3D only).
                let (a, b, c) = (v[0], v[1], v[2]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let cross = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
                (cross.iter().map(|x| x * x).sum::<f64>() / (dist2(a, b) * dist2(a, c)).max(f64::MIN_POSITIVE)).sqrt()
            }
        };
        let best = (0..n).filter(|i| !init.contains(i)).max_by(|&i, &j| measure(i).total_cmp(&measure(j)));
        match best {
            Some(b) if measure(b) > EPS_GEOM => init.push(b),
            _ => return Err(ReconstructError::DegenerateInput),
        }
    }
    let mut first = [init[0], init[1], init[2], if dims == 3 { init[3] } else { NONE }];
    {
        let v = [&norm[first[0]], &norm[first[1]], &norm[first[2]], &norm[first[dims.min(3)]]];
        if orient(dims, v) < 0.0 {
            first.swap(0, 1);
        }
    }
    let mut interior = ORIGIN;
    for &i in &first[..=dims] {
        for a in 0..dims {
            interior[a] += norm[i][a] / (dims + 1) as f64;
        }
    }
    norm.push(ORIGIN);
    let inf = n;
    let mut b = Builder {
        d: dims,
        inf,
        norm,
        interior,
        simplices: Vec::new(),
        adjacency: Vec::new(),
        alive: Vec::new(),
        free: Vec::new(),
        mark: Vec::new(),
        stamp: 0,
        last: 0,
    };
    let mut ids = vec![b.alloc(first, [NONE; 4])];
    for k in 0..=dims {
        // Replacing vertex k by infinity flips the side convention, so swap
        // two finite vertices to keep "positive means beyond the face".
        let mut verts = first;
        verts[k] = inf;
        let (x, y) = if k == 0 { (1, 2) } else if k == 1 { (0, 2) } else { (0, 1) };
        verts.swap(x, y);
        ids.push(b.alloc(verts, [NONE; 4]));
    }
    b.link(&ids);
    b.last = ids[0];
    for pi in 0..n {
        if !init.contains(&pi) {
            b.insert(pi)?;
        }
    }

    let mut remap = vec![NONE; b.simplices.len()];
    let mut simplices = Vec::new();
    for s in 0..b.simplices.len() {
        if b.alive[s] && !b.is_inf(s) {
            remap[s] = simplices.len();
            simplices.push(b.simplices[s]);
        }
    }
    if simplices.is_empty() {
        return Err(ReconstructError::DegenerateInput);
    }
    let mut adjacency = Vec::with_capacity(simplices.len());
    for s in 0..b.simplices.len() {
        if remap[s] != NONE {
            let mut adj = [NONE; 4];
            for i in 0..=dims {
                let o = b.adjacency[s][i];
                adj[i] = if o == NONE { NONE } else { remap[o] };
            }
            adjacency.push(adj);
        }
    }
    b.norm.truncate(n);
    let mut vertices = HashMap::new();
    for (s, v) in simplices.iter().enumerate() {
        for &i in &v[..=dims] {
            vertices.entry(points[i].map(f64::to_bits)).or_insert((i, s));
        }
    }
    Ok(Triangulation { dims, points: points.to_vec(), norm: b.norm, origin, scale, simplices, adjacency, vertices })
}
