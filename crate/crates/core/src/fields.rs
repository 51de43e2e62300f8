//! Time-varying velocity fields.
//!
//! Two analytic fields (a time-dependent ABC flow and the 2D double gyre)
//! and a gridded field whose payload is exposed one cycle at a time: a
//! gridded field can only be evaluated at the cycle currently loaded.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Point, ORIGIN};
use crate::io::lvel::{self, VelocitySnapshot};
use crate::io::FormatError;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("position {0:?} is outside the field domain")]
    PositionOutOfDomain(Point),
    #[error("cycle {0} is not loaded")]
    CycleUnavailable(u64),
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Abc,
    DoubleGyre,
    Gridded,
}

/// How RK4 stages sample time within a cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTime {
    /// Analytic fields: stages see the exact sub-cycle time.
    Exact,
    /// Gridded fields: every stage sees the cycle's snapshot.
    FrozenSnapshot,
}

/// Coefficients of the time-dependent ABC flow.
///
/// `v = (A(t) sin z + C cos y, B sin x + A(t) cos z, C sin y + B cos x)` with
/// `A(t) = A0 (1 + sin(2 pi t / period) / 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbcParams {
    pub a0: f64,
    pub b: f64,
    pub c: f64,
    pub period: f64,
}

impl AbcParams {
    pub fn standard(period: f64) -> Self {
        AbcParams { a0: 3f64.sqrt(), b: 2f64.sqrt(), c: 1.0, period }
    }

    pub fn amplitude_a(&self, t: f64) -> f64 {
        self.a0 * (1.0 + 0.5 * (2.0 * PI * t / self.period).sin())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleGyreParams {
    pub a: f64,
    pub epsilon: f64,
    pub omega: f64,
}

impl Default for DoubleGyreParams {
    fn default() -> Self {
        DoubleGyreParams { a: 0.1, epsilon: 0.25, omega: 2.0 * PI / 10.0 }
    }
}

#[derive(Clone, Debug)]
enum GridSource {
    Memory(Arc<Vec<Arc<[Point]>>>),
    Directory(PathBuf),
}

#[derive(Clone, Debug)]
struct Grid {
    dims: [usize; 3],
    spacing: Point,
    source: GridSource,
    loaded: Option<(u64, Arc<[Point]>)>,
}

/// A velocity field `v(x, t)` over an axis-aligned domain.
#[derive(Clone, Debug)]
pub struct TimeField {
    kind: FieldKind,
    domain: Aabb,
    cycle_dt: f64,
    params: Vec<f64>,
    grid: Option<Grid>,
}

impl TimeField {
    pub fn abc(domain: Aabb, cycle_dt: f64, params: AbcParams) -> Result<Self, FieldError> {
        if domain.dims != 3 {
            return Err(FieldError::Invalid("the ABC flow is three-dimensional".into()));
        }
        if !(params.period > 0.0) {
            return Err(FieldError::Invalid("ABC period must be positive".into()));
        }
        let params = vec![params.a0, params.b, params.c, params.period];
        Self::analytic(FieldKind::Abc, domain, cycle_dt, params)
    }

    /// The standard ABC flow on `[0, 2 pi]^3`.
    pub fn abc_standard(cycle_dt: f64, period: f64) -> Result<Self, FieldError> {
        let domain = Aabb::new(ORIGIN, [2.0 * PI; 3], 3);
        Self::abc(domain, cycle_dt, AbcParams::standard(period))
    }

    pub fn double_gyre(domain: Aabb, cycle_dt: f64, params: DoubleGyreParams) -> Result<Self, FieldError> {
        if domain.dims != 2 {
            return Err(FieldError::Invalid("the double gyre is two-dimensional".into()));
        }
        let params = vec![params.a, params.epsilon, params.omega];
        Self::analytic(FieldKind::DoubleGyre, domain, cycle_dt, params)
    }

    /// The double gyre on `[0, 2] x [0, 1]` with the usual coefficients.
    pub fn double_gyre_standard(cycle_dt: f64) -> Result<Self, FieldError> {
        let domain = Aabb::new(ORIGIN, [2.0, 1.0, 0.0], 2);
        Self::double_gyre(domain, cycle_dt, DoubleGyreParams::default())
    }

    fn analytic(kind: FieldKind, domain: Aabb, cycle_dt: f64, params: Vec<f64>) -> Result<Self, FieldError> {
        if !domain.is_valid() {
            return Err(FieldError::Invalid("domain must satisfy lo < hi on every axis".into()));
        }
        if !(cycle_dt > 0.0) {
            return Err(FieldError::Invalid("cycle_dt must be positive".into()));
        }
        Ok(TimeField { kind, domain, cycle_dt, params, grid: None })
    }

    /// Gridded field with every snapshot held in memory. `snapshots[c]` is
    /// the node array for cycle `c`, x fastest.
    pub fn gridded(
        domain: Aabb,
        grid_dims: [usize; 3],
        cycle_dt: f64,
        snapshots: Vec<Arc<[Point]>>,
    ) -> Result<Self, FieldError> {
        let grid = Grid::new(&domain, grid_dims, GridSource::Memory(Arc::new(snapshots.clone())))?;
        let nodes = grid.node_count(domain.dims);
        if let Some(bad) = snapshots.iter().position(|s| s.len() != nodes) {
            return Err(FieldError::Invalid(format!("snapshot {bad} does not have {nodes} nodes")));
        }
        let mut field = Self::analytic(FieldKind::Gridded, domain, cycle_dt, Vec::new())?;
        field.grid = Some(grid);
        Ok(field)
    }

    /// Gridded field sampled from `f(x, t)` at every node for `cycles` cycles.
    pub fn gridded_from_fn(
        domain: Aabb,
        grid_dims: [usize; 3],
        cycle_dt: f64,
        cycles: u64,
        f: impl Fn(&Point, f64) -> Point,
    ) -> Result<Self, FieldError> {
        let probe = Grid::new(&domain, grid_dims, GridSource::Memory(Arc::new(Vec::new())))?;
        let snapshots = (0..cycles)
            .map(|c| {
                let t = c as f64 * cycle_dt;
                probe.node_positions(&domain).iter().map(|x| f(x, t)).collect::<Vec<_>>().into()
            })
            .collect();
        Self::gridded(domain, grid_dims, cycle_dt, snapshots)
    }

    /// Gridded field holding the same vector everywhere for `cycles` cycles.
    pub fn uniform(domain: Aabb, grid_dims: [usize; 3], cycle_dt: f64, velocity: Point, cycles: u64) -> Result<Self, FieldError> {
        let probe = Grid::new(&domain, grid_dims, GridSource::Memory(Arc::new(Vec::new())))?;
        let snapshot: Arc<[Point]> = vec![velocity; probe.node_count(domain.dims)].into();
        Self::gridded(domain, grid_dims, cycle_dt, vec![snapshot; cycles as usize])
    }

    /// Gridded field backed by a directory of per-cycle velocity files.
    /// Domain and grid come from the cycle-0 file header.
    pub fn gridded_dir(dir: &Path, cycle_dt: f64) -> Result<Self, FieldError> {
        let first = lvel::read_snapshot(&lvel::cycle_path(dir, 0))?;
        let grid = Grid::new(&first.domain, first.grid_dims, GridSource::Directory(dir.to_path_buf()))?;
        let mut field = Self::analytic(FieldKind::Gridded, first.domain, cycle_dt, Vec::new())?;
        field.grid = Some(grid);
        Ok(field)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn dims(&self) -> usize {
        self.domain.dims
    }

    pub fn cycle_dt(&self) -> f64 {
        self.cycle_dt
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn stage_time(&self) -> StageTime {
        match self.kind {
            FieldKind::Gridded => StageTime::FrozenSnapshot,
            _ => StageTime::Exact,
        }
    }

    pub fn needs_loading(&self) -> bool {
        self.grid.is_some()
    }

    /// Grid points per axis of a gridded field.
    pub fn grid_dims(&self) -> Option<[usize; 3]> {
        self.grid.as_ref().map(|g| g.dims)
    }

    /// Makes cycle `cycle` the evaluable snapshot. Replaces any previously
    /// loaded cycle. No-op for analytic fields.
    pub fn load_cycle(&mut self, cycle: u64) -> Result<(), FieldError> {
        let dims = self.domain.dims;
        let Some(grid) = self.grid.as_mut() else {
            return Ok(());
        };
        if matches!(grid.loaded, Some((c, _)) if c == cycle) {
            return Ok(());
        }
        let nodes = grid.node_count(dims);
        let data = match &grid.source {
            GridSource::Memory(all) => all.get(cycle as usize).cloned().ok_or(FieldError::CycleUnavailable(cycle))?,
            GridSource::Directory(dir) => {
                let path = lvel::cycle_path(dir, cycle);
                if !path.exists() {
                    return Err(FieldError::CycleUnavailable(cycle));
                }
                let snap: VelocitySnapshot = lvel::read_snapshot(&path)?;
                if snap.grid_dims != grid.dims || snap.cycle != cycle || snap.domain != self.domain {
                    return Err(FieldError::Invalid(format!("{} does not match the cycle-0 header", path.display())));
                }
                snap.velocities.into()
            }
        };
        if data.len() != nodes {
            return Err(FieldError::Invalid(format!("cycle {cycle} has {} nodes, expected {nodes}", data.len())));
        }
        grid.loaded = Some((cycle, data));
        Ok(())
    }

    /// Velocity at `x` and time `(cycle + frac) * cycle_dt`. Gridded fields
    /// ignore `frac` and interpolate the loaded snapshot multilinearly.
    pub fn eval_velocity(&self, x: &Point, cycle: u64, frac: f64) -> Result<Point, FieldError> {
        if !self.domain.contains(x) {
            return Err(FieldError::PositionOutOfDomain(*x));
        }
        let t = (cycle as f64 + frac) * self.cycle_dt;
        let p = &self.params;
        match self.kind {
            FieldKind::Abc => {
                let abc = AbcParams { a0: p[0], b: p[1], c: p[2], period: p[3] };
                let a = abc.amplitude_a(t);
                Ok([
                    a * x[2].sin() + abc.c * x[1].cos(),
                    abc.b * x[0].sin() + a * x[2].cos(),
                    abc.c * x[1].sin() + abc.b * x[0].cos(),
                ])
            }
            FieldKind::DoubleGyre => {
                let (amp, eps, omega) = (p[0], p[1], p[2]);
                let a = eps * (omega * t).sin();
                let b = 1.0 - 2.0 * a;
                let f = a * x[0] * x[0] + b * x[0];
                let dfdx = 2.0 * a * x[0] + b;
                Ok([
                    -PI * amp * (PI * f).sin() * (PI * x[1]).cos(),
                    PI * amp * (PI * f).cos() * (PI * x[1]).sin() * dfdx,
                    0.0,
                ])
            }
            FieldKind::Gridded => {
                let grid = self.grid.as_ref().expect("gridded field without grid");
                match &grid.loaded {
                    Some((c, data)) if *c == cycle => Ok(grid.interpolate(&self.domain, data, x)),
                    _ => Err(FieldError::CycleUnavailable(cycle)),
                }
            }
        }
    }

    /// Largest `|v|` over a sample lattice of `samples_per_axis` points per
    /// axis (`lo + i (hi - lo) / n`, `i < n`) at the start of each cycle in
    /// `cycles`. Doubling `samples_per_axis` refines the lattice, so the
    /// result never decreases.
    pub fn max_speed(&self, cycles: Range<u64>, samples_per_axis: usize) -> Result<f64, FieldError> {
        if samples_per_axis < 2 {
            return Err(FieldError::Invalid("max_speed needs at least 2 samples per axis".into()));
        }
        let d = self.dims();
        let n = samples_per_axis;
        let mut field = self.clone();
        let mut best = 0.0f64;
        let axis_counts: [usize; 3] = std::array::from_fn(|a| if a < d { n } else { 1 });
        for cycle in cycles {
            field.load_cycle(cycle)?;
            for k in 0..axis_counts[2] {
                for j in 0..axis_counts[1] {
                    for i in 0..axis_counts[0] {
                        let idx = [i, j, k];
                        let mut x = ORIGIN;
                        for a in 0..d {
                            x[a] = self.domain.lo[a] + self.domain.extent(a) * (idx[a] as f64 / n as f64);
                        }
                        let v = field.eval_velocity(&x, cycle, 0.0)?;
                        best = best.max(crate::geom::norm(&v));
                    }
                }
            }
        }
        Ok(best)
    }
}

impl Grid {
    fn new(domain: &Aabb, dims: [usize; 3], source: GridSource) -> Result<Self, FieldError> {
        if !domain.is_valid() {
            return Err(FieldError::Invalid("grid domain must satisfy lo < hi".into()));
        }
        let mut spacing = ORIGIN;
        for a in 0..domain.dims {
            if dims[a] < 2 {
                return Err(FieldError::Invalid("a gridded field needs at least 2 points per axis".into()));
            }
            spacing[a] = domain.extent(a) / (dims[a] - 1) as f64;
        }
        Ok(Grid { dims, spacing, source, loaded: None })
    }

    fn node_count(&self, d: usize) -> usize {
        self.dims[..d].iter().product()
    }

    fn node_positions(&self, domain: &Aabb) -> Vec<Point> {
        let d = domain.dims;
        let counts: [usize; 3] = std::array::from_fn(|a| if a < d { self.dims[a] } else { 1 });
        let mut out = Vec::with_capacity(self.node_count(d));
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    let idx = [i, j, k];
                    let mut x = ORIGIN;
                    for a in 0..d {
                        x[a] = if idx[a] + 1 == self.dims[a] {
                            domain.hi[a]
                        } else {
                            domain.lo[a] + idx[a] as f64 * self.spacing[a]
                        };
                    }
                    out.push(x);
                }
            }
        }
        out
    }

    /// Nested linear interpolation so that a constant field is reproduced
    /// exactly and node positions return the stored vector.
    fn interpolate(&self, domain: &Aabb, data: &[Point], x: &Point) -> Point {
        let d = domain.dims;
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let mut u = (x[a] - domain.lo[a]) / self.spacing[a];
            let r = u.round();
            if (u - r).abs() < 1e-9 {
                u = r;
            }
            let i = (u.floor().max(0.0) as usize).min(self.dims[a] - 2);
            cell[a] = i;
            frac[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        let index = |i: usize, j: usize, k: usize| i + self.dims[0] * (j + self.dims[1] * k);
        let lerp = |p: Point, q: Point, t: f64| -> Point {
            if t == 0.0 {
                return p;
            }
            if t == 1.0 {
                return q;
            }
            std::array::from_fn(|c| p[c] + t * (q[c] - p[c]))
        };
        let (i, j) = (cell[0], cell[1]);
        let layer = |k: usize| {
            let y0 = lerp(data[index(i, j, k)], data[index(i + 1, j, k)], frac[0]);
            let y1 = lerp(data[index(i, j + 1, k)], data[index(i + 1, j + 1, k)], frac[0]);
            lerp(y0, y1, frac[1])
        };
        if d == 2 {
            layer(0)
        } else {
            lerp(layer(cell[2]), layer(cell[2] + 1), frac[2])
        }
    }
}

/// Serializable description of a field, as it appears in experiment files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub cycle_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_hi: Option<Vec<f64>>,
    /// abc: `[a0, b, c, period]`; double_gyre: `[a, epsilon, omega]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    /// Directory of per-cycle velocity files (gridded only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl FieldSpec {
    pub fn abc(cycle_dt: f64) -> Self {
        FieldSpec { kind: FieldKind::Abc, cycle_dt, domain_lo: None, domain_hi: None, params: None, path: None }
    }

    pub fn double_gyre(cycle_dt: f64) -> Self {
        FieldSpec { kind: FieldKind::DoubleGyre, ..Self::abc(cycle_dt) }
    }

    pub fn gridded(path: PathBuf, cycle_dt: f64) -> Self {
        FieldSpec { kind: FieldKind::Gridded, path: Some(path), ..Self::abc(cycle_dt) }
    }

    /// Fills every default. The ABC period defaults to `total_time`.
    pub fn resolved(&self, total_time: f64) -> Result<FieldSpec, FieldError> {
        let mut out = self.clone();
        match self.kind {
            FieldKind::Abc => {
                out.domain_lo.get_or_insert_with(|| vec![0.0; 3]);
                out.domain_hi.get_or_insert_with(|| vec![2.0 * PI; 3]);
                let p = out.params.get_or_insert_with(Vec::new);
                let std = AbcParams::standard(total_time);
                let defaults = [std.a0, std.b, std.c, std.period];
                if p.len() > 4 {
                    return Err(FieldError::Invalid("abc takes at most 4 params".into()));
                }
                for v in defaults.iter().skip(p.len()) {
                    p.push(*v);
                }
            }
            FieldKind::DoubleGyre => {
                out.domain_lo.get_or_insert_with(|| vec![0.0, 0.0]);
                out.domain_hi.get_or_insert_with(|| vec![2.0, 1.0]);
                let p = out.params.get_or_insert_with(Vec::new);
                let std = DoubleGyreParams::default();
                let defaults = [std.a, std.epsilon, std.omega];
                if p.len() > 3 {
                    return Err(FieldError::Invalid("double_gyre takes at most 3 params".into()));
                }
                for v in defaults.iter().skip(p.len()) {
                    p.push(*v);
                }
            }
            FieldKind::Gridded => {
                let dir = self.path.as_ref().ok_or_else(|| FieldError::Invalid("gridded field needs a path".into()))?;
                let first = lvel::read_snapshot(&lvel::cycle_path(dir, 0))?;
                let d = first.domain.dims;
                out.domain_lo = Some(first.domain.lo[..d].to_vec());
                out.domain_hi = Some(first.domain.hi[..d].to_vec());
                out.params = None;
            }
        }
        Ok(out)
    }

    pub fn domain(&self) -> Result<Aabb, FieldError> {
        let (Some(lo), Some(hi)) = (&self.domain_lo, &self.domain_hi) else {
            return Err(FieldError::Invalid("field domain is unresolved".into()));
        };
        if lo.len() != hi.len() || !(2..=3).contains(&lo.len()) {
            return Err(FieldError::Invalid("domain_lo and domain_hi need 2 or 3 matching entries".into()));
        }
        let mut b = Aabb::new(ORIGIN, ORIGIN, lo.len());
        b.lo[..lo.len()].copy_from_slice(lo);
        b.hi[..hi.len()].copy_from_slice(hi);
        if !b.is_valid() {
            return Err(FieldError::Invalid("domain must satisfy lo < hi on every axis".into()));
        }
        Ok(b)
    }

    /// Builds the field from a resolved spec.
    pub fn build(&self) -> Result<TimeField, FieldError> {
        match self.kind {
            FieldKind::Gridded => {
                let dir = self.path.as_ref().ok_or_else(|| FieldError::Invalid("gridded field needs a path".into()))?;
                TimeField::gridded_dir(dir, self.cycle_dt)
            }
            FieldKind::Abc => {
                let p = self.params.as_deref().unwrap_or_default();
                if p.len() != 4 {
                    return Err(FieldError::Invalid("abc field spec is unresolved".into()));
                }
                TimeField::abc(self.domain()?, self.cycle_dt, AbcParams { a0: p[0], b: p[1], c: p[2], period: p[3] })
            }
            FieldKind::DoubleGyre => {
                let p = self.params.as_deref().unwrap_or_default();
                if p.len() != 3 {
                    return Err(FieldError::Invalid("double_gyre field spec is unresolved".into()));
                }
                TimeField::double_gyre(self.domain()?, self.cycle_dt, DoubleGyreParams { a: p[0], epsilon: p[1], omega: p[2] })
            }
        }
    }
}
