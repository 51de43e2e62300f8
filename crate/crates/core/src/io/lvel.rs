//! Gridded velocity snapshots, one file per cycle.
//!
//! Layout (little-endian): magic `LVEL`; u32 version = 1; u8 dims d;
//! u32 x d grid points per axis; f64 x 2d domain box (lo then hi);
//! u32 cycle index; then d f64 components per node, x fastest.

use std::fs;
use std::path::{Path, PathBuf};

use super::{put_f64, put_u32, FormatError, Reader};
use crate::geom::{Aabb, Point, ORIGIN};

pub const MAGIC: &[u8; 4] = b"LVEL";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySnapshot {
    pub domain: Aabb,
    pub grid_dims: [usize; 3],
    pub cycle: u64,
    pub velocities: Vec<Point>,
}

pub fn cycle_path(dir: &Path, cycle: u64) -> PathBuf {
    dir.join(format!("cycle_{cycle:06}.lvel"))
}

pub fn encode(s: &VelocitySnapshot) -> Vec<u8> {
    let d = s.domain.dims;
    let mut out = Vec::with_capacity(16 + 8 * d * (s.velocities.len() + 2));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(d as u8);
    for a in 0..d {
        put_u32(&mut out, s.grid_dims[a] as u32);
    }
    for a in 0..d {
        put_f64(&mut out, s.domain.lo[a]);
    }
    for a in 0..d {
        put_f64(&mut out, s.domain.hi[a]);
    }
    put_u32(&mut out, s.cycle as u32);
    for v in &s.velocities {
        for c in v.iter().take(d) {
            put_f64(&mut out, *c);
        }
    }
    out
}

pub fn decode(buf: &[u8]) -> Result<VelocitySnapshot, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::VersionMismatch { expected: VERSION, found: version });
    }
    let d = r.u8()? as usize;
    if !(2..=3).contains(&d) {
        return Err(FormatError::Malformed(format!("dims {d}")));
    }
    let mut grid_dims = [1usize; 3];
    for g in grid_dims.iter_mut().take(d) {
        *g = r.u32()? as usize;
    }
    let mut domain = Aabb::new(ORIGIN, ORIGIN, d);
    for a in 0..d {
        domain.lo[a] = r.f64()?;
    }
    for a in 0..d {
        domain.hi[a] = r.f64()?;
    }
    let cycle = r.u32()? as u64;
    let nodes: usize = grid_dims[..d].iter().product();
    if r.remaining() < nodes * d * 8 {
        return Err(FormatError::TruncatedFile);
    }
    let mut velocities = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let mut v = ORIGIN;
        for c in v.iter_mut().take(d) {
            *c = r.f64()?;
        }
        velocities.push(v);
    }
    Ok(VelocitySnapshot { domain, grid_dims, cycle, velocities })
}

pub fn write_snapshot(path: &Path, s: &VelocitySnapshot) -> Result<(), FormatError> {
    fs::write(path, encode(s))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<VelocitySnapshot, FormatError> {
    decode(&fs::read(path)?)
}

/// Writes cycles `0..cycles` of a sampled velocity function into `dir`
/// (created if missing). `f` receives the cycle and the node position.
pub fn write_series(
    dir: &Path,
    domain: Aabb,
    grid_dims: [usize; 3],
    cycles: u64,
    f: impl Fn(u64, &Point) -> Point,
) -> Result<(), FormatError> {
    fs::create_dir_all(dir)?;
    let d = domain.dims;
    let mut dims = [1usize; 3];
    dims[..d].copy_from_slice(&grid_dims[..d]);
    let coord = |a: usize, i: usize| {
        if i + 1 == dims[a] {
            domain.hi[a]
        } else {
            domain.lo[a] + domain.extent(a) * (i as f64 / (dims[a] - 1) as f64)
        }
    };
    for c in 0..cycles {
        let mut velocities = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let mut x = ORIGIN;
                    x[0] = coord(0, i);
                    x[1] = coord(1, j);
                    if d == 3 {
                        x[2] = coord(2, k);
                    }
                    velocities.push(f(c, &x));
                }
            }
        }
        write_snapshot(&cycle_path(dir, c), &VelocitySnapshot { domain, grid_dims: dims, cycle: c, velocities })?;
    }
    Ok(())
}
