//! Scalar-field files (`LSFD`).
//!
//! Little-endian: magic, u32 version, u8 dims, u32 x d node counts, f64 x d
//! spacing, f64 x d origin, then f64 values with x fastest.

use std::path::Path;

use super::{put_f64, put_u32, FormatError, Reader};
use crate::geom::{Point, ORIGIN};

pub const MAGIC: &[u8; 4] = b"LSFD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub dims: usize,
    pub node_counts: [usize; 3],
    pub spacing: Point,
    pub origin: Point,
    pub values: Vec<f64>,
}

pub fn encode(f: &ScalarField) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 20 * f.dims + 8 * f.values.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(f.dims as u8);
    for n in &f.node_counts[..f.dims] {
        put_u32(&mut out, *n as u32);
    }
    for v in f.spacing[..f.dims].iter().chain(&f.origin[..f.dims]) {
        put_f64(&mut out, *v);
    }
    for v in &f.values {
        put_f64(&mut out, *v);
    }
    out
}

pub fn decode(buf: &[u8]) -> Result<ScalarField, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::VersionMismatch { expected: VERSION, found: version });
    }
    let dims = r.u8()? as usize;
    if !(2..=3).contains(&dims) {
        return Err(FormatError::Malformed(format!("dims {dims}")));
    }
    let mut node_counts = [1usize; 3];
    for n in &mut node_counts[..dims] {
        *n = r.u32()? as usize;
    }
    let mut spacing = ORIGIN;
    let mut origin = ORIGIN;
    for v in spacing[..dims].iter_mut().chain(&mut origin[..dims]) {
        *v = r.f64()?;
    }
    let n: usize = node_counts.iter().product();
    if r.remaining() != 8 * n {
        return Err(if r.remaining() < 8 * n {
            FormatError::TruncatedFile
        } else {
            FormatError::Malformed("trailing bytes after values".into())
        });
    }
    let values = (0..n).map(|_| r.f64()).collect::<Result<_, _>>()?;
    Ok(ScalarField { dims, node_counts, spacing, origin, values })
}

pub fn write_scalar_field(path: &Path, f: &ScalarField) -> Result<(), FormatError> {
    std::fs::write(path, encode(f))?;
    Ok(())
}

pub fn read_scalar_field(path: &Path) -> Result<ScalarField, FormatError> {
    decode(&std::fs::read(path)?)
}
