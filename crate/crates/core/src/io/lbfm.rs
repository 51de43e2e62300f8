//! Basis-flow files (`LBFM`).
//!
//! Little-endian. Header (48 bytes): magic, u32 version, u8 dims, u8
//! strategy, u16 reserved, u32 interval index, f64 t_start, f64 t_end, u32
//! rank, u32 reserved, u64 count. Then `count` records of u64 id, f64 x d
//! seed, f64 x d end, u8 valid and 7 pad bytes.
//!
//! Flow counters are not part of the file; run directories keep them in
//! `stats.csv`.

use std::path::Path;

use super::{put_f64, put_u32, put_u64, FormatError, Reader};
use crate::extract::{BasisFlow, BasisFlowSet, FlowStats, Strategy};
use crate::geom::ORIGIN;

pub const MAGIC: &[u8; 4] = b"LBFM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

pub fn record_len(dims: usize) -> usize {
    8 + 16 * dims + 8
}

pub fn encode(set: &BasisFlowSet) -> Vec<u8> {
    let d = set.dims;
    let mut out = Vec::with_capacity(HEADER_LEN + set.flows.len() * record_len(d));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(d as u8);
    out.push(set.strategy.code());
    out.extend_from_slice(&0u16.to_le_bytes());
    put_u32(&mut out, set.interval_index);
    put_f64(&mut out, set.t_start);
    put_f64(&mut out, set.t_end);
    put_u32(&mut out, set.rank as u32);
    put_u32(&mut out, 0);
    put_u64(&mut out, set.flows.len() as u64);
    for f in &set.flows {
        put_u64(&mut out, f.id);
        for v in &f.seed[..d] {
            put_f64(&mut out, *v);
        }
        for v in &f.end[..d] {
            put_f64(&mut out, *v);
        }
        out.push(u8::from(f.valid));
        out.extend_from_slice(&[0; 7]);
    }
    out
}

/// Decodes a set. Its stats only reflect the stored flows: `seeded` and
/// `stored` equal the flow count and nothing is discarded.
pub fn decode(buf: &[u8]) -> Result<BasisFlowSet, FormatError> {
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
    let strategy = Strategy::from_code(r.u8()?).ok_or_else(|| FormatError::Malformed("unknown strategy code".into()))?;
    r.u16()?;
    let interval_index = r.u32()?;
    let t_start = r.f64()?;
    let t_end = r.f64()?;
    let rank = r.u32()? as usize;
    r.u32()?;
    let count = r.u64()?;
    let need = (count as u128) * record_len(d) as u128;
    if need > r.remaining() as u128 {
        return Err(FormatError::TruncatedFile);
    }
    if need < r.remaining() as u128 {
        return Err(FormatError::Malformed("trailing bytes after records".into()));
    }
    let mut flows = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id = r.u64()?;
        let mut seed = ORIGIN;
        let mut end = ORIGIN;
        for v in &mut seed[..d] {
            *v = r.f64()?;
        }
        for v in &mut end[..d] {
            *v = r.f64()?;
        }
        let valid = r.u8()? != 0;
        r.take(7)?;
        flows.push(BasisFlow { id, seed, end, valid, origin_rank: rank });
    }
    let n = flows.len();
    let stats = FlowStats { seeded: n, stored: n, ..FlowStats::default() };
    Ok(BasisFlowSet { interval_index, t_start, t_end, rank, dims: d, strategy, flows, stats })
}

pub fn write_basis_flows(set: &BasisFlowSet, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, encode(set))?;
    Ok(())
}

pub fn read_basis_flows(path: &Path) -> Result<BasisFlowSet, FormatError> {
    decode(&std::fs::read(path)?)
}
