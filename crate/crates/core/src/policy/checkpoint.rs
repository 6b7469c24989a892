//! Binary checkpoints.
//!
//! Layout (little-endian): magic `CMRL`, `u32` version, then one record per
//! tensor until end of file: `u32` name length, UTF-8 name, `u32` rank,
//! `rank × u64` dimensions, `f64` payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;

use super::{Policy, PolicyError};

pub const MAGIC: &[u8; 4] = b"CMRL";
pub const VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> PolicyError {
    PolicyError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(out: &mut W, policy: &Policy) -> Result<(), PolicyError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in policy.params.iter() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&2u32.to_le_bytes())?;
        out.write_all(&(t.rows as u64).to_le_bytes())?;
        out.write_all(&(t.cols as u64).to_le_bytes())?;
        for x in &t.data {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parses every record into `(name, tensor)` pairs.
pub fn read_records<R: Read>(input: &mut R) -> Result<Vec<(String, Tensor)>, PolicyError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], PolicyError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| corrupt("truncated file"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let mut records = Vec::new();
    while pos < bytes.len() {
        let mut take = |n: usize| -> Result<&[u8], PolicyError> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| corrupt("truncated record"))?;
            pos += n;
            Ok(s)
        };
        let name_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|_| corrupt("name is not UTF-8"))?;
        let rank = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
        }
        let (rows, cols) = match dims.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            [] => (1, 1),
            _ => return Err(corrupt(format!("{name}: rank {rank} unsupported"))),
        };
        let count = rows.checked_mul(cols).ok_or_else(|| corrupt("dimension overflow"))?;
        let payload = take(count.checked_mul(8).ok_or_else(|| corrupt("dimension overflow"))?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        records.push((name, Tensor { rows, cols, data }));
    }
    Ok(records)
}

/// Overwrites `policy`'s parameters from a checkpoint. Every parameter must
/// be present with a matching shape, and no extra records are allowed.
pub fn read_checkpoint<R: Read>(input: &mut R, policy: &mut Policy) -> Result<(), PolicyError> {
    let records = read_records(input)?;
    if records.len() != policy.params.len() {
        return Err(corrupt(format!(
            "{} records, architecture has {} tensors",
            records.len(),
            policy.params.len()
        )));
    }
    for (name, tensor) in records {
        let id = policy
            .params
            .id(&name)
            .ok_or_else(|| corrupt(format!("unknown tensor {name}")))?;
        let slot = policy.params.get_mut(id);
        if slot.shape() != tensor.shape() {
            return Err(corrupt(format!(
                "{name}: shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    Ok(())
}

pub fn save(path: &Path, policy: &Policy) -> Result<(), PolicyError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, policy)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path, policy: &mut Policy) -> Result<(), PolicyError> {
    let mut f = std::fs::File::open(path)?;
    read_checkpoint(&mut f, policy)
}
