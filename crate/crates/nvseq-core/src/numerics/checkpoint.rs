//! Binary checkpoint format.
//!
//! Little-endian layout: magic "NVSQ1" (5 bytes), version u32, block count
//! u32; per block: name length u32, UTF-8 name, rank u32, one u32 per dim,
//! then the f64 values row-major. Optimizer state is not persisted.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::array::RealArray;
use crate::numerics::store::ParamStore;

pub const MAGIC: &[u8; 5] = b"NVSQ1";
pub const VERSION: u32 = 1;

/// Writes every block of the store, in name order.
pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let blocks: BTreeMap<&str, &RealArray> =
        store.iter().map(|(name, b)| (name, &b.values)).collect();
    save_blocks(&blocks, path)
}

pub fn save_blocks(blocks: &BTreeMap<&str, &RealArray>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (name, arr) in blocks {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(arr.shape().len() as u32).to_le_bytes())?;
        for &d in arr.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in arr.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads all blocks; rejects unknown magic or version.
pub fn load(path: &Path) -> Result<BTreeMap<String, RealArray>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Checkpoint(format!("invalid block name: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        out.insert(name, RealArray::new(shape, values)?);
    }
    Ok(out)
}

/// Loads a checkpoint into a fresh ParamStore (moments zeroed, steps reset).
pub fn load_store(path: &Path) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, arr) in load(path)? {
        store.register(&name, arr)?;
    }
    Ok(store)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
