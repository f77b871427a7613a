//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SVRF"                magic, 4 bytes
//! u8                    format version (1)
//! repeated until EOF:
//!   u32                 name length in bytes
//!   [u8]                UTF-8 name
//!   u32                 rank
//!   u32 × rank          dims
//!   f64 × prod(dims)    values, IEEE-754
//! ```
//!
//! Entries are written in name order, so equal stores give equal bytes.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::store::ParameterStore;

pub const MAGIC: &[u8; 4] = b"SVRF";
pub const VERSION: u8 = 1;

pub fn write_store<W: Write>(store: &ParameterStore, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    for (name, entry) in store.iter() {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes())?;
        out.write_all(bytes)?;
        out.write_all(&(entry.shape().len() as u32).to_le_bytes())?;
        for &d in entry.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in entry.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(store: &ParameterStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_store(store, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<ParameterStore> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(AutodiffError::Checkpoint("bad magic".into()));
    }
    let version = cur.take(1)?[0];
    if version != VERSION {
        return Err(AutodiffError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut store = ParameterStore::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| AutodiffError::Checkpoint("entry name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()? as usize;
        let dims = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = cur.take(
            count
                .checked_mul(8)
                .ok_or_else(|| AutodiffError::Checkpoint(format!("entry `{name}` is too large")))?,
        )?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        store.insert(name, dims, values)?;
    }
    Ok(store)
}

pub fn read_store<R: Read>(mut input: R) -> Result<ParameterStore> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn save(store: &ParameterStore, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(store))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParameterStore> {
    from_bytes(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AutodiffError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
