//! Binary parameter checkpoint.
//!
//! Layout (little endian): magic `HOIPARAM`, `u32` version, `u32` metadata
//! length + UTF-8 metadata, `u32` parameter count, then per parameter
//! `name`, `u8` decay flag, `u32` rank, `u64` dims, `f64` values; finally
//! `u32` alias count and `(alias, target)` name pairs. Names are `u32`
//! length-prefixed UTF-8.

use std::io::{Read, Write};
use std::path::Path;

use super::params::{Param, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HOIPARAM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(store: &ParamStore, metadata: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_str(&mut out, metadata);
    put_u32(&mut out, store.len() as u32);
    for p in store.slots() {
        put_str(&mut out, &p.name);
        out.push(p.decay as u8);
        put_u32(&mut out, p.shape.len() as u32);
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let aliases = store.sharing_table();
    put_u32(&mut out, aliases.len() as u32);
    for (alias, target) in &aliases {
        put_str(&mut out, alias);
        put_str(&mut out, target);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Returns the store and the metadata string.
pub fn decode(buf: &[u8]) -> Result<(ParamStore, String)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let metadata = r.string()?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let decay = r.take(1)?[0] != 0;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.push(Param { name, shape, data, decay });
    }
    let n_alias = r.u32()? as usize;
    let mut aliases = Vec::with_capacity(n_alias);
    for _ in 0..n_alias {
        aliases.push((r.string()?, r.string()?));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((ParamStore::from_parts(params, aliases)?, metadata))
}

pub fn save(path: &Path, store: &ParamStore, metadata: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(store, metadata)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ParamStore, String)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_sharing() {
        let mut s = ParamStore::new();
        s.add("c.h.res.fc1.w", vec![2, 2], vec![0.1, -1e-300, f64::MAX, 3.0], true).unwrap();
        s.add("c.h.res.fc1.b", vec![2], vec![0.0, -0.0], false).unwrap();
        s.share("p.h.res.fc1.w", "c.h.res.fc1.w").unwrap();
        let bytes = encode(&s, "{\"k\":1}");
        let (back, meta) = decode(&bytes).unwrap();
        assert_eq!(meta, "{\"k\":1}");
        assert_eq!(back, s);
        assert!(back.is_shared("p.h.res.fc1.w", "c.h.res.fc1.w"));
        assert_eq!(encode(&back, "{\"k\":1}"), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let mut s = ParamStore::new();
        s.add("w", vec![1], vec![1.0], true).unwrap();
        let bytes = encode(&s, "");
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
