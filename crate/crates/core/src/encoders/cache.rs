//! Length-prefixed binary stream of encoded rows.
//!
//! All integers little-endian:
//!
//! ```text
//! magic   b"TDEC"
//! version u32 (= 1)
//! key     u32 byte length + UTF-8 (fingerprint of the fitted encoder)
//! count   u64
//! record  u32 payload length + payload, `count` times
//!
//! payload: label u8 (0 real, 1 synthetic), tag u8, body
//!   tag 0 bag:     u32 n, n * (u32 id, u32 count)
//!   tag 1 tokens:  u32 n, n * u32 id
//!   tag 2 columns: u32 d_num, d_num * f64, d_num * u8 mask,
//!                  u32 d_cat, d_cat * u32, d_cat * u8 mask
//! ```

use std::io::{Read, Write};

use super::codec::ColumnVec;
use super::flat::TokenSeq;
use super::pipeline::EncodedRow;
use super::trigram::SparseBag;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TDEC";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_cache<W: Write>(mut w: W, key: &str, rows: &[(u8, EncodedRow)]) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(key.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(key.as_bytes()).map_err(io_err)?;
    w.write_all(&(rows.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (label, row) in rows {
        let payload = encode_payload(*label, row);
        w.write_all(&(payload.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&payload).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn encode_payload(label: u8, row: &EncodedRow) -> Vec<u8> {
    let mut p = vec![label];
    let u32s = |p: &mut Vec<u8>, v: u32| p.extend_from_slice(&v.to_le_bytes());
    match row {
        EncodedRow::Bag(b) => {
            p.push(0);
            u32s(&mut p, b.entries.len() as u32);
            for &(id, c) in &b.entries {
                u32s(&mut p, id);
                u32s(&mut p, c);
            }
        }
        EncodedRow::Tokens(t) => {
            p.push(1);
            u32s(&mut p, t.ids.len() as u32);
            for &id in &t.ids {
                u32s(&mut p, id);
            }
        }
        EncodedRow::Columns(c) => {
            p.push(2);
            u32s(&mut p, c.num.len() as u32);
            for &v in &c.num {
                p.extend_from_slice(&v.to_le_bytes());
            }
            p.extend_from_slice(&c.num_mask);
            u32s(&mut p, c.cat.len() as u32);
            for &v in &c.cat {
                u32s(&mut p, v);
            }
            p.extend_from_slice(&c.cat_mask);
        }
    }
    p
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated record".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode_payload(buf: &[u8], key: &str) -> Result<(u8, EncodedRow)> {
    let mut c = Cursor { buf, pos: 0 };
    let label = c.u8()?;
    let row = match c.u8()? {
        0 => {
            let n = c.u32()? as usize;
            let entries = (0..n).map(|_| Ok((c.u32()?, c.u32()?))).collect::<Result<_>>()?;
            EncodedRow::Bag(SparseBag {
                entries,
                vocab_id: key.to_string(),
            })
        }
        1 => {
            let n = c.u32()? as usize;
            EncodedRow::Tokens(TokenSeq {
                ids: (0..n).map(|_| c.u32()).collect::<Result<_>>()?,
            })
        }
        2 => {
            let dn = c.u32()? as usize;
            let num = (0..dn).map(|_| c.f64()).collect::<Result<_>>()?;
            let num_mask = c.take(dn)?.to_vec();
            let dc = c.u32()? as usize;
            let cat = (0..dc).map(|_| c.u32()).collect::<Result<_>>()?;
            let cat_mask = c.take(dc)?.to_vec();
            EncodedRow::Columns(ColumnVec {
                num,
                num_mask,
                cat,
                cat_mask,
            })
        }
        t => return Err(Error::Format(format!("unknown record tag {t}"))),
    };
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes in record".into()));
    }
    Ok((label, row))
}

/// Read a cache stream. Bag records take the stream key as their vocabulary id.
pub fn read_cache<R: Read>(mut r: R) -> Result<(String, Vec<(u8, EncodedRow)>)> {
    let mut all = Vec::new();
    r.read_to_end(&mut all).map_err(io_err)?;
    let mut c = Cursor { buf: &all, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let klen = c.u32()? as usize;
    let key = String::from_utf8(c.take(klen)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
    let count = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let mut rows = Vec::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        rows.push(decode_payload(c.take(len)?, &key)?);
    }
    if c.pos != all.len() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok((key, rows))
}
