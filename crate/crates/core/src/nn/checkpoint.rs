//! Versioned binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "TDCK"
//! version    u32      1
//! header     u32 length + UTF-8 JSON
//! count      u32      number of tensors
//! per tensor:
//!   name     u32 length + UTF-8 bytes
//!   ndim     u32
//!   dims     ndim x u64
//!   data     product(dims) x f64
//! ```
//!
//! Optimiser moments are not stored; a loaded set starts a fresh optimiser.

use std::io::{Read, Write};

use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TDCK";
pub const VERSION: u32 = 1;
const MAX_NAME: usize = 1 << 16;

fn io_err(e: std::io::Error) -> Error {
    Error::Format(format!("checkpoint i/o: {e}"))
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

fn get_bytes<R: Read>(r: &mut R, max: usize) -> Result<Vec<u8>> {
    let n = get_u32(r)? as usize;
    if n > max {
        return Err(Error::Format(format!("checkpoint field of {n} bytes exceeds {max}")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

pub fn write_checkpoint<W: Write>(w: &mut W, header: &serde_json::Value, params: &ParamSet) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    put_u32(w, VERSION)?;
    let h = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    put_u32(w, h.len() as u32)?;
    w.write_all(&h).map_err(io_err)?;
    put_u32(w, params.len() as u32)?;
    for (name, t) in params.iter() {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        put_u32(w, t.shape.len() as u32)?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(serde_json::Value, ParamSet)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a parameter checkpoint".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header = serde_json::from_slice(&get_bytes(r, 1 << 26)?).map_err(|e| Error::Format(e.to_string()))?;
    let count = get_u32(r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = String::from_utf8(get_bytes(r, MAX_NAME)?).map_err(|e| Error::Format(e.to_string()))?;
        let ndim = get_u32(r)? as usize;
        if ndim > 8 {
            return Err(Error::Format(format!("tensor `{name}` has {ndim} dims")));
        }
        let shape = (0..ndim).map(|_| get_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.filter(|&n| n <= 1 << 30).ok_or_else(|| Error::Format(format!("tensor `{name}` too large")))?;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw).map_err(io_err)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if params.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
        params.add(&name, Tensor::new(&shape, data)?);
    }
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.add("b", Tensor::new(&[2, 3], vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE, 0.0, 1e300]).unwrap());
        p.add("a", Tensor::new(&[1], vec![0.1]).unwrap());
        p.add("e", Tensor::zeros(&[0]));
        p
    }

    #[test]
    fn round_trip_keeps_order_and_bits() {
        let header = serde_json::json!({"family": "test", "k": [1, 2]});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header, &sample()).unwrap();
        let (h, p) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(h, header);
        let names: Vec<_> = p.iter().map(|(n, _)| n.to_string()).collect();
        assert_eq!(names, ["b", "a", "e"]);
        assert_eq!(p.snapshot(), sample().snapshot());
        assert_eq!(p.get("b").unwrap().shape, vec![2, 3]);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &serde_json::json!(null), &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        for cut in [3, 10, buf.len() - 1] {
            assert!(read_checkpoint(&mut &buf[..cut]).is_err());
        }
    }
}
