//! Binary container of named tensors.
//!
//! ```text
//! magic    8 bytes   "G2TCKPT\0"
//! version  u32 LE    (currently 1)
//! meta     u64 LE length + UTF-8 JSON (free-form metadata)
//! count    u32 LE
//! count x { name: u32 LE length + UTF-8,
//!           ndim: u32 LE, dims: ndim x u64 LE,
//!           data: product(dims) x f64 LE }
//! ```

use std::io::{Read, Write};

use super::tensor::Tensor;
use super::AutodiffError;

pub const MAGIC: &[u8; 8] = b"G2TCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> Result<(), AutodiffError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u64).to_le_bytes())?;
        w.write_all(self.meta.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(t.rows as u64).to_le_bytes())?;
            w.write_all(&(t.cols as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(t.data.len() * 8);
            for x in &t.data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, AutodiffError> {
        let bad = |m: &str| AutodiffError::BadCheckpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta = String::from_utf8(meta).map_err(|_| bad("metadata is not UTF-8"))?;
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; n];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
            let ndim = read_u32(&mut r)?;
            let dims: Vec<usize> = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<_, _>>()?;
            let (rows, cols) = match dims.as_slice() {
                [] => (1, 1),
                [c] => (1, *c),
                [r, c] => (*r, *c),
                _ => return Err(bad("tensors of rank > 2 are not supported")),
            };
            let mut buf = vec![0u8; rows * cols * 8];
            r.read_exact(&mut buf)?;
            let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::new(rows, cols, data)));
        }
        Ok(Checkpoint { meta, tensors })
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
