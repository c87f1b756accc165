//! Named parameter tensors and their `PBML` binary form.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn new(layout: &[(String, Vec<usize>)]) -> Params {
        Params {
            names: layout.iter().map(|(n, _)| n.clone()).collect(),
            tensors: layout.iter().map(|(_, s)| Tensor::zeros(s)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.data().iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|t| t.data_mut().iter_mut())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Params) {
        for (p, g) in self.values_mut().zip(other.values()) {
            *p += a * g;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values_mut().for_each(|v| *v *= a);
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_layout(&self, other: &Params) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }
}

pub const MAGIC: &[u8; 4] = b"PBML";
pub const VERSION: u32 = 1;

/// Writes `magic, version, block id, tensor count`, then per tensor its name
/// (u32 length + UTF-8), rank, dims as u64 and data as little-endian f64.
pub fn write_params<W: Write>(mut w: W, block: u32, p: &Params) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&block.to_le_bytes())?;
    w.write_all(&(p.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in p.names.iter().zip(&p.tensors) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Format(e.to_string()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::Format(e.to_string()))?;
    Ok(u64::from_le_bytes(b))
}

/// Inverse of [`write_params`]; returns the block id and parameters.
pub fn read_params<R: Read>(mut r: R) -> Result<(u32, Params)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::Format(e.to_string()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let block = read_u32(&mut r)?;
    let n = read_u32(&mut r)? as usize;
    let mut names = Vec::with_capacity(n);
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u32(&mut r)? as usize;
        if len > 1 << 16 {
            return Err(Error::Format("name too long".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| Error::Format(e.to_string()))?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("rank {rank} too large")));
        }
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        if count > 1 << 28 {
            return Err(Error::Format("tensor too large".into()));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_bits(read_u64(&mut r)?));
        }
        names.push(name);
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    Ok((block, Params { names, tensors }))
}
