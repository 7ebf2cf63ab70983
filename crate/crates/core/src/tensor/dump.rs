//! Raw tensor dumps for cross-checking against external oracles.
//!
//! Format: `u32` rank, then each dimension as `u32`, then the data as
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_tensor(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let numel: usize = shape.iter().product();
    if numel != data.len() {
        return Err(Error::shape(format!(
            "dump: shape {shape:?} has {numel} elements but data has {}",
            data.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        put(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        put(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
    let rank = u32::from_le_bytes(u32_buf) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
        shape.push(u32::from_le_bytes(u32_buf) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut f64_buf = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut f64_buf).map_err(|e| Error::io(path, e))?;
        data.push(f64::from_le_bytes(f64_buf));
    }
    Ok((shape, data))
}
