//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `SEQLCKPT`, `u32` format version, `u64`
//! parameter count, then that many `f64` values in canonical order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ParamVector;
use crate::backend::Scalar;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SEQLCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_checkpoint<S: Scalar>(path: &Path, params: &ParamVector<S>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(params.len() as u64).to_le_bytes()).map_err(io)?;
    for v in params.as_slice() {
        w.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<ParamVector<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;
    let mut read = |buf: &mut [u8], what: &str| -> Result<()> {
        r.read_exact(buf).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            offset,
            message: format!("reading {what}: {e}"),
        })?;
        offset += buf.len() as u64;
        Ok(())
    };
    let mut magic = [0u8; 8];
    read(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad magic {magic:?}"),
        });
    }
    let mut b4 = [0u8; 4];
    read(&mut b4, "format version")?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            offset: 8,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let mut b8 = [0u8; 8];
    read(&mut b8, "parameter count")?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut values = Vec::with_capacity(count.min(1 << 28));
    for _ in 0..count {
        read(&mut b8, "parameter value")?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok(ParamVector::from_vec(values))
}
