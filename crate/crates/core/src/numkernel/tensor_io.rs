//! FDT1 tensor container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"FDT1" | ndim: u32 | dims: ndim × u32 | dtype: u8 | data (row-major)
//! ```
//!
//! `dtype` is `0x08` for f64 and `0x04` for f32. Core dumps use f64; exports
//! may downcast to f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FDT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F64 => 0x08,
            Dtype::F32 => 0x04,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0x08 => Ok(Dtype::F64),
            0x04 => Ok(Dtype::F32),
            other => Err(Error::Format(format!("unknown dtype byte 0x{other:02x}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("dims {dims:?} need {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn into_matrix(self) -> Result<Matrix> {
        match self.dims.as_slice() {
            &[r, c] => Matrix::from_vec(r, c, self.data),
            &[n] => Matrix::from_vec(1, n, self.data),
            other => Err(Error::Format(format!("expected a 2-D tensor, got dims {other:?}"))),
        }
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Tensor {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

pub fn write_tensor(mut w: impl Write, t: &Tensor, dtype: Dtype) -> Result<()> {
    w.write_all(MAGIC)?;
    let ndim = u32::try_from(t.dims.len()).map_err(|_| Error::Format("too many dims".into()))?;
    w.write_all(&ndim.to_le_bytes())?;
    for &d in &t.dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dim {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&[dtype.code()])?;
    match dtype {
        Dtype::F64 => {
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in &t.data {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor(mut r: impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let ndim = read_u32(&mut r)? as usize;
    if ndim > 16 {
        return Err(Error::Format(format!("implausible ndim {ndim}")));
    }
    let dims = (0..ndim)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut code = [0u8; 1];
    r.read_exact(&mut code).map_err(truncated)?;
    let dtype = Dtype::from_code(code[0])?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("element count overflows".into()))?;
    let mut data = Vec::with_capacity(count);
    match dtype {
        Dtype::F64 => {
            let mut buf = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut buf).map_err(truncated)?;
                data.push(f64::from_le_bytes(buf));
            }
        }
        Dtype::F32 => {
            let mut buf = [0u8; 4];
            for _ in 0..count {
                r.read_exact(&mut buf).map_err(truncated)?;
                data.push(f64::from(f32::from_le_bytes(buf)));
            }
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Tensor::new(dims, data)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix, dtype: Dtype) -> Result<()> {
    save_tensor(path, &Tensor::from(m), dtype)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    load_tensor(path)?.into_matrix()
}
