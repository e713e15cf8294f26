//! CXW1 weight files.
//!
//! ```text
//! "CXW1"                      4-byte magic
//! u32 LE                      record count
//! per record:
//!   u8 name length, UTF-8 name
//!   u8 rank, rank × u32 LE dims
//!   product(dims) × f32 LE, row-major
//! ```
//!
//! Records are the parameter tensors in layer order (`conv1.kernel`,
//! `conv1.bias`, …, `dense3.bias`). The layer chain is rebuilt from the
//! records and validated against the requested input size.

use std::io::{self, Read, Write};
use std::path::Path;

use super::{CnnError, CnnModel, Tensor};

pub const MAGIC: &[u8; 4] = b"CXW1";

pub fn write_weights(model: &CnnModel, mut out: impl Write) -> io::Result<()> {
    let params = model.named_parameters();
    out.write_all(MAGIC)?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params {
        out.write_all(&[name.len() as u8])?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[tensor.rank() as u8])?;
        for &d in tensor.dims() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(tensor.len() * 4);
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_weights(mut input: impl Read, input_size: usize) -> Result<CnnModel, CnnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| CnnError::Io {
        path: "<reader>".into(),
        source: e,
    })?;
    parse_weights(&bytes, input_size)
}

pub fn parse_weights(bytes: &[u8], input_size: usize) -> Result<CnnModel, CnnError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CnnError::Format("bad magic, expected CXW1".into()));
    }
    let count = cur.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = cur.u8()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| CnnError::Format("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = cur.u8()? as usize;
        if rank == 0 || rank > 4 {
            return Err(CnnError::Format(format!("tensor {name} has rank {rank}")));
        }
        let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= (bytes.len() - cur.pos) / 4)
            .ok_or_else(|| CnnError::Format(format!("tensor {name} dims {dims:?} exceed file")))?;
        let data = cur
            .take(len * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(dims, data).map_err(|e| CnnError::Format(e.to_string()))?;
        params.push((name, tensor));
    }
    if cur.pos != bytes.len() {
        return Err(CnnError::Format(format!(
            "{} trailing bytes after last record",
            bytes.len() - cur.pos
        )));
    }
    let channels = match params.first() {
        Some((_, t)) if t.rank() == 4 => t.dims()[2],
        _ => 1,
    };
    CnnModel::from_parameters(vec![input_size, input_size, channels], params).map_err(|e| match e {
        CnnError::Format(_) => e,
        other => CnnError::Format(format!("shape chain: {other}")),
    })
}

pub fn save_weights(model: &CnnModel, path: impl AsRef<Path>) -> Result<(), CnnError> {
    let path = path.as_ref();
    let io_err = |source| CnnError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = io::BufWriter::new(file);
    write_weights(model, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn load_weights(path: impl AsRef<Path>, input_size: usize) -> Result<CnnModel, CnnError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CnnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_weights(&bytes, input_size)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CnnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CnnError::Format(format!("unexpected end of file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CnnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CnnError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
