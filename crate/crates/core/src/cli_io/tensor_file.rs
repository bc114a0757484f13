//! Binary tensor container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "TIAR"
//! 4       4           version (u32 LE, currently 1)
//! 8       4           rank r (u32 LE, 1..=4)
//! 12      8 * r       dims (u64 LE each)
//! 12+8r   8 * prod    payload, row-major f64 LE
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, Dimension, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TIAR";
pub const VERSION: u32 = 1;
pub const MAX_RANK: usize = 4;

const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_rank(rank: usize, offset: u64) -> Result<()> {
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format {
            offset,
            message: format!("rank {rank} outside 1..={MAX_RANK}"),
        });
    }
    Ok(())
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_rank(dims.len(), 8)?;
        let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(data.len()) {
            return Err(Error::domain(format!(
                "dims {dims:?} do not match {} payload values",
                data.len()
            )));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn from_array<D: Dimension>(array: &ndarray::Array<f64, D>) -> Result<Self> {
        let dims = array.shape().to_vec();
        let data = array.iter().copied().collect();
        Self::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_array(self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(&self.dims), self.data).expect("dims checked at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:02x?}, expected \"TIAR\""),
            });
        }
        let version = cursor.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let rank = cursor.u32("rank")? as usize;
        check_rank(rank, 8)?;
        let mut dims = Vec::with_capacity(rank);
        for i in 0..rank {
            let at = cursor.pos as u64;
            let d = usize::try_from(cursor.u64("dimension")?).map_err(|_| Error::Format {
                offset: at,
                message: format!("dimension {i} does not fit in memory"),
            })?;
            dims.push(d);
        }
        let payload_at = cursor.pos as u64;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|c| c.checked_mul(8).is_some())
            .ok_or_else(|| Error::Format {
                offset: payload_at,
                message: format!("dims {dims:?} overflow"),
            })?;
        let remaining = bytes.len() - cursor.pos;
        if remaining != count * 8 {
            return Err(Error::Format {
                offset: payload_at + remaining.min(count * 8) as u64,
                message: format!(
                    "payload has {remaining} bytes, dims {dims:?} need {}",
                    count * 8
                ),
            });
        }
        let data = bytes[cursor.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(TensorFile { dims, data })
    }

    pub fn read_from(reader: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write_to(&self, writer: &mut impl Write) -> Result<()> {
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Write to a temporary file next to `path`, then rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
