//! `TSAF` model container: magic, version, mode byte, a length-prefixed JSON
//! config block and a table of named `f64` tensors. All integers are
//! little-endian `u32`.
//!
//! ```text
//! "TSAF" | version u32 | mode u8 | json_len u32 | json bytes
//!        | tensor_count u32 | { name_len u32 | name | rows u32 | cols u32 | rows*cols f64 }*
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const TSAF_MAGIC: &[u8; 4] = b"TSAF";
pub const TSAF_VERSION: u32 = 1;

/// Mode byte values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelTag {
    Stateless = 0,
    Recursive = 1,
    Cnn = 2,
    CnnAttention = 3,
    TimeAttentionLstm = 4,
}

impl ModelTag {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => ModelTag::Stateless,
            1 => ModelTag::Recursive,
            2 => ModelTag::Cnn,
            3 => ModelTag::CnnAttention,
            4 => ModelTag::TimeAttentionLstm,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub tag: ModelTag,
    pub config_json: String,
    pub tensors: Vec<(String, Matrix)>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TSAF_MAGIC);
        put_u32(&mut out, TSAF_VERSION);
        out.push(self.tag as u8);
        put_str(&mut out, &self.config_json);
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, m) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, m.rows() as u32);
            put_u32(&mut out, m.cols() as u32);
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, path);
        r.magic(TSAF_MAGIC)?;
        r.version(TSAF_VERSION)?;
        let mode = r.u8("mode byte")?;
        let tag = ModelTag::from_byte(mode).ok_or_else(|| r.corrupt(format!("unknown mode {mode}")))?;
        let config_json = r.string("config block")?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let name = r.string(&format!("tensor {i} name"))?;
            let rows = r.u32("tensor rows")? as usize;
            let cols = r.u32("tensor cols")? as usize;
            let m = r.matrix(rows, cols, &name)?;
            tensors.push((name, m));
        }
        r.finish()?;
        Ok(Container {
            tag,
            config_json,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Bounds-checked little-endian reader that reports truncation as corruption.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], path: &Path) -> Self {
        ByteReader {
            bytes,
            pos: 0,
            path: path.to_path_buf(),
        }
    }

    pub fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != expected {
            return Err(self.corrupt(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let v = self.u32("version")?;
        if v != expected {
            return Err(self.corrupt(format!("unsupported version {v}, expected {expected}")));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.corrupt(format!("{what} is not UTF-8")))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| self.corrupt(format!("{what}: absurd shape {rows}x{cols}")))?;
        let b = self.take(n, what)?;
        let data: Vec<f64> = b
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
            .map_err(|e| self.corrupt(format!("{what}: {e}")))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.corrupt(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
