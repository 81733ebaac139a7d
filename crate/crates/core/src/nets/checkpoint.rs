//! Bit-exact checkpoint format.
//!
//! ```text
//! "DBIAS1"                       6 bytes
//! tensor count                   u32 LE
//! per tensor:
//!   name length                  u32 LE
//!   name                         UTF-8 bytes
//!   rank                         u32 LE
//!   dims                         rank × u32 LE
//!   values                       product(dims) × f32 LE (IEEE-754)
//! ```

use std::path::Path;

use super::ParamSet;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 6] = b"DBIAS1";

impl ParamSet<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(MAGIC.len(), "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(magic),
                std::str::from_utf8(MAGIC).expect("ascii")
            )));
        }
        let count = r.u32("tensor count")?;
        let mut set = ParamSet::new();
        for t in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::Format(format!("tensor {t}: name is not UTF-8")))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("dims")? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor `{name}`: dims overflow")))?;
            let raw = r.take(len.checked_mul(4).unwrap_or(usize::MAX), &format!("values of `{name}`"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            set.push(name, Tensor::new(dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
