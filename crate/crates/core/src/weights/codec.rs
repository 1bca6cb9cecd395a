//! Little-endian binary model format.
//!
//! ```text
//! magic            4 bytes  "EFL1"
//! version          u64
//! producer_len     u16, producer UTF-8 bytes
//! produced_at_ms   u64
//! entry_count      u32
//! per entry:       name_len u16 | name | rank u8 | dims rank x u32 | data prod(dims) x f32
//! ```

use super::{Tensor, WeightSet, WeightsError};

pub const MAGIC: &[u8; 4] = b"EFL1";

/// Encodes a weight set. The output is a pure function of the value.
pub fn serialize(w: &WeightSet) -> Vec<u8> {
    let body: usize = w
        .entries
        .iter()
        .map(|e| 2 + e.name.len() + 1 + 4 * e.shape.len() + 4 * e.data.len())
        .sum();
    let mut out = Vec::with_capacity(4 + 8 + 2 + w.producer.len() + 8 + 4 + body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&w.version.to_le_bytes());
    put_str(&mut out, &w.producer);
    out.extend_from_slice(&w.produced_at.to_le_bytes());
    out.extend_from_slice(&(w.entries.len() as u32).to_le_bytes());
    for e in &w.entries {
        put_str(&mut out, &e.name);
        out.push(e.shape.len() as u8);
        for &d in &e.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Decodes and validates a weight set. Trailing bytes are rejected so that
/// every accepted input re-encodes to itself.
pub fn deserialize(bytes: &[u8]) -> Result<WeightSet, WeightsError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            WeightsError::Truncated { offset: 0 }
        } else {
            WeightsError::BadMagic
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    r.pos = 4;
    let version = r.u64()?;
    let producer = r.string()?;
    let produced_at = r.u64()?;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| shape.iter().all(|&d| d > 0) && n.checked_mul(4).is_some())
            .ok_or_else(|| WeightsError::ShapeDataMismatch {
                name: name.clone(),
                shape: shape.clone(),
                len: 0,
            })?;
        let data = r.f32s(n)?;
        entries.push(Tensor::new(name, shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(WeightsError::TrailingBytes {
            offset: r.pos,
            count: bytes.len() - r.pos,
        });
    }
    WeightSet::new(entries, version, producer, produced_at)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(WeightsError::Truncated { offset: self.pos }),
        }
    }

    fn u8(&mut self) -> Result<u8, WeightsError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WeightsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WeightsError> {
        let len = self.u16()? as usize;
        let offset = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| WeightsError::InvalidUtf8 { offset })
    }

    /// Reads `n` floats; a short buffer reports the offset of the first
    /// incomplete element.
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, WeightsError> {
        let avail = self.buf.len() - self.pos;
        if avail < n * 4 {
            return Err(WeightsError::Truncated {
                offset: self.pos + (avail / 4) * 4,
            });
        }
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
