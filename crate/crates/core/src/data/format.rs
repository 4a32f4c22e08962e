//! Bit-exact binary containers.
//!
//! Sample files (magic `MMAD`, version 1) hold one labeled audiovisual
//! sample, little-endian throughout:
//!
//! ```text
//! offset 0: 4D 4D 41 44            magic "MMAD"
//!        4: u16 version (= 1)
//!        6: u16 label
//!        8: u8  tensor count
//! per tensor: u8 rank, rank × u32 extents, f32 payload (row-major)
//! ```
//!
//! A sample stores two tensors: video [t, C, H, W] then audio [F, T].
//! The id is not part of the payload; it comes from the manifest (or the
//! file stem when reading a bare file).
//!
//! Weight files (magic `MMAW`, version 1) hold named tensors with the same
//! per-tensor encoding, each prefixed by a u16 name length and UTF-8 name.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_MAGIC: [u8; 4] = *b"MMAD";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"MMAW";
pub const FORMAT_VERSION: u16 = 1;

const MAX_RANK: u8 = 8;

/// One labeled audiovisual sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub label: usize,
    /// [t, C, H, W]
    pub video: Tensor<f32>,
    /// [F, T]
    pub audio: Tensor<f32>,
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.push(t.shape().len() as u8);
    for extent in t.shape() {
        out.extend_from_slice(&(*extent as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a sample to its exact byte representation.
pub fn sample_to_bytes(record: &SampleRecord) -> Result<Vec<u8>> {
    if !record.video.all_finite() || !record.audio.all_finite() {
        return Err(Error::Numeric("sample contains non-finite values".into()));
    }
    if record.label > u16::MAX as usize {
        return Err(Error::Contract(format!(
            "label {} exceeds u16",
            record.label
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&SAMPLE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(record.label as u16).to_le_bytes());
    out.push(2u8);
    put_tensor(&mut out, &record.video);
    put_tensor(&mut out, &record.audio);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                expected: n,
                available: self.bytes.len() - self.pos,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u8()?;
        if rank > MAX_RANK {
            return Err(Error::Contract(format!(
                "tensor rank {rank} exceeds {MAX_RANK}"
            )));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut count = 1usize;
        for _ in 0..rank {
            let extent = self.u32()? as usize;
            count = count.checked_mul(extent).ok_or(Error::Truncated {
                expected: usize::MAX,
                available: self.bytes.len() - self.pos,
            })?;
            shape.push(extent);
        }
        let payload = self.take(count * 4)?;
        let mut data = Vec::with_capacity(count);
        for chunk in payload.chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        Tensor::new(shape, data)
    }
}

/// Parse sample bytes; `id` is supplied by the caller.
pub fn sample_from_bytes(bytes: &[u8], id: &str) -> Result<SampleRecord> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != SAMPLE_MAGIC {
        return Err(Error::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version });
    }
    let label = cur.u16()? as usize;
    let tensors = cur.u8()?;
    if tensors != 2 {
        return Err(Error::Contract(format!(
            "sample files carry 2 tensors, found {tensors}"
        )));
    }
    let video = cur.tensor()?;
    let audio = cur.tensor()?;
    Ok(SampleRecord {
        id: id.to_string(),
        label,
        video,
        audio,
    })
}

pub fn write_sample(path: &Path, record: &SampleRecord) -> Result<()> {
    std::fs::write(path, sample_to_bytes(record)?)?;
    Ok(())
}

/// Read one sample file; the id defaults to the file stem.
pub fn read_sample(path: &Path) -> Result<SampleRecord> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    sample_from_bytes(&bytes, &id)
}

/// Serialize named tensors (weight checkpoints).
pub fn named_tensors_to_bytes(entries: &[(String, Tensor<f32>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Contract(format!("tensor name too long: {name}")));
        }
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        put_tensor(&mut out, tensor);
    }
    Ok(out)
}

pub fn named_tensors_from_bytes(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version });
    }
    let count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| Error::Contract(format!("tensor name is not UTF-8: {e}")))?;
        entries.push((name, cur.tensor()?));
    }
    Ok(entries)
}

pub fn write_named_tensors(path: &Path, entries: &[(String, Tensor<f32>)]) -> Result<()> {
    std::fs::write(path, named_tensors_to_bytes(entries)?)?;
    Ok(())
}

pub fn read_named_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    named_tensors_from_bytes(&bytes)
}
