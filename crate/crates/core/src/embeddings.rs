//! `RGE1` embedding files: exported per-window embeddings, and the cache a
//! [`TeacherHandle`](crate::models::TeacherHandle) can be built from.
//!
//! Layout (little-endian): magic `RGE1`; `u32` record count; `u32` d_f; `u32`
//! d_g (0 when no teacher vectors are present); then per record a `u64`
//! window origin, a `u8` trend label (0 down, 1 flat, 2 up), `d_f` x `f64`
//! and `d_g` x `f64`.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dataset::WindowPair;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RGE1";

/// Relative threshold (in units of the look-back std) separating flat from up/down.
pub const TREND_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrendLabel {
    Down = 0,
    Flat = 1,
    Up = 2,
}

impl TrendLabel {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(TrendLabel::Down),
            1 => Ok(TrendLabel::Flat),
            2 => Ok(TrendLabel::Up),
            other => Err(format_err(format!("invalid trend label {other}"))),
        }
    }
}

/// Sign of `mean(y) - mean(x)` against `±0.05` times the population std of `x`,
/// pooled over channels.
pub fn trend_label(w: &WindowPair) -> TrendLabel {
    let mean = |v: &[Vec<f64>]| {
        let n = v.iter().map(Vec::len).sum::<usize>() as f64;
        v.iter().flatten().sum::<f64>() / n
    };
    let mx = mean(&w.x);
    let n = w.x.iter().map(Vec::len).sum::<usize>() as f64;
    let std = (w.x.iter().flatten().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n).sqrt();
    let diff = mean(&w.y) - mx;
    let threshold = TREND_THRESHOLD * std;
    if diff > threshold {
        TrendLabel::Up
    } else if diff < -threshold {
        TrendLabel::Down
    } else {
        TrendLabel::Flat
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub origin: u64,
    pub label: TrendLabel,
    pub h_f: Vec<f64>,
    /// Empty when the file carries no teacher vectors.
    pub h_g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub d_f: usize,
    pub d_g: usize,
    pub records: Vec<EmbeddingRecord>,
}

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        kind: "RGE1",
        message: message.into(),
    }
}

impl EmbeddingFile {
    pub fn new(d_f: usize, d_g: usize) -> Self {
        Self {
            d_f,
            d_g,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EmbeddingRecord) -> Result<()> {
        if record.h_f.len() != self.d_f || record.h_g.len() != self.d_g {
            return Err(format_err(format!(
                "record widths ({}, {}) do not match file widths ({}, {})",
                record.h_f.len(),
                record.h_g.len(),
                self.d_f,
                self.d_g
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_record = 9 + 8 * (self.d_f + self.d_g);
        let mut out = Vec::with_capacity(16 + per_record * self.records.len());
        out.extend(MAGIC);
        out.extend((self.records.len() as u32).to_le_bytes());
        out.extend((self.d_f as u32).to_le_bytes());
        out.extend((self.d_g as u32).to_le_bytes());
        for r in &self.records {
            out.extend(r.origin.to_le_bytes());
            out.push(r.label as u8);
            for v in r.h_f.iter().chain(&r.h_g) {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(format_err("bad magic or short header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (count, d_f, d_g) = (word(4), word(8), word(12));
        let per_record = 9 + 8 * (d_f + d_g);
        let expected = count
            .checked_mul(per_record)
            .and_then(|n| n.checked_add(16))
            .ok_or_else(|| format_err("header sizes overflow"))?;
        if bytes.len() != expected {
            return Err(format_err(format!(
                "expected {expected} bytes for {count} records, found {}",
                bytes.len()
            )));
        }
        let floats = |raw: &[u8]| -> Vec<f64> { raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect() };
        let records = bytes[16..]
            .chunks_exact(per_record)
            .map(|rec| {
                let body = &rec[9..];
                Ok(EmbeddingRecord {
                    origin: u64::from_le_bytes(rec[..8].try_into().unwrap()),
                    label: TrendLabel::from_byte(rec[8])?,
                    h_f: floats(&body[..8 * d_f]),
                    h_g: floats(&body[8 * d_f..]),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { d_f, d_g, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Teacher vectors keyed by window origin.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    d_g: usize,
    vectors: HashMap<u64, Vec<f64>>,
    checksum: String,
}

impl EmbeddingCache {
    pub fn from_file(file: EmbeddingFile) -> Result<Self> {
        if file.d_g == 0 {
            return Err(format_err("file has no teacher vectors (d_g = 0)"));
        }
        let mut vectors = HashMap::with_capacity(file.records.len());
        for r in file.records {
            if vectors.insert(r.origin, r.h_g).is_some() {
                return Err(format_err(format!("duplicate window origin {}", r.origin)));
            }
        }
        let mut keys: Vec<u64> = vectors.keys().copied().collect();
        keys.sort_unstable();
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.to_le_bytes());
            for v in &vectors[&k] {
                h.update(v.to_le_bytes());
            }
        }
        Ok(Self {
            d_g: file.d_g,
            vectors,
            checksum: hex::encode(h.finalize()),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(EmbeddingFile::load(path)?)
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn get(&self, origin: u64) -> Option<&[f64]> {
        self.vectors.get(&origin).map(Vec::as_slice)
    }

    /// Row-major `[ids.len(), d_g]` block of stored vectors.
    pub fn lookup(&self, ids: &[u64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ids.len() * self.d_g);
        for &id in ids {
            out.extend_from_slice(self.get(id).ok_or(Error::CacheMiss(id))?);
        }
        Ok(out)
    }
}
