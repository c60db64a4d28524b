//! Frozen static character embeddings.
//!
//! Canonical storage is the little-endian `CEMB` file:
//!
//! ```text
//! "CEMB"  u16 version=1  u32 count  u32 dim
//! count x { u8 byte_len, utf8 bytes, dim x f32 }
//! u32 crc32(all preceding bytes)
//! ```
//!
//! Entries are written in codepoint order so re-serialising a table that was
//! read back is byte-identical. A TSV form (`<char>\t<v1> <v2> ...`) is
//! accepted for interchange.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::binfmt::{EnvelopeReader, EnvelopeWriter};
use crate::char_knowledge::Vocabulary;
use crate::error::{read_to_string, single_char, Error, Result};
use crate::rng::{stream, Purpose};

const MAGIC: &[u8; 4] = b"CEMB";
const VERSION: u16 = 1;

/// Standard deviation of the random control embeddings.
pub const CONTROL_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<char, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, c: char, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("embedding", format!("non-finite value in vector for {c:?}")));
        }
        if self.entries.insert(c, vector).is_some() {
            return Err(Error::format("embedding", format!("duplicate character {c:?}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.entries.contains_key(&c)
    }

    pub fn get(&self, c: char) -> Result<&[f32]> {
        self.entries.get(&c).map(Vec::as_slice).ok_or(Error::UnknownCharacter(c))
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, &[f32])> {
        self.entries.iter().map(|(c, v)| (*c, v.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = EnvelopeWriter::new(MAGIC, VERSION);
        w.u32(self.entries.len() as u32);
        w.u32(self.dim as u32);
        let mut utf8 = [0u8; 4];
        for (c, v) in &self.entries {
            let encoded = c.encode_utf8(&mut utf8);
            w.u8(encoded.len() as u8);
            w.bytes(encoded.as_bytes());
            for x in v {
                w.f32(*x);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = EnvelopeReader::open(bytes, MAGIC, VERSION, "embedding file")?;
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(r.error("dim must be positive"));
        }
        let mut table = Self::new(dim)?;
        for _ in 0..count {
            let len = r.u8()? as usize;
            let raw = r.bytes(len)?;
            let c = std::str::from_utf8(raw)
                .ok()
                .and_then(single_char)
                .ok_or_else(|| r.error(format!("entry key {raw:?} is not one UTF-8 character")))?;
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(r.f32()?);
            }
            table.insert(c, v)?;
        }
        r.finish()?;
        Ok(table)
    }

    pub fn parse_tsv(text: &str, context: &str) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(context, line_no, "expected <char>\\t<values>"))?;
            let c = single_char(key)
                .ok_or_else(|| Error::parse(context, line_no, format!("{key:?} is not a single character")))?;
            let v = values
                .split_whitespace()
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(context, line_no, e.to_string()))?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(Self::new(v.len()).map_err(|e| Error::parse(context, line_no, e.to_string()))?),
            };
            t.insert(c, v).map_err(|e| Error::parse(context, line_no, e.to_string()))?;
        }
        table.ok_or_else(|| Error::format(context, "no embeddings found"))
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::from_bytes(&bytes)
}

pub fn write_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_tsv(path: &Path) -> Result<EmbeddingTable> {
    let text = read_to_string(path)?;
    EmbeddingTable::parse_tsv(&text, &path.display().to_string())
}

/// Reads either format, choosing by the `.tsv` extension.
pub fn read_any(path: &Path) -> Result<EmbeddingTable> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("txt") => read_embeddings_tsv(path),
        _ => read_embeddings(path),
    }
}

/// Control table: i.i.d. Gaussian(0, 0.02) entries. Each character draws
/// from its own stream, so the table is independent of vocabulary order.
pub fn random_table(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim)?;
    let normal = Normal::new(0.0, CONTROL_STD).expect("valid std");
    for &c in vocab.chars() {
        let mut rng = stream(seed, Purpose::Embeddings, c as u32);
        let v: Vec<f32> = (0..dim).map(|_| normal.sample(&mut rng) as f32).collect();
        table.insert(c, v)?;
    }
    Ok(table)
}
